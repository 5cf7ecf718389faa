use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use socnav_core::bench::{render_episode, replay_verify, run_batch, BatchOptions, Scenario, Verdict};
use socnav_core::log::EpisodeLog;
use socnav_core::metrics::results_csv;
use socnav_core::world::{builtin_layout, builtin_layouts, load_layout, save_layout};

#[derive(Parser)]
#[command(name = "socnav", version, about = "Crowd-navigation simulator and benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every episode of a scenario file.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's base seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Override the scenario's agent.
        #[arg(long, value_parser = ["dwa", "tracker", "orca"])]
        agent: Option<String>,
    },
    /// Draw one episode log as SVG.
    Render {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Layout document the log must match.
        #[arg(long)]
        layout: Option<PathBuf>,
    },
    /// Re-simulate a log and compare every step.
    Verify {
        #[arg(long)]
        log: PathBuf,
    },
    /// Built-in layouts.
    Layouts {
        #[command(subcommand)]
        action: LayoutsAction,
    },
}

#[derive(Subcommand)]
enum LayoutsAction {
    List,
    Export { name: String },
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { scenario, seed, jobs, out, agent } => {
            let mut sc = Scenario::load(&scenario)?;
            if let Some(a) = agent {
                sc.agent = a;
            }
            let base_dir = scenario.parent().map(PathBuf::from).unwrap_or_default();
            let report = run_batch(&sc, &BatchOptions { seed, jobs, out_dir: out.clone(), base_dir })?;
            print!("{}", results_csv(&report.rows));
            for f in &report.manifest.failures {
                eprintln!("construction failed: {} seed {}: {}", f.test, f.seed, f.error);
            }
            eprintln!("wrote {}", out.join(&report.manifest.manifest).display());
            Ok(if report.has_failures() { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Command::Render { log, out, layout } => {
            let episode = EpisodeLog::read(&log)?;
            let given = match layout {
                Some(p) => Some(load_layout(&std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?),
                None => None,
            };
            let svg = render_episode(&episode, given.as_ref())?;
            std::fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { log } => {
            let report = replay_verify(&EpisodeLog::read(&log)?)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            match report.verdict {
                Verdict::Match => {
                    println!("ok");
                    Ok(ExitCode::SUCCESS)
                }
                Verdict::HeaderMismatch => {
                    println!("header mismatch");
                    Ok(ExitCode::FAILURE)
                }
                Verdict::DivergenceAt(step) => {
                    println!("divergence at step {step}");
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::Layouts { action: LayoutsAction::List } => {
            for l in builtin_layouts() {
                println!("{}\t{}x{}\t{} walls\t{} pedestrians", l.name, l.width, l.height, l.walls.len(), l.default_pedestrians);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Layouts { action: LayoutsAction::Export { name } } => {
            let Some(l) = builtin_layout(&name) else {
                bail!("unknown layout {name:?}");
            };
            println!("{}", save_layout(&l));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
