//! Seeded benchmark harness: scenario files, batch execution with per-episode
//! logs and a run manifest, multi-layout sampling, SVG rendering, and replay
//! verification.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{make_agent, Agent, AgentError, DwaParams, Privileged};
use crate::env::{Action, Env, EnvConfig, EnvError};
use crate::log::{EpisodeLog, LogError, LOG_VERSION};
use crate::metrics::{aggregate, results_csv, EpisodeSummary, MetricsError, Outcome, PsoConfig, ResultsRow};
use crate::world::{builtin_layout, load_layout, Layout, LayoutError};

/// Built-in multi-layout regimes.
pub const REGIMES: [(&str, [&str; 3]); 4] = [
    ("T1", ["WALLS-A", "WALLS-B", "WALLS-F"]),
    ("T2", ["WALLS-A", "WALLS-B", "WALLS-D"]),
    ("T3", ["WALLS-A", "WALLS-D", "WALLS-F"]),
    ("T4", ["WALLS-A", "WALLS-D", "WALLS-E"]),
];

pub fn regime(name: &str) -> Option<Vec<String>> {
    REGIMES
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, set)| set.iter().map(|s| s.to_string()).collect())
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("layout {given:?} does not match the log's layout {logged:?}")]
    LayoutMismatch { given: String, logged: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PedestrianSpec {
    Count(usize),
    Sweep(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Built-in layout names or paths to JSON layout documents.
    #[serde(default)]
    pub layouts: Vec<String>,
    /// Built-in regime name; its layouts are appended to `layouts`.
    #[serde(default)]
    pub regime: Option<String>,
    /// Draw one layout per episode from the set instead of one cell per layout.
    #[serde(default)]
    pub mix: bool,
    pub agent: String,
    #[serde(default)]
    pub dwa: DwaParams,
    pub episodes: usize,
    #[serde(default)]
    pub pedestrians: Option<PedestrianSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub pso: PsoConfig,
    /// Partial `EnvConfig` applied over the defaults.
    #[serde(default)]
    pub env: Option<toml::Table>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, BenchError> {
        let s: Scenario = toml::from_str(text).map_err(|e| BenchError::Scenario(e.to_string()))?;
        if s.episodes == 0 {
            return Err(BenchError::Scenario("episodes must be at least 1".into()));
        }
        if s.layouts.is_empty() && s.regime.is_none() {
            return Err(BenchError::Scenario("no layouts or regime given".into()));
        }
        if matches!(&s.pedestrians, Some(PedestrianSpec::Sweep(v)) if v.is_empty()) {
            return Err(BenchError::Scenario("empty pedestrian sweep".into()));
        }
        s.dwa.validate().map_err(BenchError::Scenario)?;
        s.base_config("")?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario, BenchError> {
        Scenario::from_toml(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }

    /// SHA-256 over the canonical JSON form.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Resolves the layout set; relative paths resolve against `base_dir`.
    pub fn resolve_layouts(&self, base_dir: &Path) -> Result<Vec<Layout>, BenchError> {
        let mut names = self.layouts.clone();
        if let Some(r) = &self.regime {
            names.extend(regime(r).ok_or_else(|| BenchError::Scenario(format!("unknown regime {r:?}")))?);
        }
        names
            .iter()
            .map(|n| {
                if n.ends_with(".json") {
                    let path = base_dir.join(n);
                    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
                    Ok(load_layout(&text)?)
                } else {
                    builtin_layout(n).ok_or_else(|| BenchError::Scenario(format!("unknown layout {n:?}")))
                }
            })
            .collect()
    }

    /// Default config with the `env` overrides merged in; unknown keys are rejected.
    pub fn base_config(&self, layout: &str) -> Result<EnvConfig, BenchError> {
        let mut value = serde_json::to_value(EnvConfig::new(layout, None, 0)).expect("config serializes");
        if let Some(over) = &self.env {
            let over = serde_json::to_value(over).map_err(|e| BenchError::Scenario(e.to_string()))?;
            merge(&mut value, &over, "env")?;
        }
        serde_json::from_value(value).map_err(|e| BenchError::Scenario(format!("env overrides: {e}")))
    }

    fn pedestrian_counts(&self) -> Vec<Option<usize>> {
        match &self.pedestrians {
            None => vec![None],
            Some(PedestrianSpec::Count(n)) => vec![Some(*n)],
            Some(PedestrianSpec::Sweep(v)) => v.iter().map(|&n| Some(n)).collect(),
        }
    }
}

fn merge(base: &mut serde_json::Value, over: &serde_json::Value, at: &str) -> Result<(), BenchError> {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                let here = format!("{at}.{k}");
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() => merge(slot, v, &here)?,
                    Some(slot) => *slot = v.clone(),
                    None => return Err(BenchError::Scenario(format!("unknown override {here}"))),
                }
            }
            Ok(())
        }
        (b, o) => {
            *b = o.clone();
            Ok(())
        }
    }
}

/// Uniform, deterministic pick from `set` for episode `index`.
pub fn multi_layout_sample<'a>(set: &'a [String], index: u64, seed: u64) -> &'a str {
    assert!(!set.is_empty(), "empty layout set");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    &set[rng.gen_range(0..set.len())]
}

/// Runs `agent` in `env` until termination and returns the log.
pub fn run_episode(env: &mut Env, agent: &mut dyn Agent) -> Result<EpisodeLog, EnvError> {
    agent.reset(env.header());
    while !env.is_done() {
        let obs = env.observation();
        let action: Action = agent.act(&obs, Some(&Privileged::from_env(env)));
        env.step(action)?;
    }
    Ok(env.log())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub test: String,
    pub layout: String,
    pub pedestrians: Option<usize>,
    pub index: usize,
    pub seed: u64,
    pub outcome: Outcome,
    pub pso: f64,
    pub steps: usize,
    pub log: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub test: String,
    pub layout: String,
    pub pedestrians: Option<usize>,
    pub index: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub scenario: String,
    pub scenario_digest: String,
    pub base_seed: u64,
    pub agent: String,
    pub episodes: Vec<EpisodeEntry>,
    pub failures: Vec<FailureEntry>,
    pub results: String,
    pub manifest: String,
}

#[derive(Clone, Debug)]
pub struct BatchReport {
    pub manifest: RunManifest,
    pub rows: Vec<ResultsRow>,
    pub out_dir: PathBuf,
}

impl BatchReport {
    pub fn has_failures(&self) -> bool {
        !self.manifest.failures.is_empty()
    }
}

#[derive(Clone, Debug)]
struct Job {
    cell: usize,
    test: String,
    layout: Layout,
    pedestrians: Option<usize>,
    index: usize,
    seed: u64,
}

pub struct BatchOptions {
    pub seed: Option<u64>,
    pub jobs: usize,
    pub out_dir: PathBuf,
    /// Directory against which relative layout paths resolve.
    pub base_dir: PathBuf,
}

/// Runs every (layout, pedestrian count) cell of the scenario.
pub fn run_batch(scenario: &Scenario, opts: &BatchOptions) -> Result<BatchReport, BenchError> {
    // Agent names are validated before anything runs.
    make_agent(&scenario.agent, &scenario.dwa)?;
    let base_seed = opts.seed.unwrap_or(scenario.seed);
    let layouts = scenario.resolve_layouts(&opts.base_dir)?;
    let names: Vec<String> = layouts.iter().map(|l| l.name.clone()).collect();
    let counts = scenario.pedestrian_counts();
    let label = |base: &str, p: Option<usize>| match p {
        Some(n) => format!("{base}_p{n}"),
        None => base.to_string(),
    };

    let mut jobs = Vec::new();
    let mut cells: Vec<(String, Option<usize>)> = Vec::new();
    for &peds in &counts {
        if scenario.mix {
            let cell = cells.len();
            cells.push((label(&scenario.name, peds), peds));
            for i in 0..scenario.episodes {
                let pick = multi_layout_sample(&names, i as u64, base_seed);
                let layout = layouts.iter().find(|l| l.name == pick).expect("picked from set").clone();
                jobs.push(Job { cell, test: cells[cell].0.clone(), layout, pedestrians: peds, index: i, seed: base_seed + i as u64 });
            }
        } else {
            for layout in &layouts {
                let cell = cells.len();
                cells.push((label(&layout.name, peds), peds));
                for i in 0..scenario.episodes {
                    jobs.push(Job { cell, test: cells[cell].0.clone(), layout: layout.clone(), pedestrians: peds, index: i, seed: base_seed + i as u64 });
                }
            }
        }
    }

    let logs_dir = opts.out_dir.join("logs");
    std::fs::create_dir_all(&logs_dir).map_err(io_err(&logs_dir))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| BenchError::Scenario(e.to_string()))?;
    let results: Vec<Result<Result<EpisodeEntry, FailureEntry>, BenchError>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let failure = |e: String| FailureEntry {
                    test: job.test.clone(),
                    layout: job.layout.name.clone(),
                    pedestrians: job.pedestrians,
                    index: job.index,
                    seed: job.seed,
                    error: e,
                };
                let mut config = scenario.base_config(&job.layout.name)?;
                config.pedestrians = job.pedestrians;
                config.seed = job.seed;
                let mut env = match Env::reset_with_layout(config, job.layout.clone()) {
                    Ok(env) => env,
                    Err(e) => return Ok(Err(failure(e.to_string()))),
                };
                let mut agent = make_agent(&scenario.agent, &scenario.dwa)?;
                let log = run_episode(&mut env, agent.as_mut())?;
                let summary = EpisodeSummary::from_log(&log, &scenario.pso)?;
                let stem = logs_dir.join(format!("{}_e{:04}", job.test, job.index));
                let path = log.write(&stem)?;
                let rel = path.strip_prefix(&opts.out_dir).unwrap_or(&path).to_string_lossy().into_owned();
                Ok(Ok(EpisodeEntry {
                    test: job.test.clone(),
                    layout: job.layout.name.clone(),
                    pedestrians: job.pedestrians,
                    index: job.index,
                    seed: job.seed,
                    outcome: summary.outcome,
                    pso: summary.pso,
                    steps: log.steps.len(),
                    log: rel,
                }))
            })
            .collect()
    });

    let mut episodes = Vec::new();
    let mut failures = Vec::new();
    let mut per_cell: Vec<Vec<EpisodeSummary>> = vec![Vec::new(); cells.len()];
    for (job, r) in jobs.iter().zip(results) {
        match r? {
            Ok(e) => {
                per_cell[job.cell].push(EpisodeSummary { outcome: e.outcome, pso: e.pso });
                episodes.push(e);
            }
            Err(f) => failures.push(f),
        }
    }
    let mut rows = Vec::new();
    for (cell, ((test, peds), summaries)) in cells.iter().zip(&per_cell).enumerate() {
        if summaries.is_empty() {
            continue;
        }
        let shown = peds.unwrap_or_else(|| jobs.iter().find(|j| j.cell == cell).map_or(0, |j| j.layout.default_pedestrians));
        rows.push(aggregate(test, shown, summaries)?);
    }

    let results_path = opts.out_dir.join("results.csv");
    std::fs::write(&results_path, results_csv(&rows)).map_err(io_err(&results_path))?;
    let manifest = RunManifest {
        version: LOG_VERSION.to_string(),
        scenario: scenario.name.clone(),
        scenario_digest: scenario.digest(),
        base_seed,
        agent: scenario.agent.clone(),
        episodes,
        failures,
        results: "results.csv".into(),
        manifest: "manifest.json".into(),
    };
    let manifest_path = opts.out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, text).map_err(io_err(&manifest_path))?;
    Ok(BatchReport {
        manifest,
        rows,
        out_dir: opts.out_dir.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Match,
    HeaderMismatch,
    DivergenceAt(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub verdict: Verdict,
    pub warnings: Vec<String>,
}

/// Re-simulates the logged actions and compares every record.
pub fn replay_verify(log: &EpisodeLog) -> Result<VerifyReport, BenchError> {
    let mut warnings = Vec::new();
    if log.header.version != LOG_VERSION {
        warnings.push(format!("log version {} differs from simulator version {}", log.header.version, LOG_VERSION));
    }
    let layout = Layout::from_document(&log.header.layout)?;
    let mut env = Env::reset_with_layout(log.header.config.clone(), layout)?;
    let mut fresh = env.header().clone();
    fresh.version = log.header.version.clone();
    if fresh != log.header {
        return Ok(VerifyReport { verdict: Verdict::HeaderMismatch, warnings });
    }
    for (i, rec) in log.steps.iter().enumerate() {
        if env.is_done() {
            return Ok(VerifyReport { verdict: Verdict::DivergenceAt(i), warnings });
        }
        env.step(Action::new(rec.action_raw.v, rec.action_raw.omega))?;
        let replayed = env.log().steps.pop().expect("a step was taken");
        if &replayed != rec {
            return Ok(VerifyReport { verdict: Verdict::DivergenceAt(i), warnings });
        }
    }
    if !env.is_done() && log.steps.last().is_some_and(|s| s.terminated.is_terminal()) {
        return Ok(VerifyReport { verdict: Verdict::DivergenceAt(log.steps.len()), warnings });
    }
    Ok(VerifyReport { verdict: Verdict::Match, warnings })
}

const PX_PER_M: f64 = 40.0;
const MARGIN_PX: f64 = 20.0;

/// SVG of one episode: walls, global path, waypoints, robot trajectory
/// colored by speed, pedestrian trajectories, and goal/collision markers.
pub fn render_episode(log: &EpisodeLog, layout: Option<&Layout>) -> Result<String, BenchError> {
    let logged = Layout::from_document(&log.header.layout)?;
    if let Some(given) = layout {
        if given.to_document() != log.header.layout {
            return Err(BenchError::LayoutMismatch {
                given: given.name.clone(),
                logged: logged.name.clone(),
            });
        }
    }
    let h = logged.height;
    let x = |v: f64| MARGIN_PX + v * PX_PER_M;
    let y = |v: f64| MARGIN_PX + (h - v) * PX_PER_M;
    let (w_px, h_px) = (logged.width * PX_PER_M + 2.0 * MARGIN_PX, h * PX_PER_M + 2.0 * MARGIN_PX);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w_px:.0}" height="{h_px:.0}" viewBox="0 0 {w_px:.0} {h_px:.0}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<g id="walls" stroke="black" stroke-width="3">"#);
    for w in logged.all_walls() {
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#, x(w.a.x), y(w.a.y), x(w.b.x), y(w.b.y));
    }
    s.push_str("</g>\n");
    let poly = |pts: &mut dyn Iterator<Item = (f64, f64)>| pts.map(|(a, b)| format!("{:.2},{:.2}", x(a), y(b))).collect::<Vec<_>>().join(" ");
    let _ = writeln!(
        s,
        r##"<polyline id="path" fill="none" stroke="#999999" stroke-width="2" stroke-dasharray="6 4" points="{}"/>"##,
        poly(&mut log.header.global_path.iter().map(|p| (p.x, p.y)))
    );
    s.push_str("<g id=\"waypoints\" fill=\"#4477aa\">\n");
    for p in &log.header.waypoints {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3"/>"#, x(p.x), y(p.y));
    }
    s.push_str("</g>\n");
    for k in 0..log.header.peds_initial.len() {
        let start = &log.header.peds_initial[k];
        let mut pts = vec![(start.x, start.y)];
        pts.extend(log.steps.iter().filter_map(|st| st.peds.get(k).map(|p| (p.x, p.y))));
        let _ = writeln!(
            s,
            r##"<polyline class="pedestrian" fill="none" stroke="#cc6677" stroke-opacity="0.6" stroke-width="1.5" points="{}"/>"##,
            poly(&mut pts.into_iter())
        );
    }
    let vmax = log.header.config.bounds.v_max.max(1e-9);
    s.push_str("<g id=\"robot\" stroke-width=\"3\" stroke-linecap=\"round\">\n");
    let mut prev = (log.header.robot_start.x, log.header.robot_start.y);
    for st in &log.steps {
        let t = (st.action_clamped.v.abs() / vmax).clamp(0.0, 1.0);
        let color = format!("rgb({},{},{})", (255.0 * t).round(), 60, (255.0 * (1.0 - t)).round());
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}"/>"#, x(prev.0), y(prev.1), x(st.robot.x), y(st.robot.y));
        prev = (st.robot.x, st.robot.y);
    }
    s.push_str("</g>\n");
    let g = log.header.goal;
    let _ = writeln!(s, r##"<circle id="goal" cx="{:.2}" cy="{:.2}" r="{:.2}" fill="none" stroke="#228833" stroke-width="2"/>"##, x(g.x), y(g.y), log.header.config.goal_tolerance * PX_PER_M);
    if log.last_termination().is_some_and(|t| t.is_collision()) {
        let (cx, cy) = (x(prev.0), y(prev.1));
        let _ = writeln!(
            s,
            r##"<path id="collision" d="M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}" stroke="#ee3333" stroke-width="3"/>"##,
            cx - 8.0, cy - 8.0, cx + 8.0, cy + 8.0, cx - 8.0, cy + 8.0, cx + 8.0, cy - 8.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn episode(agent: &str, layout: &str, seed: u64) -> EpisodeLog {
        let mut env = Env::reset(EnvConfig::new(layout, None, seed)).unwrap();
        let mut a = make_agent(agent, &DwaParams::default()).unwrap();
        run_episode(&mut env, a.as_mut()).unwrap()
    }

    #[test]
    fn sampling_is_deterministic_and_covers_the_set() {
        let set = regime("T1").unwrap();
        let a: Vec<&str> = (0..50).map(|i| multi_layout_sample(&set, i, 3)).collect();
        let b: Vec<&str> = (0..50).map(|i| multi_layout_sample(&set, i, 3)).collect();
        assert_eq!(a, b);
        for name in &set {
            assert!(a.contains(&name.as_str()));
        }
    }

    #[test]
    fn scenario_parsing() {
        let s = Scenario::from_toml("name = \"x\"\nregime = \"T2\"\nagent = \"tracker\"\nepisodes = 2\npedestrians = [2, 3]\n[env]\nrobot_visible = false\n[env.crowd]\npref_speed = 1.5\n").unwrap();
        let cfg = s.base_config("WALLS-A").unwrap();
        assert!(!cfg.robot_visible);
        assert_eq!(cfg.crowd.pref_speed, 1.5);
        assert_eq!(s.resolve_layouts(Path::new(".")).unwrap().len(), 3);
        assert!(Scenario::from_toml("name = \"x\"\nlayouts = [\"WALLS-A\"]\nagent = \"dwa\"\nepisodes = 0\n").is_err());
        assert!(Scenario::from_toml("name = \"x\"\nlayouts = [\"WALLS-A\"]\nagent = \"dwa\"\nepisodes = 1\n[env]\nbogus = 1\n").is_err());
    }

    #[test]
    fn replay_detects_tampering() {
        let log = episode("tracker", "WALLS-A", 5);
        assert_eq!(replay_verify(&log).unwrap().verdict, Verdict::Match);
        let mut bad = log.clone();
        let k = bad.steps.len() / 2;
        bad.steps[k].reward += 1e-6;
        assert_eq!(replay_verify(&bad).unwrap().verdict, Verdict::DivergenceAt(k));
        let mut old = log.clone();
        old.header.version = "0.0.0".into();
        let r = replay_verify(&old).unwrap();
        assert_eq!(r.verdict, Verdict::Match);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn render_is_deterministic_and_checks_layout() {
        let log = episode("orca", "WALLS-B", 2);
        let a = render_episode(&log, None).unwrap();
        assert_eq!(a, render_episode(&log, None).unwrap());
        assert!(a.starts_with("<svg") && a.contains("id=\"walls\"") && a.contains("id=\"goal\""));
        let other = builtin_layout("WALLS-C").unwrap();
        assert!(matches!(render_episode(&log, Some(&other)), Err(BenchError::LayoutMismatch { .. })));
        assert!(render_episode(&log, Some(&builtin_layout("WALLS-B").unwrap())).is_ok());
    }
}
