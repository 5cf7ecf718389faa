//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use socnav_core::agents::{make_agent, DwaParams};
use socnav_core::bench::{replay_verify, run_batch, run_episode, BatchOptions, BatchReport, Scenario, Verdict};
use socnav_core::crowd::{solve_lp2, solve_lp3, step_crowd_in, CrowdParams, CrowdState, HalfPlane, OrcaAgent};
use socnav_core::env::{scan, Action, Env, EnvConfig, EnvError, Termination};
use socnav_core::geometry::{point_segment_distance, Circle, Pose, Vec2};
use socnav_core::log::EpisodeLog;
use socnav_core::metrics::{exact_sum, pso_step, PsoConfig};
use socnav_core::planner::shortest_path_cells;
use socnav_core::world::{builtin_layout, builtin_layouts, sample_episode};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run_scenario(name: &str, out: &Path, jobs: usize) -> BatchReport {
    let path = scenario_path(name);
    let sc = Scenario::load(&path).expect("scenario loads");
    run_batch(
        &sc,
        &BatchOptions {
            seed: None,
            jobs,
            out_dir: out.to_path_buf(),
            base_dir: path.parent().unwrap().to_path_buf(),
        },
    )
    .expect("batch runs")
}

fn orca_safety() -> Outcome {
    let mut worst_pair = f64::INFINITY;
    let mut worst_wall = f64::INFINITY;
    let params = CrowdParams::default();
    for seed in 0..100u64 {
        let layout = builtin_layout(if seed % 2 == 0 { "WALLS-F" } else { "CIRCLE" }).unwrap();
        let n = (2 + (seed as usize % 15)).min(layout.pedestrian_capacity());
        let sample = sample_episode(&layout, n, seed).expect("episode samples");
        let agents = sample
            .pedestrian_tasks
            .iter()
            .map(|t| {
                let mut a = OrcaAgent::new(t.start, t.goal, &params);
                a.goal_source = Some(t.source);
                a
            })
            .collect();
        let walls = layout.all_walls();
        let mut state = CrowdState::new(agents, None, seed, params);
        for _ in 0..500 {
            state = step_crowd_in(&state, &walls, Some(&layout), 0.25);
            worst_pair = worst_pair.min(state.min_pair_clearance());
            for a in &state.agents {
                let d = walls.iter().map(|w| point_segment_distance(a.position, w)).fold(f64::INFINITY, f64::min);
                worst_wall = worst_wall.min(d - a.radius);
            }
        }
    }
    check(
        worst_pair >= -1e-9 && worst_wall >= -1e-9,
        format!("min pair surface distance {worst_pair:.3e} m, min wall clearance {worst_wall:.3e} m"),
    )
}

fn random_normal(rng: &mut ChaCha8Rng) -> Vec2 {
    let a = rng.gen_range(0.0..std::f64::consts::TAU);
    Vec2::new(a.cos(), a.sin())
}

fn lp_correctness() -> Outcome {
    let max_speed = 2.0;
    let mut lp2_bad = 0;
    let mut lp2_checked = 0;
    let mut lp3_worst: f64 = 0.0;
    let mut lp3_checked = 0;
    for k in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(k);
        // Feasible by construction: every half-plane contains q.
        let q = random_normal(&mut rng) * rng.gen_range(0.0..0.8 * max_speed);
        let planes: Vec<HalfPlane> = (0..rng.gen_range(1..10))
            .map(|_| {
                let n = random_normal(&mut rng);
                HalfPlane::new(q - n * rng.gen_range(0.05..1.0), n)
            })
            .collect();
        let pref = random_normal(&mut rng) * rng.gen_range(0.0..1.5 * max_speed);
        let (v, feasible) = solve_lp2(&planes, pref, max_speed);
        let oracle = common::lp2_sampling_oracle(&planes, pref, max_speed, 100_000, &mut rng);
        let valid = feasible && common::max_violation(&planes, v) <= 1e-9 && v.norm() <= max_speed + 1e-9;
        if let Some(best) = oracle {
            lp2_checked += 1;
            if !valid || v.distance(pref) > best + 1e-9 {
                lp2_bad += 1;
            }
        } else if !valid {
            lp2_bad += 1;
        }

        // Mostly infeasible: outward-facing constraints around the disk.
        let planes: Vec<HalfPlane> = loop {
            let set: Vec<HalfPlane> = (0..rng.gen_range(3..12))
                .map(|_| {
                    let dir = random_normal(&mut rng);
                    let p = dir * rng.gen_range(0.2..1.5 * max_speed);
                    HalfPlane::new(p, dir.rotate(rng.gen_range(-1.0..1.0)))
                })
                .collect();
            if !solve_lp2(&set, Vec2::ZERO, max_speed).1 {
                break set;
            }
        };
        let v = solve_lp3(&planes, max_speed);
        let got = common::max_violation(&planes, v);
        let want = common::lp3_grid_oracle(&planes, max_speed);
        lp3_checked += 1;
        let err = if v.norm() <= max_speed + 1e-9 { (got - want).abs() } else { f64::INFINITY };
        lp3_worst = lp3_worst.max(err);
    }
    check(
        lp2_bad == 0 && lp3_worst <= 1e-3,
        format!("LP2: {lp2_bad} violations over 1000 sets ({lp2_checked} with feasible samples); LP3: worst objective gap {lp3_worst:.2e} over {lp3_checked} sets"),
    )
}

fn planner_oracle() -> Outcome {
    let mut mismatches = 0;
    let mut reachable = 0;
    for k in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + k);
        let mut grid = common::random_grid(&mut rng, 40, 40, 0.2);
        let pick = |rng: &mut ChaCha8Rng| (rng.gen_range(0..40usize), rng.gen_range(0..40usize));
        let (s, g) = (pick(&mut rng), pick(&mut rng));
        grid.set_occupied(s, false);
        grid.set_occupied(g, false);
        let got = shortest_path_cells(&grid, s, g);
        let want = common::ucs_oracle(&grid, s, g);
        match (&got, want) {
            (Some((cells, st, di)), Some(w)) => {
                reachable += 1;
                let valid = cells.first() == Some(&s)
                    && cells.last() == Some(&g)
                    && cells.iter().all(|&c| grid.is_free(c))
                    && cells.windows(2).all(|p| {
                        let (dx, dy) = (p[1].0 as i64 - p[0].0 as i64, p[1].1 as i64 - p[0].1 as i64);
                        dx.abs() <= 1 && dy.abs() <= 1 && (dx, dy) != (0, 0)
                    });
                if !valid || (*st, *di) != w {
                    mismatches += 1;
                }
            }
            (None, None) => {}
            _ => mismatches += 1,
        }
    }
    check(mismatches == 0, format!("{mismatches} mismatches over 50 grids ({reachable} reachable)"))
}

fn lidar_oracle() -> Outcome {
    let layouts = builtin_layouts();
    let mut worst: f64 = 0.0;
    let mut rays = 0usize;
    for k in 0..1000u64 {
        let layout = &layouts[k as usize % layouts.len()];
        let env = Env::reset(EnvConfig::new(&layout.name, None, k)).expect("env resets");
        let circles: Vec<Circle> = env.pedestrians().iter().map(|p| Circle { center: p.position, radius: p.radius }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(k);
        let position = loop {
            let p = Vec2::new(rng.gen_range(0.0..layout.width), rng.gen_range(0.0..layout.height));
            if layout.clearance(p) >= 0.3 && circles.iter().all(|c| c.center.distance(p) >= c.radius + 0.3) {
                break p;
            }
        };
        let pose = Pose::new(position, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
        let lidar = &env.config().lidar;
        let got = scan(&pose, lidar, env.walls(), &circles);
        for (offset, g) in lidar.offsets().iter().zip(&got) {
            let want = common::march_ray(position, Vec2::from_angle(pose.heading + offset), env.walls(), &circles, lidar.max_range);
            worst = worst.max((g - want).abs());
            rays += 1;
        }
    }
    check(worst <= 2e-3, format!("worst |closed form - marching| {:.3} mm over {rays} rays", worst * 1e3))
}

fn reward_protocol() -> Outcome {
    let mut failures = Vec::new();
    let mut all_logs: Vec<EpisodeLog> = Vec::new();

    // Goal: the tracker reaches the goal of an empty corridor.
    let mut env = Env::reset(EnvConfig::new("WALLS-A", Some(0), 3)).unwrap();
    let goal = env.goal();
    let mut tracker = make_agent("tracker", &DwaParams::default()).unwrap();
    let log = run_episode(&mut env, tracker.as_mut()).unwrap();
    if log.last_termination() != Some(Termination::Goal) {
        failures.push("tracker did not reach the goal".to_string());
    }
    for s in &log.steps {
        let within = Vec2::new(s.robot.x, s.robot.y).distance(goal) <= 0.5;
        let fired = s.reward_terms.goal != 0.0;
        if fired != within || fired != (s.terminated == Termination::Goal) || (fired && s.reward_terms.goal != 1.0) {
            failures.push(format!("goal term inconsistent at step {}", s.step));
        }
    }
    all_logs.push(log);

    // Obstacle collision: drive straight until something is hit.
    let mut hit = false;
    for seed in 0..20 {
        let mut env = Env::reset(EnvConfig::new("WALLS-A", Some(0), seed)).unwrap();
        while !env.is_done() {
            env.step(Action::new(1.0, 0.0)).unwrap();
        }
        let log = env.log();
        if env.terminated() == Termination::ObstacleCollision {
            hit = true;
            let last = log.steps.last().unwrap();
            if last.reward_terms.collision != -1.0 {
                failures.push("obstacle collision term is not -1".into());
            }
            if !matches!(env.step(Action::STOP), Err(EnvError::SteppedAfterTermination)) {
                failures.push("stepping after a collision did not fail".into());
            }
        }
        all_logs.push(log);
    }
    if !hit {
        failures.push("no obstacle collision produced".into());
    }

    // Pedestrian collision: the tracker ignores pedestrians.
    let mut ped_hits = 0;
    for seed in 0..40 {
        let Ok(mut env) = Env::reset(EnvConfig::new("WALLS-A", Some(8), seed)) else {
            continue;
        };
        let log = run_episode(&mut env, tracker.as_mut()).unwrap();
        if log.last_termination() == Some(Termination::PedestrianCollision) {
            ped_hits += 1;
            if log.steps.last().unwrap().reward_terms.collision != -1.0 {
                failures.push("pedestrian collision term is not -1".into());
            }
        }
        all_logs.push(log);
    }
    if ped_hits == 0 {
        failures.push("no pedestrian collision produced".into());
    }

    // Timeout: stand still for the whole episode.
    let mut env = Env::reset(EnvConfig::new("CIRCLE", Some(0), 1)).unwrap();
    while !env.is_done() {
        env.step(Action::STOP).unwrap();
    }
    let log = env.log();
    let last = log.steps.last().unwrap();
    if log.steps.len() != 500 || last.terminated != Termination::Timeout || last.t != 125.0 {
        failures.push(format!("timeout after {} steps at t={} ({:?})", log.steps.len(), last.t, last.terminated));
    }
    if log.steps[..499].iter().any(|s| s.terminated != Termination::No) {
        failures.push("terminated before step 500".into());
    }
    let timestep_total = exact_sum(log.steps.iter().map(|s| s.reward_terms.timestep));
    if timestep_total != -0.5 {
        failures.push(format!("timestep terms sum to {timestep_total:?}"));
    }
    all_logs.push(log);

    let mismatched = all_logs
        .iter()
        .flat_map(|l| &l.steps)
        .filter(|s| s.reward.to_bits() != s.reward_terms.total().to_bits())
        .count();
    if mismatched > 0 {
        failures.push(format!("{mismatched} steps whose reward differs from the sum of its terms"));
    }
    let steps: usize = all_logs.iter().map(|l| l.steps.len()).sum();
    if failures.is_empty() {
        check(true, format!("{} episodes, {steps} steps, {ped_hits} pedestrian collisions, timestep sum exactly -0.5", all_logs.len()))
    } else {
        check(false, failures.join("; "))
    }
}

fn freezing_trend(report: &BatchReport) -> Outcome {
    let rows = &report.rows;
    let to: Vec<f64> = rows.iter().map(|r| r.to).collect();
    let s: Vec<f64> = rows.iter().map(|r| r.s).collect();
    let counts: Vec<usize> = rows.iter().map(|r| r.pedestrians).collect();
    let ok = counts == [4, 8, 16]
        && to.windows(2).all(|w| w[0] <= w[1])
        && s.windows(2).all(|w| w[0] >= w[1])
        && to[2] - to[0] >= 10.0;
    check(ok, format!("peds {counts:?}: TO {to:?}, S {s:?}"))
}

fn cooperative_circle(report: &BatchReport) -> Outcome {
    let r = &report.rows[0];
    check(
        r.s >= 95.0 && r.obstacle_collisions == 0 && r.episodes == 100,
        format!("S {}%, PC {}%, OC {}%, TO {}% over {} episodes", r.s, r.pc, r.oc, r.to, r.episodes),
    )
}

fn metric_identities(reports: &[&BatchReport]) -> Outcome {
    let rows: Vec<_> = reports.iter().flat_map(|r| &r.rows).collect();
    let identities = rows.iter().all(|r| r.s + r.c + r.to == 100.0 && r.c == r.pc + r.oc);
    let cfg = PsoConfig::default();
    let one = exact_sum([pso_step(&[0.04], &cfg), pso_step(&[], &cfg)]) / 2.0;
    let two = pso_step(&[0.05, 0.05], &cfg);
    let examples = (one - 3.0).abs() <= 1e-9 && (two - 10.0).abs() <= 1e-9;
    check(
        identities && examples,
        format!("{} rows checked; PSO examples {one} and {two}", rows.len()),
    )
}

fn same_tree(a: &Path, b: &Path) -> Result<usize, String> {
    let mut files = 0;
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        let mut entries: Vec<_> = std::fs::read_dir(a.join(&rel)).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name()).collect();
        entries.sort();
        for name in entries {
            let r = rel.join(&name);
            if a.join(&r).is_dir() {
                stack.push(r);
            } else {
                files += 1;
                let (x, y) = (std::fs::read(a.join(&r)), std::fs::read(b.join(&r)));
                match (x, y) {
                    (Ok(x), Ok(y)) if x == y => {}
                    _ => return Err(format!("{} differs", r.display())),
                }
            }
        }
    }
    Ok(files)
}

fn determinism(first: &[(&str, &BatchReport)]) -> Outcome {
    let mut compared = 0;
    let mut problems = Vec::new();
    let mut verified = 0;
    for (name, report) in first {
        let again = tempfile::tempdir().unwrap();
        run_scenario(name, again.path(), 2);
        match same_tree(&report.out_dir, again.path()) {
            Ok(n) => compared += n,
            Err(e) => problems.push(format!("{name}: {e}")),
        }
        for e in &report.manifest.episodes {
            let log = EpisodeLog::read(&report.out_dir.join(&e.log)).unwrap();
            match replay_verify(&log) {
                Ok(r) if r.verdict == Verdict::Match => verified += 1,
                Ok(r) => problems.push(format!("{}: {:?}", e.log, r.verdict)),
                Err(err) => problems.push(format!("{}: {err}", e.log)),
            }
        }
    }
    check(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{compared} artifacts bitwise identical across runs; {verified} logs replay-verified")
        } else {
            problems.join("; ")
        },
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |id: u32, name: &str, budget: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let t0 = Instant::now();
        let o = f();
        let elapsed = t0.elapsed();
        let in_time = budget.is_none_or(|b| elapsed <= b);
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget_note = budget.map_or(String::new(), |b| format!(", budget {} s", b.as_secs()));
        println!(
            "{} criterion {id} {name}: {} ({:.1} s{budget_note})",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
    };
    report(1, "orca-safety", Some(Duration::from_secs(60)), &mut orca_safety);
    report(2, "lp-correctness", Some(Duration::from_secs(60)), &mut lp_correctness);
    report(3, "planner-oracle", Some(Duration::from_secs(10)), &mut planner_oracle);
    report(4, "lidar-oracle", Some(Duration::from_secs(60)), &mut lidar_oracle);
    report(5, "reward-protocol", None, &mut reward_protocol);

    let dwa_dir = tempfile::tempdir().unwrap();
    let orca_dir = tempfile::tempdir().unwrap();
    let mut dwa = None;
    report(6, "freezing-trend", Some(Duration::from_secs(15 * 60)), &mut || {
        let r = run_scenario("walls_i_dwa_sweep.toml", dwa_dir.path(), 1);
        let o = freezing_trend(&r);
        dwa = Some(r);
        o
    });
    let mut orca = None;
    report(7, "cooperative-circle", Some(Duration::from_secs(5 * 60)), &mut || {
        let r = run_scenario("circle_orca.toml", orca_dir.path(), 1);
        let o = cooperative_circle(&r);
        orca = Some(r);
        o
    });
    let (dwa, orca) = (dwa.unwrap(), orca.unwrap());
    report(8, "metric-identities", None, &mut || metric_identities(&[&dwa, &orca]));
    report(9, "determinism", None, &mut || {
        determinism(&[("walls_i_dwa_sweep.toml", &dwa), ("circle_orca.toml", &orca)])
    });

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
