//! Episode outcomes, personal-space overlap, and batch aggregation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Termination;
use crate::log::EpisodeLog;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    PedestrianCollision,
    ObstacleCollision,
    Timeout,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("log ends without a terminal step")]
    TruncatedLog,
    #[error("cannot aggregate an empty batch")]
    EmptyBatch,
}

pub fn classify(log: &EpisodeLog) -> Result<Outcome, MetricsError> {
    match log.last_termination() {
        Some(Termination::Goal) => Ok(Outcome::Success),
        Some(Termination::PedestrianCollision) => Ok(Outcome::PedestrianCollision),
        Some(Termination::ObstacleCollision) => Ok(Outcome::ObstacleCollision),
        Some(Termination::Timeout) => Ok(Outcome::Timeout),
        Some(Termination::No) | None => Err(MetricsError::TruncatedLog),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    /// Personal-space threshold in meters.
    pub threshold: f64,
    /// Measure center to center instead of surface to surface.
    pub center_distance: bool,
    /// Accumulate raw distance instead of penetration depth.
    pub raw_distance: bool,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            threshold: 0.10,
            center_distance: false,
            raw_distance: false,
        }
    }
}

/// Per-step overlap contribution in centimeters from pedestrian distances.
pub fn pso_step(distances: &[f64], cfg: &PsoConfig) -> f64 {
    exact_sum(distances.iter().filter(|&&d| d < cfg.threshold).map(|&d| {
        if cfg.raw_distance {
            d * 100.0
        } else {
            (cfg.threshold - d) * 100.0
        }
    }))
}

/// Mean over steps of the summed personal-space overlap, in centimeters.
pub fn pso(log: &EpisodeLog, cfg: &PsoConfig) -> f64 {
    if log.steps.is_empty() {
        return 0.0;
    }
    let robot_r = log.header.config.robot_radius;
    let ped_r = log.header.config.crowd.radius;
    let per_step: Vec<f64> = log
        .steps
        .iter()
        .map(|s| {
            let d: Vec<f64> = s
                .peds
                .iter()
                .map(|p| {
                    let center = (p.x - s.robot.x).hypot(p.y - s.robot.y);
                    if cfg.center_distance {
                        center
                    } else {
                        center - robot_r - ped_r
                    }
                })
                .collect();
            pso_step(&d, cfg)
        })
        .collect();
    exact_sum(per_step) / log.steps.len() as f64
}

/// Sum of the logged step rewards, correctly rounded.
pub fn episode_return(log: &EpisodeLog) -> f64 {
    exact_sum(log.steps.iter().map(|s| s.reward))
}

/// Correctly rounded floating-point sum (Shewchuk partials with
/// round-half-even correction).
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut kept = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }
    let Some(mut n) = partials.len().checked_sub(1) else {
        return 0.0;
    };
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub outcome: Outcome,
    pub pso: f64,
}

impl EpisodeSummary {
    pub fn from_log(log: &EpisodeLog, cfg: &PsoConfig) -> Result<Self, MetricsError> {
        Ok(Self {
            outcome: classify(log)?,
            pso: pso(log, cfg),
        })
    }
}

/// One results-table row. Rates are percentages of `episodes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsRow {
    pub test: String,
    pub pedestrians: usize,
    pub episodes: usize,
    pub successes: usize,
    pub pedestrian_collisions: usize,
    pub obstacle_collisions: usize,
    pub timeouts: usize,
    pub s: f64,
    pub c: f64,
    pub pc: f64,
    pub oc: f64,
    pub to: f64,
    pub pso: f64,
}

pub const CSV_HEADER: &str = "Test,#ped,S,C,PC,OC,TO,PSO";

impl ResultsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.test, self.pedestrians, self.s, self.c, self.pc, self.oc, self.to, self.pso
        )
    }
}

pub fn aggregate(test: &str, pedestrians: usize, episodes: &[EpisodeSummary]) -> Result<ResultsRow, MetricsError> {
    if episodes.is_empty() {
        return Err(MetricsError::EmptyBatch);
    }
    let n = episodes.len();
    let count = |o: Outcome| episodes.iter().filter(|e| e.outcome == o).count();
    let (succ, pc, oc, to) = (
        count(Outcome::Success),
        count(Outcome::PedestrianCollision),
        count(Outcome::ObstacleCollision),
        count(Outcome::Timeout),
    );
    let pct = |k: usize| k as f64 * 100.0 / n as f64;
    Ok(ResultsRow {
        test: test.to_string(),
        pedestrians,
        episodes: n,
        successes: succ,
        pedestrian_collisions: pc,
        obstacle_collisions: oc,
        timeouts: to,
        s: pct(succ),
        c: pct(pc + oc),
        pc: pct(pc),
        oc: pct(oc),
        to: pct(to),
        pso: exact_sum(episodes.iter().map(|e| e.pso)) / n as f64,
    })
}

pub fn results_csv(rows: &[ResultsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pso_examples() {
        let cfg = PsoConfig::default();
        let steps = [pso_step(&[0.04], &cfg), pso_step(&[], &cfg)];
        assert!((exact_sum(steps) / 2.0 - 3.0).abs() < 1e-9);
        assert!((pso_step(&[0.05, 0.05], &cfg) - 10.0).abs() < 1e-9);
        assert_eq!(pso_step(&[0.10, 0.5], &cfg), 0.0);
        let raw = PsoConfig {
            raw_distance: true,
            ..cfg
        };
        assert!((pso_step(&[0.04], &raw) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn exact_sum_known_cases() {
        assert_eq!(exact_sum(std::iter::repeat(-0.001).take(500)), -0.5);
        assert_eq!(exact_sum(std::iter::repeat(0.1).take(10)), 1.0);
        assert_eq!(exact_sum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact_sum([]), 0.0);
    }

    #[test]
    fn aggregate_identities() {
        let mk = |o| EpisodeSummary { outcome: o, pso: 1.5 };
        let mut eps = vec![mk(Outcome::Success); 70];
        eps.extend(vec![mk(Outcome::PedestrianCollision); 12]);
        eps.extend(vec![mk(Outcome::ObstacleCollision); 3]);
        eps.extend(vec![mk(Outcome::Timeout); 15]);
        let r = aggregate("t", 4, &eps).unwrap();
        assert_eq!((r.s, r.c, r.pc, r.oc, r.to), (70.0, 15.0, 12.0, 3.0, 15.0));
        assert_eq!(r.s + r.c + r.to, 100.0);
        assert_eq!(r.pso, 1.5);
        assert_eq!(aggregate("t", 4, &[]), Err(MetricsError::EmptyBatch));
        assert_eq!(r.csv_line(), "t,4,70,15,12,3,15,1.5");
    }

    fn outcome() -> impl Strategy<Value = Outcome> {
        prop_oneof![
            Just(Outcome::Success),
            Just(Outcome::PedestrianCollision),
            Just(Outcome::ObstacleCollision),
            Just(Outcome::Timeout)
        ]
    }

    proptest! {
        #[test]
        fn counts_partition_and_hundred_episode_rates_are_exact(
            outcomes in proptest::collection::vec(outcome(), 100),
        ) {
            let eps: Vec<EpisodeSummary> = outcomes.iter().map(|&o| EpisodeSummary { outcome: o, pso: 0.0 }).collect();
            let r = aggregate("p", 1, &eps).unwrap();
            prop_assert_eq!(r.successes + r.pedestrian_collisions + r.obstacle_collisions + r.timeouts, 100);
            prop_assert_eq!(r.s + r.c + r.to, 100.0);
            prop_assert_eq!(r.c, r.pc + r.oc);
        }

        #[test]
        fn exact_sum_is_order_independent(mut xs in proptest::collection::vec(-1e6f64..1e6, 0..40)) {
            let a = exact_sum(xs.iter().copied());
            xs.reverse();
            prop_assert_eq!(a, exact_sum(xs.iter().copied()));
            xs.sort_by(|a, b| a.total_cmp(b));
            prop_assert_eq!(a, exact_sum(xs.iter().copied()));
        }
    }
}
