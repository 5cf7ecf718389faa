//! Episode log records: one JSON header line followed by one line per step.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvConfig, Termination};
use crate::geometry::Vec2;
use crate::world::LayoutDocument;

pub const LOG_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Logs larger than this are written gzip-compressed.
pub const GZIP_THRESHOLD: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed log line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("log has no header record")]
    MissingHeader,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotRecord {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub v: f64,
    pub omega: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PedRecord {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub goal: f64,
    pub timestep: f64,
    pub collision: f64,
    pub potential: f64,
    pub waypoint: f64,
}

impl RewardTerms {
    /// The step reward; terms are added in a fixed order.
    pub fn total(&self) -> f64 {
        self.goal + self.timestep + self.collision + self.potential + self.waypoint
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PedInitial {
    pub x: f64,
    pub y: f64,
    pub gx: f64,
    pub gy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub version: String,
    pub config: EnvConfig,
    pub seed: u64,
    /// Seed actually used for sampling after NoPath resampling.
    pub sample_seed: u64,
    pub layout_name: String,
    pub layout: LayoutDocument,
    pub robot_start: RobotRecord,
    pub goal: Vec2,
    pub waypoints: Vec<Vec2>,
    pub global_path: Vec<Vec2>,
    pub peds_initial: Vec<PedInitial>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub robot: RobotRecord,
    pub action_raw: ActionRecord,
    pub action_clamped: ActionRecord,
    pub peds: Vec<PedRecord>,
    pub reward: f64,
    pub reward_terms: RewardTerms,
    pub cursor: usize,
    pub reached: usize,
    pub terminated: Termination,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(Box<LogHeader>),
    Step(Box<StepRecord>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub steps: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn last_termination(&self) -> Option<Termination> {
        self.steps.last().map(|s| s.terminated)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&Line::Header(Box::new(self.header.clone()))).expect("header serializes");
        out.push('\n');
        for s in &self.steps {
            out.push_str(&serde_json::to_string(&Line::Step(Box::new(s.clone()))).expect("step serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<EpisodeLog, LogError> {
        let mut header = None;
        let mut steps = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(line).map_err(|e| LogError::Malformed {
                line: i + 1,
                reason: e.to_string(),
            })?;
            match parsed {
                Line::Header(h) if header.is_none() => header = Some(*h),
                Line::Header(_) => {
                    return Err(LogError::Malformed {
                        line: i + 1,
                        reason: "second header record".into(),
                    })
                }
                Line::Step(s) => steps.push(*s),
            }
        }
        Ok(EpisodeLog {
            header: header.ok_or(LogError::MissingHeader)?,
            steps,
        })
    }

    /// Writes `<stem>.jsonl`, or `<stem>.jsonl.gz` above the size threshold.
    /// Returns the path written.
    pub fn write(&self, stem: &Path) -> Result<PathBuf, LogError> {
        let text = self.to_jsonl();
        let io = |path: &Path| {
            let p = path.to_path_buf();
            move |source| LogError::Io { path: p, source }
        };
        if text.len() > GZIP_THRESHOLD {
            let path = stem.with_extension("jsonl.gz");
            let file = File::create(&path).map_err(io(&path))?;
            let mut enc = GzEncoder::new(BufWriter::new(file), Compression::default());
            enc.write_all(text.as_bytes()).map_err(io(&path))?;
            enc.finish().and_then(|mut w| w.flush()).map_err(io(&path))?;
            Ok(path)
        } else {
            let path = stem.with_extension("jsonl");
            std::fs::write(&path, text).map_err(io(&path))?;
            Ok(path)
        }
    }

    /// Reads a plain or gzip-compressed log.
    pub fn read(path: &Path) -> Result<EpisodeLog, LogError> {
        let io = |source| LogError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::open(path).map_err(io)?;
        let mut text = String::new();
        if path.extension().is_some_and(|e| e == "gz") {
            GzDecoder::new(file).read_to_string(&mut text).map_err(io)?;
        } else {
            BufReader::new(file).read_to_string(&mut text).map_err(io)?;
        }
        EpisodeLog::from_jsonl(&text)
    }
}
