//! Python bindings: environment stepping, the baseline agents, batch runs,
//! log replay and rendering, layouts, and metrics.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use socnav_core::agents::{self, DwaParams, Privileged};
use socnav_core::bench::{self, BatchOptions, Scenario, Verdict};
use socnav_core::env::{self, Action, EnvConfig, Observation, Termination};
use socnav_core::log;
use socnav_core::metrics::{self, PsoConfig};
use socnav_core::world;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::No => "none",
        Termination::Goal => "goal",
        Termination::PedestrianCollision => "pedestrian_collision",
        Termination::ObstacleCollision => "obstacle_collision",
        Termination::Timeout => "timeout",
    }
}

fn observation_dict<'py>(py: Python<'py>, o: &Observation) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("goal_distance", o.goal_distance)?;
    d.set_item("goal_bearing", o.goal_bearing)?;
    d.set_item("lidar", o.lidar.clone())?;
    d.set_item("waypoints", o.waypoints.iter().map(|w| (w.x, w.y)).collect::<Vec<_>>())?;
    Ok(d)
}

/// One navigation episode. `config` is an optional JSON object of
/// environment settings merged over the defaults.
#[pyclass(unsendable)]
struct Env {
    inner: env::Env,
}

#[pymethods]
impl Env {
    #[new]
    #[pyo3(signature = (layout, pedestrians=None, seed=0, config=None))]
    fn new(layout: &str, pedestrians: Option<usize>, seed: u64, config: Option<&str>) -> PyResult<Self> {
        let mut cfg = match config {
            Some(json) => serde_json::from_str::<EnvConfig>(json).map_err(value_err)?,
            None => EnvConfig::default(),
        };
        cfg.layout = layout.to_string();
        cfg.pedestrians = pedestrians;
        cfg.seed = seed;
        let inner = env::Env::reset(cfg).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Applies `(v, omega)` and returns `(observation, reward, termination)`.
    fn step<'py>(&mut self, py: Python<'py>, v: f64, omega: f64) -> PyResult<(Bound<'py, PyDict>, f64, &'static str)> {
        let out = self.inner.step(Action::new(v, omega)).map_err(runtime_err)?;
        Ok((observation_dict(py, &out.observation)?, out.reward, termination_name(out.terminated)))
    }

    fn observation<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        observation_dict(py, &self.inner.observation())
    }

    /// `(x, y, heading)`.
    #[getter]
    fn robot(&self) -> (f64, f64, f64) {
        let p = self.inner.robot();
        (p.position.x, p.position.y, p.heading)
    }

    #[getter]
    fn goal(&self) -> (f64, f64) {
        let g = self.inner.goal();
        (g.x, g.y)
    }

    /// `(x, y, vx, vy)` per pedestrian.
    #[getter]
    fn pedestrians(&self) -> Vec<(f64, f64, f64, f64)> {
        self.inner
            .pedestrians()
            .iter()
            .map(|a| (a.position.x, a.position.y, a.velocity.x, a.velocity.y))
            .collect()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    #[getter]
    fn termination(&self) -> &'static str {
        termination_name(self.inner.terminated())
    }

    fn is_done(&self) -> bool {
        self.inner.is_done()
    }

    fn log(&self) -> EpisodeLog {
        EpisodeLog { inner: self.inner.log() }
    }
}

/// A baseline robot policy: "dwa", "tracker" or "orca".
#[pyclass(unsendable)]
struct Agent {
    inner: Box<dyn agents::Agent>,
}

#[pymethods]
impl Agent {
    #[new]
    #[pyo3(signature = (name, dwa=None))]
    fn new(name: &str, dwa: Option<&str>) -> PyResult<Self> {
        let params = match dwa {
            Some(json) => serde_json::from_str::<DwaParams>(json).map_err(value_err)?,
            None => DwaParams::default(),
        };
        let inner = agents::make_agent(name, &params).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn reset(&mut self, env: &Env) {
        self.inner.reset(env.inner.header());
    }

    /// Next `(v, omega)` for the environment's current state.
    fn act(&mut self, env: &Env) -> (f64, f64) {
        let a = self.inner.act(&env.inner.observation(), Some(&Privileged::from_env(&env.inner)));
        (a.v, a.omega)
    }
}

#[pyclass]
struct EpisodeLog {
    inner: log::EpisodeLog,
}

#[pymethods]
impl EpisodeLog {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: log::EpisodeLog::read(&path).map_err(value_err)? })
    }

    #[staticmethod]
    fn from_jsonl(text: &str) -> PyResult<Self> {
        Ok(Self { inner: log::EpisodeLog::from_jsonl(text).map_err(value_err)? })
    }

    fn to_jsonl(&self) -> String {
        self.inner.to_jsonl()
    }

    /// Writes the log next to `stem` and returns the path used.
    fn write(&self, stem: PathBuf) -> PyResult<PathBuf> {
        self.inner.write(&stem).map_err(runtime_err)
    }

    fn __len__(&self) -> usize {
        self.inner.steps.len()
    }

    fn outcome(&self) -> PyResult<String> {
        let o = metrics::classify(&self.inner).map_err(value_err)?;
        Ok(serde_json::to_value(o).map_err(runtime_err)?.as_str().unwrap_or_default().to_string())
    }

    #[pyo3(signature = (threshold=0.1))]
    fn pso(&self, threshold: f64) -> f64 {
        metrics::pso(&self.inner, &PsoConfig { threshold, ..Default::default() })
    }

    fn episode_return(&self) -> f64 {
        metrics::episode_return(&self.inner)
    }

    /// Re-simulates the episode: "ok", "header mismatch" or "divergence at step N".
    fn verify(&self) -> PyResult<String> {
        let report = bench::replay_verify(&self.inner).map_err(value_err)?;
        Ok(match report.verdict {
            Verdict::Match => "ok".into(),
            Verdict::HeaderMismatch => "header mismatch".into(),
            Verdict::DivergenceAt(n) => format!("divergence at step {n}"),
        })
    }

    fn render(&self) -> PyResult<String> {
        bench::render_episode(&self.inner, None).map_err(value_err)
    }
}

/// Runs `agent` in `env` until termination.
#[pyfunction]
fn run_episode(env: &mut Env, agent: &mut Agent) -> PyResult<EpisodeLog> {
    let inner = bench::run_episode(&mut env.inner, agent.inner.as_mut()).map_err(runtime_err)?;
    Ok(EpisodeLog { inner })
}

/// Runs a scenario file and returns the results CSV.
#[pyfunction]
#[pyo3(signature = (scenario, out_dir, seed=None, jobs=1))]
fn run_batch(py: Python<'_>, scenario: PathBuf, out_dir: PathBuf, seed: Option<u64>, jobs: usize) -> PyResult<String> {
    let sc = Scenario::load(&scenario).map_err(value_err)?;
    let base_dir = scenario.parent().map(PathBuf::from).unwrap_or_default();
    let opts = BatchOptions { seed, jobs, out_dir, base_dir };
    let report = py.detach(|| bench::run_batch(&sc, &opts)).map_err(runtime_err)?;
    if report.has_failures() {
        return Err(runtime_err(format!("{} episodes failed to construct", report.manifest.failures.len())));
    }
    Ok(metrics::results_csv(&report.rows))
}

#[pyfunction]
fn layouts() -> Vec<String> {
    world::builtin_layouts().into_iter().map(|l| l.name).collect()
}

/// The JSON document of a built-in layout.
#[pyfunction]
fn export_layout(name: &str) -> PyResult<String> {
    world::builtin_layout(name)
        .map(|l| world::save_layout(&l))
        .ok_or_else(|| value_err(format!("unknown layout {name:?}")))
}

/// Per-step social score in centimeters from surface distances in meters.
#[pyfunction]
#[pyo3(signature = (distances, threshold=0.1))]
fn pso_step(distances: Vec<f64>, threshold: f64) -> f64 {
    metrics::pso_step(&distances, &PsoConfig { threshold, ..Default::default() })
}

#[pymodule]
fn socnav(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Env>()?;
    m.add_class::<Agent>()?;
    m.add_class::<EpisodeLog>()?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(run_batch, m)?)?;
    m.add_function(wrap_pyfunction!(layouts, m)?)?;
    m.add_function(wrap_pyfunction!(export_layout, m)?)?;
    m.add_function(wrap_pyfunction!(pso_step, m)?)?;
    m.add("AGENTS", agents::AGENT_NAMES.to_vec())?;
    Ok(())
}
