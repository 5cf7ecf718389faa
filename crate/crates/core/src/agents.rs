//! Baseline robot controllers behind one interface: a dynamic-window local
//! planner over a replanned global path, a naive waypoint tracker, and a
//! cooperative ORCA robot.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crowd::{compute_velocity, CrowdParams, OrcaAgent};
use crate::env::{integrate_unicycle, Action, ActionBounds, Env, Observation};
use crate::geometry::{normalize_angle, point_segment_distance, Pose, Segment, Vec2};
use crate::log::LogHeader;
use crate::planner::{shortest_path_cells, WaypointTrack};
use crate::world::{rasterize, Layout, OccupancyGrid};

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("unknown agent {0:?} (expected dwa, tracker or orca)")]
    Unknown(String),
}

/// Ground truth a model-based baseline may read.
#[derive(Clone, Copy, Debug)]
pub struct Privileged<'a> {
    pub robot: Pose,
    pub velocity: Action,
    pub goal: Vec2,
    pub robot_radius: f64,
    pub dt: f64,
    pub bounds: ActionBounds,
    pub pedestrians: &'a [OrcaAgent],
    pub walls: &'a [Segment],
    pub layout: &'a Layout,
    pub track: &'a WaypointTrack,
    pub crowd: &'a CrowdParams,
}

impl<'a> Privileged<'a> {
    pub fn from_env(env: &'a Env) -> Self {
        let cfg = env.config();
        Privileged {
            robot: env.robot(),
            velocity: env.robot_velocity(),
            goal: env.goal(),
            robot_radius: cfg.robot_radius,
            dt: cfg.dt,
            bounds: cfg.bounds,
            pedestrians: env.pedestrians(),
            walls: env.walls(),
            layout: env.layout(),
            track: env.track(),
            crowd: &cfg.crowd,
        }
    }
}

pub trait Agent: Send {
    fn name(&self) -> &'static str;
    fn reset(&mut self, header: &LogHeader);
    fn act(&mut self, observation: &Observation, privileged: Option<&Privileged>) -> Action;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DwaParams {
    pub path_distance_bias: f64,
    pub goal_distance_bias: f64,
    pub occdist_scale: f64,
    pub v_samples: usize,
    pub omega_samples: usize,
    pub sim_time: f64,
    pub sim_granularity: f64,
    pub acc_lim_v: f64,
    pub acc_lim_omega: f64,
    pub replan_interval: usize,
    pub footprint_padding: f64,
    pub cost_scaling_factor: f64,
    pub inflation_radius: f64,
    pub forward_point_distance: f64,
    /// Arc length ahead of the closest path point used as the local goal.
    pub local_goal_lookahead: f64,
    pub grid_resolution: f64,
}

impl Default for DwaParams {
    fn default() -> Self {
        Self {
            path_distance_bias: 48.0,
            goal_distance_bias: 24.0,
            occdist_scale: 0.01,
            v_samples: 11,
            omega_samples: 11,
            sim_time: 1.5,
            sim_granularity: 0.1,
            acc_lim_v: 0.5,
            acc_lim_omega: 1.0,
            replan_interval: 8,
            footprint_padding: 0.05,
            cost_scaling_factor: 2.58,
            inflation_radius: 2.5,
            forward_point_distance: 0.325,
            local_goal_lookahead: 2.0,
            grid_resolution: 0.1,
        }
    }
}

impl DwaParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.path_distance_bias < 0.0 || self.goal_distance_bias < 0.0 || self.occdist_scale < 0.0 {
            return Err("DWA weights must be non-negative".into());
        }
        if self.v_samples < 2 || self.omega_samples < 2 {
            return Err("DWA needs at least two samples per axis".into());
        }
        if !(self.sim_time > 0.0 && self.sim_granularity > 0.0 && self.grid_resolution > 0.0) || self.replan_interval == 0 {
            return Err("DWA horizon, granularity, resolution and replan interval must be positive".into());
        }
        Ok(())
    }
}

/// Wall clearance sampled at grid cell centers, bilinearly interpolated.
#[derive(Clone, Debug)]
pub struct ClearanceField {
    resolution: f64,
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ClearanceField {
    pub fn new(walls: &[Segment], width_m: f64, height_m: f64, resolution: f64) -> Self {
        let width = (width_m / resolution).round() as usize;
        let height = (height_m / resolution).round() as usize;
        let mut values = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                let p = Vec2::new((c as f64 + 0.5) * resolution, (r as f64 + 0.5) * resolution);
                values.push(walls.iter().map(|w| point_segment_distance(p, w)).fold(f64::INFINITY, f64::min));
            }
        }
        Self {
            resolution,
            width,
            height,
            values,
        }
    }

    pub fn at(&self, p: Vec2) -> f64 {
        let fx = (p.x / self.resolution - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (p.y / self.resolution - 0.5).clamp(0.0, (self.height - 1) as f64);
        let (c0, r0) = (fx.floor() as usize, fy.floor() as usize);
        let (c1, r1) = ((c0 + 1).min(self.width - 1), (r0 + 1).min(self.height - 1));
        let (tx, ty) = (fx - c0 as f64, fy - r0 as f64);
        let v = |c: usize, r: usize| self.values[r * self.width + c];
        let bottom = v(c0, r0) * (1.0 - tx) + v(c1, r0) * tx;
        let top = v(c0, r1) * (1.0 - tx) + v(c1, r1) * tx;
        let inside = bottom * (1.0 - ty) + top * ty;
        // Outside the world counts as colliding.
        if p.x < 0.0 || p.y < 0.0 || p.x > self.width as f64 * self.resolution || p.y > self.height as f64 * self.resolution {
            return 0.0;
        }
        inside
    }
}

/// One scored candidate of the dynamic window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub action: Action,
    pub collides: bool,
    pub path_distance: f64,
    pub goal_distance: f64,
    pub obstacle_cost: f64,
}

impl Candidate {
    pub fn score(&self, p: &DwaParams) -> f64 {
        p.path_distance_bias * self.path_distance + p.goal_distance_bias * self.goal_distance + p.occdist_scale * self.obstacle_cost
    }
}

/// Velocity samples of the dynamic window in evaluation order: linear speed
/// descending, then angular rate by magnitude (negative first on ties).
pub fn dynamic_window(current: Action, params: &DwaParams, bounds: &ActionBounds, dt: f64) -> Vec<Action> {
    let span = |center: f64, acc: f64, lo: f64, hi: f64, n: usize| -> Vec<f64> {
        let a = (center - acc * dt).max(lo).min(hi);
        let b = (center + acc * dt).min(hi).max(lo);
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    };
    let mut vs = span(current.v, params.acc_lim_v, bounds.v_min, bounds.v_max, params.v_samples);
    let mut ws = span(current.omega, params.acc_lim_omega, -bounds.omega_max, bounds.omega_max, params.omega_samples);
    vs.sort_by(|a, b| b.total_cmp(a));
    ws.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
    let mut out = Vec::with_capacity(vs.len() * ws.len());
    for &v in &vs {
        for &w in &ws {
            out.push(Action::new(v, w));
        }
    }
    out
}

/// Index of the lowest-scoring non-colliding candidate; earlier wins ties.
pub fn select_best(candidates: &[Candidate], params: &DwaParams) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        if c.collides {
            continue;
        }
        let s = c.score(params);
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

pub struct DwaAgent {
    pub params: DwaParams,
    field: Option<(String, ClearanceField)>,
    static_grid: Option<(String, OccupancyGrid)>,
    plan: Option<Vec<Vec2>>,
    progress: usize,
    steps: usize,
}

impl DwaAgent {
    pub fn new(params: DwaParams) -> Self {
        Self {
            params,
            field: None,
            static_grid: None,
            plan: None,
            progress: 0,
            steps: 0,
        }
    }

    pub fn plan(&self) -> Option<&[Vec2]> {
        self.plan.as_deref()
    }

    fn ensure_maps(&mut self, layout: &Layout, robot_radius: f64) {
        if self.field.as_ref().is_none_or(|(n, _)| *n != layout.name) {
            let f = ClearanceField::new(&layout.all_walls(), layout.width, layout.height, self.params.grid_resolution);
            self.field = Some((layout.name.clone(), f));
        }
        if self.static_grid.as_ref().is_none_or(|(n, _)| *n != layout.name) {
            let g = rasterize(layout, self.params.grid_resolution, robot_radius);
            self.static_grid = Some((layout.name.clone(), g));
        }
    }

    /// Global replan on the static grid with pedestrians stamped in.
    fn replan(&mut self, p: &Privileged) {
        let mut grid = self.static_grid.as_ref().expect("maps built").1.clone();
        for ped in p.pedestrians {
            grid.stamp_disc(ped.position, ped.radius + p.robot_radius);
        }
        let start = grid.cell_of(p.robot.position).and_then(|c| grid.nearest_free(c));
        let goal = grid.cell_of(p.goal).and_then(|c| grid.nearest_free(c));
        self.plan = match (start, goal) {
            (Some(s), Some(g)) => shortest_path_cells(&grid, s, g).map(|(cells, _, _)| {
                let mut pts: Vec<Vec2> = cells.iter().map(|&c| grid.center(c)).collect();
                pts.push(p.goal);
                pts
            }),
            _ => None,
        };
        self.progress = 0;
    }

    /// Scores every sample of the dynamic window.
    pub fn evaluate(&self, p: &Privileged) -> Vec<Candidate> {
        let params = &self.params;
        let field = &self.field.as_ref().expect("maps built").1;
        let plan = self.plan.as_deref().unwrap_or(&[]);
        let (local_goal, window) = local_targets(plan, self.progress, params.local_goal_lookahead, p.goal);
        let steps = (params.sim_time / params.sim_granularity).round().max(1.0) as usize;
        let h = params.sim_time / steps as f64;
        let lethal = p.robot_radius + params.footprint_padding;
        dynamic_window(p.velocity, params, &p.bounds, p.dt)
            .into_iter()
            .map(|action| {
                let mut pose = p.robot;
                let mut collides = false;
                let mut max_cost: f64 = 0.0;
                for _ in 0..steps {
                    pose = integrate_unicycle(&pose, action.v, action.omega, h);
                    let wall = field.at(pose.position);
                    let mut clearance = wall - p.robot_radius;
                    for ped in p.pedestrians {
                        clearance = clearance.min(ped.position.distance(pose.position) - ped.radius - p.robot_radius);
                    }
                    if clearance + p.robot_radius < lethal {
                        collides = true;
                        break;
                    }
                    if clearance + p.robot_radius <= params.inflation_radius {
                        max_cost = max_cost.max(252.0 * (-params.cost_scaling_factor * clearance.max(0.0)).exp());
                    }
                }
                let fwd = pose.position + pose.direction() * params.forward_point_distance;
                let path_distance = if window.len() >= 2 {
                    window
                        .windows(2)
                        .map(|s| point_segment_distance(fwd, &Segment::new(s[0], s[1])))
                        .fold(f64::INFINITY, f64::min)
                } else {
                    0.0
                };
                Candidate {
                    action,
                    collides,
                    path_distance,
                    goal_distance: fwd.distance(local_goal),
                    obstacle_cost: max_cost,
                }
            })
            .collect()
    }
}

/// Local goal `lookahead` meters of path past `from`, and the path points in between.
fn local_targets(plan: &[Vec2], from: usize, lookahead: f64, goal: Vec2) -> (Vec2, Vec<Vec2>) {
    if plan.is_empty() {
        return (goal, Vec::new());
    }
    let mut window = vec![plan[from]];
    let mut acc = 0.0;
    for i in from + 1..plan.len() {
        acc += plan[i - 1].distance(plan[i]);
        window.push(plan[i]);
        if acc >= lookahead {
            break;
        }
    }
    (*window.last().expect("non-empty"), window)
}

impl Agent for DwaAgent {
    fn name(&self) -> &'static str {
        "dwa"
    }

    fn reset(&mut self, _header: &LogHeader) {
        self.plan = None;
        self.progress = 0;
        self.steps = 0;
    }

    fn act(&mut self, _observation: &Observation, privileged: Option<&Privileged>) -> Action {
        let p = privileged.expect("dwa requires privileged state");
        self.ensure_maps(p.layout, p.robot_radius);
        if self.steps % self.params.replan_interval == 0 {
            self.replan(p);
        }
        self.steps += 1;
        let Some(plan) = self.plan.as_deref() else {
            return Action::STOP;
        };
        // Advance progress to the closest point within a short window ahead.
        let end = (self.progress + 30).min(plan.len());
        let mut best = self.progress;
        for i in self.progress..end {
            if plan[i].distance(p.robot.position) < plan[best].distance(p.robot.position) {
                best = i;
            }
        }
        self.progress = best;
        let candidates = self.evaluate(p);
        match select_best(&candidates, &self.params) {
            Some(i) => candidates[i].action.clamped(&p.bounds),
            None => Action::STOP,
        }
    }
}

/// Proportional heading control toward the first observed waypoint.
pub struct WaypointTracker {
    pub heading_gain: f64,
    pub slowdown_radius: f64,
    pub bounds: ActionBounds,
}

impl Default for WaypointTracker {
    fn default() -> Self {
        Self {
            heading_gain: 1.0,
            slowdown_radius: 0.5,
            bounds: ActionBounds::default(),
        }
    }
}

impl WaypointTracker {
    pub fn command(&self, waypoint: Vec2) -> Action {
        let dist = waypoint.norm();
        if dist < 1e-9 {
            return Action::STOP;
        }
        let bearing = waypoint.angle();
        let v = self.bounds.v_max * bearing.cos().max(0.0) * (dist / self.slowdown_radius).min(1.0);
        Action::new(v, self.heading_gain * bearing).clamped(&self.bounds)
    }
}

impl Agent for WaypointTracker {
    fn name(&self) -> &'static str {
        "tracker"
    }

    fn reset(&mut self, _header: &LogHeader) {}

    fn act(&mut self, observation: &Observation, _privileged: Option<&Privileged>) -> Action {
        self.command(observation.waypoints.first().copied().unwrap_or(Vec2::ZERO))
    }
}

/// The robot as one more ORCA agent, converted to unicycle commands.
pub struct OrcaRobot {
    pub max_speed: f64,
    /// Added to the robot radius in its own constraints.
    pub radius_margin: f64,
    pub heading_gain: f64,
    pub responsibility: f64,
}

impl Default for OrcaRobot {
    fn default() -> Self {
        Self {
            max_speed: 1.0,
            radius_margin: 0.15,
            heading_gain: 2.0,
            responsibility: 0.5,
        }
    }
}

impl OrcaRobot {
    /// Holonomic ORCA velocity for the robot.
    pub fn desired_velocity(&self, p: &Privileged) -> Vec2 {
        let target = p.track.target();
        let mut me = OrcaAgent::new(p.robot.position, target, p.crowd);
        me.radius = p.robot_radius + self.radius_margin;
        me.max_speed = self.max_speed;
        me.pref_speed = self.max_speed;
        me.velocity = p.robot.direction() * p.velocity.v;
        if target != p.goal {
            // Intermediate waypoints are passed through at full speed.
            me.goal = p.robot.position + (target - p.robot.position).normalized() * 1e3;
        }
        compute_velocity(&me, p.pedestrians, p.walls, p.dt, self.responsibility)
    }

    /// Heading-control conversion of a holonomic velocity.
    pub fn to_unicycle(&self, desired: Vec2, robot: &Pose, bounds: &ActionBounds) -> Action {
        let speed = desired.norm();
        if speed < 1e-9 {
            return Action::STOP;
        }
        let err = normalize_angle(desired.angle() - robot.heading);
        Action::new(speed * err.cos().max(0.0), self.heading_gain * err).clamped(bounds)
    }
}

impl Agent for OrcaRobot {
    fn name(&self) -> &'static str {
        "orca"
    }

    fn reset(&mut self, _header: &LogHeader) {}

    fn act(&mut self, _observation: &Observation, privileged: Option<&Privileged>) -> Action {
        let p = privileged.expect("orca robot requires privileged state");
        let v = self.desired_velocity(p);
        self.to_unicycle(v, &p.robot, &p.bounds)
    }
}

/// Agent factory by CLI name.
pub fn make_agent(name: &str, dwa: &DwaParams) -> Result<Box<dyn Agent>, AgentError> {
    match name {
        "dwa" => Ok(Box::new(DwaAgent::new(dwa.clone()))),
        "tracker" => Ok(Box::new(WaypointTracker::default())),
        "orca" => Ok(Box::new(OrcaRobot::default())),
        other => Err(AgentError::Unknown(other.to_string())),
    }
}

pub const AGENT_NAMES: [&str; 3] = ["dwa", "tracker", "orca"];
