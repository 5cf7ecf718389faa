//! The episodic navigation environment: reset/step, unicycle kinematics,
//! collision checks, lidar observations, the five-term reward, and termination.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crowd::{step_crowd_in, CrowdParams, CrowdState, OrcaAgent};
use crate::geometry::{normalize_angle, point_segment_distance, raycast, to_robot_frame, Circle, Pose, Segment, Vec2};
use crate::log::{
    ActionRecord, EpisodeLog, LogHeader, PedInitial, PedRecord, RewardTerms, RobotRecord, StepRecord, LOG_VERSION,
};
use crate::planner::{extract_waypoints, reference_window, shortest_path, GlobalPath, PlanError, WaypointTrack};
use crate::world::{builtin_layout, rasterize, sample_episode, EpisodeSample, Layout, OccupancyGrid, SamplingError};

/// Attempts at drawing an episode whose goal is reachable.
pub const MAX_RESET_ATTEMPTS: u64 = 10;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown layout {0:?}")]
    UnknownLayout(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("no path after {attempts} sampling attempts: {last}")]
    NoPath { attempts: u64, last: PlanError },
    #[error("step called after the episode terminated")]
    SteppedAfterTermination,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardParams {
    pub goal: f64,
    pub timestep: f64,
    pub collision: f64,
    pub k_potential: f64,
    pub k_waypoint: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            goal: 1.0,
            timestep: -0.001,
            collision: -1.0,
            k_potential: 1.0,
            k_waypoint: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarConfig {
    pub beams: usize,
    /// Field of view in radians, centered on the heading.
    pub fov: f64,
    pub max_range: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            beams: 128,
            fov: 2.0 * PI,
            max_range: 10.0,
        }
    }
}

impl LidarConfig {
    /// Beam angle offsets relative to the heading.
    pub fn offsets(&self) -> Vec<f64> {
        let n = self.beams;
        if self.fov >= 2.0 * PI - 1e-12 {
            (0..n).map(|i| -PI + i as f64 * (2.0 * PI / n as f64)).collect()
        } else if n == 1 {
            vec![0.0]
        } else {
            (0..n)
                .map(|i| -self.fov / 2.0 + i as f64 * (self.fov / (n - 1) as f64))
                .collect()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub grid_resolution: f64,
    pub inflation_radius: f64,
    pub waypoint_spacing: f64,
    pub waypoint_tolerance: f64,
    pub window: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            grid_resolution: 0.1,
            inflation_radius: 0.3,
            waypoint_spacing: 1.0,
            waypoint_tolerance: 0.5,
            window: 6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionBounds {
    pub v_min: f64,
    pub v_max: f64,
    pub omega_max: f64,
}

impl Default for ActionBounds {
    fn default() -> Self {
        Self {
            v_min: -0.2,
            v_max: 1.0,
            omega_max: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub layout: String,
    /// `None` uses the layout's default count.
    pub pedestrians: Option<usize>,
    pub seed: u64,
    pub dt: f64,
    pub max_steps: usize,
    pub substeps: usize,
    pub goal_tolerance: f64,
    pub robot_radius: f64,
    pub robot_visible: bool,
    pub bounds: ActionBounds,
    pub reward: RewardParams,
    pub lidar: LidarConfig,
    pub planner: PlannerConfig,
    pub crowd: CrowdParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            layout: "WALLS-A".into(),
            pedestrians: None,
            seed: 0,
            dt: 0.25,
            max_steps: 500,
            substeps: 5,
            goal_tolerance: 0.5,
            robot_radius: 0.3,
            robot_visible: true,
            bounds: ActionBounds::default(),
            reward: RewardParams::default(),
            lidar: LidarConfig::default(),
            planner: PlannerConfig::default(),
            crowd: CrowdParams::default(),
        }
    }
}

impl EnvConfig {
    pub fn new(layout: &str, pedestrians: Option<usize>, seed: u64) -> Self {
        Self {
            layout: layout.to_string(),
            pedestrians,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::InvalidConfig(m));
        if !(self.dt > 0.0) || self.max_steps == 0 {
            return bad(format!("dt {} and max_steps {} must be positive", self.dt, self.max_steps));
        }
        if (self.dt * self.max_steps as f64 - 125.0).abs() > 1e-9 {
            return bad(format!("dt x max_steps must equal 125 s, got {}", self.dt * self.max_steps as f64));
        }
        if !(self.goal_tolerance > 0.0) || !(self.robot_radius > 0.0) || self.substeps == 0 {
            return bad("goal tolerance, robot radius and substeps must be positive".into());
        }
        if self.lidar.beams == 0 || !(self.lidar.max_range > 0.0) || !(self.lidar.fov > 0.0) {
            return bad("lidar needs beams > 0, max_range > 0, fov > 0".into());
        }
        if !(self.bounds.v_min <= self.bounds.v_max) || !(self.bounds.omega_max >= 0.0) {
            return bad("action bounds are inverted".into());
        }
        let c = &self.crowd;
        if !(c.radius > 0.0 && c.pref_speed > 0.0 && c.pref_speed <= c.max_speed && c.time_horizon > 0.0 && c.time_horizon_obstacles > 0.0) {
            return bad("crowd parameters violate radius > 0, 0 < pref_speed <= max_speed, horizons > 0".into());
        }
        if self.planner.window == 0 || !(self.planner.waypoint_spacing > 0.0) || !(self.planner.waypoint_tolerance > 0.0) || !(self.planner.grid_resolution > 0.0) {
            return bad("planner parameters must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub v: f64,
    pub omega: f64,
}

impl Action {
    pub const STOP: Action = Action { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn clamped(&self, bounds: &ActionBounds) -> Action {
        let v = if self.v.is_nan() { 0.0 } else { self.v };
        let omega = if self.omega.is_nan() { 0.0 } else { self.omega };
        Action {
            v: v.clamp(bounds.v_min, bounds.v_max),
            omega: omega.clamp(-bounds.omega_max, bounds.omega_max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub goal_distance: f64,
    pub goal_bearing: f64,
    pub lidar: Vec<f64>,
    pub waypoints: Vec<Vec2>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    No,
    Goal,
    PedestrianCollision,
    ObstacleCollision,
    Timeout,
}

impl Termination {
    pub fn is_terminal(self) -> bool {
        self != Termination::No
    }

    pub fn is_collision(self) -> bool {
        matches!(self, Termination::PedestrianCollision | Termination::ObstacleCollision)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Collision {
    None,
    Obstacle,
    Pedestrian,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    pub terms: RewardTerms,
    pub action_raw: Action,
    pub action_clamped: Action,
    pub reached_waypoints: usize,
    pub record: StepRecord,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: Termination,
    pub info: StepInfo,
}

/// Collision test for a robot disc; pedestrian contact takes precedence.
pub fn detect_collision(robot: &Pose, radius: f64, walls: &[Segment], pedestrians: &[Circle]) -> Collision {
    if pedestrians
        .iter()
        .any(|c| c.center.distance(robot.position) < radius + c.radius)
    {
        return Collision::Pedestrian;
    }
    if walls.iter().any(|w| point_segment_distance(robot.position, w) < radius) {
        return Collision::Obstacle;
    }
    Collision::None
}

/// Closed-form unicycle motion over `h` seconds at constant (v, ω).
pub fn integrate_unicycle(pose: &Pose, v: f64, omega: f64, h: f64) -> Pose {
    let theta = pose.heading;
    let p = pose.position;
    let next = if omega.abs() < 1e-12 {
        p + Vec2::new(theta.cos(), theta.sin()) * (v * h)
    } else {
        let t1 = theta + omega * h;
        let k = v / omega;
        p + Vec2::new(k * (t1.sin() - theta.sin()), -k * (t1.cos() - theta.cos()))
    };
    Pose::new(next, theta + omega * h)
}

/// Reward for one step from its ingredients.
pub fn compute_reward(
    params: &RewardParams,
    d_wp_pre: f64,
    d_wp_post: f64,
    reached_waypoints: usize,
    terminated: Termination,
) -> (f64, RewardTerms) {
    let terms = RewardTerms {
        goal: if terminated == Termination::Goal { params.goal } else { 0.0 },
        timestep: params.timestep,
        collision: if terminated.is_collision() { params.collision } else { 0.0 },
        potential: params.k_potential * (d_wp_pre - d_wp_post),
        waypoint: params.k_waypoint * reached_waypoints as f64,
    };
    (terms.total(), terms)
}

/// Lidar ranges for a pose against walls and circles.
pub fn scan(pose: &Pose, lidar: &LidarConfig, walls: &[Segment], circles: &[Circle]) -> Vec<f64> {
    lidar
        .offsets()
        .iter()
        .map(|&off| {
            let dir = Vec2::from_angle(pose.heading + off);
            raycast(pose.position, dir, walls, circles, lidar.max_range)
        })
        .collect()
}

pub struct Env {
    config: EnvConfig,
    layout: Layout,
    walls: Vec<Segment>,
    grid: OccupancyGrid,
    sample: EpisodeSample,
    sample_seed: u64,
    path: GlobalPath,
    track: WaypointTrack,
    robot: Pose,
    velocity: Action,
    crowd: CrowdState,
    steps: usize,
    time: f64,
    terminated: Termination,
    header: LogHeader,
    records: Vec<StepRecord>,
}

impl Env {
    /// Builds the episode for `config`, resolving the layout by built-in name.
    pub fn reset(config: EnvConfig) -> Result<Env, EnvError> {
        let layout = builtin_layout(&config.layout).ok_or_else(|| EnvError::UnknownLayout(config.layout.clone()))?;
        Env::reset_with_layout(config, layout)
    }

    pub fn reset_with_layout(config: EnvConfig, layout: Layout) -> Result<Env, EnvError> {
        config.validate()?;
        let grid = rasterize(&layout, config.planner.grid_resolution, config.planner.inflation_radius);
        let pedestrians = config.pedestrians.unwrap_or(layout.default_pedestrians);
        let mut last_err = None;
        for attempt in 0..MAX_RESET_ATTEMPTS {
            let seed = config.seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let sample = sample_episode(&layout, pedestrians, seed)?;
            match shortest_path(&grid, sample.robot_start.position, sample.robot_goal) {
                Ok(path) => return Ok(Env::build(config, layout, grid, sample, seed, path)),
                Err(e) => last_err = Some(e),
            }
        }
        Err(EnvError::NoPath {
            attempts: MAX_RESET_ATTEMPTS,
            last: last_err.expect("at least one attempt"),
        })
    }

    fn build(config: EnvConfig, layout: Layout, grid: OccupancyGrid, sample: EpisodeSample, seed: u64, path: GlobalPath) -> Env {
        let track = extract_waypoints(&path, config.planner.waypoint_spacing);
        let agents = sample
            .pedestrian_tasks
            .iter()
            .map(|t| {
                let mut a = OrcaAgent::new(t.start, t.goal, &config.crowd);
                a.goal_source = Some(t.source);
                a
            })
            .collect();
        let robot = sample.robot_start;
        let crowd = CrowdState::new(agents, None, seed, config.crowd);
        let header = LogHeader {
            version: LOG_VERSION.to_string(),
            config: config.clone(),
            seed: config.seed,
            sample_seed: seed,
            layout_name: layout.name.clone(),
            layout: layout.to_document(),
            robot_start: RobotRecord {
                x: robot.position.x,
                y: robot.position.y,
                theta: robot.heading,
                v: 0.0,
                omega: 0.0,
            },
            goal: sample.robot_goal,
            waypoints: track.waypoints.clone(),
            global_path: path.world_points.clone(),
            peds_initial: sample
                .pedestrian_tasks
                .iter()
                .map(|t| PedInitial {
                    x: t.start.x,
                    y: t.start.y,
                    gx: t.goal.x,
                    gy: t.goal.y,
                })
                .collect(),
        };
        let walls = layout.all_walls();
        let mut env = Env {
            config,
            layout,
            walls,
            grid,
            sample,
            sample_seed: seed,
            path,
            track,
            robot,
            velocity: Action::STOP,
            crowd,
            steps: 0,
            time: 0.0,
            terminated: Termination::No,
            header,
            records: Vec::new(),
        };
        env.sync_proxy();
        env
    }

    fn sync_proxy(&mut self) {
        if !self.config.robot_visible {
            self.crowd.robot_proxy = None;
            return;
        }
        let mut proxy = OrcaAgent::new(self.robot.position, self.sample.robot_goal, &self.config.crowd);
        proxy.radius = self.config.robot_radius + self.config.crowd.robot_margin;
        proxy.velocity = self.robot.direction() * self.velocity.v;
        self.crowd.robot_proxy = Some(proxy);
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// All walls including the bounding box.
    pub fn walls(&self) -> &[Segment] {
        &self.walls
    }

    /// Planning grid (inflated by the configured radius).
    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn path(&self) -> &GlobalPath {
        &self.path
    }

    pub fn track(&self) -> &WaypointTrack {
        &self.track
    }

    pub fn robot(&self) -> Pose {
        self.robot
    }

    /// Last applied (clamped) command.
    pub fn robot_velocity(&self) -> Action {
        self.velocity
    }

    pub fn goal(&self) -> Vec2 {
        self.sample.robot_goal
    }

    pub fn crowd(&self) -> &CrowdState {
        &self.crowd
    }

    pub fn pedestrians(&self) -> &[OrcaAgent] {
        &self.crowd.agents
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn sample_seed(&self) -> u64 {
        self.sample_seed
    }

    pub fn terminated(&self) -> Termination {
        self.terminated
    }

    pub fn is_done(&self) -> bool {
        self.terminated.is_terminal()
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn log(&self) -> EpisodeLog {
        EpisodeLog {
            header: self.header.clone(),
            steps: self.records.clone(),
        }
    }

    fn pedestrian_circles(&self) -> Vec<Circle> {
        self.crowd
            .agents
            .iter()
            .map(|a| Circle {
                center: a.position,
                radius: a.radius,
            })
            .collect()
    }

    pub fn observation(&self) -> Observation {
        let rel = to_robot_frame(self.sample.robot_goal, &self.robot);
        let bearing = if rel.norm() == 0.0 { 0.0 } else { normalize_angle(rel.angle()) };
        Observation {
            goal_distance: rel.norm(),
            goal_bearing: bearing,
            lidar: scan(&self.robot, &self.config.lidar, &self.walls, &self.pedestrian_circles()),
            waypoints: reference_window(&self.track, self.config.planner.window, &self.robot),
        }
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.terminated.is_terminal() {
            return Err(EnvError::SteppedAfterTermination);
        }
        // Crowd reacts to the pre-step robot state.
        self.sync_proxy();
        let cfg = &self.config;
        let cmd = action.clamped(&cfg.bounds);
        let target = self.track.target();
        let d_wp_pre = self.robot.position.distance(target);
        let pre_peds: Vec<Vec2> = self.crowd.agents.iter().map(|a| a.position).collect();
        let mut next_crowd = step_crowd_in(&self.crowd, &self.walls, Some(&self.layout), cfg.dt);

        let n = cfg.substeps;
        let h = cfg.dt / n as f64;
        let mut robot = self.robot;
        let mut terminated = Termination::No;
        let mut elapsed = cfg.dt;
        let mut ped_circles: Vec<Circle> = Vec::with_capacity(pre_peds.len());
        for k in 1..=n {
            robot = integrate_unicycle(&robot, cmd.v, cmd.omega, h);
            let frac = k as f64 / n as f64;
            ped_circles.clear();
            ped_circles.extend(pre_peds.iter().zip(&next_crowd.agents).map(|(&p0, a)| Circle {
                center: if k == n { a.position } else { p0.lerp(a.position, frac) },
                radius: a.radius,
            }));
            if robot.position.distance(self.sample.robot_goal) <= cfg.goal_tolerance {
                terminated = Termination::Goal;
            } else {
                match detect_collision(&robot, cfg.robot_radius, &self.walls, &ped_circles) {
                    Collision::Pedestrian => terminated = Termination::PedestrianCollision,
                    Collision::Obstacle => terminated = Termination::ObstacleCollision,
                    Collision::None => {}
                }
            }
            if terminated.is_terminal() {
                elapsed = h * k as f64;
                if k < n {
                    for (a, c) in next_crowd.agents.iter_mut().zip(&ped_circles) {
                        a.position = c.center;
                    }
                }
                break;
            }
        }

        self.steps += 1;
        if !terminated.is_terminal() && self.steps >= cfg.max_steps {
            terminated = Termination::Timeout;
        }
        let d_wp_post = robot.position.distance(target);
        self.robot = robot;
        self.velocity = cmd;
        self.crowd = next_crowd;
        let reached = self.track.advance(robot.position, cfg.planner.waypoint_tolerance);
        let (reward, terms) = compute_reward(&cfg.reward, d_wp_pre, d_wp_post, reached, terminated);
        self.terminated = terminated;
        self.time += elapsed;

        let record = StepRecord {
            step: self.steps,
            t: self.time,
            robot: RobotRecord {
                x: robot.position.x,
                y: robot.position.y,
                theta: robot.heading,
                v: cmd.v,
                omega: cmd.omega,
            },
            action_raw: ActionRecord {
                v: action.v,
                omega: action.omega,
            },
            action_clamped: ActionRecord {
                v: cmd.v,
                omega: cmd.omega,
            },
            peds: self
                .crowd
                .agents
                .iter()
                .map(|a| PedRecord {
                    x: a.position.x,
                    y: a.position.y,
                    vx: a.velocity.x,
                    vy: a.velocity.y,
                })
                .collect(),
            reward,
            reward_terms: terms,
            cursor: self.track.cursor,
            reached,
            terminated,
        };
        self.records.push(record.clone());
        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            terminated,
            info: StepInfo {
                terms,
                action_raw: action,
                action_clamped: cmd,
                reached_waypoints: reached,
                record,
            },
        })
    }
}
