//! ORCA pedestrian engine: half-plane construction from truncated velocity
//! obstacles and the incremental 2D linear programs that pick a velocity.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Segment, Vec2};
use crate::world::{sample_free_point, GoalSource, Layout, SpawnZone};

const EPSILON: f64 = 1e-9;

/// Tunables shared by every pedestrian of a crowd.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrowdParams {
    pub radius: f64,
    pub pref_speed: f64,
    pub max_speed: f64,
    pub time_horizon: f64,
    pub time_horizon_obstacles: f64,
    pub neighbor_range: f64,
    pub retask_distance: f64,
    /// Hold a pedestrian in place for a step when its LP velocity would
    /// create or deepen an overlap (only reachable after an infeasible LP).
    pub safety_stop: bool,
    /// Extra radius pedestrians keep around the robot.
    pub robot_margin: f64,
}

impl Default for CrowdParams {
    fn default() -> Self {
        Self {
            radius: 0.30,
            pref_speed: 2.0,
            max_speed: 2.0,
            time_horizon: 2.0,
            time_horizon_obstacles: 1.0,
            neighbor_range: 5.0,
            retask_distance: 0.3,
            safety_stop: true,
            robot_margin: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrcaAgent {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    pub pref_speed: f64,
    pub max_speed: f64,
    pub goal: Vec2,
    pub time_horizon: f64,
    pub time_horizon_obstacles: f64,
    pub neighbor_range: f64,
    /// Where new goals come from after arrival; `None` means stop at the goal.
    pub goal_source: Option<GoalSource>,
    /// Number of goals reached so far, used to derive re-tasking seeds.
    pub retasks: u32,
}

impl OrcaAgent {
    pub fn new(position: Vec2, goal: Vec2, params: &CrowdParams) -> Self {
        Self {
            position,
            velocity: Vec2::ZERO,
            radius: params.radius,
            pref_speed: params.pref_speed,
            max_speed: params.max_speed,
            goal,
            time_horizon: params.time_horizon,
            time_horizon_obstacles: params.time_horizon_obstacles,
            neighbor_range: params.neighbor_range,
            goal_source: None,
            retasks: 0,
        }
    }

    /// Velocity toward the goal that stops exactly on it within one step.
    pub fn preferred_velocity(&self, dt: f64) -> Vec2 {
        let to_goal = self.goal - self.position;
        let dist = to_goal.norm();
        if dist < EPSILON {
            return Vec2::ZERO;
        }
        to_goal * (self.pref_speed.min(dist / dt) / dist)
    }
}

/// Velocity-space half-plane `{v : normal · (v − point) ≥ 0}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub point: Vec2,
    pub normal: Vec2,
}

impl HalfPlane {
    pub fn new(point: Vec2, normal: Vec2) -> Self {
        Self {
            point,
            normal: normal.normalized(),
        }
    }

    /// Signed violation: positive outside the permitted side.
    pub fn violation(&self, v: Vec2) -> f64 {
        self.normal.dot(self.point - v)
    }

    pub fn contains(&self, v: Vec2) -> bool {
        self.violation(v) <= 0.0
    }

    /// Boundary direction with the permitted side on its left.
    fn direction(&self) -> Vec2 {
        Vec2::new(self.normal.y, -self.normal.x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrowdState {
    pub agents: Vec<OrcaAgent>,
    pub robot_proxy: Option<OrcaAgent>,
    /// Base seed for goal re-tasking.
    pub seed: u64,
    pub params: CrowdParams,
}

impl CrowdState {
    pub fn new(agents: Vec<OrcaAgent>, robot_proxy: Option<OrcaAgent>, seed: u64, params: CrowdParams) -> Self {
        Self {
            agents,
            robot_proxy,
            seed,
            params,
        }
    }

    /// Smallest surface-to-surface distance between pedestrians.
    pub fn min_pair_clearance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.agents.iter().enumerate() {
            for b in &self.agents[i + 1..] {
                best = best.min(a.position.distance(b.position) - a.radius - b.radius);
            }
        }
        best
    }
}

/// Reciprocal constraint induced on `agent` by `other`, taking
/// `responsibility` of the required change in relative velocity.
pub fn agent_halfplane(agent: &OrcaAgent, other: &OrcaAgent, dt: f64, responsibility: f64) -> HalfPlane {
    let rel_pos = other.position - agent.position;
    let rel_vel = agent.velocity - other.velocity;
    let dist_sq = rel_pos.norm_sq();
    let combined_radius = agent.radius + other.radius;
    let combined_radius_sq = combined_radius * combined_radius;
    let inv_tau = 1.0 / agent.time_horizon;

    let direction;
    let u;
    if dist_sq > combined_radius_sq {
        // Vector from the cut-off center to the relative velocity.
        let w = rel_vel - rel_pos * inv_tau;
        let w_len_sq = w.norm_sq();
        let dot1 = w.dot(rel_pos);
        if dot1 < 0.0 && dot1 * dot1 > combined_radius_sq * w_len_sq {
            // Project on the cut-off circle.
            let w_len = w_len_sq.sqrt();
            let unit_w = w / w_len;
            direction = Vec2::new(unit_w.y, -unit_w.x);
            u = unit_w * (combined_radius * inv_tau - w_len);
        } else {
            // Project on the nearer leg.
            let leg = (dist_sq - combined_radius_sq).sqrt();
            if rel_pos.cross(w) > 0.0 {
                direction = Vec2::new(
                    rel_pos.x * leg - rel_pos.y * combined_radius,
                    rel_pos.x * combined_radius + rel_pos.y * leg,
                ) / dist_sq;
            } else {
                direction = -Vec2::new(
                    rel_pos.x * leg + rel_pos.y * combined_radius,
                    -rel_pos.x * combined_radius + rel_pos.y * leg,
                ) / dist_sq;
            }
            u = direction * rel_vel.dot(direction) - rel_vel;
        }
    } else {
        // Already overlapping: resolve within one step.
        let inv_dt = 1.0 / dt;
        let w = rel_vel - rel_pos * inv_dt;
        let w_len = w.norm();
        let unit_w = if w_len > EPSILON {
            w / w_len
        } else if dist_sq > 0.0 {
            -rel_pos / dist_sq.sqrt()
        } else {
            Vec2::new(1.0, 0.0)
        };
        direction = Vec2::new(unit_w.y, -unit_w.x);
        u = unit_w * (combined_radius * inv_dt - w_len);
    }
    HalfPlane {
        point: agent.velocity + u * responsibility,
        normal: Vec2::new(-direction.y, direction.x),
    }
}

/// Non-reciprocal constraint keeping `agent` out of the capsule around `wall`
/// for `time_horizon_obstacles`; `None` when the wall is out of reach.
pub fn wall_halfplane(agent: &OrcaAgent, wall: &Segment, dt: f64) -> Option<HalfPlane> {
    let r = agent.radius;
    let closest = wall.closest_point(agent.position);
    let d = closest.distance(agent.position);
    if d > agent.time_horizon_obstacles * agent.max_speed + r {
        return None;
    }
    if d <= r + EPSILON {
        // Penetrating or touching: move away from the wall fast enough to clear it within dt.
        let away = if d > 0.0 {
            (agent.position - closest) / d
        } else {
            wall_normal_toward(wall, agent.position)
        };
        let speed = (r - d).max(0.0) / dt;
        return Some(HalfPlane {
            point: away * speed,
            normal: away,
        });
    }

    // The velocity obstacle is the convex set C/τ + cone(C) for the capsule C.
    // Pick the supporting half-plane that maximizes the margin of the
    // current velocity, searching over normals in the polar cone of C.
    let tau = agent.time_horizon_obstacles;
    let a = wall.a - agent.position;
    let b = wall.b - agent.position;
    let w = agent.velocity;
    let (lo, hi) = polar_arc(a, b, r)?;
    let w1 = w - a / tau;
    let w2 = w - b / tau;
    let margin = |theta: f64| {
        let n = Vec2::from_angle(theta);
        n.dot(w1).min(n.dot(w2))
    };
    let base = (-a).angle();
    let mut candidates = vec![lo, hi];
    let edge = b - a;
    for phi in [w1.angle(), w2.angle(), edge.angle() + std::f64::consts::FRAC_PI_2, edge.angle() - std::f64::consts::FRAC_PI_2] {
        // Express phi relative to the arc base, unwrapped near [lo, hi].
        let rel = normalize_angle(phi - base);
        for shift in [-2.0, 0.0, 2.0] {
            let t = rel + shift * std::f64::consts::PI;
            if t >= lo && t <= hi {
                candidates.push(t);
            }
        }
    }
    let mut best = candidates[0];
    let mut best_val = margin(base + best);
    for &t in &candidates[1..] {
        let val = margin(base + t);
        if val > best_val {
            best = t;
            best_val = val;
        }
    }
    let n = Vec2::from_angle(base + best);
    let support = (n.dot(a).max(n.dot(b)) + r) / tau;
    Some(HalfPlane {
        point: n * support,
        normal: n,
    })
}

/// Arc of unit normals `n` with `n·x ≤ 0` on the capsule around segment
/// `ab` of radius `r`, as angles relative to the direction of `-a`.
fn polar_arc(a: Vec2, b: Vec2, r: f64) -> Option<(f64, f64)> {
    let half = |p: Vec2| (r / p.norm()).clamp(-1.0, 1.0).acos();
    let beta_a = half(a);
    let beta_b = half(b);
    let delta = normalize_angle((-b).angle() - (-a).angle());
    let (mut lo, mut hi) = (f64::NAN, f64::NAN);
    for shift in [0.0, -2.0, 2.0] {
        let c = delta + shift * std::f64::consts::PI;
        let l = (-beta_a).max(c - beta_b);
        let h = beta_a.min(c + beta_b);
        if l <= h {
            lo = l;
            hi = h;
            break;
        }
    }
    if lo.is_nan() {
        None
    } else {
        Some((lo, hi))
    }
}

fn wall_normal_toward(wall: &Segment, p: Vec2) -> Vec2 {
    let n = (wall.b - wall.a).perp().normalized();
    if n.dot(p - wall.a) >= 0.0 {
        n
    } else {
        -n
    }
}

/// All constraints for `agent`: walls first (hard), then neighbors in order.
pub fn orca_halfplanes(agent: &OrcaAgent, neighbors: &[OrcaAgent], walls: &[Segment], dt: f64) -> Vec<HalfPlane> {
    orca_halfplanes_split(agent, neighbors, walls, dt, 0.5).0
}

/// Like [`orca_halfplanes`], also returning the number of leading wall constraints.
pub fn orca_halfplanes_split(
    agent: &OrcaAgent,
    neighbors: &[OrcaAgent],
    walls: &[Segment],
    dt: f64,
    responsibility: f64,
) -> (Vec<HalfPlane>, usize) {
    assert!(dt > 0.0, "orca_halfplanes: dt must be positive, got {dt}");
    let mut planes: Vec<HalfPlane> = walls.iter().filter_map(|w| wall_halfplane(agent, w, dt)).collect();
    let fixed = planes.len();
    let range_sq = agent.neighbor_range * agent.neighbor_range;
    for other in neighbors {
        if (other.position - agent.position).norm_sq() <= range_sq {
            planes.push(agent_halfplane(agent, other, dt, responsibility));
        }
    }
    (planes, fixed)
}

fn lp1(lines: &[HalfPlane], line_no: usize, radius: f64, opt: Vec2, direction_opt: bool) -> Option<Vec2> {
    let line = &lines[line_no];
    let dir = line.direction();
    let dot = line.point.dot(dir);
    let discriminant = dot * dot + radius * radius - line.point.norm_sq();
    if discriminant < 0.0 {
        return None;
    }
    let sqrt_disc = discriminant.sqrt();
    let mut t_left = -dot - sqrt_disc;
    let mut t_right = -dot + sqrt_disc;
    for prev in &lines[..line_no] {
        let pdir = prev.direction();
        let denominator = dir.cross(pdir);
        let numerator = pdir.cross(line.point - prev.point);
        if denominator.abs() <= EPSILON {
            if numerator < -EPSILON {
                return None;
            }
            continue;
        }
        let t = numerator / denominator;
        if denominator >= 0.0 {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return None;
        }
    }
    let t = if direction_opt {
        if opt.dot(dir) > 0.0 {
            t_right
        } else {
            t_left
        }
    } else {
        dir.dot(opt - line.point).clamp(t_left, t_right)
    };
    Some(line.point + dir * t)
}

/// Returns the index of the first line that could not be satisfied (or
/// `lines.len()` on success) together with the best result so far.
fn lp2(lines: &[HalfPlane], radius: f64, opt: Vec2, direction_opt: bool) -> (usize, Vec2) {
    let mut result = if direction_opt {
        opt * radius
    } else if opt.norm_sq() > radius * radius {
        opt.normalized() * radius
    } else {
        opt
    };
    for (i, line) in lines.iter().enumerate() {
        if line.violation(result) > 0.0 {
            match lp1(lines, i, radius, opt, direction_opt) {
                Some(r) => result = r,
                None => return (i, result),
            }
        }
    }
    (lines.len(), result)
}

fn lp3(lines: &[HalfPlane], fixed: usize, begin: usize, radius: f64, mut result: Vec2) -> Vec2 {
    let mut distance = 0.0;
    for i in begin..lines.len() {
        let li = &lines[i];
        if li.violation(result) > distance {
            let di = li.direction();
            let hard = fixed.min(i);
            let mut projected: Vec<HalfPlane> = lines[..hard].to_vec();
            for lj in &lines[hard..i] {
                let dj = lj.direction();
                let determinant = di.cross(dj);
                let point = if determinant.abs() <= EPSILON {
                    if di.dot(dj) > 0.0 {
                        continue;
                    }
                    (li.point + lj.point) * 0.5
                } else {
                    li.point + di * (dj.cross(li.point - lj.point) / determinant)
                };
                let d = (dj - di).normalized();
                projected.push(HalfPlane {
                    point,
                    normal: Vec2::new(-d.y, d.x),
                });
            }
            let previous = result;
            let (count, candidate) = lp2(&projected, radius, li.normal, true);
            result = if count < projected.len() { previous } else { candidate };
            distance = li.violation(result);
        }
    }
    result
}

/// Velocity closest to `pref_velocity` inside every half-plane and the speed
/// disk. On infeasibility returns `false` with the last feasible-prefix result.
pub fn solve_lp2(halfplanes: &[HalfPlane], pref_velocity: Vec2, max_speed: f64) -> (Vec2, bool) {
    assert!(max_speed > 0.0, "solve_lp2: max_speed must be positive");
    let (count, v) = lp2(halfplanes, max_speed, pref_velocity, false);
    (v, count == halfplanes.len())
}

/// Velocity in the speed disk minimizing the largest signed violation.
pub fn solve_lp3(halfplanes: &[HalfPlane], max_speed: f64) -> Vec2 {
    if halfplanes.is_empty() {
        return Vec2::ZERO;
    }
    let (count, v) = lp2(halfplanes, max_speed, Vec2::ZERO, false);
    if count == halfplanes.len() {
        return v;
    }
    lp3(halfplanes, 0, count, max_speed, v)
}

/// Full ORCA velocity selection with walls treated as hard constraints.
pub fn solve_velocity(halfplanes: &[HalfPlane], fixed: usize, pref_velocity: Vec2, max_speed: f64) -> Vec2 {
    let (count, v) = lp2(halfplanes, max_speed, pref_velocity, false);
    if count == halfplanes.len() {
        v
    } else {
        lp3(halfplanes, fixed, count, max_speed, v)
    }
}

/// New velocity for `agent` against `neighbors` and `walls`.
pub fn compute_velocity(
    agent: &OrcaAgent,
    neighbors: &[OrcaAgent],
    walls: &[Segment],
    dt: f64,
    responsibility: f64,
) -> Vec2 {
    let (planes, fixed) = orca_halfplanes_split(agent, neighbors, walls, dt, responsibility);
    solve_velocity(&planes, fixed, agent.preferred_velocity(dt), agent.max_speed)
}

fn retask_rng(seed: u64, agent: usize, count: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((agent as u64) << 32) | count as u64);
    rng
}

fn flipped(source: GoalSource) -> GoalSource {
    match source {
        GoalSource::Zones {
            first,
            second,
            toward_second,
        } => GoalSource::Zones {
            first,
            second,
            toward_second: !toward_second,
        },
        other => other,
    }
}

fn draw_goal(zone: &SpawnZone, radius: f64, layout: Option<&Layout>, rng: &mut ChaCha8Rng) -> Vec2 {
    match layout {
        Some(l) => sample_free_point(l, zone, radius, rng).unwrap_or(zone.center),
        None => zone.sample(rng),
    }
}

/// Advances the crowd by `dt`: all velocities are computed from the
/// pre-state, then positions are integrated and arrived pedestrians re-tasked.
pub fn step_crowd(state: &CrowdState, walls: &[Segment], dt: f64) -> CrowdState {
    step_crowd_in(state, walls, None, dt)
}

/// [`step_crowd`] with a layout used to keep re-tasked goals clear of walls.
pub fn step_crowd_in(state: &CrowdState, walls: &[Segment], layout: Option<&Layout>, dt: f64) -> CrowdState {
    assert!(dt > 0.0, "step_crowd: dt must be positive, got {dt}");
    let n = state.agents.len();
    let mut neighbors: Vec<OrcaAgent> = Vec::with_capacity(n);
    let velocities: Vec<Vec2> = (0..n)
        .map(|i| {
            neighbors.clear();
            neighbors.extend(
                state
                    .agents
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, a)| a.clone()),
            );
            if let Some(robot) = &state.robot_proxy {
                neighbors.push(robot.clone());
            }
            compute_velocity(&state.agents[i], &neighbors, walls, dt, 0.5)
        })
        .collect();

    let mut velocities = velocities;
    if state.params.safety_stop {
        hold_conflicting(&state.agents, state.robot_proxy.as_ref(), walls, &mut velocities, dt);
    }

    let mut next = state.clone();
    for (i, agent) in next.agents.iter_mut().enumerate() {
        agent.velocity = velocities[i];
        agent.position += velocities[i] * dt;
        if agent.position.distance(agent.goal) <= state.params.retask_distance {
            if let Some(source) = agent.goal_source.map(flipped) {
                let mut rng = retask_rng(state.seed, i, agent.retasks);
                agent.goal = match source {
                    GoalSource::Zones {
                        first,
                        second,
                        toward_second,
                    } => {
                        let zone = if toward_second { second } else { first };
                        draw_goal(&zone, agent.radius, layout, &mut rng)
                    }
                    GoalSource::Antipodal { center, radius } => {
                        let d = (agent.position - center).normalized();
                        let d = if d == Vec2::ZERO { Vec2::new(1.0, 0.0) } else { d };
                        center - d * radius
                    }
                };
                agent.goal_source = Some(source);
                agent.retasks += 1;
            }
        }
    }
    next
}

/// Zeroes velocities until no integrated move creates or deepens an overlap.
/// Held agents stay at their (overlap-free) pre-step positions, so the
/// fixpoint always exists; the held set only grows, so it is unique.
/// The robot is extrapolated at its current velocity and never held.
fn hold_conflicting(agents: &[OrcaAgent], robot: Option<&OrcaAgent>, walls: &[Segment], velocities: &mut [Vec2], dt: f64) {
    let wall_clearance = |p: Vec2, r: f64| {
        walls
            .iter()
            .map(|w| crate::geometry::point_segment_distance(p, w))
            .fold(f64::INFINITY, f64::min)
            - r
    };
    for (i, a) in agents.iter().enumerate() {
        let after = a.position + velocities[i] * dt;
        let (pre, post) = (wall_clearance(a.position, a.radius), wall_clearance(after, a.radius));
        if post < 0.0 && post < pre {
            velocities[i] = Vec2::ZERO;
        }
        if let Some(r) = robot {
            let reach = a.radius + r.radius;
            let robot_after = r.position + r.velocity * dt;
            let pre = a.position.distance(r.position) - reach;
            let post = after.distance(robot_after) - reach;
            if post < 0.0 && post < pre {
                velocities[i] = Vec2::ZERO;
            }
        }
    }
    loop {
        let mut changed = false;
        for i in 0..agents.len() {
            for j in i + 1..agents.len() {
                let (a, b) = (&agents[i], &agents[j]);
                let reach = a.radius + b.radius;
                let pre = a.position.distance(b.position) - reach;
                let post = (a.position + velocities[i] * dt).distance(b.position + velocities[j] * dt) - reach;
                if post < 0.0 && post < pre {
                    velocities[i] = Vec2::ZERO;
                    velocities[j] = Vec2::ZERO;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}
