//! Planar primitives shared by the simulator: vectors, segments, poses,
//! distances and closed-form raycasting.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Unit vector in the same direction, or zero for a (near) zero vector.
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 1e-300 {
            self / n
        } else {
            Vec2::ZERO
        }
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        self + (o - self) * t
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A wall segment. Zero-length segments are rejected when layouts are validated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub const fn new(a: Vec2, b: Vec2) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    pub fn is_degenerate(&self) -> bool {
        self.a.distance(self.b) <= 1e-12
    }

    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        let ab = self.b - self.a;
        let len_sq = ab.norm_sq();
        if len_sq <= 0.0 {
            return self.a;
        }
        let t = ((p - self.a).dot(ab) / len_sq).clamp(0.0, 1.0);
        self.a + ab * t
    }
}

/// Position plus heading; the heading is kept in (-pi, pi].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose {
    pub fn new(position: Vec2, heading: f64) -> Self {
        Self {
            position,
            heading: normalize_angle(heading),
        }
    }

    pub fn direction(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(theta: f64) -> f64 {
    let a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a - 2.0 * PI
    } else {
        a
    }
}

pub fn point_segment_distance(p: Vec2, s: &Segment) -> f64 {
    p.distance(s.closest_point(p))
}

pub fn to_robot_frame(world_point: Vec2, robot: &Pose) -> Vec2 {
    (world_point - robot.position).rotate(-robot.heading)
}

pub fn from_robot_frame(local_point: Vec2, robot: &Pose) -> Vec2 {
    local_point.rotate(robot.heading) + robot.position
}

/// A disc obstacle for raycasting (pedestrian bodies).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Circle {
    pub center: Vec2,
    pub radius: f64,
}

/// Distance along a unit ray to a segment, if hit.
pub fn ray_segment(origin: Vec2, dir: Vec2, s: &Segment) -> Option<f64> {
    let e = s.b - s.a;
    let denom = dir.cross(e);
    let w = s.a - origin;
    if denom.abs() < 1e-15 {
        // Parallel. A collinear overlapping wall is hit at its nearest endpoint ahead.
        if w.cross(dir).abs() > 1e-12 {
            return None;
        }
        let ta = (s.a - origin).dot(dir);
        let tb = (s.b - origin).dot(dir);
        let (lo, hi) = if ta < tb { (ta, tb) } else { (tb, ta) };
        if hi < 0.0 {
            return None;
        }
        return Some(lo.max(0.0));
    }
    let t = w.cross(e) / denom;
    let u = w.cross(dir) / denom;
    if t >= 0.0 && (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// Distance along a unit ray to the boundary of a disc, if hit. An origin
/// inside the disc reports 0.
pub fn ray_circle(origin: Vec2, dir: Vec2, c: &Circle) -> Option<f64> {
    let m = origin - c.center;
    let cc = m.norm_sq() - c.radius * c.radius;
    if cc <= 0.0 {
        return Some(0.0);
    }
    let b = m.dot(dir);
    if b > 0.0 {
        return None;
    }
    let disc = b * b - cc;
    if disc < 0.0 {
        return None;
    }
    // Numerically stable smaller root: t = cc / (-b + sqrt(disc)).
    let q = -b + disc.sqrt();
    Some(cc / q)
}

/// Nearest hit of a ray against walls and discs, clipped to `max_range`.
///
/// Panics if `dir` is not unit-norm or `max_range` is not positive.
pub fn raycast(origin: Vec2, dir: Vec2, walls: &[Segment], circles: &[Circle], max_range: f64) -> f64 {
    assert!(
        (dir.norm() - 1.0).abs() < 1e-6,
        "raycast direction must be unit-norm, got {:?}",
        dir
    );
    assert!(max_range > 0.0, "max_range must be positive, got {max_range}");
    let mut best = max_range;
    for s in walls {
        if let Some(t) = ray_segment(origin, dir, s) {
            if t < best {
                best = t;
            }
        }
    }
    for c in circles {
        if let Some(t) = ray_circle(origin, dir, c) {
            if t < best {
                best = t;
            }
        }
    }
    best.clamp(0.0, max_range)
}
