//! Independent reference implementations used by the integration and
//! acceptance tests. None of these call the code they check.

#![allow(dead_code)]

use rand::Rng;
use socnav_core::crowd::HalfPlane;
use socnav_core::geometry::{Circle, Segment, Vec2};
use socnav_core::world::OccupancyGrid;

pub const MARCH_STEP: f64 = 1e-3;

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_touch(p: Vec2, q: Vec2, s: &Segment) -> bool {
    let (d1, d2) = (orient(s.a, s.b, p), orient(s.a, s.b, q));
    let (d3, d4) = (orient(p, q, s.a), orient(p, q, s.b));
    d1 * d2 <= 0.0 && d3 * d4 <= 0.0
}

fn point_segment(p: Vec2, s: &Segment) -> f64 {
    let e = s.b - s.a;
    let len_sq = e.x * e.x + e.y * e.y;
    let t = if len_sq == 0.0 { 0.0 } else { (((p.x - s.a.x) * e.x + (p.y - s.a.y) * e.y) / len_sq).clamp(0.0, 1.0) };
    let c = Vec2::new(s.a.x + e.x * t, s.a.y + e.y * t);
    ((p.x - c.x).powi(2) + (p.y - c.y).powi(2)).sqrt()
}

/// Ray marching with conservative advancement, falling back to 1 mm steps
/// near surfaces. Reports the first sample past a surface.
pub fn march_ray(origin: Vec2, dir: Vec2, walls: &[Segment], circles: &[Circle], max_range: f64) -> f64 {
    let at = |t: f64| Vec2::new(origin.x + dir.x * t, origin.y + dir.y * t);
    let inside = |p: Vec2| circles.iter().any(|c| ((p.x - c.center.x).powi(2) + (p.y - c.center.y).powi(2)).sqrt() <= c.radius);
    if inside(origin) {
        return 0.0;
    }
    let mut t = 0.0;
    while t < max_range {
        let p = at(t);
        let clearance = walls
            .iter()
            .map(|w| point_segment(p, w))
            .chain(circles.iter().map(|c| ((p.x - c.center.x).powi(2) + (p.y - c.center.y).powi(2)).sqrt() - c.radius))
            .fold(f64::INFINITY, f64::min);
        let next = (t + clearance.max(MARCH_STEP)).min(max_range);
        let q = at(next);
        if inside(q) || walls.iter().any(|w| segments_touch(p, q, w)) {
            return next;
        }
        t = next;
    }
    max_range
}

/// Box lidar: distance from an interior point to the boundary of [0,w]x[0,h].
pub fn box_ray(origin: Vec2, angle: f64, w: f64, h: f64) -> f64 {
    let (c, s) = (angle.cos(), angle.sin());
    let mut best = f64::INFINITY;
    if c > 0.0 {
        best = best.min((w - origin.x) / c);
    }
    if c < 0.0 {
        best = best.min(-origin.x / c);
    }
    if s > 0.0 {
        best = best.min((h - origin.y) / s);
    }
    if s < 0.0 {
        best = best.min(-origin.y / s);
    }
    best
}

/// Uniform-cost optimum by exhaustive Bellman-Ford relaxation over
/// (straight, diagonal) move counts. Diagonals need both side cells free.
pub fn ucs_oracle(grid: &OccupancyGrid, start: (usize, usize), goal: (usize, usize)) -> Option<(u32, u32)> {
    let (w, h) = (grid.width as i64, grid.height as i64);
    let free = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && !grid.occupied[(y * w + x) as usize];
    let value = |(s, d): (u32, u32)| s as f64 + d as f64 * std::f64::consts::SQRT_2;
    let mut best: Vec<Option<(u32, u32)>> = vec![None; (w * h) as usize];
    best[start.1 * grid.width + start.0] = Some((0, 0));
    loop {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                let Some((s, d)) = best[(y * w + x) as usize] else { continue };
                for dx in -1i64..=1 {
                    for dy in -1i64..=1 {
                        if (dx, dy) == (0, 0) || !free(x + dx, y + dy) {
                            continue;
                        }
                        let diagonal = dx != 0 && dy != 0;
                        if diagonal && !(free(x + dx, y) && free(x, y + dy)) {
                            continue;
                        }
                        let cand = if diagonal { (s, d + 1) } else { (s + 1, d) };
                        let slot = &mut best[((y + dy) * w + x + dx) as usize];
                        if slot.is_none_or(|cur| value(cand) < value(cur)) {
                            *slot = Some(cand);
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    best[goal.1 * grid.width + goal.0]
}

pub fn random_grid<R: Rng>(rng: &mut R, width: usize, height: usize, density: f64) -> OccupancyGrid {
    let mut g = OccupancyGrid::new_free(1.0, width, height, Vec2::ZERO);
    for r in 0..height {
        for c in 0..width {
            if rng.gen_bool(density) {
                g.set_occupied((c, r), true);
            }
        }
    }
    g
}

/// Largest signed violation `n · (p − v)` over the set.
pub fn max_violation(planes: &[HalfPlane], v: Vec2) -> f64 {
    planes
        .iter()
        .map(|h| h.normal.x * (h.point.x - v.x) + h.normal.y * (h.point.y - v.y))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest distance to `pref` among uniformly drawn feasible points of the
/// speed disk, or `None` if no draw was feasible.
pub fn lp2_sampling_oracle<R: Rng>(planes: &[HalfPlane], pref: Vec2, max_speed: f64, draws: usize, rng: &mut R) -> Option<f64> {
    let mut best: Option<f64> = None;
    for _ in 0..draws {
        let r = max_speed * rng.gen::<f64>().sqrt();
        let a = rng.gen_range(0.0..std::f64::consts::TAU);
        let v = Vec2::new(r * a.cos(), r * a.sin());
        if max_violation(planes, v) <= 0.0 {
            let d = ((v.x - pref.x).powi(2) + (v.y - pref.y).powi(2)).sqrt();
            if best.is_none_or(|b| d < b) {
                best = Some(d);
            }
        }
    }
    best
}

/// Minimum over the speed disk of the largest violation. Starts from a dense
/// grid of square cells and refines every cell whose Lipschitz lower bound
/// can still beat the best sample by more than 1e-6. Cells fully outside the
/// disk are dropped; centers outside it are projected on it, which keeps the
/// bound valid.
pub fn lp3_grid_oracle(planes: &[HalfPlane], max_speed: f64) -> f64 {
    let project = |v: Vec2| {
        let n = (v.x * v.x + v.y * v.y).sqrt();
        if n > max_speed {
            Vec2::new(v.x * max_speed / n, v.y * max_speed / n)
        } else {
            v
        }
    };
    let f = |v: Vec2| max_violation(planes, project(v));
    const N: usize = 100;
    let mut half = max_speed / N as f64;
    let mut cells: Vec<(Vec2, f64)> = Vec::new();
    for i in 0..N {
        for j in 0..N {
            let c = Vec2::new(-max_speed + (2 * i + 1) as f64 * half, -max_speed + (2 * j + 1) as f64 * half);
            cells.push((c, f(c)));
        }
    }
    let outside = |c: Vec2, half: f64| (c.x * c.x + c.y * c.y).sqrt() - half * std::f64::consts::SQRT_2 > max_speed;
    cells.retain(|&(c, _)| !outside(c, half));
    let mut best = cells.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    while half > 1e-7 && !cells.is_empty() {
        let bound = half * std::f64::consts::SQRT_2;
        let q = half / 2.0;
        let mut next = Vec::new();
        for &(c, v) in &cells {
            if v - bound > best - 1e-6 {
                continue;
            }
            for (dx, dy) in [(-q, -q), (-q, q), (q, -q), (q, q)] {
                let k = Vec2::new(c.x + dx, c.y + dy);
                if outside(k, q) {
                    continue;
                }
                let fk = f(k);
                best = best.min(fk);
                next.push((k, fk));
            }
        }
        assert!(next.len() < 4_000_000, "lp3 oracle did not converge");
        cells = next;
        half = q;
    }
    best
}
