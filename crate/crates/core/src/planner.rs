//! Grid shortest paths (8-connected Dijkstra) and the reference-waypoint
//! track derived from them.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{to_robot_frame, Pose, Vec2};
use crate::world::{Cell, OccupancyGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("start {0:?} is outside the grid or in an occupied cell")]
    StartOccupied(Vec2),
    #[error("goal {0:?} is outside the grid or in an occupied cell")]
    GoalOccupied(Vec2),
    #[error("no path from {from:?} to {to:?}")]
    NoPath { from: Vec2, to: Vec2 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalPath {
    pub cells: Vec<Cell>,
    pub world_points: Vec<Vec2>,
    pub length: f64,
    pub start: Vec2,
    pub goal: Vec2,
}

/// Path cost for a move-count pair, computed the same way everywhere so
/// equal pairs give bitwise-equal costs.
pub fn move_cost(straight: u32, diagonal: u32, resolution: f64) -> f64 {
    resolution * (straight as f64 + diagonal as f64 * SQRT_2)
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    index: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (cost, index).
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NEIGHBORS: [(i64, i64); 8] = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)];

/// Successors of `cell` with no corner cutting: a diagonal move needs both
/// orthogonally adjacent cells free.
pub fn free_neighbors(grid: &OccupancyGrid, (c, r): Cell) -> impl Iterator<Item = (Cell, bool)> + '_ {
    let (w, h) = (grid.width as i64, grid.height as i64);
    let free = move |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && grid.is_free((x as usize, y as usize));
    NEIGHBORS.iter().filter_map(move |&(dx, dy)| {
        let (x, y) = (c as i64 + dx, r as i64 + dy);
        if !free(x, y) {
            return None;
        }
        let diagonal = dx != 0 && dy != 0;
        if diagonal && !(free(c as i64 + dx, r as i64) && free(c as i64, r as i64 + dy)) {
            return None;
        }
        Some(((x as usize, y as usize), diagonal))
    })
}

/// Minimal-cost 8-connected path between the cells containing `start` and `goal`.
pub fn shortest_path(grid: &OccupancyGrid, start: Vec2, goal: Vec2) -> Result<GlobalPath, PlanError> {
    let s = grid
        .cell_of(start)
        .filter(|&c| grid.is_free(c))
        .ok_or(PlanError::StartOccupied(start))?;
    let g = grid
        .cell_of(goal)
        .filter(|&c| grid.is_free(c))
        .ok_or(PlanError::GoalOccupied(goal))?;
    shortest_path_cells(grid, s, g).map(|(cells, straight, diagonal)| GlobalPath {
        world_points: cells.iter().map(|&c| grid.center(c)).collect(),
        cells,
        length: move_cost(straight, diagonal, grid.resolution),
        start,
        goal,
    })
    .ok_or(PlanError::NoPath { from: start, to: goal })
}

/// Dijkstra over cells; returns the cell list and its straight/diagonal move counts.
pub fn shortest_path_cells(grid: &OccupancyGrid, start: Cell, goal: Cell) -> Option<(Vec<Cell>, u32, u32)> {
    let n = grid.width * grid.height;
    let mut counts: Vec<(u32, u32)> = vec![(u32::MAX, u32::MAX); n];
    let mut cost = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    let si = grid.index(start);
    let gi = grid.index(goal);
    cost[si] = 0.0;
    counts[si] = (0, 0);
    heap.push(Entry { cost: 0.0, index: si });
    while let Some(Entry { index, .. }) = heap.pop() {
        if done[index] {
            continue;
        }
        done[index] = true;
        if index == gi {
            break;
        }
        let cell = (index % grid.width, index / grid.width);
        let (s, d) = counts[index];
        for (next, diagonal) in free_neighbors(grid, cell) {
            let ni = grid.index(next);
            if done[ni] {
                continue;
            }
            let nc = if diagonal { (s, d + 1) } else { (s + 1, d) };
            let c = move_cost(nc.0, nc.1, 1.0);
            if c < cost[ni] {
                cost[ni] = c;
                counts[ni] = nc;
                parent[ni] = index;
                heap.push(Entry { cost: c, index: ni });
            }
        }
    }
    if !done[gi] {
        return None;
    }
    let mut cells = vec![goal];
    let mut at = gi;
    while at != si {
        at = parent[at];
        cells.push((at % grid.width, at / grid.width));
    }
    cells.reverse();
    Some((cells, counts[gi].0, counts[gi].1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaypointTrack {
    pub waypoints: Vec<Vec2>,
    pub cursor: usize,
}

impl WaypointTrack {
    pub fn goal(&self) -> Vec2 {
        *self.waypoints.last().expect("track is never empty")
    }

    /// Next unreached waypoint, or the goal once all are reached.
    pub fn target(&self) -> Vec2 {
        self.waypoints.get(self.cursor).copied().unwrap_or_else(|| self.goal())
    }

    pub fn remaining(&self) -> usize {
        self.waypoints.len() - self.cursor
    }

    /// Advances past every leading waypoint within `tolerance`; returns how many.
    pub fn advance(&mut self, robot_position: Vec2, tolerance: f64) -> usize {
        assert!(tolerance > 0.0, "advance_cursor: tolerance must be positive");
        let before = self.cursor;
        while self.cursor < self.waypoints.len() && self.waypoints[self.cursor].distance(robot_position) <= tolerance {
            self.cursor += 1;
        }
        self.cursor - before
    }
}

/// Polyline length of the path's cell centers.
fn polyline_length(points: &[Vec2]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Waypoints every `resolution` meters of arc length along the path, then the goal.
pub fn extract_waypoints(path: &GlobalPath, resolution: f64) -> WaypointTrack {
    assert!(resolution > 0.0, "extract_waypoints: resolution must be positive");
    assert!(!path.world_points.is_empty(), "extract_waypoints: empty path");
    let pts = &path.world_points;
    let total = polyline_length(pts);
    let mut waypoints = Vec::new();
    let mut k = 1;
    let mut seg = 0;
    let mut seg_start = 0.0;
    loop {
        let s = k as f64 * resolution;
        if s >= total - 1e-9 {
            break;
        }
        while seg + 1 < pts.len() {
            let len = pts[seg].distance(pts[seg + 1]);
            if seg_start + len >= s {
                break;
            }
            seg_start += len;
            seg += 1;
        }
        let len = pts[seg].distance(pts[seg + 1]);
        waypoints.push(pts[seg].lerp(pts[seg + 1], (s - seg_start) / len));
        k += 1;
    }
    waypoints.push(path.goal);
    WaypointTrack { waypoints, cursor: 0 }
}

/// Free-function form of [`WaypointTrack::advance`].
pub fn advance_cursor(track: &WaypointTrack, robot_position: Vec2, tolerance: f64) -> (WaypointTrack, usize) {
    let mut next = track.clone();
    let count = next.advance(robot_position, tolerance);
    (next, count)
}

/// The next `n` waypoints in the robot frame, padded by repeating the goal.
pub fn reference_window(track: &WaypointTrack, n: usize, robot: &Pose) -> Vec<Vec2> {
    assert!(n >= 1, "reference_window: n must be at least 1");
    (0..n)
        .map(|k| {
            let p = track.waypoints.get(track.cursor + k).copied().unwrap_or_else(|| track.goal());
            to_robot_frame(p, robot)
        })
        .collect()
}
