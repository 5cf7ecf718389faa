//! Static scenario worlds: wall layouts with spawn zones, their occupancy
//! grids, and seeded sampling of episode start/goal tasks.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{point_segment_distance, Pose, Segment, Vec2};

/// Radius shared by pedestrians and the robot unless configured otherwise.
pub const AGENT_RADIUS: f64 = 0.30;
/// Extra clearance required when placing an agent inside a spawn zone.
pub const SPAWN_MARGIN: f64 = 0.10;
/// Minimum robot start-goal separation.
pub const MIN_START_GOAL_SEPARATION: f64 = 2.0;
/// Retry cap for every rejection-sampled placement.
pub const MAX_SAMPLING_ATTEMPTS: usize = 1000;
/// Angular jitter applied to the evenly spaced starts of the crossing circle.
pub const CIRCLE_JITTER: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("malformed layout document: {0}")]
    Schema(String),
    #[error("invalid layout element {element}: {reason}")]
    Validation { element: String, reason: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("layout {layout} needs at least two robot zones")]
    NotEnoughRobotZones { layout: String },
    #[error("layout {layout} has no pedestrian zones but {requested} pedestrians were requested")]
    NoPedestrianZones { layout: String, requested: usize },
    #[error("{requested} pedestrians exceed the zone capacity {capacity} of layout {layout}")]
    OverCapacity {
        layout: String,
        requested: usize,
        capacity: usize,
    },
    #[error("rejection sampling exhausted after {attempts} attempts placing {what}")]
    SamplingExhausted { what: String, attempts: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpawnZone {
    pub center: Vec2,
    pub radius: f64,
}

impl SpawnZone {
    pub fn new(cx: f64, cy: f64, radius: f64) -> Self {
        Self {
            center: Vec2::new(cx, cy),
            radius,
        }
    }

    /// Uniform point in the disc.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec2 {
        let r = self.radius * rng.gen::<f64>().sqrt();
        let theta = rng.gen_range(0.0..2.0 * PI);
        self.center + Vec2::from_angle(theta) * r
    }
}

/// Pedestrians on a circle walking to the antipodal point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingCircle {
    pub center: Vec2,
    pub radius: f64,
}

impl CrossingCircle {
    pub fn antipode(&self, p: Vec2) -> Vec2 {
        let d = (p - self.center).normalized();
        let d = if d == Vec2::ZERO { Vec2::new(1.0, 0.0) } else { d };
        self.center - d * self.radius
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub name: String,
    pub width: f64,
    pub height: f64,
    /// Interior walls. The bounding box is implicit, see [`Layout::all_walls`].
    pub walls: Vec<Segment>,
    pub robot_zones: Vec<SpawnZone>,
    pub pedestrian_zone_pairs: Vec<(SpawnZone, SpawnZone)>,
    pub default_pedestrians: usize,
    pub crossing_circle: Option<CrossingCircle>,
    pub notes: Option<String>,
}

impl Layout {
    pub fn boundary_walls(&self) -> [Segment; 4] {
        let (w, h) = (self.width, self.height);
        let c = [
            Vec2::new(0.0, 0.0),
            Vec2::new(w, 0.0),
            Vec2::new(w, h),
            Vec2::new(0.0, h),
        ];
        [
            Segment::new(c[0], c[1]),
            Segment::new(c[1], c[2]),
            Segment::new(c[2], c[3]),
            Segment::new(c[3], c[0]),
        ]
    }

    /// Interior walls followed by the four boundary walls.
    pub fn all_walls(&self) -> Vec<Segment> {
        let mut all = self.walls.clone();
        all.extend_from_slice(&self.boundary_walls());
        all
    }

    pub fn clearance(&self, p: Vec2) -> f64 {
        self.all_walls()
            .iter()
            .map(|w| point_segment_distance(p, w))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn in_bounds(&self, p: Vec2) -> bool {
        let eps = 1e-9;
        p.x >= -eps && p.y >= -eps && p.x <= self.width + eps && p.y <= self.height + eps
    }

    /// Upper estimate of how many pedestrians the zones can host at once.
    pub fn pedestrian_capacity(&self) -> usize {
        if let Some(c) = &self.crossing_circle {
            let spacing = 2.0 * AGENT_RADIUS + SPAWN_MARGIN;
            return (2.0 * PI * c.radius / spacing).floor() as usize;
        }
        let mut zones: Vec<SpawnZone> = Vec::new();
        for (a, b) in &self.pedestrian_zone_pairs {
            for z in [a, b] {
                if !zones.contains(z) {
                    zones.push(*z);
                }
            }
        }
        let spacing = 2.0 * AGENT_RADIUS + SPAWN_MARGIN;
        zones
            .iter()
            .map(|z| {
                let r = z.radius + spacing / 2.0;
                // hexagonal packing density
                (0.9069 * r * r / (spacing * spacing / 4.0)).floor().max(1.0) as usize
            })
            .sum()
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        let fail = |element: String, reason: String| Err(LayoutError::Validation { element, reason });
        if self.name.trim().is_empty() {
            return fail("name".into(), "must not be empty".into());
        }
        if !(self.width > 0.0 && self.height > 0.0 && self.width.is_finite() && self.height.is_finite()) {
            return fail("bounds".into(), format!("w={} h={} must be positive", self.width, self.height));
        }
        for (i, w) in self.walls.iter().enumerate() {
            let el = format!("walls[{i}]");
            if !w.a.is_finite() || !w.b.is_finite() {
                return fail(el, "non-finite coordinate".into());
            }
            if w.is_degenerate() {
                return fail(el, "zero-length wall".into());
            }
            if !self.in_bounds(w.a) || !self.in_bounds(w.b) {
                return fail(el, "wall lies outside bounds".into());
            }
        }
        let walls = self.all_walls();
        let check_zone = |el: String, z: &SpawnZone| -> Result<(), LayoutError> {
            if !z.center.is_finite() || !(z.radius > 0.0) {
                return fail(el, format!("radius {} must be positive", z.radius));
            }
            if !self.in_bounds(z.center) {
                return fail(el, "zone center outside bounds".into());
            }
            let clearance = walls
                .iter()
                .map(|w| point_segment_distance(z.center, w))
                .fold(f64::INFINITY, f64::min);
            if clearance <= z.radius {
                return fail(el, format!("zone disk intersects a wall (clearance {clearance:.3})"));
            }
            if clearance < AGENT_RADIUS {
                return fail(el, format!("center clearance {clearance:.3} below robot radius"));
            }
            Ok(())
        };
        for (i, z) in self.robot_zones.iter().enumerate() {
            check_zone(format!("robot_zones[{i}]"), z)?;
        }
        for (i, (a, b)) in self.pedestrian_zone_pairs.iter().enumerate() {
            check_zone(format!("ped_zone_pairs[{i}][0]"), a)?;
            check_zone(format!("ped_zone_pairs[{i}][1]"), b)?;
        }
        if let Some(c) = &self.crossing_circle {
            let lo = c.center - Vec2::new(c.radius, c.radius);
            let hi = c.center + Vec2::new(c.radius, c.radius);
            if !(c.radius > 0.0) || !self.in_bounds(lo) || !self.in_bounds(hi) {
                return fail("circle_crossing".into(), "circle must lie inside bounds".into());
            }
        }
        Ok(())
    }

    pub fn to_document(&self) -> LayoutDocument {
        let zone = |z: &SpawnZone| ZoneDoc {
            cx: z.center.x,
            cy: z.center.y,
            r: z.radius,
        };
        LayoutDocument {
            name: self.name.clone(),
            bounds: BoundsDoc {
                w: self.width,
                h: self.height,
            },
            walls: self
                .walls
                .iter()
                .map(|s| WallDoc {
                    ax: s.a.x,
                    ay: s.a.y,
                    bx: s.b.x,
                    by: s.b.y,
                })
                .collect(),
            robot_zones: self.robot_zones.iter().map(zone).collect(),
            ped_zone_pairs: self
                .pedestrian_zone_pairs
                .iter()
                .map(|(a, b)| [zone(a), zone(b)])
                .collect(),
            default_pedestrians: self.default_pedestrians,
            circle_crossing: self.crossing_circle.map(|c| ZoneDoc {
                cx: c.center.x,
                cy: c.center.y,
                r: c.radius,
            }),
            notes: self.notes.clone(),
        }
    }

    pub fn from_document(doc: &LayoutDocument) -> Result<Layout, LayoutError> {
        let zone = |z: &ZoneDoc| SpawnZone::new(z.cx, z.cy, z.r);
        let layout = Layout {
            name: doc.name.clone(),
            width: doc.bounds.w,
            height: doc.bounds.h,
            walls: doc
                .walls
                .iter()
                .map(|w| Segment::new(Vec2::new(w.ax, w.ay), Vec2::new(w.bx, w.by)))
                .collect(),
            robot_zones: doc.robot_zones.iter().map(zone).collect(),
            pedestrian_zone_pairs: doc.ped_zone_pairs.iter().map(|[a, b]| (zone(a), zone(b))).collect(),
            default_pedestrians: doc.default_pedestrians,
            crossing_circle: doc.circle_crossing.as_ref().map(|c| CrossingCircle {
                center: Vec2::new(c.cx, c.cy),
                radius: c.r,
            }),
            notes: doc.notes.clone(),
        };
        layout.validate()?;
        Ok(layout)
    }
}

// Serialized layout schema.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutDocument {
    pub name: String,
    pub bounds: BoundsDoc,
    pub walls: Vec<WallDoc>,
    pub robot_zones: Vec<ZoneDoc>,
    pub ped_zone_pairs: Vec<[ZoneDoc; 2]>,
    pub default_pedestrians: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circle_crossing: Option<ZoneDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsDoc {
    pub w: f64,
    pub h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallDoc {
    pub ax: f64,
    pub ay: f64,
    pub bx: f64,
    pub by: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneDoc {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

/// Parses and validates a JSON layout document.
pub fn load_layout(document: &str) -> Result<Layout, LayoutError> {
    let doc: LayoutDocument = serde_json::from_str(document).map_err(|e| LayoutError::Schema(e.to_string()))?;
    Layout::from_document(&doc)
}

pub fn save_layout(layout: &Layout) -> String {
    serde_json::to_string_pretty(&layout.to_document()).expect("layout serializes")
}

/// Looks a built-in layout up by name (case-insensitive).
pub fn builtin_layout(name: &str) -> Option<Layout> {
    builtin_layouts()
        .into_iter()
        .find(|l| l.name.eq_ignore_ascii_case(name))
}

// Builders for the parametric layouts.

const SIZE: f64 = 20.0;
const PLACEHOLDER_NOTE: &str =
    "parametric re-creation: corridor 2.0m, door 1.0m, blocks 1m x 1m; dimensions are placeholders";

fn hwall(y: f64, x0: f64, x1: f64) -> Segment {
    Segment::new(Vec2::new(x0, y), Vec2::new(x1, y))
}

fn vwall(x: f64, y0: f64, y1: f64) -> Segment {
    Segment::new(Vec2::new(x, y0), Vec2::new(x, y1))
}

fn block(cx: f64, cy: f64) -> [Segment; 4] {
    let (x0, x1, y0, y1) = (cx - 0.5, cx + 0.5, cy - 0.5, cy + 0.5);
    [hwall(y0, x0, x1), vwall(x1, y0, y1), hwall(y1, x1, x0), vwall(x0, y1, y0)]
}

fn z(cx: f64, cy: f64, r: f64) -> SpawnZone {
    SpawnZone::new(cx, cy, r)
}

fn layout(
    name: &str,
    walls: Vec<Segment>,
    robot_zones: Vec<SpawnZone>,
    pairs: Vec<(SpawnZone, SpawnZone)>,
    default_pedestrians: usize,
) -> Layout {
    Layout {
        name: name.to_string(),
        width: SIZE,
        height: SIZE,
        walls,
        robot_zones,
        pedestrian_zone_pairs: pairs,
        default_pedestrians,
        crossing_circle: None,
        notes: Some(PLACEHOLDER_NOTE.to_string()),
    }
}

/// Walls of two 2m corridors crossing at (10, 10) without a hub.
fn crossing_walls() -> Vec<Segment> {
    vec![
        hwall(9.0, 0.0, 9.0),
        vwall(9.0, 9.0, 0.0),
        hwall(9.0, 11.0, 20.0),
        vwall(11.0, 9.0, 0.0),
        hwall(11.0, 0.0, 9.0),
        vwall(9.0, 11.0, 20.0),
        hwall(11.0, 11.0, 20.0),
        vwall(11.0, 11.0, 20.0),
    ]
}

fn walls_a() -> Layout {
    layout(
        "WALLS-A",
        vec![hwall(9.0, 0.0, 20.0), hwall(11.0, 0.0, 20.0)],
        vec![z(1.5, 10.0, 0.5), z(18.5, 10.0, 0.5), z(6.0, 10.0, 0.5), z(14.0, 10.0, 0.5)],
        vec![
            (z(1.5, 10.0, 0.5), z(18.5, 10.0, 0.5)),
            (z(4.5, 10.0, 0.5), z(15.5, 10.0, 0.5)),
        ],
        4,
    )
}

fn walls_b() -> Layout {
    layout(
        "WALLS-B",
        vec![vwall(10.0, 0.0, 9.5), vwall(10.0, 10.5, 20.0)],
        vec![z(4.0, 10.0, 1.0), z(16.0, 10.0, 1.0), z(5.0, 4.0, 1.0), z(15.0, 16.0, 1.0)],
        vec![
            (z(4.0, 6.0, 1.0), z(16.0, 14.0, 1.0)),
            (z(4.0, 14.0, 1.0), z(16.0, 6.0, 1.0)),
            (z(5.0, 10.0, 1.0), z(15.0, 10.0, 1.0)),
        ],
        4,
    )
}

fn walls_c() -> Layout {
    layout(
        "WALLS-C",
        vec![
            hwall(6.0, 6.0, 14.0),
            hwall(14.0, 6.0, 14.0),
            vwall(6.0, 6.0, 9.5),
            vwall(6.0, 10.5, 14.0),
            vwall(14.0, 6.0, 9.5),
            vwall(14.0, 10.5, 14.0),
        ],
        vec![z(3.0, 10.0, 1.0), z(10.0, 10.0, 1.0), z(17.0, 10.0, 1.0), z(10.0, 3.0, 1.0)],
        vec![
            (z(3.0, 10.0, 1.0), z(17.0, 10.0, 1.0)),
            (z(3.0, 3.0, 1.0), z(3.0, 17.0, 1.0)),
            (z(17.0, 3.0, 1.0), z(17.0, 17.0, 1.0)),
        ],
        4,
    )
}

fn walls_d() -> Layout {
    let mut walls = Vec::new();
    for cx in [5.0, 10.0, 15.0] {
        for cy in [5.0, 10.0, 15.0] {
            walls.extend(block(cx, cy));
        }
    }
    layout(
        "WALLS-D",
        walls,
        vec![z(2.0, 2.0, 1.0), z(18.0, 18.0, 1.0), z(2.0, 18.0, 1.0), z(18.0, 2.0, 1.0)],
        vec![
            (z(7.5, 2.0, 0.8), z(7.5, 18.0, 0.8)),
            (z(12.5, 2.0, 0.8), z(12.5, 18.0, 0.8)),
            (z(2.0, 7.5, 0.8), z(18.0, 7.5, 0.8)),
            (z(2.0, 12.5, 0.8), z(18.0, 12.5, 0.8)),
        ],
        4,
    )
}

fn walls_e() -> Layout {
    // 4-way intersection with a 4m x 4m hub.
    let mut walls = Vec::new();
    for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
        let p = |dx: f64, dy: f64| Vec2::new(10.0 + sx * dx, 10.0 + sy * dy);
        walls.push(Segment::new(p(10.0, 1.0), p(2.0, 1.0)));
        walls.push(Segment::new(p(2.0, 1.0), p(2.0, 2.0)));
        walls.push(Segment::new(p(2.0, 2.0), p(1.0, 2.0)));
        walls.push(Segment::new(p(1.0, 2.0), p(1.0, 10.0)));
    }
    layout(
        "WALLS-E",
        walls,
        vec![z(1.5, 10.0, 0.5), z(18.5, 10.0, 0.5), z(10.0, 1.5, 0.5), z(10.0, 18.5, 0.5)],
        vec![
            (z(1.5, 10.0, 0.5), z(18.5, 10.0, 0.5)),
            (z(10.0, 1.5, 0.5), z(10.0, 18.5, 0.5)),
            (z(5.0, 10.0, 0.5), z(15.0, 10.0, 0.5)),
            (z(10.0, 5.0, 0.5), z(10.0, 15.0, 0.5)),
        ],
        4,
    )
}

fn walls_f() -> Layout {
    layout(
        "WALLS-F",
        crossing_walls(),
        vec![z(1.5, 10.0, 0.5), z(18.5, 10.0, 0.5), z(5.0, 10.0, 0.5), z(15.0, 10.0, 0.5)],
        vec![
            (z(10.0, 1.5, 0.6), z(10.0, 18.5, 0.6)),
            (z(10.0, 5.0, 0.6), z(10.0, 15.0, 0.6)),
            (z(1.5, 10.0, 0.6), z(18.5, 10.0, 0.6)),
            (z(5.0, 10.0, 0.6), z(15.0, 10.0, 0.6)),
        ],
        4,
    )
}

fn walls_g() -> Layout {
    // Corridor opening into a room split by a wall with a door.
    layout(
        "WALLS-G",
        vec![
            hwall(9.0, 0.0, 8.0),
            hwall(11.0, 0.0, 8.0),
            vwall(8.0, 4.0, 9.0),
            vwall(8.0, 11.0, 16.0),
            hwall(4.0, 8.0, 20.0),
            hwall(16.0, 8.0, 20.0),
            vwall(14.0, 4.0, 9.5),
            vwall(14.0, 10.5, 16.0),
        ],
        vec![z(1.5, 10.0, 0.5), z(11.0, 7.0, 1.0), z(17.0, 13.0, 1.0), z(17.0, 7.0, 1.0)],
        vec![
            (z(1.5, 10.0, 0.5), z(18.0, 10.0, 0.8)),
            (z(11.0, 13.0, 0.8), z(17.0, 7.0, 0.8)),
            (z(11.0, 7.0, 0.8), z(17.0, 13.0, 0.8)),
        ],
        3,
    )
}

fn walls_h() -> Layout {
    // T-junction corridor, a partition door, and a room with blocks behind
    // three doors.
    let mut walls = vec![
        hwall(9.0, 0.0, 9.0),
        hwall(9.0, 11.0, 20.0),
        vwall(9.0, 0.0, 9.0),
        vwall(11.0, 0.0, 9.0),
        hwall(11.0, 0.0, 4.5),
        hwall(11.0, 5.5, 9.5),
        hwall(11.0, 10.5, 14.5),
        hwall(11.0, 15.5, 20.0),
        vwall(16.0, 9.0, 9.5),
        vwall(16.0, 10.5, 11.0),
    ];
    for (cx, cy) in [(7.5, 13.5), (12.5, 13.5), (7.5, 17.5), (12.5, 17.5)] {
        walls.extend(block(cx, cy));
    }
    layout(
        "WALLS-H",
        walls,
        vec![
            z(1.5, 10.0, 0.5),
            z(10.0, 1.5, 0.5),
            z(18.5, 10.0, 0.5),
            z(2.0, 18.0, 1.0),
            z(18.0, 18.0, 1.0),
        ],
        vec![
            (z(1.5, 10.0, 0.5), z(14.0, 10.0, 0.5)),
            (z(10.0, 1.5, 0.5), z(10.0, 18.5, 0.5)),
            (z(18.5, 10.0, 0.5), z(12.5, 10.0, 0.5)),
            (z(2.0, 15.5, 0.8), z(18.0, 15.5, 0.8)),
            (z(5.0, 18.5, 0.5), z(5.0, 10.0, 0.5)),
            (z(15.0, 18.5, 0.5), z(15.0, 10.0, 0.5)),
        ],
        6,
    )
}

fn walls_i() -> Layout {
    // Crossing corridors with door partitions across the east and north arms.
    let mut walls = crossing_walls();
    walls.extend([
        vwall(15.0, 9.0, 9.5),
        vwall(15.0, 10.5, 11.0),
        hwall(15.0, 9.0, 9.5),
        hwall(15.0, 10.5, 11.0),
    ]);
    layout(
        "WALLS-I",
        walls,
        vec![
            z(1.5, 10.0, 0.5),
            z(18.5, 10.0, 0.5),
            z(10.0, 1.5, 0.5),
            z(10.0, 18.5, 0.5),
            z(5.0, 10.0, 0.5),
            z(10.0, 5.0, 0.5),
        ],
        vec![
            (z(1.5, 10.0, 0.6), z(18.5, 10.0, 0.6)),
            (z(10.0, 1.5, 0.6), z(10.0, 18.5, 0.6)),
            (z(4.0, 10.0, 0.6), z(17.5, 10.0, 0.6)),
            (z(10.0, 4.0, 0.6), z(10.0, 17.5, 0.6)),
            (z(6.5, 10.0, 0.6), z(13.0, 10.0, 0.6)),
            (z(10.0, 6.5, 0.6), z(10.0, 13.0, 0.6)),
        ],
        4,
    )
}

fn circle() -> Layout {
    Layout {
        name: "CIRCLE".into(),
        width: SIZE,
        height: SIZE,
        walls: Vec::new(),
        robot_zones: vec![z(10.0, 6.0, 0.1), z(10.0, 14.0, 0.1)],
        pedestrian_zone_pairs: Vec::new(),
        default_pedestrians: 5,
        crossing_circle: Some(CrossingCircle {
            center: Vec2::new(10.0, 10.0),
            radius: 4.0,
        }),
        notes: Some("open crossing domain: pedestrians walk to antipodes of a 4m circle".into()),
    }
}

/// All built-in layouts, in a stable order.
pub fn builtin_layouts() -> Vec<Layout> {
    vec![
        walls_a(),
        walls_b(),
        walls_c(),
        walls_d(),
        walls_e(),
        walls_f(),
        walls_g(),
        walls_h(),
        walls_i(),
        circle(),
    ]
}

/// Binary occupancy grid in row-major order (`row * width + col`), row 0 at
/// the bottom edge of the world.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub origin: Vec2,
    pub occupied: Vec<bool>,
}

pub type Cell = (usize, usize);

impl OccupancyGrid {
    pub fn new_free(resolution: f64, width: usize, height: usize, origin: Vec2) -> Self {
        Self {
            resolution,
            width,
            height,
            origin,
            occupied: vec![false; width * height],
        }
    }

    pub fn index(&self, (col, row): Cell) -> usize {
        row * self.width + col
    }

    pub fn cell_of(&self, p: Vec2) -> Option<Cell> {
        let fx = ((p.x - self.origin.x) / self.resolution).floor();
        let fy = ((p.y - self.origin.y) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    pub fn center(&self, (col, row): Cell) -> Vec2 {
        Vec2::new(
            self.origin.x + (col as f64 + 0.5) * self.resolution,
            self.origin.y + (row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn is_occupied(&self, c: Cell) -> bool {
        self.occupied[self.index(c)]
    }

    pub fn is_free(&self, c: Cell) -> bool {
        !self.is_occupied(c)
    }

    pub fn set_occupied(&mut self, c: Cell, value: bool) {
        let i = self.index(c);
        self.occupied[i] = value;
    }

    /// Free-cell test for a world point; outside the grid counts as occupied.
    pub fn is_free_at(&self, p: Vec2) -> bool {
        self.cell_of(p).map(|c| self.is_free(c)).unwrap_or(false)
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    /// Marks every cell whose center lies within `radius` of `center`.
    pub fn stamp_disc(&mut self, center: Vec2, radius: f64) {
        let res = self.resolution;
        let c0 = (((center.x - radius - self.origin.x) / res).floor().max(0.0)) as usize;
        let r0 = (((center.y - radius - self.origin.y) / res).floor().max(0.0)) as usize;
        let c1 = (((center.x + radius - self.origin.x) / res).ceil().max(0.0) as usize).min(self.width);
        let r1 = (((center.y + radius - self.origin.y) / res).ceil().max(0.0) as usize).min(self.height);
        for row in r0..r1 {
            for col in c0..c1 {
                if self.center((col, row)).distance(center) <= radius {
                    self.set_occupied((col, row), true);
                }
            }
        }
    }

    /// Nearest free cell by breadth-first search over 4-neighbors.
    pub fn nearest_free(&self, from: Cell) -> Option<Cell> {
        if self.is_free(from) {
            return Some(from);
        }
        let mut seen = vec![false; self.width * self.height];
        let mut queue = std::collections::VecDeque::new();
        seen[self.index(from)] = true;
        queue.push_back(from);
        while let Some((c, r)) = queue.pop_front() {
            let candidates = [
                (c.wrapping_sub(1), r),
                (c + 1, r),
                (c, r.wrapping_sub(1)),
                (c, r + 1),
            ];
            for (nc, nr) in candidates {
                if nc >= self.width || nr >= self.height {
                    continue;
                }
                let idx = self.index((nc, nr));
                if seen[idx] {
                    continue;
                }
                if !self.occupied[idx] {
                    return Some((nc, nr));
                }
                seen[idx] = true;
                queue.push_back((nc, nr));
            }
        }
        None
    }
}

/// Rasterizes all walls (including the bounding box): a cell is occupied iff
/// some wall passes within `inflation_radius` of its center.
///
/// Panics on a non-positive resolution or negative inflation.
pub fn rasterize(layout: &Layout, resolution: f64, inflation_radius: f64) -> OccupancyGrid {
    assert!(resolution > 0.0, "rasterize: resolution must be positive, got {resolution}");
    assert!(
        inflation_radius >= 0.0,
        "rasterize: inflation radius must be non-negative, got {inflation_radius}"
    );
    let cells = |extent: f64| {
        let n = extent / resolution;
        if (n - n.round()).abs() < 1e-9 {
            n.round() as usize
        } else {
            n.ceil() as usize
        }
    };
    let mut grid = OccupancyGrid::new_free(resolution, cells(layout.width), cells(layout.height), Vec2::ZERO);
    for wall in layout.all_walls() {
        let lo_x = wall.a.x.min(wall.b.x) - inflation_radius;
        let hi_x = wall.a.x.max(wall.b.x) + inflation_radius;
        let lo_y = wall.a.y.min(wall.b.y) - inflation_radius;
        let hi_y = wall.a.y.max(wall.b.y) + inflation_radius;
        let c0 = ((lo_x / resolution).floor() - 1.0).max(0.0) as usize;
        let r0 = ((lo_y / resolution).floor() - 1.0).max(0.0) as usize;
        let c1 = (((hi_x / resolution).ceil() + 1.0).max(0.0) as usize).min(grid.width);
        let r1 = (((hi_y / resolution).ceil() + 1.0).max(0.0) as usize).min(grid.height);
        for row in r0..r1 {
            for col in c0..c1 {
                if point_segment_distance(grid.center((col, row)), &wall) <= inflation_radius {
                    grid.set_occupied((col, row), true);
                }
            }
        }
    }
    grid
}

/// Where a pedestrian draws its next goal from once it arrives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoalSource {
    /// Shuttles between two zones; `toward_second` says which one holds the current goal.
    Zones {
        first: SpawnZone,
        second: SpawnZone,
        toward_second: bool,
    },
    /// Walks to the antipode of its position on the circle.
    Antipodal { center: Vec2, radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PedestrianTask {
    pub start: Vec2,
    pub goal: Vec2,
    pub source: GoalSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSample {
    pub robot_start: Pose,
    pub robot_goal: Vec2,
    pub pedestrian_tasks: Vec<PedestrianTask>,
}

/// Draws a point from `zone` with at least `radius + SPAWN_MARGIN` clearance.
pub fn sample_free_point<R: Rng>(
    layout: &Layout,
    zone: &SpawnZone,
    radius: f64,
    rng: &mut R,
) -> Option<Vec2> {
    let walls = layout.all_walls();
    for _ in 0..MAX_SAMPLING_ATTEMPTS {
        let p = zone.sample(rng);
        let clearance = walls
            .iter()
            .map(|w| point_segment_distance(p, w))
            .fold(f64::INFINITY, f64::min);
        if clearance >= radius + SPAWN_MARGIN {
            return Some(p);
        }
    }
    None
}

/// Samples the robot start/goal and pedestrian tasks for one episode.
pub fn sample_episode(layout: &Layout, pedestrians: usize, rng_seed: u64) -> Result<EpisodeSample, SamplingError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let exhausted = |what: &str| SamplingError::SamplingExhausted {
        what: what.to_string(),
        attempts: MAX_SAMPLING_ATTEMPTS,
    };
    if layout.robot_zones.len() < 2 {
        return Err(SamplingError::NotEnoughRobotZones {
            layout: layout.name.clone(),
        });
    }
    if pedestrians > 0 {
        if layout.pedestrian_zone_pairs.is_empty() && layout.crossing_circle.is_none() {
            return Err(SamplingError::NoPedestrianZones {
                layout: layout.name.clone(),
                requested: pedestrians,
            });
        }
        let capacity = layout.pedestrian_capacity();
        if pedestrians > capacity {
            return Err(SamplingError::OverCapacity {
                layout: layout.name.clone(),
                requested: pedestrians,
                capacity,
            });
        }
    }

    // Robot: distinct zones, separated start and goal.
    let n = layout.robot_zones.len();
    let mut robot = None;
    for _ in 0..MAX_SAMPLING_ATTEMPTS {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let start = sample_free_point(layout, &layout.robot_zones[i], AGENT_RADIUS, &mut rng);
        let goal = sample_free_point(layout, &layout.robot_zones[j], AGENT_RADIUS, &mut rng);
        if let (Some(s), Some(g)) = (start, goal) {
            if s.distance(g) >= MIN_START_GOAL_SEPARATION {
                robot = Some((s, g));
                break;
            }
        }
    }
    let (start, goal) = robot.ok_or_else(|| exhausted("robot start/goal"))?;
    let heading = rng.gen_range(-PI..PI);
    let robot_start = Pose::new(start, heading);

    let min_sep = 2.0 * AGENT_RADIUS + SPAWN_MARGIN;
    let mut placed: Vec<Vec2> = vec![start];
    let mut tasks = Vec::with_capacity(pedestrians);
    for k in 0..pedestrians {
        let mut task = None;
        for _ in 0..MAX_SAMPLING_ATTEMPTS {
            let candidate = if let Some(circle) = &layout.crossing_circle {
                let base = 2.0 * PI * k as f64 / pedestrians as f64;
                let angle = base + rng.gen_range(-CIRCLE_JITTER..CIRCLE_JITTER);
                let s = circle.center + Vec2::from_angle(angle) * circle.radius;
                Some(PedestrianTask {
                    start: s,
                    goal: circle.antipode(s),
                    source: GoalSource::Antipodal {
                        center: circle.center,
                        radius: circle.radius,
                    },
                })
            } else {
                let (a, b) = layout.pedestrian_zone_pairs[rng.gen_range(0..layout.pedestrian_zone_pairs.len())];
                let (first, second) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
                let s = sample_free_point(layout, &first, AGENT_RADIUS, &mut rng);
                let g = sample_free_point(layout, &second, AGENT_RADIUS, &mut rng);
                match (s, g) {
                    (Some(start), Some(goal)) => Some(PedestrianTask {
                        start,
                        goal,
                        source: GoalSource::Zones {
                            first,
                            second,
                            toward_second: true,
                        },
                    }),
                    _ => None,
                }
            };
            if let Some(t) = candidate {
                if placed.iter().all(|p| p.distance(t.start) >= min_sep) && layout.clearance(t.start) >= AGENT_RADIUS {
                    task = Some(t);
                    break;
                }
            }
        }
        let t = task.ok_or_else(|| exhausted(&format!("pedestrian {k}")))?;
        placed.push(t.start);
        tasks.push(t);
    }

    Ok(EpisodeSample {
        robot_start,
        robot_goal: goal,
        pedestrian_tasks: tasks,
    })
}
