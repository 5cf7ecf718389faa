//! Deterministic 2D crowd-navigation simulator: walls-world layouts, ORCA
//! pedestrians, lidar sensing, grid planning, baseline controllers, and a
//! seeded benchmark harness.

pub mod agents;
pub mod bench;
pub mod crowd;
pub mod env;
pub mod geometry;
pub mod log;
pub mod metrics;
pub mod planner;
pub mod world;
