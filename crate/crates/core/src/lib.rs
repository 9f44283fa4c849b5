//! Teach-and-repeat driving: a deterministic simulator and the repeat-phase
//! control stack (pure pursuit steering, friction-bounded velocity planning,
//! ring-based LiDAR obstacle detection, grid danger analysis and a safety
//! guard).
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analyzer;
pub mod bench;
pub mod bridge;
pub mod engine;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod guard;
pub mod lidar;
pub mod localization;
pub mod metrics;
pub mod path;
pub mod rng;
pub mod scenario;
pub mod steering;
pub mod teach;
pub mod telemetry;
pub mod vehicle;
pub mod velocity;

pub use error::{Error, Result};
pub use geometry::Pose2;
