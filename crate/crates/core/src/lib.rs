//! Localization of a LiDAR-equipped robot inside an as-planned building
//! model that deviates from the as-built site.
//!
//! Scans are fused with per-pixel background scores from cameras, weighted
//! or filtered, and registered with point-to-plane ICP first against the
//! whole model and then against a small set of task reference surfaces.

pub mod eval;
pub mod formats;
pub mod fusion;
pub mod geometry;
pub mod model;
pub mod registration;
pub mod rng;
pub mod sensor_sim;
