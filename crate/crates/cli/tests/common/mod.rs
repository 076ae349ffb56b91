//! Scene fixtures shared by the integration tests.
#![allow(dead_code)]

use planloc_cli::config::{ExperimentConfig, SCHEMA_VERSION};
use planloc_core::geometry::{PoseRecord, RigidTransform, Vec3};
use planloc_core::model::{Floorplan2D, WallSegment};
use std::path::Path;

pub fn wall(id: &str, start: [f64; 2], end: [f64; 2]) -> WallSegment {
    WallSegment {
        id: Some(id.into()),
        start,
        end,
        thickness: 0.2,
    }
}

/// Closed room with inner faces at x = 0, x = `w`, y = 0 and y = `d`.
pub fn room(w: f64, d: f64) -> Floorplan2D {
    Floorplan2D {
        walls: vec![
            wall("south", [-0.2, -0.1], [w + 0.2, -0.1]),
            wall("north", [-0.2, d + 0.1], [w + 0.2, d + 0.1]),
            wall("west", [-0.1, 0.0], [-0.1, d]),
            wall("east", [w + 0.1, 0.0], [w + 0.1, d]),
        ],
        wall_height: 2.5,
        floor: vec![
            [-0.2, -0.2],
            [w + 0.2, -0.2],
            [w + 0.2, d + 0.2],
            [-0.2, d + 0.2],
        ],
    }
}

/// Corridor open at the far end with walls of thickness `t`: inner faces
/// at y = 0 (`lower`), y = `d` (`upper`) and x = 0 (`end`). The floor
/// covers the inside only.
pub fn corridor(length: f64, d: f64, t: f64) -> Floorplan2D {
    let h = t / 2.0;
    let w = |id: &str, start, end| WallSegment {
        id: Some(id.to_string()),
        start,
        end,
        thickness: t,
    };
    Floorplan2D {
        walls: vec![
            w("lower", [-t, -h], [length, -h]),
            w("upper", [-t, d + h], [length, d + h]),
            w("end", [-h, -t], [-h, d + t]),
        ],
        wall_height: 2.5,
        floor: vec![[0.0, 0.0], [length, 0.0], [length, d], [0.0, d]],
    }
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

/// Writes the plan and reference list into `dir` and returns a config
/// pointing at them.
pub fn config(
    dir: &Path,
    plan: &Floorplan2D,
    refs: &[&str],
    robot: &RigidTransform,
) -> ExperimentConfig {
    write_json(&dir.join("plan.json"), plan);
    write_json(&dir.join("refs.json"), &refs);
    let raw = serde_json::json!({
        "schema": SCHEMA_VERSION,
        "floorplan": "plan.json",
        "references": "refs.json",
        "robot_pose": PoseRecord::from_transform(robot),
    });
    let mut cfg: ExperimentConfig = serde_json::from_value(raw).unwrap();
    cfg.resolve_paths(dir);
    cfg
}

pub fn robot(x: f64, y: f64, yaw: f64) -> RigidTransform {
    RigidTransform::from_yaw(yaw).with_translation(Vec3::new(x, y, 0.5))
}
