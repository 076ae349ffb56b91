//! Experiment configuration, a single JSON document with `"schema": 1`.
//!
//! Relative paths are resolved against the directory holding the config.

use planloc_core::fusion::CombineRule;
use planloc_core::geometry::{PoseRecord, RigidTransform, Vec3};
use planloc_core::model::{DeviationGroup, DeviationSpec, Surface, DEFAULT_MAP_DENSITY};
use planloc_core::registration::SelectiveConfig;
use planloc_core::sensor_sim::{
    default_camera_rig, Actor, CameraSpec, DensityOracleParams, LidarSpec, PrismSpec, SensorRig,
    Trajectory,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub floorplan: PathBuf,
    pub references: PathBuf,
    #[serde(default)]
    pub deviation: Vec<DeviationEntry>,
    #[serde(default)]
    pub clutter: Vec<BoxEntry>,
    #[serde(default)]
    pub actors: Vec<ActorEntry>,
    /// Ground-truth sensor pose in the as-built world.
    pub robot_pose: PoseRecord,
    /// Pose used to start the first localization; defaults to `robot_pose`.
    #[serde(default)]
    pub initial_pose: Option<PoseRecord>,
    #[serde(default)]
    pub lidar: LidarSpec,
    /// Defaults to the three-camera rig.
    #[serde(default)]
    pub cameras: Option<Vec<CameraEntry>>,
    #[serde(default)]
    pub prism: PrismSpec,
    #[serde(default)]
    pub density: DensityOracleParams,
    #[serde(default = "default_interval")]
    pub scan_interval_s: f64,
    #[serde(default)]
    pub fusion: FusionParams,
    #[serde(default = "default_map_density")]
    pub map_density: f64,
    #[serde(default)]
    pub localization: SelectiveConfig,
    #[serde(default = "default_scans")]
    pub n_scans: usize,
    #[serde(default = "default_executions")]
    pub n_executions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Measured offset of the reference surfaces, added to the ground-truth
    /// prism. Defaults to the offset implied by the deviation spec.
    #[serde(default)]
    pub ground_truth_offset: Option<[f64; 3]>,
}

fn default_interval() -> f64 {
    0.2
}
fn default_map_density() -> f64 {
    DEFAULT_MAP_DENSITY
}
fn default_scans() -> usize {
    50
}
fn default_executions() -> usize {
    3
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationEntry {
    pub surfaces: Vec<String>,
    #[serde(default)]
    pub translation: [f64; 3],
    /// `[w, x, y, z]`, about the world origin.
    #[serde(default)]
    pub rotation: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxEntry {
    pub id: String,
    pub min: [f64; 3],
    pub max: [f64; 3],
}

/// A box moving back and forth along `from → to`, relative to its own
/// placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorEntry {
    pub id: String,
    pub min: [f64; 3],
    pub max: [f64; 3],
    #[serde(default)]
    pub from: [f64; 3],
    #[serde(default)]
    pub to: [f64; 3],
    #[serde(default = "default_period")]
    pub period_s: f64,
}

fn default_period() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraEntry {
    pub yaw_deg: f64,
    pub hfov_deg: f64,
    pub width: usize,
    pub height: usize,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionParams {
    pub delta: f64,
    pub delta_prime: f64,
    pub rule: CombineRule,
    pub occlusion_check: bool,
    pub occlusion_tolerance: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            delta: 0.5,
            delta_prime: 0.1,
            rule: CombineRule::Max,
            occlusion_check: false,
            occlusion_tolerance: 0.1,
        }
    }
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub delta: Option<f64>,
    pub delta_prime: Option<f64>,
    pub tau_translation: Option<f64>,
    pub tau_rotation: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::input(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate().map_err(|msg| CliError::input(path, msg))?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.floorplan,
            &mut self.references,
            &mut self.output_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.schema != SCHEMA_VERSION {
            return Err(format!(
                "schema: expected {SCHEMA_VERSION}, got {}",
                self.schema
            ));
        }
        if self.n_scans == 0 {
            return Err("n_scans: must be at least 1".into());
        }
        if self.n_executions == 0 {
            return Err("n_executions: must be at least 1".into());
        }
        if !(self.map_density > 0.0) {
            return Err("map_density: must be positive".into());
        }
        if !(self.scan_interval_s > 0.0) {
            return Err("scan_interval_s: must be positive".into());
        }
        if !self.localization.full.is_valid() || !self.localization.selective.is_valid() {
            return Err("localization: invalid icp settings".into());
        }
        self.robot_pose_transform()
            .map_err(|e| format!("robot_pose: {e}"))?;
        self.initial_pose_transform()
            .map_err(|e| format!("initial_pose: {e}"))?;
        self.deviation_spec()
            .map_err(|e| format!("deviation: {e}"))?;
        self.lidar.validate().map_err(|e| format!("lidar: {e}"))?;
        for c in self.camera_specs() {
            c.validate().map_err(|e| format!("cameras: {e}"))?;
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(d) = o.delta {
            self.fusion.delta = d;
        }
        if let Some(d) = o.delta_prime {
            self.fusion.delta_prime = d;
        }
        if let Some(t) = o.tau_translation {
            self.localization.tau_translation = t;
        }
        if let Some(t) = o.tau_rotation {
            self.localization.tau_rotation = t;
        }
    }

    pub fn robot_pose_transform(&self) -> Result<RigidTransform, String> {
        self.robot_pose
            .to_transform()
            .ok_or_else(|| "quaternion is not a rotation".to_string())
    }

    pub fn initial_pose_transform(&self) -> Result<RigidTransform, String> {
        match &self.initial_pose {
            Some(p) => p
                .to_transform()
                .ok_or_else(|| "quaternion is not a rotation".to_string()),
            None => self.robot_pose_transform(),
        }
    }

    pub fn deviation_spec(&self) -> Result<DeviationSpec, String> {
        let groups = self
            .deviation
            .iter()
            .map(|d| {
                let t = Vec3::from(d.translation);
                let offset = match d.rotation {
                    Some(q) => RigidTransform::from_quaternion(q, t)
                        .ok_or("rotation is not a unit quaternion")?,
                    None => RigidTransform::from_translation(t),
                };
                Ok(DeviationGroup {
                    surface_ids: d.surfaces.clone(),
                    offset,
                })
            })
            .collect::<Result<_, &str>>()?;
        Ok(DeviationSpec { groups })
    }

    pub fn camera_specs(&self) -> Vec<CameraSpec> {
        match &self.cameras {
            None => default_camera_rig(),
            Some(list) => list
                .iter()
                .map(|c| {
                    CameraSpec::looking(
                        c.yaw_deg,
                        c.hfov_deg,
                        c.width,
                        c.height,
                        Vec3::from(c.position),
                    )
                })
                .collect(),
        }
    }

    pub fn rig(&self) -> SensorRig {
        SensorRig {
            lidar: self.lidar.clone(),
            cameras: self.camera_specs(),
            density: self.density.clone(),
            scan_interval_s: self.scan_interval_s,
        }
    }

    pub fn clutter_surfaces(&self) -> Result<Vec<Surface>, String> {
        self.clutter
            .iter()
            .map(|b| {
                Surface::axis_aligned_box(&b.id, Vec3::from(b.min), Vec3::from(b.max))
                    .map_err(|e| format!("clutter `{}`: {e}", b.id))
            })
            .collect()
    }

    pub fn actor_list(&self) -> Result<Vec<Actor>, String> {
        self.actors
            .iter()
            .map(|a| {
                let surface =
                    Surface::axis_aligned_box(&a.id, Vec3::from(a.min), Vec3::from(a.max))
                        .map_err(|e| format!("actor `{}`: {e}", a.id))?;
                if !(a.period_s > 0.0) {
                    return Err(format!("actor `{}`: period_s must be positive", a.id));
                }
                Ok(Actor {
                    surface,
                    trajectory: Trajectory::PingPong {
                        from: Vec3::from(a.from),
                        to: Vec3::from(a.to),
                        period_s: a.period_s,
                    },
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema": 1,
        "floorplan": "plan.json",
        "references": "refs.json",
        "robot_pose": {"t": [1.0, 1.0, 0.5]}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        assert_eq!(cfg.n_executions, 3);
        assert_eq!(cfg.n_scans, 50);
        assert_eq!(cfg.fusion.delta, 0.5);
        assert_eq!(cfg.fusion.delta_prime, 0.1);
        assert_eq!(cfg.localization.tau_translation, 0.15);
        assert_eq!(cfg.camera_specs().len(), 3);
        assert!(cfg.validate().is_ok());
        assert_eq!(
            cfg.initial_pose_transform().unwrap(),
            cfg.robot_pose_transform().unwrap()
        );
    }

    #[test]
    fn rejects_bad_fields() {
        let mut cfg: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        cfg.schema = 2;
        assert!(cfg.validate().unwrap_err().starts_with("schema"));
        let mut cfg: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        cfg.n_scans = 0;
        assert!(cfg.validate().unwrap_err().starts_with("n_scans"));
        assert!(serde_json::from_str::<ExperimentConfig>(
            &MINIMAL.replace("\"schema\"", "\"shema\"")
        )
        .is_err());
    }

    #[test]
    fn relative_paths_follow_config() {
        let mut cfg: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        cfg.resolve_paths(Path::new("/data/exp"));
        assert_eq!(cfg.floorplan, Path::new("/data/exp/plan.json"));
        assert_eq!(cfg.output_dir, Path::new("/data/exp/out"));
    }

    #[test]
    fn overrides_and_offsets() {
        let mut cfg: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        cfg.deviation.push(DeviationEntry {
            surfaces: vec!["wall_1".into()],
            translation: [0.3, 0.0, 0.0],
            rotation: None,
        });
        assert_eq!(
            cfg.deviation_spec().unwrap().groups[0]
                .offset
                .translation()
                .x,
            0.3
        );
        cfg.apply(&Overrides {
            seed: Some(9),
            delta: Some(0.4),
            tau_rotation: Some(0.1),
            ..Default::default()
        });
        assert_eq!(
            (cfg.seed, cfg.fusion.delta, cfg.localization.tau_rotation),
            (9, 0.4, 0.1)
        );
    }
}
