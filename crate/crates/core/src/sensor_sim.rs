//! Synthetic sensing of an as-built scene: a multi-ring LiDAR, pinhole
//! cameras that render background-density images, and a surveying prism.

use crate::geometry::{RigidTransform, Vec3};
use crate::model::{BuildingModel, Surface};
use crate::rng::{derive_seed, rng_for};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("surface id `{0}` is used by more than one scene element")]
    DuplicateId(String),
    #[error("invalid lidar spec: {0}")]
    InvalidLidar(String),
    #[error("invalid camera spec: {0}")]
    InvalidCamera(String),
    #[error("trial sequence needs at least one scan")]
    NoScans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarSpec {
    pub ring_elevations_deg: Vec<f64>,
    pub azimuth_step_deg: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            ring_elevations_deg: (0..16).map(|i| -15.0 + 2.0 * i as f64).collect(),
            azimuth_step_deg: 0.4,
            max_range: 50.0,
            range_noise_sigma: 0.01,
        }
    }
}

impl LidarSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.ring_elevations_deg.is_empty() {
            return Err(SimError::InvalidLidar("needs at least one ring".into()));
        }
        if !(self.max_range > 0.0) {
            return Err(SimError::InvalidLidar("max_range must be positive".into()));
        }
        if !(self.range_noise_sigma >= 0.0) {
            return Err(SimError::InvalidLidar(
                "range noise must be non-negative".into(),
            ));
        }
        if !(self.azimuth_step_deg > 0.0 && self.azimuth_step_deg <= 360.0) {
            return Err(SimError::InvalidLidar(
                "azimuth step must be in (0, 360]".into(),
            ));
        }
        Ok(())
    }

    pub fn azimuth_count(&self) -> usize {
        (360.0 / self.azimuth_step_deg).round().max(1.0) as usize
    }

    /// Unit beam directions in the sensor frame, ring-major.
    pub fn directions(&self) -> Vec<Vec3> {
        let n_az = self.azimuth_count();
        let mut dirs = Vec::with_capacity(n_az * self.ring_elevations_deg.len());
        for &elev in &self.ring_elevations_deg {
            let (se, ce) = elev.to_radians().sin_cos();
            for k in 0..n_az {
                let (sa, ca) = (k as f64 * self.azimuth_step_deg).to_radians().sin_cos();
                dirs.push(Vec3::new(ce * ca, ce * sa, se));
            }
        }
        dirs
    }
}

/// Pinhole camera. Camera axes: x right, y down, z forward.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// body ← camera
    pub extrinsic: RigidTransform,
}

impl CameraSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(SimError::InvalidCamera(
                "focal lengths must be positive".into(),
            ));
        }
        if !(self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64)
        {
            return Err(SimError::InvalidCamera(
                "principal point outside the image".into(),
            ));
        }
        Ok(())
    }

    /// Camera that looks along body +x rotated by `yaw_deg` about +z, with a
    /// horizontal field of view of `hfov_deg`.
    pub fn looking(
        yaw_deg: f64,
        hfov_deg: f64,
        width: usize,
        height: usize,
        position: Vec3,
    ) -> Self {
        let f = (width as f64 / 2.0) / (hfov_deg.to_radians() / 2.0).tan();
        // columns: camera x, y, z expressed in the body frame
        let base = nalgebra::Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
        let yaw = RigidTransform::from_yaw(yaw_deg.to_radians());
        let rotation = yaw.rotation() * base;
        Self {
            fx: f,
            fy: f,
            cx: (width / 2) as f64,
            cy: (height / 2) as f64,
            width,
            height,
            extrinsic: RigidTransform::new(rotation, position).expect("valid rotation"),
        }
    }

    /// Nearest pixel `(col, row)` of a camera-frame point, if visible.
    pub fn project(&self, p: &Vec3) -> Option<(usize, usize)> {
        if !(p.z > 1e-9) {
            return None;
        }
        let u = (self.fx * p.x / p.z + self.cx).round();
        let v = (self.fy * p.y / p.z + self.cy).round();
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((u as usize, v as usize))
    }

    /// Camera-frame direction (z = 1) through the centre of a pixel.
    pub fn pixel_ray(&self, col: usize, row: usize) -> Vec3 {
        Vec3::new(
            (col as f64 - self.cx) / self.fx,
            (row as f64 - self.cy) / self.fy,
            1.0,
        )
    }
}

/// Three cameras at yaw 0°, +120°, −120° with a 110° horizontal field of view.
pub fn default_camera_rig() -> Vec<CameraSpec> {
    [0.0f64, 120.0, -120.0]
        .iter()
        .map(|&yaw| {
            let (s, c) = yaw.to_radians().sin_cos();
            CameraSpec::looking(yaw, 110.0, 240, 180, Vec3::new(0.08 * c, 0.08 * s, -0.12))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HitClass {
    Building,
    Clutter,
    Actor,
}

impl HitClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            HitClass::Building => "building",
            HitClass::Clutter => "clutter",
            HitClass::Actor => "actor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "building" => Some(HitClass::Building),
            "clutter" => Some(HitClass::Clutter),
            "actor" => Some(HitClass::Actor),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    Static(RigidTransform),
    /// Translates back and forth between two positions, one round trip per
    /// `period_s`.
    PingPong {
        from: Vec3,
        to: Vec3,
        period_s: f64,
    },
}

impl Trajectory {
    pub fn at(&self, time: f64) -> RigidTransform {
        match self {
            Trajectory::Static(t) => *t,
            Trajectory::PingPong { from, to, period_s } => {
                let phase = (time / period_s).rem_euclid(1.0);
                let s = 1.0 - (2.0 * phase - 1.0).abs();
                RigidTransform::from_translation(from + (to - from) * s)
            }
        }
    }
}

/// Moving geometry, defined in its own frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    pub surface: Surface,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub as_built: BuildingModel,
    pub clutter: Vec<Surface>,
    pub actors: Vec<Actor>,
}

impl Scene {
    pub fn new(
        as_built: BuildingModel,
        clutter: Vec<Surface>,
        actors: Vec<Actor>,
    ) -> Result<Self, SimError> {
        let mut ids = HashSet::new();
        let all = as_built
            .surfaces()
            .iter()
            .chain(&clutter)
            .chain(actors.iter().map(|a| &a.surface));
        for s in all {
            if !ids.insert(s.id().to_string()) {
                return Err(SimError::DuplicateId(s.id().to_string()));
            }
        }
        Ok(Self {
            as_built,
            clutter,
            actors,
        })
    }

    pub fn building_only(as_built: BuildingModel) -> Self {
        Self {
            as_built,
            clutter: Vec::new(),
            actors: Vec::new(),
        }
    }

    /// World-frame triangles at `time`, ready for ray queries.
    pub fn snapshot(&self, time: f64) -> SceneSnapshot {
        let mut groups = Vec::new();
        for s in self.as_built.surfaces() {
            groups.push(SurfaceGroup::new(s, HitClass::Building));
        }
        for s in &self.clutter {
            groups.push(SurfaceGroup::new(s, HitClass::Clutter));
        }
        for a in &self.actors {
            let posed = a.surface.transformed(&a.trajectory.at(time));
            groups.push(SurfaceGroup::new(&posed, HitClass::Actor));
        }
        SceneSnapshot { groups }
    }
}

struct PreparedTriangle {
    v0: Vec3,
    e1: Vec3,
    e2: Vec3,
}

struct SurfaceGroup {
    id: String,
    class: HitClass,
    lo: Vec3,
    hi: Vec3,
    triangles: Vec<PreparedTriangle>,
}

impl SurfaceGroup {
    fn new(s: &Surface, class: HitClass) -> Self {
        let (lo, hi) = s.bounds();
        let triangles = s
            .triangles()
            .iter()
            .map(|t| PreparedTriangle {
                v0: t.vertices[0],
                e1: t.vertices[1] - t.vertices[0],
                e2: t.vertices[2] - t.vertices[0],
            })
            .collect();
        Self {
            id: s.id().to_string(),
            class,
            lo,
            hi,
            triangles,
        }
    }

    /// Slab test: does the ray meet the (slightly padded) box before `t_max`?
    fn box_hit(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> bool {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for k in 0..3 {
            let (lo, hi) = (self.lo[k] - 1e-9, self.hi[k] + 1e-9);
            if dir[k] == 0.0 {
                if origin[k] < lo || origin[k] > hi {
                    return false;
                }
                continue;
            }
            let a = (lo - origin[k]) / dir[k];
            let b = (hi - origin[k]) / dir[k];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub distance: f64,
    pub class: HitClass,
    group: usize,
}

pub struct SceneSnapshot {
    groups: Vec<SurfaceGroup>,
}

impl SceneSnapshot {
    /// Nearest intersection with distance in `(0, max_distance]`.
    /// `dir` must be a unit vector.
    pub fn cast(&self, origin: &Vec3, dir: &Vec3, max_distance: f64) -> Option<RayHit> {
        let mut best: Option<RayHit> = None;
        for (gi, g) in self.groups.iter().enumerate() {
            let limit = best.map_or(max_distance, |b| b.distance);
            if !g.box_hit(origin, dir, limit) {
                continue;
            }
            for tri in &g.triangles {
                if let Some(t) = intersect(origin, dir, tri) {
                    if t <= max_distance && best.is_none_or(|b| t < b.distance) {
                        best = Some(RayHit {
                            distance: t,
                            class: g.class,
                            group: gi,
                        });
                    }
                }
            }
        }
        best
    }

    pub fn surface_id(&self, hit: &RayHit) -> &str {
        &self.groups[hit.group].id
    }
}

/// Möller–Trumbore, two-sided.
fn intersect(origin: &Vec3, dir: &Vec3, tri: &PreparedTriangle) -> Option<f64> {
    let p = dir.cross(&tri.e2);
    let det = tri.e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri.v0;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&tri.e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = tri.e2.dot(&q) * inv;
    (t > 1e-9).then_some(t)
}

/// A LiDAR sweep in the sensor frame with exact hit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawScan {
    pub points: Vec<Vec3>,
    pub classes: Vec<HitClass>,
    /// world ← sensor at capture time
    pub pose: RigidTransform,
}

impl RawScan {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn raycast_scan(
    scene: &Scene,
    pose: &RigidTransform,
    spec: &LidarSpec,
    time: f64,
    seed: u64,
) -> RawScan {
    let snapshot = scene.snapshot(time);
    raycast_snapshot(&snapshot, pose, spec, seed)
}

fn raycast_snapshot(
    snapshot: &SceneSnapshot,
    pose: &RigidTransform,
    spec: &LidarSpec,
    seed: u64,
) -> RawScan {
    let mut rng = rng_for(seed, &[]);
    let noise = Normal::new(0.0, spec.range_noise_sigma.max(0.0)).expect("finite sigma");
    let origin = *pose.translation();
    let mut points = Vec::new();
    let mut classes = Vec::new();
    for dir in spec.directions() {
        let world_dir = pose.apply_vector(&dir);
        // one draw per beam keeps the noise stream aligned across scenes
        let n = if spec.range_noise_sigma > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        let Some(hit) = snapshot.cast(&origin, &world_dir, spec.max_range) else {
            continue;
        };
        let range = hit.distance + n;
        if range <= 0.0 || range > spec.max_range {
            continue;
        }
        points.push(dir * range);
        classes.push(hit.class);
    }
    RawScan {
        points,
        classes,
        pose: *pose,
    }
}

/// Per-pixel background score in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DensityImage {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }
}

/// Parameters of the ground-truth-driven stand-in for a density network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensityOracleParams {
    pub mu_background: f64,
    pub mu_foreground: f64,
    pub sigma: f64,
    /// Fraction of building pixels resampled from the foreground distribution.
    pub corruption: f64,
    /// Per-surface override of `corruption`.
    pub surface_corruption: BTreeMap<String, f64>,
}

impl Default for DensityOracleParams {
    fn default() -> Self {
        Self {
            mu_background: 0.8,
            mu_foreground: 0.2,
            sigma: 0.1,
            corruption: 0.05,
            surface_corruption: BTreeMap::new(),
        }
    }
}

/// Renders the density image seen by a camera at `camera_pose` (world ← camera).
pub fn render_density_image(
    scene: &Scene,
    camera_pose: &RigidTransform,
    spec: &CameraSpec,
    oracle: &DensityOracleParams,
    time: f64,
    seed: u64,
) -> DensityImage {
    render_snapshot(&scene.snapshot(time), camera_pose, spec, oracle, seed)
}

fn render_snapshot(
    snapshot: &SceneSnapshot,
    camera_pose: &RigidTransform,
    spec: &CameraSpec,
    oracle: &DensityOracleParams,
    seed: u64,
) -> DensityImage {
    let mut rng = rng_for(seed, &[]);
    let sigma = oracle.sigma.max(0.0);
    let draw = |mu: f64, rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
        let v = if sigma > 0.0 {
            {
                let z: f64 = rand_distr::StandardNormal.sample(rng);
                mu + sigma * z
            }
        } else {
            mu
        };
        v.clamp(0.0, 1.0)
    };
    let origin = *camera_pose.translation();
    let mut image = DensityImage::filled(
        spec.width,
        spec.height,
        oracle.mu_foreground.clamp(0.0, 1.0),
    );
    for row in 0..spec.height {
        for col in 0..spec.width {
            let dir = camera_pose.apply_vector(&spec.pixel_ray(col, row).normalize());
            let Some(hit) = snapshot.cast(&origin, &dir, f64::INFINITY) else {
                continue;
            };
            let value = match hit.class {
                HitClass::Building => {
                    let rho = oracle
                        .surface_corruption
                        .get(snapshot.surface_id(&hit))
                        .copied()
                        .unwrap_or(oracle.corruption);
                    let corrupt = rho > 0.0 && rng.random::<f64>() < rho;
                    draw(
                        if corrupt {
                            oracle.mu_foreground
                        } else {
                            oracle.mu_background
                        },
                        &mut rng,
                    )
                }
                HitClass::Clutter | HitClass::Actor => draw(oracle.mu_foreground, &mut rng),
            };
            image.set(col, row, value);
        }
    }
    image
}

/// Position of a prism mounted at `offset` in the robot body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrismSpec {
    pub offset: [f64; 3],
}

impl Default for PrismSpec {
    fn default() -> Self {
        Self {
            offset: [0.0, 0.0, 0.5],
        }
    }
}

pub fn prism_position(robot_pose: &RigidTransform, prism: &PrismSpec) -> Vec3 {
    robot_pose.apply(&Vec3::from(prism.offset))
}

/// Everything needed to simulate one sensor head.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorRig {
    pub lidar: LidarSpec,
    pub cameras: Vec<CameraSpec>,
    pub density: DensityOracleParams,
    /// Time between consecutive scans, seconds.
    pub scan_interval_s: f64,
}

impl Default for SensorRig {
    fn default() -> Self {
        Self {
            lidar: LidarSpec::default(),
            cameras: default_camera_rig(),
            density: DensityOracleParams::default(),
            scan_interval_s: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFrame {
    pub index: usize,
    pub time: f64,
    pub scan: RawScan,
    /// One image per rig camera, in rig order.
    pub images: Vec<DensityImage>,
    pub ground_truth: RigidTransform,
}

/// Simulates `n_scans` frames from a stationary robot while actors move.
///
/// Frame `i` draws its LiDAR noise from `derive_seed(seed, [i, 0])` and the
/// image of camera `c` from `derive_seed(seed, [i, c + 1])`.
pub fn generate_trial_sequence(
    scene: &Scene,
    robot_pose: &RigidTransform,
    n_scans: usize,
    rig: &SensorRig,
    seed: u64,
) -> Result<Vec<TrialFrame>, SimError> {
    if n_scans == 0 {
        return Err(SimError::NoScans);
    }
    rig.lidar.validate()?;
    for c in &rig.cameras {
        c.validate()?;
    }
    let mut frames = Vec::with_capacity(n_scans);
    for index in 0..n_scans {
        let frame = simulate_frame(scene, robot_pose, rig, index, seed);
        frames.push(frame);
    }
    Ok(frames)
}

/// One frame of [`generate_trial_sequence`].
pub fn simulate_frame(
    scene: &Scene,
    robot_pose: &RigidTransform,
    rig: &SensorRig,
    index: usize,
    seed: u64,
) -> TrialFrame {
    let time = index as f64 * rig.scan_interval_s;
    let snapshot = scene.snapshot(time);
    let scan = raycast_snapshot(
        &snapshot,
        robot_pose,
        &rig.lidar,
        derive_seed(seed, &[index as u64, 0]),
    );
    let images = rig
        .cameras
        .iter()
        .enumerate()
        .map(|(c, cam)| {
            let pose = robot_pose.compose(&cam.extrinsic);
            render_snapshot(
                &snapshot,
                &pose,
                cam,
                &rig.density,
                derive_seed(seed, &[index as u64, c as u64 + 1]),
            )
        })
        .collect();
    TrialFrame {
        index,
        time,
        scan,
        images,
        ground_truth: *robot_pose,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn wall_scene(x: f64) -> Scene {
        let wall = Surface::axis_aligned_box(
            "wall",
            Vec3::new(x, -20.0, -5.0),
            Vec3::new(x + 0.2, 20.0, 5.0),
        )
        .unwrap();
        Scene::building_only(BuildingModel::new(vec![wall], "plan").unwrap())
    }

    fn quiet_lidar() -> LidarSpec {
        LidarSpec {
            range_noise_sigma: 0.0,
            azimuth_step_deg: 2.0,
            ..LidarSpec::default()
        }
    }

    #[test]
    fn empty_scene_gives_empty_scan() {
        let scene = Scene::building_only(BuildingModel::new(vec![], "plan").unwrap());
        let scan = raycast_scan(
            &scene,
            &RigidTransform::identity(),
            &LidarSpec::default(),
            0.0,
            1,
        );
        assert!(scan.is_empty());
    }

    #[test]
    fn wall_ranges_match_ray_plane_oracle() {
        let scene = wall_scene(2.0);
        let spec = quiet_lidar();
        let scan = raycast_scan(&scene, &RigidTransform::identity(), &spec, 0.0, 1);
        assert!(!scan.is_empty());
        for p in &scan.points {
            let dir = p.normalize();
            // plane x = 2 along a unit ray from the origin
            let oracle = 2.0 / dir.x;
            assert!(dir.x > 0.0);
            assert!(
                (p.norm() - oracle).abs() < 1e-12,
                "{} vs {}",
                p.norm(),
                oracle
            );
        }
        // every beam with a forward component hits the 40 m wide plane within range
        let forward = spec
            .directions()
            .iter()
            .filter(|d| {
                d.x > 0.0 && (2.0 / d.x * d.y).abs() < 20.0 && (2.0 / d.x * d.z).abs() < 5.0
            })
            .count();
        assert_eq!(scan.len(), forward);
    }

    #[test]
    fn clutter_in_front_of_wall_is_labelled_and_closer() {
        let mut scene = wall_scene(3.0);
        scene.clutter.push(
            Surface::axis_aligned_box("box", Vec3::new(1.5, -0.3, -0.3), Vec3::new(1.8, 0.3, 0.3))
                .unwrap(),
        );
        let spec = quiet_lidar();
        let scan = raycast_scan(&scene, &RigidTransform::identity(), &spec, 0.0, 1);
        let mut n_clutter = 0;
        for (p, c) in scan.points.iter().zip(&scan.classes) {
            let dir = p.normalize();
            let wall = 3.0 / dir.x;
            let through_box = {
                let t = 1.5 / dir.x;
                let q = dir * t;
                q.y.abs() <= 0.3 && q.z.abs() <= 0.3
            };
            if *c == HitClass::Clutter {
                n_clutter += 1;
                assert!(p.norm() < wall);
            } else if through_box {
                panic!("ray through the box front face labelled {c:?}");
            } else {
                assert!((p.norm() - wall).abs() < 1e-9);
            }
        }
        assert!(n_clutter > 0);
    }

    #[test]
    fn raycast_points_lie_on_geometry_within_noise() {
        let mut scene = wall_scene(4.0);
        scene.clutter.push(
            Surface::axis_aligned_box("box", Vec3::new(1.5, 1.0, -1.0), Vec3::new(2.0, 2.0, 0.5))
                .unwrap(),
        );
        let spec = LidarSpec {
            range_noise_sigma: 0.01,
            azimuth_step_deg: 1.0,
            ..LidarSpec::default()
        };
        let pose = RigidTransform::from_parts(Vec3::new(0.0, 0.0, 0.3), Vec3::new(0.5, -0.2, 0.1));
        let scan = raycast_scan(&scene, &pose, &spec, 0.0, 5);
        let snap = scene.snapshot(0.0);
        for p in &scan.points {
            let dir = pose.apply_vector(&p.normalize());
            let hit = snap.cast(pose.translation(), &dir, spec.max_range).unwrap();
            assert!((p.norm() - hit.distance).abs() <= 3.0 * 0.01 * 2.0 + 1e-6);
            assert!(p.norm() <= spec.max_range);
        }
        assert!(scan.len() <= spec.ring_elevations_deg.len() * spec.azimuth_count());
    }

    #[test]
    fn max_range_drops_far_hits() {
        let scene = wall_scene(10.0);
        let spec = LidarSpec {
            max_range: 5.0,
            ..quiet_lidar()
        };
        assert!(raycast_scan(&scene, &RigidTransform::identity(), &spec, 0.0, 0).is_empty());
    }

    fn facing_camera() -> CameraSpec {
        CameraSpec::looking(0.0, 90.0, 40, 30, Vec3::zeros())
    }

    #[test]
    fn camera_projection_round_trip() {
        let cam = facing_camera();
        // optical axis: body +x is camera +z
        let p_cam = cam.extrinsic.inverse().apply(&Vec3::new(2.0, 0.0, 0.0));
        assert!((p_cam - Vec3::new(0.0, 0.0, 2.0)).norm() < 1e-12);
        for (col, row) in [(0, 0), (39, 29), (17, 4), (20, 15)] {
            for depth in [0.3, 1.0, 7.5, 40.0] {
                let p = cam.pixel_ray(col, row) * depth;
                assert_eq!(cam.project(&p), Some((col, row)));
            }
        }
        assert_eq!(cam.project(&Vec3::new(0.0, 0.0, -1.0)), None);
    }

    #[test]
    fn density_image_levels() {
        let mut scene = wall_scene(2.0);
        let cam = facing_camera();
        let params = DensityOracleParams {
            sigma: 0.0,
            corruption: 0.0,
            ..Default::default()
        };
        let img = render_density_image(&scene, &cam.extrinsic, &cam, &params, 0.0, 3);
        assert!(img.data.iter().all(|&d| d == 0.8));

        scene.clutter.push(
            Surface::axis_aligned_box("box", Vec3::new(1.0, -0.2, -0.2), Vec3::new(1.2, 0.2, 0.2))
                .unwrap(),
        );
        let img = render_density_image(&scene, &cam.extrinsic, &cam, &params, 0.0, 3);
        let n_low = img.data.iter().filter(|&&d| d == 0.2).count();
        let n_high = img.data.iter().filter(|&&d| d == 0.8).count();
        assert!(n_low > 0 && n_high > 0);
        assert_eq!(n_low + n_high, img.data.len());
        // the principal pixel looks straight at the box
        assert_eq!(img.get(20, 15), 0.2);

        let params = DensityOracleParams {
            corruption: 1.0,
            ..Default::default()
        };
        let img = render_density_image(&wall_scene(2.0), &cam.extrinsic, &cam, &params, 0.0, 3);
        let mean = img.data.iter().sum::<f64>() / img.data.len() as f64;
        assert!((mean - 0.2).abs() < 0.03, "{mean}");
    }

    #[test]
    fn background_mean_matches_oracle_statistics() {
        let scene = wall_scene(2.0);
        let cam = CameraSpec::looking(0.0, 90.0, 200, 150, Vec3::zeros());
        let params = DensityOracleParams {
            corruption: 0.0,
            sigma: 0.05,
            ..Default::default()
        };
        let img = render_density_image(&scene, &cam.extrinsic, &cam, &params, 0.0, 9);
        let n = img.data.len() as f64;
        let mean = img.data.iter().sum::<f64>() / n;
        assert!((mean - 0.8).abs() < 3.0 * 0.05 / n.sqrt(), "{mean}");
        assert!(img.data.iter().all(|d| (0.0..=1.0).contains(d)));
    }

    #[test]
    fn per_surface_corruption_only_hits_that_surface() {
        let a =
            Surface::axis_aligned_box("a", Vec3::new(2.0, -5.0, -5.0), Vec3::new(2.2, 0.0, 5.0))
                .unwrap();
        let b = Surface::axis_aligned_box("b", Vec3::new(2.0, 0.0, -5.0), Vec3::new(2.2, 5.0, 5.0))
            .unwrap();
        let scene = Scene::building_only(BuildingModel::new(vec![a, b], "plan").unwrap());
        let cam = facing_camera();
        let mut params = DensityOracleParams {
            sigma: 0.0,
            corruption: 0.0,
            ..Default::default()
        };
        params.surface_corruption.insert("a".into(), 1.0);
        let img = render_density_image(&scene, &cam.extrinsic, &cam, &params, 0.0, 3);
        // body −y (surface a) is image right
        assert_eq!(img.get(35, 15), 0.2);
        assert_eq!(img.get(4, 15), 0.8);
    }

    #[test]
    fn prism_cases() {
        let p = PrismSpec {
            offset: [0.0, 0.0, 0.5],
        };
        assert_eq!(
            prism_position(&RigidTransform::identity(), &p),
            Vec3::new(0.0, 0.0, 0.5)
        );
        let t = RigidTransform::from_translation(Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(prism_position(&t, &p), Vec3::new(1.0, 0.0, 0.5));
        let r = RigidTransform::from_yaw(PI / 2.0);
        let got = prism_position(
            &r,
            &PrismSpec {
                offset: [1.0, 0.0, 0.0],
            },
        );
        assert!((got - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    fn small_rig() -> SensorRig {
        SensorRig {
            lidar: LidarSpec {
                azimuth_step_deg: 4.0,
                ..LidarSpec::default()
            },
            cameras: vec![CameraSpec::looking(0.0, 110.0, 24, 18, Vec3::zeros())],
            ..SensorRig::default()
        }
    }

    #[test]
    fn trial_sequences() {
        let mut scene = wall_scene(3.0);
        scene.actors.push(Actor {
            surface: Surface::axis_aligned_box(
                "worker",
                Vec3::new(-0.2, -0.2, -1.0),
                Vec3::new(0.2, 0.2, 1.0),
            )
            .unwrap(),
            trajectory: Trajectory::PingPong {
                from: Vec3::new(1.5, -2.0, 0.0),
                to: Vec3::new(1.5, 2.0, 0.0),
                period_s: 4.0,
            },
        });
        let pose = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.5));
        let rig = small_rig();
        let frames = generate_trial_sequence(
            &scene,
            &pose,
            300,
            &SensorRig {
                cameras: vec![],
                ..rig.clone()
            },
            4,
        )
        .unwrap();
        assert_eq!(frames.len(), 300);
        assert!(frames.iter().all(|f| f.ground_truth == pose));
        assert_ne!(frames[0].scan.points, frames[1].scan.points);

        let a = generate_trial_sequence(&scene, &pose, 3, &rig, 11).unwrap();
        let b = generate_trial_sequence(&scene, &pose, 3, &rig, 11).unwrap();
        assert_eq!(a, b);

        let quiet = SensorRig {
            lidar: LidarSpec {
                range_noise_sigma: 0.0,
                ..rig.lidar.clone()
            },
            ..rig
        };
        let one = generate_trial_sequence(&scene, &pose, 1, &quiet, 5).unwrap();
        assert_eq!(
            one[0].scan,
            raycast_scan(&scene, &pose, &quiet.lidar, 0.0, 99)
        );
        assert!(matches!(
            generate_trial_sequence(&scene, &pose, 0, &quiet, 5),
            Err(SimError::NoScans)
        ));
    }

    #[test]
    fn actor_moves_with_time() {
        let t = Trajectory::PingPong {
            from: Vec3::zeros(),
            to: Vec3::new(2.0, 0.0, 0.0),
            period_s: 4.0,
        };
        assert!((t.at(0.0).translation() - Vec3::zeros()).norm() < 1e-12);
        assert!((t.at(2.0).translation() - Vec3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((t.at(1.0).translation() - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let scene = wall_scene(1.0);
        let dup = Surface::axis_aligned_box("wall", Vec3::zeros(), Vec3::repeat(1.0)).unwrap();
        assert!(matches!(
            Scene::new(scene.as_built, vec![dup], vec![]),
            Err(SimError::DuplicateId(_))
        ));
    }
}
