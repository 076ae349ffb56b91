//! Weighted point-to-plane ICP against a sampled model and the three-stage
//! selective localization against task reference surfaces.

mod map_index;

pub use map_index::MapIndex;

use crate::fusion::Scan;
use crate::geometry::{pose_delta, PoseDelta, RigidTransform, Vec3};
use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Robust loss `c()` applied to point-to-plane residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CostKernel {
    Squared,
    Huber { scale: f64 },
}

impl CostKernel {
    /// IRLS weight `ψ(r)/r`.
    pub fn irls_weight(&self, r: f64) -> f64 {
        match *self {
            CostKernel::Squared => 1.0,
            CostKernel::Huber { scale } => {
                let a = r.abs();
                if a <= scale {
                    1.0
                } else {
                    scale / a
                }
            }
        }
    }

    /// Loss value, scaled so that it equals `r²/2` in the quadratic zone.
    pub fn cost(&self, r: f64) -> f64 {
        match *self {
            CostKernel::Squared => 0.5 * r * r,
            CostKernel::Huber { scale } => {
                let a = r.abs();
                if a <= scale {
                    0.5 * r * r
                } else {
                    scale * (a - 0.5 * scale)
                }
            }
        }
    }

    fn is_valid(&self) -> bool {
        match *self {
            CostKernel::Squared => true,
            CostKernel::Huber { scale } => scale > 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Correspondence gate, meters.
    pub max_correspondence_distance: f64,
    /// Stop once the translation increment is below this, meters.
    pub translation_epsilon: f64,
    /// Stop once the rotation increment is below this, radians.
    pub rotation_epsilon: f64,
    pub kernel: CostKernel,
    pub min_correspondences: usize,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            max_correspondence_distance: 0.5,
            translation_epsilon: 1e-4,
            rotation_epsilon: 1e-5,
            kernel: CostKernel::Huber { scale: 0.05 },
            min_correspondences: 30,
        }
    }
}

impl IcpConfig {
    pub fn is_valid(&self) -> bool {
        self.max_iterations > 0
            && self.max_correspondence_distance > 0.0
            && self.translation_epsilon > 0.0
            && self.rotation_epsilon > 0.0
            && self.kernel.is_valid()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    pub converged: bool,
    pub iterations: usize,
    /// `sqrt(Σ w r² / Σ w)` over the final correspondences, meters.
    pub residual_rms: f64,
    /// Correspondences with positive weight at the final pose.
    pub correspondences: usize,
}

/// A scan point paired with its nearest map point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub scan_index: usize,
    pub map_index: usize,
}

/// Signed distance of `pose(p)` to the tangent plane at `m`.
pub fn point_to_plane_residual(pose: &RigidTransform, p: &Vec3, m: &Vec3, n: &Vec3) -> f64 {
    (pose.apply(p) - m).dot(n)
}

/// Derivative of the residual with respect to a left increment
/// `(ω, v)` (see [`RigidTransform::perturb_left`]), ordered `[ω, v]`.
pub fn residual_jacobian(pose: &RigidTransform, p: &Vec3, n: &Vec3) -> Vector6<f64> {
    let q = pose.apply(p);
    let rot = q.cross(n);
    Vector6::new(rot.x, rot.y, rot.z, n.x, n.y, n.z)
}

/// Nearest-map-point pairing for every scan point with positive weight,
/// in scan order.
pub fn find_correspondences(
    scan: &Scan,
    map: &MapIndex,
    pose: &RigidTransform,
    max_distance: f64,
) -> Vec<Correspondence> {
    scan.points
        .iter()
        .enumerate()
        .filter(|&(i, _)| scan.weight(i) > 0.0)
        .filter_map(|(i, p)| {
            map.nearest_within(&pose.apply(p), max_distance)
                .map(|(j, _)| Correspondence {
                    scan_index: i,
                    map_index: j,
                })
        })
        .collect()
}

/// `Σ wᵢ c(rᵢ)` over fixed correspondences.
pub fn weighted_cost(
    scan: &Scan,
    map: &MapIndex,
    correspondences: &[Correspondence],
    pose: &RigidTransform,
    kernel: &CostKernel,
) -> f64 {
    let cloud = map.cloud();
    correspondences
        .iter()
        .map(|c| {
            let r = point_to_plane_residual(
                pose,
                &scan.points[c.scan_index],
                &cloud.points[c.map_index],
                &cloud.normals[c.map_index],
            );
            scan.weight(c.scan_index) * kernel.cost(r)
        })
        .sum()
}

/// Twist increment `(ω, v)` minimizing the linearized, IRLS-weighted cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Increment {
    pub rotation: Vec3,
    pub translation: Vec3,
}

/// One iteratively reweighted Gauss–Newton step for fixed correspondences.
/// Returns `None` when the normal equations are singular.
pub fn gauss_newton_step(
    scan: &Scan,
    map: &MapIndex,
    correspondences: &[Correspondence],
    pose: &RigidTransform,
    kernel: &CostKernel,
) -> Option<Increment> {
    let cloud = map.cloud();
    let mut h = Matrix6::<f64>::zeros();
    let mut g = Vector6::<f64>::zeros();
    for c in correspondences {
        let p = &scan.points[c.scan_index];
        let m = &cloud.points[c.map_index];
        let n = &cloud.normals[c.map_index];
        let r = point_to_plane_residual(pose, p, m, n);
        let w = scan.weight(c.scan_index) * kernel.irls_weight(r);
        if w <= 0.0 {
            continue;
        }
        let j = residual_jacobian(pose, p, n);
        h.syger(w, &j, &j, 1.0);
        g.axpy(w * r, &j, 1.0);
    }
    let chol = h.cholesky()?;
    let delta = -chol.solve(&g);
    if !delta.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(Increment {
        rotation: Vec3::new(delta[0], delta[1], delta[2]),
        translation: Vec3::new(delta[3], delta[4], delta[5]),
    })
}

fn residual_stats(
    scan: &Scan,
    map: &MapIndex,
    corr: &[Correspondence],
    pose: &RigidTransform,
) -> (f64, usize) {
    let cloud = map.cloud();
    let (mut num, mut den, mut n) = (0.0, 0.0, 0usize);
    for c in corr {
        let w = scan.weight(c.scan_index);
        if w <= 0.0 {
            continue;
        }
        let r = point_to_plane_residual(
            pose,
            &scan.points[c.scan_index],
            &cloud.points[c.map_index],
            &cloud.normals[c.map_index],
        );
        num += w * r * r;
        den += w;
        n += 1;
    }
    let rms = if den > 0.0 { (num / den).sqrt() } else { 0.0 };
    (rms, n)
}

/// Aligns `scan` (sensor frame) to the map starting from `init`
/// (map ← sensor). Never fails loudly: starvation, singular normal
/// equations and non-convergence all give `converged = false`.
pub fn point_to_plane_icp(
    scan: &Scan,
    map: &MapIndex,
    init: &RigidTransform,
    cfg: &IcpConfig,
) -> IcpResult {
    let mut pose = *init;
    let mut stopped_by_threshold = false;
    let mut iterations = 0;
    let mut failed = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let corr = find_correspondences(scan, map, &pose, cfg.max_correspondence_distance);
        if corr.len() < cfg.min_correspondences.max(6) {
            failed = true;
            break;
        }
        let Some(step) = gauss_newton_step(scan, map, &corr, &pose, &cfg.kernel) else {
            failed = true;
            break;
        };
        pose = pose.perturb_left(&step.rotation, &step.translation);
        if step.translation.norm() < cfg.translation_epsilon
            && step.rotation.norm() < cfg.rotation_epsilon
        {
            stopped_by_threshold = true;
            break;
        }
    }
    let corr = find_correspondences(scan, map, &pose, cfg.max_correspondence_distance);
    let (residual_rms, correspondences) = residual_stats(scan, map, &corr, &pose);
    IcpResult {
        transform: pose,
        converged: !failed && stopped_by_threshold && correspondences >= cfg.min_correspondences,
        iterations,
        residual_rms,
        correspondences,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectiveConfig {
    /// Reject when the refined pose moves further than this from the full
    /// alignment, meters.
    pub tau_translation: f64,
    /// Same for rotation, radians.
    pub tau_rotation: f64,
    /// Each reference surface needs this many scan points assigned to it by
    /// the full-model correspondences at the full-model pose.
    pub min_matches_per_reference: usize,
    pub full: IcpConfig,
    pub selective: IcpConfig,
}

impl Default for SelectiveConfig {
    fn default() -> Self {
        Self {
            tau_translation: 0.15,
            tau_rotation: 0.05,
            min_matches_per_reference: 50,
            full: IcpConfig::default(),
            selective: IcpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    FullIcpDiverged,
    SelectiveIcpDiverged,
    TooFewReferenceMatches,
    RejectedInconsistent,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FailureReason::FullIcpDiverged => "full_icp_diverged",
            FailureReason::SelectiveIcpDiverged => "selective_icp_diverged",
            FailureReason::TooFewReferenceMatches => "too_few_reference_matches",
            FailureReason::RejectedInconsistent => "rejected_inconsistent",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Localized(RigidTransform),
    Failed(FailureReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult {
    pub outcome: Outcome,
    pub full_stage: Option<IcpResult>,
    pub selective_stage: Option<IcpResult>,
    /// Distance between the selective and full alignments, when both ran.
    pub consistency: Option<PoseDelta>,
}

impl LocalizationResult {
    pub fn transform(&self) -> Option<RigidTransform> {
        match self.outcome {
            Outcome::Localized(t) => Some(t),
            Outcome::Failed(_) => None,
        }
    }

    pub fn failure(&self) -> Option<FailureReason> {
        match self.outcome {
            Outcome::Localized(_) => None,
            Outcome::Failed(r) => Some(r),
        }
    }

    pub fn is_localized(&self) -> bool {
        matches!(self.outcome, Outcome::Localized(_))
    }

    /// The last ICP stage that ran.
    pub fn last_stage(&self) -> Option<&IcpResult> {
        self.selective_stage.as_ref().or(self.full_stage.as_ref())
    }
}

/// Matches per map surface (indexed like `map.cloud().surface_names`).
pub fn matches_per_surface(
    scan: &Scan,
    map: &MapIndex,
    pose: &RigidTransform,
    max_distance: f64,
) -> Vec<usize> {
    let cloud = map.cloud();
    let mut counts = vec![0usize; cloud.surface_names.len()];
    for c in find_correspondences(scan, map, pose, max_distance) {
        counts[cloud.surface_index[c.map_index] as usize] += 1;
    }
    counts
}

/// Full-model ICP from `prev`, a reference-only refinement from that result,
/// and a consistency check between the two.
pub fn selective_localize(
    scan: &Scan,
    full_map: &MapIndex,
    ref_map: &MapIndex,
    prev: &RigidTransform,
    cfg: &SelectiveConfig,
) -> LocalizationResult {
    let full = point_to_plane_icp(scan, full_map, prev, &cfg.full);
    let mut result = LocalizationResult {
        outcome: Outcome::Failed(FailureReason::FullIcpDiverged),
        full_stage: Some(full),
        selective_stage: None,
        consistency: None,
    };
    if !full.converged {
        return result;
    }

    // A point observes a reference only if the full model assigns it there;
    // against the reference map alone, neighbouring surfaces would count too.
    let cloud = ref_map.cloud();
    let mut present = vec![false; cloud.surface_names.len()];
    for &s in &cloud.surface_index {
        present[s as usize] = true;
    }
    let full_names = &full_map.cloud().surface_names;
    let counts = matches_per_surface(
        scan,
        full_map,
        &full.transform,
        cfg.full.max_correspondence_distance,
    );
    let starved = cloud
        .surface_names
        .iter()
        .zip(&present)
        .filter(|(_, &p)| p)
        .any(|(name, _)| {
            let n = full_names
                .iter()
                .position(|f| f == name)
                .map_or(0, |k| counts[k]);
            n < cfg.min_matches_per_reference
        });
    if ref_map.is_empty() || starved {
        result.outcome = Outcome::Failed(FailureReason::TooFewReferenceMatches);
        return result;
    }

    let selective = point_to_plane_icp(scan, ref_map, &full.transform, &cfg.selective);
    result.selective_stage = Some(selective);
    if !selective.converged {
        result.outcome = Outcome::Failed(FailureReason::SelectiveIcpDiverged);
        return result;
    }
    let delta = pose_delta(&selective.transform, &full.transform);
    result.consistency = Some(delta);
    result.outcome = if is_inconsistent(&delta, cfg) {
        Outcome::Failed(FailureReason::RejectedInconsistent)
    } else {
        Outcome::Localized(selective.transform)
    };
    result
}

/// True when either the translation or the rotation gap exceeds its threshold.
pub fn is_inconsistent(delta: &PoseDelta, cfg: &SelectiveConfig) -> bool {
    delta.translation_norm > cfg.tau_translation || delta.rotation_angle > cfg.tau_rotation
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcpMethod {
    Full,
    Selective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    /// Every LiDAR point at weight 1.
    Full,
    /// Binary density threshold, low-density points dropped.
    Filtered,
    /// Normalized linear density weights, all points kept.
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Method {
    pub icp: IcpMethod,
    pub scan: ScanMode,
}

impl Method {
    /// The six combinations in report order.
    pub fn matrix() -> [Method; 6] {
        let mut out = [Method {
            icp: IcpMethod::Full,
            scan: ScanMode::Full,
        }; 6];
        let mut k = 0;
        for icp in [IcpMethod::Full, IcpMethod::Selective] {
            for scan in [ScanMode::Full, ScanMode::Filtered, ScanMode::Weighted] {
                out[k] = Method { icp, scan };
                k += 1;
            }
        }
        out
    }
}

impl IcpMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            IcpMethod::Full => "full",
            IcpMethod::Selective => "selective",
        }
    }
}

impl ScanMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScanMode::Full => "full",
            ScanMode::Filtered => "filtered",
            ScanMode::Weighted => "weighted",
        }
    }
}

/// Full-model and reference-only point maps.
pub struct LocalizationMaps {
    pub full: MapIndex,
    pub reference: MapIndex,
}

/// Runs one method on a scan that was already filtered or weighted for its
/// scan mode.
pub fn localize(
    scan: &Scan,
    maps: &LocalizationMaps,
    prev: &RigidTransform,
    icp: IcpMethod,
    cfg: &SelectiveConfig,
) -> LocalizationResult {
    match icp {
        IcpMethod::Full => {
            let full = point_to_plane_icp(scan, &maps.full, prev, &cfg.full);
            LocalizationResult {
                outcome: if full.converged {
                    Outcome::Localized(full.transform)
                } else {
                    Outcome::Failed(FailureReason::FullIcpDiverged)
                },
                full_stage: Some(full),
                selective_stage: None,
                consistency: None,
            }
        }
        IcpMethod::Selective => selective_localize(scan, &maps.full, &maps.reference, prev, cfg),
    }
}

/// JSON form of one localization attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRecord {
    pub method: Method,
    pub outcome: String,
    pub transform: Option<TransformRecord>,
    pub iterations: usize,
    pub residual_m: f64,
    pub matches: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<FailureReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub r: [f64; 9],
    pub t: [f64; 3],
}

impl LocalizationRecord {
    pub fn new(method: Method, result: &LocalizationResult) -> Self {
        let stage = result.last_stage();
        let transform = result
            .transform()
            .or_else(|| stage.map(|s| s.transform))
            .map(|t| {
                let (r, t) = t.to_arrays();
                TransformRecord { r, t }
            });
        let iterations = result.full_stage.map_or(0, |s| s.iterations)
            + result.selective_stage.map_or(0, |s| s.iterations);
        Self {
            method,
            outcome: if result.is_localized() {
                "localized"
            } else {
                "failed"
            }
            .to_string(),
            transform,
            iterations,
            residual_m: stage.map_or(0.0, |s| s.residual_rms),
            matches: stage.map_or(0, |s| s.correspondences),
            failure_reason: result.failure(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{extrude_floorplan, sample_model, Floorplan2D, MapCloud, WallSegment};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn room_map(density: f64) -> MapIndex {
        let plan = Floorplan2D {
            walls: vec![
                WallSegment {
                    id: Some("s".into()),
                    start: [0.0, 0.0],
                    end: [6.0, 0.0],
                    thickness: 0.2,
                },
                WallSegment {
                    id: Some("w".into()),
                    start: [0.0, 0.0],
                    end: [0.0, 4.0],
                    thickness: 0.2,
                },
                WallSegment {
                    id: Some("n".into()),
                    start: [0.0, 4.0],
                    end: [6.0, 4.0],
                    thickness: 0.2,
                },
                WallSegment {
                    id: Some("e".into()),
                    start: [6.0, 0.0],
                    end: [6.0, 4.0],
                    thickness: 0.2,
                },
            ],
            wall_height: 2.5,
            floor: vec![[0.0, 0.0], [6.0, 0.0], [6.0, 4.0], [0.0, 4.0]],
        };
        let model = extrude_floorplan(&plan).unwrap();
        MapIndex::new(sample_model(&model, density, 1).unwrap())
    }

    /// Map points (world frame) expressed in a sensor frame at `gt`.
    fn scan_from_map(cloud: &MapCloud, gt: &RigidTransform, stride: usize) -> Scan {
        let inv = gt.inverse();
        let pts = cloud
            .points
            .iter()
            .step_by(stride)
            .filter(|p| {
                p.z == 0.0 || (p.z < 2.3 && p.x > 0.09 && p.x < 5.91 && p.y > 0.09 && p.y < 3.91)
            })
            .map(|p| inv.apply(p))
            .collect();
        Scan::from_points(pts)
    }

    fn gt() -> RigidTransform {
        RigidTransform::from_yaw(0.3).with_translation(Vec3::new(2.5, 1.8, 0.6))
    }

    #[test]
    fn fixed_point_at_ground_truth() {
        let map = room_map(200.0);
        let scan = scan_from_map(map.cloud(), &gt(), 7);
        let res = point_to_plane_icp(&scan, &map, &gt(), &IcpConfig::default());
        assert!(res.converged);
        assert!(res.iterations <= 2);
        let d = pose_delta(&res.transform, &gt());
        assert!(d.translation_norm < 1e-6 && d.rotation_angle < 1e-7);
        assert!(res.residual_rms < 1e-9);
    }

    #[test]
    fn recovers_perturbed_pose() {
        let map = room_map(200.0);
        let scan = scan_from_map(map.cloud(), &gt(), 5);
        let init = gt().perturb_left(
            &Vec3::new(0.0, 0.0, 2f64.to_radians()),
            &Vec3::new(0.05, 0.0, 0.0),
        );
        let res = point_to_plane_icp(&scan, &map, &init, &IcpConfig::default());
        assert!(res.converged);
        let d = pose_delta(&res.transform, &gt());
        assert!(d.translation_norm < 1e-3, "{d:?}");
        assert!(d.rotation_angle < 0.05f64.to_radians(), "{d:?}");
    }

    #[test]
    fn zero_weights_starve() {
        let map = room_map(50.0);
        let scan = scan_from_map(map.cloud(), &gt(), 3);
        let n = scan.len();
        let scan = scan.with_weights(vec![0.0; n]);
        let res = point_to_plane_icp(&scan, &map, &gt(), &IcpConfig::default());
        assert!(!res.converged);
        assert_eq!(res.correspondences, 0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let h = 1e-6;
        for _ in 0..100 {
            let mut v = || {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            };
            let pose = RigidTransform::from_parts(v() * 2.0, v() * 5.0);
            let (p, m, n) = (v() * 4.0, v() * 4.0, v().normalize());
            let analytic = residual_jacobian(&pose, &p, &n);
            let mut numeric = Vector6::zeros();
            for k in 0..6 {
                let mut e = Vector6::zeros();
                e[k] = h;
                let f = |s: f64| {
                    let d = e * s;
                    let t = pose
                        .perturb_left(&Vec3::new(d[0], d[1], d[2]), &Vec3::new(d[3], d[4], d[5]));
                    point_to_plane_residual(&t, &p, &m, &n)
                };
                numeric[k] = (f(1.0) - f(-1.0)) / (2.0 * h);
            }
            let rel = (analytic - numeric).norm() / numeric.norm().max(1e-12);
            assert!(rel < 1e-5, "relative error {rel}");
        }
    }

    #[test]
    fn gauss_newton_step_does_not_increase_squared_cost() {
        let map = room_map(100.0);
        let scan = scan_from_map(map.cloud(), &gt(), 9);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let w = Vec3::new(
                rng.random_range(-0.02..0.02),
                rng.random_range(-0.02..0.02),
                rng.random_range(-0.05..0.05),
            );
            let t = Vec3::new(
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.05..0.05),
            );
            let pose = gt().perturb_left(&w, &t);
            let corr = find_correspondences(&scan, &map, &pose, 0.5);
            let before = weighted_cost(&scan, &map, &corr, &pose, &CostKernel::Squared);
            let step = gauss_newton_step(&scan, &map, &corr, &pose, &CostKernel::Squared).unwrap();
            let after_pose = pose.perturb_left(&step.rotation, &step.translation);
            let after = weighted_cost(&scan, &map, &corr, &after_pose, &CostKernel::Squared);
            assert!(after <= before + 1e-12, "{before} -> {after}");
        }
    }

    #[test]
    fn huber_kernel_values() {
        let k = CostKernel::Huber { scale: 0.05 };
        assert_eq!(k.irls_weight(0.01), 1.0);
        assert!((k.irls_weight(-0.1) - 0.5).abs() < 1e-15);
        assert!((k.cost(0.05) - 0.5 * 0.05 * 0.05).abs() < 1e-15);
        assert!((k.cost(0.15) - 0.05 * (0.15 - 0.025)).abs() < 1e-15);
        assert_eq!(CostKernel::Squared.irls_weight(10.0), 1.0);
    }

    #[test]
    fn rejection_of_inconsistent_refinement() {
        // a reference map lifted 0.3 m pulls the refinement away from the full alignment
        let map = room_map(100.0);
        let shifted: Vec<Vec3> = map
            .cloud()
            .points
            .iter()
            .map(|p| p + Vec3::new(0.0, 0.0, 0.3))
            .collect();
        let reference = MapIndex::new(MapCloud {
            points: shifted,
            ..map.cloud().clone()
        });
        let scan = scan_from_map(map.cloud(), &gt(), 11);
        let cfg = SelectiveConfig {
            min_matches_per_reference: 0,
            selective: IcpConfig {
                max_correspondence_distance: 0.8,
                ..IcpConfig::default()
            },
            ..SelectiveConfig::default()
        };
        let res = selective_localize(&scan, &map, &reference, &gt(), &cfg);
        assert_eq!(
            res.outcome,
            Outcome::Failed(FailureReason::RejectedInconsistent),
            "{res:?}"
        );
        assert!(res.consistency.unwrap().translation_norm > cfg.tau_translation);

        let same = selective_localize(&scan, &map, &map, &gt(), &cfg);
        assert!(same.is_localized());
        assert!(same.consistency.unwrap().translation_norm < 1e-6);
    }

    proptest::proptest! {
        #[test]
        fn manufactured_gaps_are_rejected(
            w in proptest::array::uniform3(-1.0..1.0f64),
            t in proptest::array::uniform3(-1.0..1.0f64),
        ) {
            let cfg = SelectiveConfig::default();
            let a = RigidTransform::from_parts(Vec3::new(0.1, -0.2, 0.3), Vec3::new(1.0, 2.0, 0.5));
            let b = a.perturb_left(&Vec3::from(w), &Vec3::from(t));
            let d = pose_delta(&b, &a);
            let expected = d.translation_norm > 0.15 || d.rotation_angle > 0.05;
            proptest::prop_assert_eq!(is_inconsistent(&d, &cfg), expected);
        }
    }

    #[test]
    fn method_matrix_order() {
        let m = Method::matrix();
        assert_eq!(m.len(), 6);
        assert_eq!(
            m[0],
            Method {
                icp: IcpMethod::Full,
                scan: ScanMode::Full
            }
        );
        assert_eq!(
            m[4],
            Method {
                icp: IcpMethod::Selective,
                scan: ScanMode::Filtered
            }
        );
    }

    #[test]
    fn record_json_shape() {
        let map = room_map(50.0);
        let scan = scan_from_map(map.cloud(), &gt(), 3);
        let maps = LocalizationMaps {
            reference: MapIndex::new(map.cloud().restrict_to(&[
                "floor".into(),
                "s".into(),
                "w".into(),
            ])),
            full: map,
        };
        let res = localize(
            &scan,
            &maps,
            &gt(),
            IcpMethod::Selective,
            &SelectiveConfig::default(),
        );
        assert!(res.is_localized());
        let rec = LocalizationRecord::new(
            Method {
                icp: IcpMethod::Selective,
                scan: ScanMode::Filtered,
            },
            &res,
        );
        let v = serde_json::to_value(&rec).unwrap();
        assert_eq!(v["method"]["icp"], "selective");
        assert_eq!(v["method"]["scan"], "filtered");
        assert_eq!(v["outcome"], "localized");
        assert_eq!(v["transform"]["r"].as_array().unwrap().len(), 9);
        assert!(v.get("failure_reason").is_none());
    }
}
