//! Projection of LiDAR points into density images and per-point weights.

use crate::geometry::{RigidTransform, Vec3};
use crate::sensor_sim::{CameraSpec, DensityImage, RawScan};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("scan carries no density values")]
    MissingDensities,
    #[error("maximum density is {0}, weights cannot be normalized")]
    DegenerateDensities(f64),
}

/// Scan points (sensor frame) with optional density and weight per point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scan {
    pub points: Vec<Vec3>,
    pub densities: Option<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
}

impl Scan {
    pub fn from_points(points: Vec<Vec3>) -> Self {
        Self {
            points,
            densities: None,
            weights: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Weight of point `i`; 1 when the scan is unweighted.
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), self.points.len());
        self.weights = Some(weights);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineRule {
    /// Highest score among the cameras that see the point.
    #[default]
    Max,
    /// Score from the first camera (in list order) that sees the point.
    FirstHit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub rule: CombineRule,
    /// Skip cameras whose view of the point is blocked by a closer point.
    pub occlusion_check: bool,
    /// Depth margin for the occlusion test, meters.
    pub occlusion_tolerance: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            rule: CombineRule::Max,
            occlusion_check: false,
            occlusion_tolerance: 0.1,
        }
    }
}

/// A density image together with the camera that produced it.
#[derive(Debug, Clone, Copy)]
pub struct CameraView<'a> {
    pub image: &'a DensityImage,
    pub spec: &'a CameraSpec,
    /// sensor ← camera
    pub pose: RigidTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutput {
    pub scan: Scan,
    /// Indices into the raw scan of the points that were kept.
    pub kept: Vec<usize>,
    pub removed: usize,
}

/// Assigns each point the density of the pixel it projects to. Points seen
/// by no camera are dropped.
pub fn fuse_densities(raw: &RawScan, views: &[CameraView<'_>], cfg: &FusionConfig) -> FusionOutput {
    let to_camera: Vec<RigidTransform> = views.iter().map(|v| v.pose.inverse()).collect();

    let depth_buffers: Option<Vec<Vec<f64>>> = cfg.occlusion_check.then(|| {
        views
            .iter()
            .zip(&to_camera)
            .map(|(view, t)| {
                let mut buf = vec![f64::INFINITY; view.spec.width * view.spec.height];
                for p in &raw.points {
                    let q = t.apply(p);
                    if let Some((c, r)) = view.spec.project(&q) {
                        let cell = &mut buf[r * view.spec.width + c];
                        *cell = cell.min(q.z);
                    }
                }
                buf
            })
            .collect()
    });

    let mut points = Vec::with_capacity(raw.points.len());
    let mut densities = Vec::with_capacity(raw.points.len());
    let mut kept = Vec::with_capacity(raw.points.len());
    for (i, p) in raw.points.iter().enumerate() {
        let mut value: Option<f64> = None;
        for (k, (view, t)) in views.iter().zip(&to_camera).enumerate() {
            let q = t.apply(p);
            let Some((c, r)) = view.spec.project(&q) else {
                continue;
            };
            if let Some(bufs) = &depth_buffers {
                if q.z > bufs[k][r * view.spec.width + c] + cfg.occlusion_tolerance {
                    continue;
                }
            }
            let d = view.image.get(c, r);
            match cfg.rule {
                CombineRule::Max => value = Some(value.map_or(d, |v| v.max(d))),
                CombineRule::FirstHit => {
                    value = Some(d);
                    break;
                }
            }
        }
        if let Some(d) = value {
            points.push(*p);
            densities.push(d);
            kept.push(i);
        }
    }
    let removed = raw.points.len() - points.len();
    FusionOutput {
        scan: Scan {
            points,
            densities: Some(densities),
            weights: None,
        },
        kept,
        removed,
    }
}

/// Hard segmentation: keeps points with `d ≥ delta` at weight 1 and drops
/// the rest.
pub fn weights_binary(scan: &Scan, delta: f64) -> Result<Scan, FusionError> {
    let d = scan
        .densities
        .as_ref()
        .ok_or(FusionError::MissingDensities)?;
    let mut points = Vec::new();
    let mut densities = Vec::new();
    for (p, &di) in scan.points.iter().zip(d) {
        if di >= delta {
            points.push(*p);
            densities.push(di);
        }
    }
    let n = points.len();
    Ok(Scan {
        points,
        densities: Some(densities),
        weights: Some(vec![1.0; n]),
    })
}

/// Soft weights `w = max(0, a·d − delta′)` with `a = (1 + delta′) / max d`,
/// so the largest weight is exactly 1. All points are kept.
pub fn weights_linear(scan: &Scan, delta_prime: f64) -> Result<Scan, FusionError> {
    let d = scan
        .densities
        .as_ref()
        .ok_or(FusionError::MissingDensities)?;
    let d_max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(d_max > 0.0) {
        return Err(FusionError::DegenerateDensities(d_max));
    }
    let a = (1.0 + delta_prime) / d_max;
    let weights = d
        .iter()
        .map(|&di| {
            if di == d_max {
                1.0
            } else {
                (a * di - delta_prime).clamp(0.0, 1.0)
            }
        })
        .collect();
    Ok(Scan {
        points: scan.points.clone(),
        densities: Some(d.clone()),
        weights: Some(weights),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor_sim::{HitClass, RawScan};
    use proptest::prelude::*;

    fn scan_with(d: &[f64]) -> Scan {
        Scan {
            points: (0..d.len())
                .map(|i| Vec3::new(i as f64, 0.0, 0.0))
                .collect(),
            densities: Some(d.to_vec()),
            weights: None,
        }
    }

    #[test]
    fn binary_weights() {
        let out = weights_binary(&scan_with(&[0.3, 0.5, 0.9]), 0.5).unwrap();
        assert_eq!(out.weights, Some(vec![1.0, 1.0]));
        assert_eq!(
            out.points,
            vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)]
        );

        let out = weights_binary(&scan_with(&[0.0, 0.5, 1.0]), 0.0).unwrap();
        assert_eq!(out.weights, Some(vec![1.0; 3]));

        let out = weights_binary(&scan_with(&[0.0, 0.5, 1.0]), 1.01).unwrap();
        assert!(out.is_empty());

        assert_eq!(
            weights_binary(&Scan::from_points(vec![]), 0.5),
            Err(FusionError::MissingDensities)
        );
    }

    #[test]
    fn linear_weights() {
        let out = weights_linear(&scan_with(&[0.2, 0.8]), 0.1).unwrap();
        let w = out.weights.unwrap();
        // a = 1.1 / 0.8 = 1.375; 1.375·0.2 − 0.1 = 0.175
        assert!((w[0] - 0.175).abs() < 1e-12);
        assert_eq!(w[1], 1.0);

        let w = weights_linear(&scan_with(&[0.5, 1.0]), 0.0)
            .unwrap()
            .weights
            .unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12 && w[1] == 1.0);

        let w = weights_linear(&scan_with(&[0.6; 4]), 0.1)
            .unwrap()
            .weights
            .unwrap();
        assert!(w.iter().all(|&x| x == 1.0));

        assert_eq!(
            weights_linear(&scan_with(&[0.0, 0.0]), 0.1),
            Err(FusionError::DegenerateDensities(0.0))
        );
        assert_eq!(
            weights_linear(&Scan::from_points(vec![]), 0.1),
            Err(FusionError::MissingDensities)
        );
    }

    proptest! {
        #[test]
        fn binary_keeps_exactly_dense_points(d in prop::collection::vec(0.0..1.0f64, 0..50), delta in 0.0..1.0f64) {
            let out = weights_binary(&scan_with(&d), delta).unwrap();
            let expected: Vec<f64> = d.iter().copied().filter(|&x| x >= delta).collect();
            prop_assert_eq!(out.densities.unwrap(), expected);
            prop_assert!(out.weights.unwrap().iter().all(|&w| w == 1.0));
        }

        #[test]
        fn linear_is_normalized_and_monotone(d in prop::collection::vec(0.0..1.0f64, 1..50), dp in 0.0..1.0f64) {
            let d_max = d.iter().copied().fold(0.0, f64::max);
            prop_assume!(d_max > 0.0);
            let w = weights_linear(&scan_with(&d), dp).unwrap().weights.unwrap();
            prop_assert_eq!(w.iter().copied().fold(0.0, f64::max), 1.0);
            let mut pairs: Vec<(f64, f64)> = d.iter().copied().zip(w.iter().copied()).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            for win in pairs.windows(2) {
                prop_assert!(win[1].1 >= win[0].1);
            }
            let cutoff = dp * d_max / (1.0 + dp);
            for (di, wi) in d.iter().zip(&w) {
                if (di - cutoff).abs() > 1e-12 {
                    prop_assert_eq!(*wi == 0.0, *di <= cutoff);
                }
            }
        }
    }

    fn camera() -> CameraSpec {
        CameraSpec::looking(0.0, 90.0, 40, 30, Vec3::zeros())
    }

    fn raw(points: Vec<Vec3>) -> RawScan {
        let n = points.len();
        RawScan {
            points,
            classes: vec![HitClass::Building; n],
            pose: RigidTransform::identity(),
        }
    }

    #[test]
    fn principal_point_and_behind_camera() {
        let cam = camera();
        let mut img = DensityImage::filled(40, 30, 0.5);
        let (pc, pr) = (cam.cx.round() as usize, cam.cy.round() as usize);
        img.set(pc, pr, 0.77);
        let views = [CameraView {
            image: &img,
            spec: &cam,
            pose: cam.extrinsic,
        }];
        let out = fuse_densities(
            &raw(vec![Vec3::new(2.0, 0.0, 0.0), Vec3::new(-2.0, 0.0, 0.0)]),
            &views,
            &FusionConfig::default(),
        );
        assert_eq!(out.scan.densities, Some(vec![0.77]));
        assert_eq!(out.kept, vec![0]);
        assert_eq!(out.removed, 1);
    }

    #[test]
    fn combination_rules() {
        let cam = camera();
        let a = DensityImage::filled(40, 30, 0.3);
        let b = DensityImage::filled(40, 30, 0.9);
        let views = [
            CameraView {
                image: &a,
                spec: &cam,
                pose: cam.extrinsic,
            },
            CameraView {
                image: &b,
                spec: &cam,
                pose: cam.extrinsic,
            },
        ];
        let scan = raw(vec![Vec3::new(3.0, 0.2, 0.1)]);
        let max = fuse_densities(&scan, &views, &FusionConfig::default());
        assert_eq!(max.scan.densities, Some(vec![0.9]));
        let first = fuse_densities(
            &scan,
            &views,
            &FusionConfig {
                rule: CombineRule::FirstHit,
                ..Default::default()
            },
        );
        assert_eq!(first.scan.densities, Some(vec![0.3]));
    }

    #[test]
    fn occlusion_check_skips_hidden_points() {
        let cam = camera();
        let img = DensityImage::filled(40, 30, 0.6);
        let views = [CameraView {
            image: &img,
            spec: &cam,
            pose: cam.extrinsic,
        }];
        // same pixel, 2 m and 5 m deep
        let scan = raw(vec![Vec3::new(2.0, 0.0, 0.0), Vec3::new(5.0, 0.0, 0.0)]);
        let plain = fuse_densities(&scan, &views, &FusionConfig::default());
        assert_eq!(plain.kept, vec![0, 1]);
        let checked = fuse_densities(
            &scan,
            &views,
            &FusionConfig {
                occlusion_check: true,
                ..Default::default()
            },
        );
        assert_eq!(checked.kept, vec![0]);
    }

    proptest! {
        #[test]
        fn removal_accounting(points in prop::collection::vec(prop::array::uniform3(-10.0..10.0f64), 0..200)) {
            let cam = camera();
            let img = DensityImage::filled(40, 30, 0.6);
            let views = [CameraView { image: &img, spec: &cam, pose: cam.extrinsic }];
            let scan = raw(points.into_iter().map(Vec3::from).collect());
            let out = fuse_densities(&scan, &views, &FusionConfig::default());
            prop_assert_eq!(out.removed + out.scan.len(), scan.len());
            prop_assert_eq!(out.kept.len(), out.scan.len());
        }

        #[test]
        fn back_projected_pixels_round_trip(col in 0usize..40, row in 0usize..30, depth in 0.1..50.0f64) {
            let cam = camera();
            let mut img = DensityImage::filled(40, 30, 0.0);
            img.set(col, row, 1.0);
            let p_sensor = cam.extrinsic.apply(&(cam.pixel_ray(col, row) * depth));
            let views = [CameraView { image: &img, spec: &cam, pose: cam.extrinsic }];
            let out = fuse_densities(&raw(vec![p_sensor]), &views, &FusionConfig::default());
            prop_assert_eq!(out.scan.densities, Some(vec![1.0]));
        }
    }
}
