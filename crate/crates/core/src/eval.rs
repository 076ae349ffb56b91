//! Repeatability, accuracy and failure statistics over trial sequences.
//!
//! Positions are reported in mm (covariances in mm²), rotations in mrad
//! (covariances in mrad²). Failed trials only count toward the failure rate.

use crate::geometry::{log_so3, orthonormalize, RigidTransform, Vec3};
use crate::registration::{LocalizationResult, Method};
use crate::sensor_sim::{prism_position, PrismSpec};
use nalgebra::{Matrix3, SymmetricEigen};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("need at least {needed} localized records, have {have}")]
    InsufficientSamples { needed: usize, have: usize },
    #[error("reports cover different trial counts")]
    MismatchedTrials,
    #[error("no reports to average")]
    NoReports,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub scan_index: usize,
    pub result: LocalizationResult,
    pub ground_truth_pose: RigidTransform,
    /// Ground-truth prism position in the locally referenced frame.
    pub ground_truth_prism: Vec3,
    /// Present iff the trial was localized.
    pub estimated_prism: Option<Vec3>,
}

impl TrialRecord {
    pub fn new(
        scan_index: usize,
        result: LocalizationResult,
        ground_truth_pose: RigidTransform,
        ground_truth_prism: Vec3,
        prism: &PrismSpec,
    ) -> Self {
        let estimated_prism = result.transform().map(|t| prism_position(&t, prism));
        Self {
            scan_index,
            result,
            ground_truth_pose,
            ground_truth_prism,
            estimated_prism,
        }
    }

    fn estimate(&self) -> Option<(RigidTransform, Vec3)> {
        Some((self.result.transform()?, self.estimated_prism?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Repeatability {
    pub max_eigenvalue: f64,
    pub trace: f64,
}

impl Repeatability {
    fn from_covariance(cov: &Matrix3<f64>) -> Self {
        let eig = SymmetricEigen::new(*cov);
        Self {
            max_eigenvalue: eig.eigenvalues.max().max(0.0),
            trace: cov.trace(),
        }
    }
}

/// Unbiased (n − 1) sample covariance, two-pass.
pub fn sample_covariance(samples: &[Vec3]) -> Option<Matrix3<f64>> {
    if samples.len() < 2 {
        return None;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for s in samples {
        let d = s - mean;
        cov += d * d.transpose();
    }
    Some(cov / (n - 1.0))
}

fn localized(records: &[TrialRecord]) -> Vec<(RigidTransform, Vec3, Vec3)> {
    records
        .iter()
        .filter_map(|r| r.estimate().map(|(t, p)| (t, p, r.ground_truth_prism)))
        .collect()
}

/// Spread of the estimated prism positions, mm².
pub fn position_repeatability(records: &[TrialRecord]) -> Result<Repeatability, EvalError> {
    let mm: Vec<Vec3> = localized(records)
        .iter()
        .map(|(_, p, _)| p * 1000.0)
        .collect();
    let cov = sample_covariance(&mm).ok_or(EvalError::InsufficientSamples {
        needed: 2,
        have: mm.len(),
    })?;
    Ok(Repeatability::from_covariance(&cov))
}

/// Projection of `Σ Rᵢ` onto SO(3).
pub fn chordal_mean(rotations: &[Matrix3<f64>]) -> Matrix3<f64> {
    let sum: Matrix3<f64> = rotations.iter().sum();
    orthonormalize(&sum)
}

/// Spread of the estimated orientations about their chordal mean, mrad².
pub fn rotation_repeatability(records: &[TrialRecord]) -> Result<Repeatability, EvalError> {
    let rotations: Vec<Matrix3<f64>> = localized(records)
        .iter()
        .map(|(t, _, _)| *t.rotation())
        .collect();
    if rotations.len() < 2 {
        return Err(EvalError::InsufficientSamples {
            needed: 2,
            have: rotations.len(),
        });
    }
    let mean_t = chordal_mean(&rotations).transpose();
    let residuals: Vec<Vec3> = rotations
        .iter()
        .map(|r| log_so3(&(mean_t * r)) * 1000.0)
        .collect();
    let cov = sample_covariance(&residuals).expect("two or more samples");
    Ok(Repeatability::from_covariance(&cov))
}

/// Root mean square prism position error over localized trials, mm.
pub fn accuracy_rmse(records: &[TrialRecord]) -> Result<f64, EvalError> {
    let est = localized(records);
    if est.is_empty() {
        return Err(EvalError::InsufficientSamples { needed: 1, have: 0 });
    }
    let sum: f64 = est
        .iter()
        .map(|(_, p, gt)| ((p - gt) * 1000.0).norm_squared())
        .sum();
    Ok((sum / est.len() as f64).sqrt())
}

/// Percentage of trials without an accepted pose; 0 for no trials.
pub fn failure_rate(records: &[TrialRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let failed = records.iter().filter(|r| !r.result.is_localized()).count();
    100.0 * failed as f64 / records.len() as f64
}

/// Moves a surveyed prism position into the frame of the as-built
/// reference surfaces.
pub fn ground_truth_correction(gt_prism: &Vec3, measured_wall_offset: &Vec3) -> Vec3 {
    gt_prism + measured_wall_offset
}

/// One row of the method comparison. Statistics that need more localized
/// trials than were available are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub position: Option<Repeatability>,
    pub rotation: Option<Repeatability>,
    pub accuracy_rmse_mm: Option<f64>,
    pub failure_rate_pct: f64,
    /// Mean over executions, hence fractional after averaging.
    pub n_localized: f64,
    pub n_total: usize,
}

pub fn compute_report(records: &[TrialRecord]) -> MetricsReport {
    MetricsReport {
        position: position_repeatability(records).ok(),
        rotation: rotation_repeatability(records).ok(),
        accuracy_rmse_mm: accuracy_rmse(records).ok(),
        failure_rate_pct: failure_rate(records),
        n_localized: records.iter().filter(|r| r.result.is_localized()).count() as f64,
        n_total: records.len(),
    }
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Field-wise mean of per-execution reports.
pub fn average_executions(reports: &[MetricsReport]) -> Result<MetricsReport, EvalError> {
    let first = reports.first().ok_or(EvalError::NoReports)?;
    if reports.iter().any(|r| r.n_total != first.n_total) {
        return Err(EvalError::MismatchedTrials);
    }
    let n = reports.len() as f64;
    let rep = |get: fn(&MetricsReport) -> Option<Repeatability>| -> Option<Repeatability> {
        Some(Repeatability {
            max_eigenvalue: mean_opt(reports.iter().map(|r| get(r).map(|x| x.max_eigenvalue)))?,
            trace: mean_opt(reports.iter().map(|r| get(r).map(|x| x.trace)))?,
        })
    };
    Ok(MetricsReport {
        position: rep(|r| r.position),
        rotation: rep(|r| r.rotation),
        accuracy_rmse_mm: mean_opt(reports.iter().map(|r| r.accuracy_rmse_mm)),
        failure_rate_pct: reports.iter().map(|r| r.failure_rate_pct).sum::<f64>() / n,
        n_localized: reports.iter().map(|r| r.n_localized).sum::<f64>() / n,
        n_total: first.n_total,
    })
}

pub const REPORT_HEADER: &str =
    "icp,scan,pos_max_eig_mm2,pos_trace_mm2,rot_max_eig_mrad2,rot_trace_mrad2,rmse_mm,failure_pct";

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:.4}"))
}

/// Report CSV, one row per method, in the given order.
pub fn report_csv(rows: &[(Method, MetricsReport)]) -> String {
    let mut out = String::new();
    out.push_str(REPORT_HEADER);
    out.push('\n');
    for (m, r) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:.4}",
            m.icp.as_str(),
            m.scan.as_str(),
            cell(r.position.map(|p| p.max_eigenvalue)),
            cell(r.position.map(|p| p.trace)),
            cell(r.rotation.map(|p| p.max_eigenvalue)),
            cell(r.rotation.map(|p| p.trace)),
            cell(r.accuracy_rmse_mm),
            r.failure_rate_pct,
        );
    }
    out
}
