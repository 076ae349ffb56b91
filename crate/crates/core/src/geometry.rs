//! Rigid-body math used by the registration and evaluation code.
//!
//! Rotations are stored as orthonormal 3×3 matrices. Quaternions only appear
//! at I/O boundaries.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Vec3 = Vector3<f64>;

/// Drift from orthonormality above which `compose` repairs the product.
const ORTHO_REPAIR_THRESHOLD: f64 = 1e-9;

/// A proper rigid transform `x ↦ R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds a transform from a rotation matrix, repairing small
    /// non-orthonormality. Returns `None` when the matrix is not close to a
    /// proper rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Option<Self> {
        if !rotation.iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return None;
        }
        let repaired = orthonormalize(&rotation);
        if (repaired - rotation).norm() > 1e-6 || repaired.determinant() < 0.0 {
            return None;
        }
        Some(Self {
            rotation: repaired,
            translation,
        })
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation about +z by `yaw` radians.
    pub fn from_yaw(yaw: f64) -> Self {
        Self::from_axis_angle(&Vec3::z(), yaw)
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle);
        Self {
            rotation: *rot.matrix(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_parts(rotation_vector: Vec3, translation: Vec3) -> Self {
        Self {
            rotation: exp_so3(&rotation_vector),
            translation,
        }
    }

    pub fn from_quaternion(q: [f64; 4], translation: Vec3) -> Option<Self> {
        let [w, x, y, z] = q;
        let quat = nalgebra::Quaternion::new(w, x, y, z);
        if !(quat.norm() > 1e-12) {
            return None;
        }
        let unit = UnitQuaternion::from_quaternion(quat);
        Self::new(*unit.to_rotation_matrix().matrix(), translation)
    }

    /// Returns the rotation as a unit quaternion `[w, x, y, z]`.
    pub fn quaternion(&self) -> [f64; 4] {
        let rot = Rotation3::from_matrix_unchecked(self.rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn with_translation(mut self, t: Vec3) -> Self {
        self.translation = t;
        self
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let mut rotation = self.rotation * other.rotation;
        if orthonormality_error(&rotation) > ORTHO_REPAIR_THRESHOLD {
            rotation = orthonormalize(&rotation);
        }
        RigidTransform {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Left-multiplies a small motion: rotation by `exp(ω)` then a shift by `v`.
    ///
    /// The resulting map is `x ↦ exp(ω)·(R·x + t) + v`, so a point already in
    /// the target frame moves by `ω × q + v` to first order.
    pub fn perturb_left(&self, omega: &Vec3, v: &Vec3) -> RigidTransform {
        let delta = exp_so3(omega);
        RigidTransform {
            rotation: orthonormalize(&(delta * self.rotation)),
            translation: delta * self.translation + v,
        }
    }

    /// Rotation vector (axis × angle) of the rotation part, angle in [0, π].
    pub fn rotation_vector(&self) -> Vec3 {
        log_so3(&self.rotation)
    }

    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    pub fn is_valid(&self) -> bool {
        orthonormality_error(&self.rotation) <= 1e-9
            && (self.rotation.determinant() - 1.0).abs() <= 1e-9
            && self.translation.iter().all(|v| v.is_finite())
    }

    /// Row-major rotation and translation, used by the JSON result records.
    pub fn to_arrays(&self) -> ([f64; 9], [f64; 3]) {
        let r = &self.rotation;
        (
            [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            [self.translation.x, self.translation.y, self.translation.z],
        )
    }

    pub fn from_arrays(r: &[f64; 9], t: &[f64; 3]) -> Option<Self> {
        Self::new(Matrix3::from_row_slice(r), Vec3::new(t[0], t[1], t[2]))
    }
}

/// Translation and rotation distance between two poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseDelta {
    pub translation_norm: f64,
    pub rotation_angle: f64,
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

pub fn pose_delta(a: &RigidTransform, b: &RigidTransform) -> PoseDelta {
    let relative = a.rotation * b.rotation.transpose();
    PoseDelta {
        translation_norm: (a.translation - b.translation).norm(),
        rotation_angle: rotation_angle(&relative),
    }
}

/// Frobenius norm of `RᵀR − I`.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).norm()
}

/// Projects a near-rotation onto SO(3) via SVD.
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Matrix3::identity(),
    };
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}

pub fn exp_so3(omega: &Vec3) -> Matrix3<f64> {
    *Rotation3::from_scaled_axis(*omega).matrix()
}

/// Rotation angle in [0, π].
///
/// Uses `atan2(‖axial‖, tr−1)` so the result stays accurate near 0 and π
/// where `acos` of the trace loses precision.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let axial = Vec3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    let cos_term = r.trace() - 1.0;
    axial.norm().atan2(cos_term).clamp(0.0, PI)
}

pub fn log_so3(r: &Matrix3<f64>) -> Vec3 {
    let angle = rotation_angle(r);
    let axial = Vec3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    if angle < 1e-6 {
        // sin θ ≈ θ: the axial vector is 2θ·axis
        return axial * 0.5;
    }
    if PI - angle > 1e-4 {
        return axial * (angle / (2.0 * angle.sin()));
    }
    // Near π the axial vector vanishes; take the axis from the symmetric part.
    let b = (r + Matrix3::identity()) * 0.5;
    let col = (0..3)
        .max_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)]))
        .unwrap_or(0);
    let mut axis = b.column(col).into_owned();
    axis /= axis.norm();
    if axis.dot(&axial) < 0.0 {
        axis = -axis;
    }
    axis * angle
}

/// Serialized pose: translation plus unit quaternion `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub t: [f64; 3],
    #[serde(default = "identity_quat")]
    pub q: [f64; 4],
}

fn identity_quat() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl PoseRecord {
    pub fn to_transform(&self) -> Option<RigidTransform> {
        RigidTransform::from_quaternion(self.q, Vec3::new(self.t[0], self.t[1], self.t[2]))
    }

    pub fn from_transform(t: &RigidTransform) -> Self {
        let tr = t.translation();
        Self {
            t: [tr.x, tr.y, tr.z],
            q: t.quaternion(),
        }
    }
}
