//! SO(3)/SE(3) toolkit: hat operator, exponential map, the left-multiplicative
//! retraction used by the solver, composition, and relative pose error.
//!
//! Tangent vectors are ordered rotation first, `[xi; dt]`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector6};

use crate::error::{Error, Result};

/// Angles below this use the first-order series `I + hat(phi)`.
pub const EXP_SMALL_ANGLE: f64 = 1e-8;

/// Orthogonality defect above which a rotation is projected back onto SO(3).
pub const REORTHONORMALIZE_THRESHOLD: f64 = 1e-7;

/// Tolerance used when validating externally supplied rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Skew-symmetric matrix such that `hat(a) * b == a.cross(&b)`.
pub fn hat(phi: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -phi.z, phi.y, //
        phi.z, 0.0, -phi.x, //
        -phi.y, phi.x, 0.0,
    )
}

/// Rodrigues' formula.
pub fn exp_so3(phi: &Vector3<f64>) -> RotationMatrix {
    let theta = phi.norm();
    let k = hat(phi);
    if theta < EXP_SMALL_ANGLE {
        return RotationMatrix(Matrix3::identity() + k);
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    RotationMatrix(Matrix3::identity() + k * a + k * k * b)
}

/// A 3x3 rotation matrix. Construction through [`RotationMatrix::new`] checks
/// `RᵀR = I` and `det R = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRotation("non-finite entry".into()));
        }
        let defect = orthogonality_defect(&m);
        if defect > ROTATION_TOLERANCE {
            return Err(Error::InvalidRotation(format!(
                "orthogonality defect {defect:e}"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidRotation(format!("determinant {det}")));
        }
        Ok(Self(m))
    }

    /// Nearest rotation in the Frobenius sense (polar factor `U Vᵀ`).
    pub fn project(m: &Matrix3<f64>) -> Result<Self> {
        let svd = m.svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(Error::InvalidRotation("SVD failed".into())),
        };
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        Ok(Self(r))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// `‖RᵀR − I‖_F`
    pub fn orthogonality_defect(&self) -> f64 {
        orthogonality_defect(&self.0)
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let c = ((self.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }
}

impl std::ops::Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl std::ops::Mul<Vector3<f64>> for RotationMatrix {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

fn orthogonality_defect(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).norm()
}

/// Perturbation `δx = [ξ; Δt]`: `xi` is an axis-angle rotation increment in
/// radians, `dt` a translation increment in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TangentVector {
    pub xi: Vector3<f64>,
    pub dt: Vector3<f64>,
}

impl TangentVector {
    pub fn new(xi: Vector3<f64>, dt: Vector3<f64>) -> Self {
        Self { xi, dt }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            xi: v.fixed_rows::<3>(0).into_owned(),
            dt: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.xi.x, self.xi.y, self.xi.z, self.dt.x, self.dt.y, self.dt.z)
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.xi.iter().chain(self.dt.iter()).all(|v| v.is_finite())
    }
}

/// Rigid transform `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: RotationMatrix,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: RotationMatrix, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(RotationMatrix::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(RotationMatrix::identity(), t)
    }

    /// `(exp(xi), t)`
    pub fn from_axis_angle(xi: &Vector3<f64>, t: Vector3<f64>) -> Self {
        Self::new(exp_so3(xi), t)
    }

    pub fn rotation_matrix(&self) -> &Matrix3<f64> {
        self.rotation.matrix()
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.matrix() * p + self.translation
    }

    /// `self ∘ other`, i.e. apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation.matrix() * other.translation + self.translation,
        }
    }

    /// `(Rᵀ, −Rᵀ t)`
    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt.matrix() * self.translation),
        }
    }

    /// `(exp(ξ)R, exp(ξ)t + Δt)`. The rotation is re-projected onto SO(3) if
    /// accumulated round-off pushes its orthogonality defect past
    /// [`REORTHONORMALIZE_THRESHOLD`].
    pub fn retract(&self, dx: &TangentVector) -> RigidTransform {
        let q = exp_so3(&dx.xi);
        let mut rotation = q * self.rotation;
        if rotation.orthogonality_defect() > REORTHONORMALIZE_THRESHOLD {
            if let Ok(r) = RotationMatrix::project(rotation.matrix()) {
                rotation = r;
            }
        }
        RigidTransform {
            rotation,
            translation: q.matrix() * self.translation + dx.dt,
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Nine rotation entries in row-major order followed by the translation.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = self.rotation.matrix();
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)],
            r[(1, 0)], r[(1, 1)], r[(1, 2)],
            r[(2, 0)], r[(2, 1)], r[(2, 2)],
            t.x, t.y, t.z,
        ]
    }

    pub fn from_row_major(v: &[f64]) -> Result<Self> {
        if v.len() != 12 {
            return Err(Error::Parse(format!(
                "expected 12 numbers for a transform, got {}",
                v.len()
            )));
        }
        let m = Matrix3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]);
        let t = Vector3::new(v[9], v[10], v[11]);
        if t.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse("non-finite translation".into()));
        }
        // Text files round to a handful of digits; accept anything close to a
        // rotation and snap it onto SO(3).
        let rotation = match RotationMatrix::new(m) {
            Ok(r) => r,
            Err(_) if orthogonality_defect(&m) < 1e-4 && m.determinant() > 0.0 => {
                RotationMatrix::project(&m)?
            }
            Err(e) => return Err(e),
        };
        Ok(Self::new(rotation, t))
    }
}

impl fmt::Display for RigidTransform {
    /// Single line of 12 whitespace-separated numbers.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_row_major();
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{x:e}")?;
        }
        Ok(())
    }
}

impl FromStr for RigidTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let values = s
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad number {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_row_major(&values)
    }
}

/// Relative pose error between an estimate and the ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    /// meters
    pub e_trans: f64,
    /// radians, in `[0, π]`
    pub e_rot: f64,
}

impl PoseError {
    pub fn e_rot_degrees(&self) -> f64 {
        self.e_rot.to_degrees()
    }
}

/// `ΔT = T̂ · T⁻¹`; translation error is `‖Δt‖`, rotation error the angle of `ΔR`.
pub fn pose_error(estimate: &RigidTransform, ground_truth: &RigidTransform) -> PoseError {
    let delta = estimate.compose(&ground_truth.inverse());
    PoseError {
        e_trans: delta.translation.norm(),
        e_rot: delta.rotation.angle(),
    }
}
