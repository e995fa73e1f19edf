//! Point clouds and per-point surface statistics.
//!
//! Each point gets a Gaussian from its k-neighborhood. The smallest eigenvalue
//! of that covariance is replaced by `eps_plane · λ_max` so every neighborhood
//! behaves like a thin planar patch, and the inverse (information matrix) is
//! kept alongside for the residual weighting.

mod index;

pub use index::{dist_sq, Neighbor, NeighborIndex};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::se3::RotationMatrix;

pub const DEFAULT_K_NEIGHBORS: usize = 20;
pub const DEFAULT_EPS_PLANE: f64 = 1e-3;

/// Determinant floor for the closed-form 3x3 inverse.
pub const DETERMINANT_FLOOR: f64 = 1e-18;

/// Symmetry tolerance accepted by [`combine_information`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Normal component magnitudes below this are treated as zero when fixing sign.
const NORMAL_SIGN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceStat {
    /// Regularized covariance (m²).
    pub covariance: Matrix3<f64>,
    /// Inverse of `covariance` (m⁻²).
    pub information: Matrix3<f64>,
    /// Unit normal; first non-zero component is positive.
    pub normal: Vector3<f64>,
    pub neighbor_count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
    stats: Option<Vec<SurfaceStat>>,
}

impl PointCloud {
    /// Rejects non-finite coordinates. An empty cloud is allowed here; the
    /// registration entry points reject it.
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if let Some(i) = points
            .iter()
            .position(|p| p.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinitePoint(i));
        }
        Ok(Self {
            points,
            stats: None,
        })
    }

    pub fn with_stats(points: Vec<Vector3<f64>>, stats: Vec<SurfaceStat>) -> Result<Self> {
        if stats.len() != points.len() {
            return Err(Error::InvalidArgument(format!(
                "{} stats for {} points",
                stats.len(),
                points.len()
            )));
        }
        let mut cloud = Self::new(points)?;
        cloud.stats = Some(stats);
        Ok(cloud)
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn stats(&self) -> Option<&[SurfaceStat]> {
        self.stats.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Vector3<f64>> {
        self.points
    }

    /// Points mapped through `f`; statistics are dropped.
    pub fn map_points(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Vec<Vector3<f64>> {
        self.points.iter().map(f).collect()
    }
}

pub fn build_index(cloud: &PointCloud) -> Result<NeighborIndex> {
    NeighborIndex::build(cloud.points())
}

/// Fills per-point statistics from the `k` nearest neighbors of every point
/// (the point itself included).
pub fn estimate_stats(cloud: &PointCloud, k: usize, eps_plane: f64) -> Result<PointCloud> {
    if k < 4 {
        return Err(Error::InvalidArgument(format!("k must be at least 4, got {k}")));
    }
    if !(eps_plane > 0.0 && eps_plane <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "eps_plane must lie in (0, 1], got {eps_plane}"
        )));
    }
    if cloud.len() < k {
        return Err(Error::InsufficientPoints {
            points: cloud.len(),
            k,
        });
    }
    let index = build_index(cloud)?;
    let points = cloud.points();
    let stats = points
        .par_iter()
        .map(|p| {
            let nbrs = index.knn(p, k);
            let cov = sample_covariance(nbrs.iter().map(|n| &points[n.index]));
            let mut stat = regularize_covariance(&cov, eps_plane);
            stat.neighbor_count = nbrs.len();
            stat
        })
        .collect();
    PointCloud::with_stats(points.to_vec(), stats)
}

/// Unbiased sample covariance (divides by `n − 1`).
pub fn sample_covariance<'a>(points: impl Iterator<Item = &'a Vector3<f64>> + Clone) -> Matrix3<f64> {
    let mut n = 0usize;
    let mut mean = Vector3::zeros();
    for p in points.clone() {
        mean += p;
        n += 1;
    }
    if n < 2 {
        return Matrix3::zeros();
    }
    mean /= n as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov / (n - 1) as f64
}

/// Replaces the smallest eigenvalue by `eps_plane · λ_max` and floors the
/// others at the same value. A neighborhood with no spread at all gets the
/// isotropic covariance `eps_plane · I`.
pub fn regularize_covariance(cov: &Matrix3<f64>, eps_plane: f64) -> SurfaceStat {
    let sym = symmetrize(cov);
    let SymmetricEigen {
        eigenvectors,
        eigenvalues,
    } = sym.symmetric_eigen();

    let max = eigenvalues.max();
    if !(max > 0.0) || !max.is_finite() {
        let covariance = Matrix3::identity() * eps_plane;
        return SurfaceStat {
            covariance,
            information: Matrix3::identity() / eps_plane,
            normal: Vector3::z(),
            neighbor_count: 0,
        };
    }

    let floor = eps_plane * max;
    let min_idx = eigenvalues.imin();
    let mut values = eigenvalues;
    for (i, v) in values.iter_mut().enumerate() {
        *v = if i == min_idx { floor } else { v.max(floor) };
    }

    let covariance = symmetrize(
        &(eigenvectors * Matrix3::from_diagonal(&values) * eigenvectors.transpose()),
    );
    let information = symmetrize(
        &(eigenvectors * Matrix3::from_diagonal(&values.map(|v| 1.0 / v)) * eigenvectors.transpose()),
    );
    let normal = canonical_sign(eigenvectors.column(min_idx).normalize());

    SurfaceStat {
        covariance,
        information,
        normal,
        neighbor_count: 0,
    }
}

fn canonical_sign(n: Vector3<f64>) -> Vector3<f64> {
    match n.iter().find(|c| c.abs() > NORMAL_SIGN_EPS) {
        Some(c) if *c < 0.0 => -n,
        _ => n,
    }
}

pub(crate) fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

fn asymmetry(m: &Matrix3<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}

/// Bidirectional information matrix `Ω_A + R Ω_B Rᵀ`.
pub fn combine_information(
    omega_a: &Matrix3<f64>,
    omega_b: &Matrix3<f64>,
    r: &RotationMatrix,
) -> Result<Matrix3<f64>> {
    for m in [omega_a, omega_b] {
        let defect = asymmetry(m);
        if defect > SYMMETRY_TOLERANCE {
            return Err(Error::AsymmetricInformation(defect));
        }
    }
    let r = r.matrix();
    Ok(symmetrize(&(omega_a + r * omega_b * r.transpose())))
}

/// GICP weighting `(Σ_A + R Σ_B Rᵀ)⁻¹`.
pub fn gicp_information(
    sigma_a: &Matrix3<f64>,
    sigma_b: &Matrix3<f64>,
    r: &RotationMatrix,
) -> Result<Matrix3<f64>> {
    let r = r.matrix();
    let combined = symmetrize(&(sigma_a + r * sigma_b * r.transpose()));
    cofactor_inverse(&combined).map(|m| symmetrize(&m))
}

/// Closed-form 3x3 inverse via the adjugate; fails when `|det| < 1e-18`.
pub fn cofactor_inverse(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let c00 = m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)];
    let c01 = m[(1, 2)] * m[(2, 0)] - m[(1, 0)] * m[(2, 2)];
    let c02 = m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)];
    let det = m[(0, 0)] * c00 + m[(0, 1)] * c01 + m[(0, 2)] * c02;
    if !(det.abs() >= DETERMINANT_FLOOR) {
        return Err(Error::SingularCovariance(det));
    }
    let c10 = m[(0, 2)] * m[(2, 1)] - m[(0, 1)] * m[(2, 2)];
    let c11 = m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)];
    let c12 = m[(0, 1)] * m[(2, 0)] - m[(0, 0)] * m[(2, 1)];
    let c20 = m[(0, 1)] * m[(1, 2)] - m[(0, 2)] * m[(1, 1)];
    let c21 = m[(0, 2)] * m[(1, 0)] - m[(0, 0)] * m[(1, 2)];
    let c22 = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    // adjugate = transpose of the cofactor matrix
    let adj = Matrix3::new(c00, c10, c20, c01, c11, c21, c02, c12, c22);
    Ok(adj / det)
}
