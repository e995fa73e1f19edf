//! Gaussian correntropy kernel and its link to the Gaussian + uniform mixture
//! used by NDT.

use std::f64::consts::PI;

use nalgebra::Matrix3;

use crate::error::{Error, Result};

/// `G_σ(r²) = exp(−r² / 2σ²) / (√(2π) σ)`
pub fn correntropy_weight(r_squared: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::NonpositiveBandwidth(sigma));
    }
    if !(r_squared >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "squared residual must be non-negative, got {r_squared}"
        )));
    }
    Ok((-r_squared / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma))
}

/// Constants of the inlier/outlier mixture
/// `p(e) = c1 · exp(−eᵀΩe / 2) + c2 · p0`
/// and of its smooth surrogate for the negative log-likelihood
/// `−log p(e) ≈ d1 · exp(−d2 · eᵀΩe / 2) + d3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureConstants {
    /// Gaussian normalizer scaled by the inlier share, `(1 − p0) √det Ω / (2π)^{3/2}`.
    pub c1: f64,
    /// Uniform density over a unit volume (1 m⁻³).
    pub c2: f64,
    /// Outlier ratio.
    pub p0: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl MixtureConstants {
    /// `−log p_mix` as a function of the squared Mahalanobis residual.
    pub fn neg_log_likelihood(&self, r_squared: f64) -> f64 {
        -(self.c1 * (-r_squared / 2.0).exp() + self.c2 * self.p0).ln()
    }

    /// The Gaussian-shaped surrogate `d1 · exp(−d2 r² / 2) + d3`.
    pub fn surrogate(&self, r_squared: f64) -> f64 {
        self.d1 * (-self.d2 * r_squared / 2.0).exp() + self.d3
    }

    /// The kernel bandwidth whose exponent matches the surrogate, `1/√d2`.
    pub fn equivalent_bandwidth(&self) -> f64 {
        1.0 / self.d2.sqrt()
    }
}

/// Fits `d1, d2, d3` so the surrogate equals `−log p_mix` at `r = 0`, in the
/// limit `r → ∞`, and at the one-sigma point `r² = 1` (which fixes the decay
/// rate `d2`).
pub fn fit_mixture_constants(outlier_ratio: f64, omega: &Matrix3<f64>) -> Result<MixtureConstants> {
    if !(outlier_ratio > 0.0 && outlier_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "outlier ratio must lie in (0, 1), got {outlier_ratio}"
        )));
    }
    let det = omega.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "information matrix must be positive definite (det {det})"
        )));
    }
    let p0 = outlier_ratio;
    let c1 = (1.0 - p0) * det.sqrt() / (2.0 * PI).powf(1.5);
    let c2 = 1.0;
    let floor = c2 * p0;

    let d3 = -floor.ln();
    let d1 = -(c1 + floor).ln() - d3;
    let d2 = -2.0 * ((-(c1 * (-0.5f64).exp() + floor).ln() - d3) / d1).ln();

    Ok(MixtureConstants {
        c1,
        c2,
        p0,
        d1,
        d2,
        d3,
    })
}
