//! Correntropy-weighted registration with bidirectional correspondence.

mod irls;
mod kernel;
mod linear;

pub use irls::{
    InformationModel, Linearization, Matching, Objective, RegistrationState, StepStatus, Weighting,
    MAX_EMPTY_ITERATIONS,
};
pub use kernel::{correntropy_weight, fit_mixture_constants, MixtureConstants};
pub use linear::{
    linearize, mahalanobis_residual, solve_step, solve_step_with_diagnostics, NormalEquations,
    ResidualTerm, StepDiagnostics,
};

use rayon::prelude::*;

use crate::correspond::{CorrespondenceSet, GateMode};
use crate::error::{Error, Result};
use crate::se3::RigidTransform;
use crate::surface::{combine_information, PointCloud, DEFAULT_EPS_PLANE, DEFAULT_K_NEIGHBORS};

pub const DEFAULT_SIGMA_DECAY: f64 = 0.97;
pub const DEFAULT_SIGMA_FLOOR_RATIO: f64 = 0.05;
pub const DEFAULT_MAX_ITERATIONS: usize = 100;
pub const DEFAULT_TRANSLATION_TOL: f64 = 1e-6;
pub const DEFAULT_ROTATION_TOL: f64 = 1e-6;
pub const DEFAULT_PINV_TOLERANCE: f64 = 1e-8;
/// Lower bound on an automatically chosen initial bandwidth.
pub const AUTO_SIGMA_FLOOR: f64 = 1e-3;

/// Initial kernel bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaInit {
    /// `√median(r²)` of the first non-empty correspondence set.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub sigma0: SigmaInit,
    /// Per-iteration bandwidth multiplier, in `(0, 1]`.
    pub sigma_decay: f64,
    /// The bandwidth never drops below `sigma_floor_ratio · sigma0`.
    pub sigma_floor_ratio: f64,
    pub max_iterations: usize,
    /// meters
    pub translation_tol: f64,
    /// radians
    pub rotation_tol: f64,
    pub k_neighbors: usize,
    pub eps_plane: f64,
    pub gate: GateMode,
    /// Relative cutoff on singular values for the pseudoinverse.
    pub pinv_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            sigma0: SigmaInit::Auto,
            sigma_decay: DEFAULT_SIGMA_DECAY,
            sigma_floor_ratio: DEFAULT_SIGMA_FLOOR_RATIO,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            translation_tol: DEFAULT_TRANSLATION_TOL,
            rotation_tol: DEFAULT_ROTATION_TOL,
            k_neighbors: DEFAULT_K_NEIGHBORS,
            eps_plane: DEFAULT_EPS_PLANE,
            gate: GateMode::Adaptive,
            pinv_tolerance: DEFAULT_PINV_TOLERANCE,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if let SigmaInit::Fixed(s) = self.sigma0 {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::NonpositiveBandwidth(s));
            }
        }
        if !(self.sigma_decay > 0.0 && self.sigma_decay <= 1.0) {
            return bad(format!("sigma_decay must lie in (0, 1], got {}", self.sigma_decay));
        }
        if !(self.sigma_floor_ratio > 0.0 && self.sigma_floor_ratio <= 1.0) {
            return bad(format!(
                "sigma_floor_ratio must lie in (0, 1], got {}",
                self.sigma_floor_ratio
            ));
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1".into());
        }
        if !(self.translation_tol > 0.0) || !(self.rotation_tol > 0.0) {
            return bad("convergence tolerances must be positive".into());
        }
        if self.k_neighbors < 4 {
            return bad(format!("k_neighbors must be at least 4, got {}", self.k_neighbors));
        }
        if !(self.eps_plane > 0.0 && self.eps_plane <= 1.0) {
            return bad(format!("eps_plane must lie in (0, 1], got {}", self.eps_plane));
        }
        if let GateMode::Fixed(g) = self.gate {
            if !(g >= 0.0) {
                return bad(format!("gate radius must be non-negative, got {g}"));
            }
        }
        if !(self.pinv_tolerance >= 0.0 && self.pinv_tolerance < 1.0) {
            return bad(format!(
                "pinv_tolerance must lie in [0, 1), got {}",
                self.pinv_tolerance
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    /// 1-based.
    pub iteration: usize,
    pub sigma: f64,
    pub pair_count: usize,
    pub rejected_count: usize,
    /// `Σ G_σ(r²)` for correntropy objectives, `Σ r²` for least squares.
    pub objective: f64,
    /// Mean of `√r²` over the accepted pairs.
    pub mean_mahalanobis: f64,
    /// `‖δx‖`
    pub step_norm: f64,
    /// Rank kept by the pseudoinverse.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub transform: RigidTransform,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<IterationTrace>,
    pub final_pairs: usize,
}

/// Aligns `source` onto `target` starting from `initial`. Both clouds need
/// surface statistics (see [`crate::surface::estimate_stats`]).
pub fn register(
    source: &PointCloud,
    target: &PointCloud,
    initial: &RigidTransform,
    cfg: &SolverConfig,
) -> Result<RegistrationResult> {
    RegistrationState::new(source, target, initial, cfg, Objective::COBIGICP)?.run()
}

/// Normal equations for a bidirectional correspondence set with
/// `Ω_i = Ω_A + R Ω_B Rᵀ` and weights `G_σ(r_i²)`.
pub fn accumulate_normal_equations(
    pairs: &CorrespondenceSet,
    target: &PointCloud,
    source: &PointCloud,
    t: &RigidTransform,
    sigma: f64,
) -> Result<NormalEquations> {
    if !(sigma > 0.0) {
        return Err(Error::NonpositiveBandwidth(sigma));
    }
    if pairs.is_empty() {
        return Err(Error::NoCorrespondences);
    }
    let ts = target.stats().ok_or(Error::MissingStats("target"))?;
    let ss = source.stats().ok_or(Error::MissingStats("source"))?;
    let (a, b) = (target.points(), source.points());
    let terms = pairs
        .pairs
        .par_iter()
        .map(|p| {
            let omega = combine_information(
                &ts[p.target_index].information,
                &ss[p.source_index].information,
                &t.rotation,
            )?;
            let (v, h) = linearize(&a[p.target_index], &b[p.source_index], t);
            Ok(ResidualTerm {
                v,
                h,
                omega,
                r_squared: v.dot(&(omega * v)).max(0.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let weights = terms
        .iter()
        .map(|term| correntropy_weight(term.r_squared, sigma))
        .collect::<Result<Vec<_>>>()?;
    NormalEquations::accumulate(&terms, &weights)
}
