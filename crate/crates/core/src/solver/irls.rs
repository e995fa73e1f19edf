//! The shared iteratively-reweighted least-squares loop.
//!
//! Each iteration: match under the current transform, build per-pair
//! information matrices with the current rotation, freeze the weights, take
//! the closed-form step `δx = −A† b`, and retract.

use nalgebra::Matrix3;
use rayon::prelude::*;

use super::kernel::correntropy_weight;
use super::linear::{linearize, solve_step_with_diagnostics, NormalEquations, ResidualTerm};
use super::{IterationTrace, RegistrationResult, SigmaInit, SolverConfig, AUTO_SIGMA_FLOOR};
use crate::correspond::{self, CorrespondenceSet};
use crate::error::{Error, Result};
use crate::se3::RigidTransform;
use crate::surface::{combine_information, gicp_information, NeighborIndex, PointCloud};

/// Consecutive empty correspondence sets tolerated before giving up.
pub const MAX_EMPTY_ITERATIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Matching {
    /// Forward match plus round-trip gate.
    Bidirectional,
    /// Every target point paired with its nearest transformed source point.
    ForwardOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InformationModel {
    /// `Ω_A + R Ω_B Rᵀ`
    Bidirectional,
    /// `I`
    Identity,
    /// `n nᵀ` with the target normal.
    PointToPlane,
    /// `(Σ_A + R Σ_B Rᵀ)⁻¹`
    Gicp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Correntropy,
    Unit,
}

/// Which correspondence rule, residual metric and weighting a registration uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Objective {
    pub matching: Matching,
    pub information: InformationModel,
    pub weighting: Weighting,
}

impl Objective {
    pub const COBIGICP: Objective = Objective {
        matching: Matching::Bidirectional,
        information: InformationModel::Bidirectional,
        weighting: Weighting::Correntropy,
    };

    fn needs_target_stats(&self) -> bool {
        self.information != InformationModel::Identity
    }

    fn needs_source_stats(&self) -> bool {
        matches!(
            self.information,
            InformationModel::Bidirectional | InformationModel::Gicp
        )
    }
}

/// Everything computed for one iteration before the step is taken.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub correspondences: CorrespondenceSet,
    pub terms: Vec<ResidualTerm>,
    /// Kernel weights `G_σ(r²)`, or all ones for least-squares objectives.
    pub weights: Vec<f64>,
    pub sigma: f64,
    sigma0: f64,
}

impl Linearization {
    pub fn normal_equations(&self, weight_scale: f64) -> Result<NormalEquations> {
        let w: Vec<f64> = self.weights.iter().map(|w| w * weight_scale).collect();
        NormalEquations::accumulate(&self.terms, &w)
    }
}

/// Stepwise registration; [`super::register`] drives this to completion.
pub struct RegistrationState<'a> {
    source: &'a PointCloud,
    target: &'a PointCloud,
    target_index: NeighborIndex,
    cfg: SolverConfig,
    objective: Objective,
    transform: RigidTransform,
    sigma0: Option<f64>,
    sigma_origin: usize,
    iteration: usize,
    consecutive_empty: usize,
    converged: bool,
    trace: Vec<IterationTrace>,
    final_pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Continue,
    Converged,
    IterationLimit,
}

impl<'a> RegistrationState<'a> {
    pub fn new(
        source: &'a PointCloud,
        target: &'a PointCloud,
        initial: &RigidTransform,
        cfg: &SolverConfig,
        objective: Objective,
    ) -> Result<Self> {
        cfg.validate()?;
        if source.is_empty() || target.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if objective.needs_target_stats() && target.stats().is_none() {
            return Err(Error::MissingStats("target"));
        }
        if objective.needs_source_stats() && source.stats().is_none() {
            return Err(Error::MissingStats("source"));
        }
        let sigma0 = match cfg.sigma0 {
            SigmaInit::Fixed(s) => Some(s),
            SigmaInit::Auto => None,
        };
        Ok(Self {
            source,
            target,
            target_index: NeighborIndex::build(target.points())?,
            cfg: cfg.clone(),
            objective,
            transform: *initial,
            sigma0,
            sigma_origin: 0,
            iteration: 0,
            consecutive_empty: 0,
            converged: false,
            trace: Vec::new(),
            final_pairs: 0,
        })
    }

    pub fn transform(&self) -> &RigidTransform {
        &self.transform
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn trace(&self) -> &[IterationTrace] {
        &self.trace
    }

    /// Bandwidth after `n` annealing steps from `sigma0`.
    pub fn scheduled_sigma(&self, sigma0: f64, n: usize) -> f64 {
        let n = i32::try_from(n).unwrap_or(i32::MAX);
        (sigma0 * self.cfg.sigma_decay.powi(n)).max(self.cfg.sigma_floor_ratio * sigma0)
    }

    pub fn correspondences(&self) -> Result<CorrespondenceSet> {
        match self.objective.matching {
            Matching::Bidirectional => correspond::bidirectional_correspondences(
                self.target,
                &self.target_index,
                self.source,
                &self.transform,
                self.cfg.gate,
            ),
            Matching::ForwardOnly => {
                let fwd = correspond::forward_search_transformed(self.target, self.source, &self.transform)?;
                Ok(CorrespondenceSet::from_forward(&fwd))
            }
        }
    }

    fn information(&self, m: usize, n: usize) -> Result<Matrix3<f64>> {
        let r = &self.transform.rotation;
        let target_stats = self.target.stats();
        let source_stats = self.source.stats();
        match self.objective.information {
            InformationModel::Identity => Ok(Matrix3::identity()),
            InformationModel::PointToPlane => {
                let normal = target_stats.ok_or(Error::MissingStats("target"))?[m].normal;
                Ok(normal * normal.transpose())
            }
            InformationModel::Bidirectional => {
                let a = &target_stats.ok_or(Error::MissingStats("target"))?[m];
                let b = &source_stats.ok_or(Error::MissingStats("source"))?[n];
                combine_information(&a.information, &b.information, r)
            }
            InformationModel::Gicp => {
                let a = &target_stats.ok_or(Error::MissingStats("target"))?[m];
                let b = &source_stats.ok_or(Error::MissingStats("source"))?[n];
                gicp_information(&a.covariance, &b.covariance, r)
            }
        }
    }

    pub fn residual_terms(&self, set: &CorrespondenceSet) -> Result<Vec<ResidualTerm>> {
        let a = self.target.points();
        let b = self.source.points();
        set.pairs
            .par_iter()
            .map(|p| {
                let omega = self.information(p.target_index, p.source_index)?;
                let (v, h) = linearize(&a[p.target_index], &b[p.source_index], &self.transform);
                let r_squared = v.dot(&(omega * v)).max(0.0);
                Ok(ResidualTerm {
                    v,
                    h,
                    omega,
                    r_squared,
                })
            })
            .collect()
    }

    /// Correspondences, residual terms and frozen weights at the current pose.
    pub fn linearize(&self) -> Result<Linearization> {
        let correspondences = self.correspondences()?;
        let terms = self.residual_terms(&correspondences)?;
        let (sigma0, origin) = match self.sigma0 {
            Some(s) => (s, self.sigma_origin),
            None => (auto_sigma(&terms), self.iteration),
        };
        let sigma = self.scheduled_sigma(sigma0, self.iteration - origin);
        let weights = match self.objective.weighting {
            Weighting::Unit => vec![1.0; terms.len()],
            Weighting::Correntropy => terms
                .iter()
                .map(|t| correntropy_weight(t.r_squared, sigma))
                .collect::<Result<_>>()?,
        };
        Ok(Linearization {
            correspondences,
            terms,
            weights,
            sigma,
            sigma0,
        })
    }

    pub fn step(&mut self) -> Result<StepStatus> {
        if self.converged {
            return Ok(StepStatus::Converged);
        }
        if self.iteration >= self.cfg.max_iterations {
            return Ok(StepStatus::IterationLimit);
        }
        let lin = self.linearize()?;
        let iteration = self.iteration + 1;

        if lin.terms.is_empty() {
            self.consecutive_empty += 1;
            self.trace.push(IterationTrace {
                iteration,
                sigma: lin.sigma,
                pair_count: 0,
                rejected_count: lin.correspondences.rejected_count,
                objective: 0.0,
                mean_mahalanobis: 0.0,
                step_norm: 0.0,
                rank: 0,
            });
            self.iteration = iteration;
            self.final_pairs = 0;
            if self.consecutive_empty >= MAX_EMPTY_ITERATIONS {
                return Err(Error::CorrespondenceCollapse(self.consecutive_empty));
            }
            return Ok(self.limit_status());
        }
        self.consecutive_empty = 0;
        if self.sigma0.is_none() {
            self.sigma0 = Some(lin.sigma0);
            self.sigma_origin = self.iteration;
        }

        let objective = match self.objective.weighting {
            Weighting::Correntropy => lin.weights.iter().sum::<f64>(),
            Weighting::Unit => lin.terms.iter().map(|t| t.r_squared).sum::<f64>(),
        };
        if !objective.is_finite() {
            return Err(Error::NumericalDivergence(iteration));
        }
        let mean_mahalanobis =
            lin.terms.iter().map(|t| t.r_squared.sqrt()).sum::<f64>() / lin.terms.len() as f64;

        let eq = lin.normal_equations(1.0)?;
        let (dx, diag) = solve_step_with_diagnostics(&eq.a, &eq.b, self.cfg.pinv_tolerance);
        if !dx.is_finite() {
            return Err(Error::NumericalDivergence(iteration));
        }
        self.transform = self.transform.retract(&dx);

        self.trace.push(IterationTrace {
            iteration,
            sigma: lin.sigma,
            pair_count: lin.terms.len(),
            rejected_count: lin.correspondences.rejected_count,
            objective,
            mean_mahalanobis,
            step_norm: dx.norm(),
            rank: diag.rank,
        });
        self.iteration = iteration;
        self.final_pairs = lin.terms.len();

        if dx.dt.norm() < self.cfg.translation_tol && dx.xi.norm() < self.cfg.rotation_tol {
            self.converged = true;
            return Ok(StepStatus::Converged);
        }
        Ok(self.limit_status())
    }

    fn limit_status(&self) -> StepStatus {
        if self.iteration >= self.cfg.max_iterations {
            StepStatus::IterationLimit
        } else {
            StepStatus::Continue
        }
    }

    pub fn run(mut self) -> Result<RegistrationResult> {
        while self.step()? == StepStatus::Continue {}
        Ok(self.finish())
    }

    pub fn finish(self) -> RegistrationResult {
        RegistrationResult {
            transform: self.transform,
            converged: self.converged,
            iterations: self.iteration,
            trace: self.trace,
            final_pairs: self.final_pairs,
        }
    }
}

/// `√median(r²)`, floored at [`AUTO_SIGMA_FLOOR`].
fn auto_sigma(terms: &[ResidualTerm]) -> f64 {
    let mut r2: Vec<f64> = terms.iter().map(|t| t.r_squared).collect();
    correspond::median(&mut r2)
        .map(f64::sqrt)
        .unwrap_or(0.0)
        .max(AUTO_SIGMA_FLOOR)
}
