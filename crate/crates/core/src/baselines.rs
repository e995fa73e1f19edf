//! Reference registrars for ablation. All of them run the same loop as
//! [`crate::solver::register`] and differ only in matching rule, residual
//! metric and weighting.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::se3::RigidTransform;
use crate::solver::{
    InformationModel, Matching, Objective, RegistrationResult, RegistrationState, SolverConfig,
    Weighting,
};
use crate::surface::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    /// `Ω = I`, unit weights.
    PointToPoint,
    /// `Ω = n nᵀ` from the target normal, unit weights.
    PointToPlane,
    /// `Ω = (Σ_A + R Σ_B Rᵀ)⁻¹`, unit weights.
    Gicp,
    /// GICP metric with correntropy weights and the annealed bandwidth.
    CoGicp,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::PointToPoint,
        BaselineKind::PointToPlane,
        BaselineKind::Gicp,
        BaselineKind::CoGicp,
    ];

    pub fn objective(self) -> Objective {
        let (information, weighting) = match self {
            BaselineKind::PointToPoint => (InformationModel::Identity, Weighting::Unit),
            BaselineKind::PointToPlane => (InformationModel::PointToPlane, Weighting::Unit),
            BaselineKind::Gicp => (InformationModel::Gicp, Weighting::Unit),
            BaselineKind::CoGicp => (InformationModel::Gicp, Weighting::Correntropy),
        };
        Objective {
            matching: Matching::ForwardOnly,
            information,
            weighting,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::PointToPoint => "p2pt",
            BaselineKind::PointToPlane => "p2pl",
            BaselineKind::Gicp => "gicp",
            BaselineKind::CoGicp => "cogicp",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p2pt" | "point_to_point" => Ok(BaselineKind::PointToPoint),
            "p2pl" | "point_to_plane" => Ok(BaselineKind::PointToPlane),
            "gicp" => Ok(BaselineKind::Gicp),
            "cogicp" => Ok(BaselineKind::CoGicp),
            other => Err(Error::Parse(format!("unknown baseline {other:?}"))),
        }
    }
}

pub fn register_baseline(
    kind: BaselineKind,
    source: &PointCloud,
    target: &PointCloud,
    initial: &RigidTransform,
    cfg: &SolverConfig,
) -> Result<RegistrationResult> {
    RegistrationState::new(source, target, initial, cfg, kind.objective())?.run()
}
