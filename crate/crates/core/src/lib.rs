//! Robust rigid point-cloud registration.
//!
//! The main entry point is [`solver::register`], which aligns a source cloud to
//! a target cloud by alternating bidirectional nearest-neighbor correspondence
//! with a correntropy-weighted, closed-form Gauss-Newton step on SE(3).
//! Reference registrars (point-to-point, point-to-plane, GICP and a
//! correntropy-only GICP) live in [`baselines`] and share the same loop.
//!
//! ```no_run
//! use cobigicp::prelude::*;
//! # fn main() -> cobigicp::Result<()> {
//! # let (src, tgt): (Vec<nalgebra::Vector3<f64>>, Vec<nalgebra::Vector3<f64>>) = (vec![], vec![]);
//! let cfg = SolverConfig::default();
//! let source = estimate_stats(&PointCloud::new(src)?, cfg.k_neighbors, cfg.eps_plane)?;
//! let target = estimate_stats(&PointCloud::new(tgt)?, cfg.k_neighbors, cfg.eps_plane)?;
//! let result = register(&source, &target, &RigidTransform::identity(), &cfg)?;
//! println!("{}", result.transform);
//! # Ok(())
//! # }
//! ```

// Range checks are written negated so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod correspond;
pub mod error;
pub mod se3;
pub mod solver;
pub mod surface;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::baselines::{register_baseline, BaselineKind};
    pub use crate::correspond::{CorrespondencePair, CorrespondenceSet, GateMode};
    pub use crate::error::{Error, Result};
    pub use crate::se3::{pose_error, PoseError, RigidTransform, RotationMatrix, TangentVector};
    pub use crate::solver::{register, RegistrationResult, SigmaInit, SolverConfig};
    pub use crate::surface::{estimate_stats, NeighborIndex, PointCloud, SurfaceStat};
}
