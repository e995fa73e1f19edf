use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty point cloud")]
    EmptyCloud,

    #[error("non-finite coordinate at point {0}")]
    NonFinitePoint(usize),

    #[error("insufficient points for statistics: {points} points, k = {k}")]
    InsufficientPoints { points: usize, k: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("asymmetric information matrix (defect {0:e})")]
    AsymmetricInformation(f64),

    #[error("singular combined covariance (det {0:e})")]
    SingularCovariance(f64),

    #[error("nonpositive bandwidth: {0}")]
    NonpositiveBandwidth(f64),

    #[error("no correspondences")]
    NoCorrespondences,

    #[error("correspondence collapse after {0} consecutive empty iterations")]
    CorrespondenceCollapse(usize),

    #[error("numerical divergence at iteration {0}")]
    NumericalDivergence(usize),

    #[error("missing surface statistics on {0} cloud")]
    MissingStats(&'static str),

    #[error("invalid rotation matrix: {0}")]
    InvalidRotation(String),

    #[error("parse error: {0}")]
    Parse(String),
}
