use thiserror::Error;

use crate::Sign;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("field kind does not match the grid ({0})")]
    KindMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid covariance kernel: {0}")]
    InvalidCovariance(String),

    #[error("curl stencil out of domain: {0}")]
    StencilOutOfDomain(String),

    #[error("matrix is not Hermitian (max asymmetry {asymmetry:e}, allowed {allowed:e})")]
    NotHermitian { asymmetry: f64, allowed: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("degenerate observable: both branches of the spectrum are empty")]
    DegenerateObservable,

    #[error("no fundamental eigenspace for sign {0}")]
    EmptyBranch(Sign),

    #[error("restricted C·O eigenpair check failed: residual {residual:e} exceeds {allowed:e}")]
    EquivalenceResidual { residual: f64, allowed: f64 },

    #[error("undefined distance: zero-norm field")]
    UndefinedDistance,

    #[error("rejection sampling guard tripped after {draws} draws with {accepted} acceptances; use the tilted method")]
    AcceptanceGuard { draws: u64, accepted: usize },

    #[error("infeasible tilt: threshold {u} cannot be reached below the tilt cap")]
    InfeasibleTilt { u: f64 },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("invariant violated: {0}")]
    InvariantViolated(String),

    #[error("closed form requires distinct eigenvalues of complex kind; use inversion")]
    ClosedFormUnavailable,

    #[error("integral did not converge: {0}")]
    Quadrature(String),

    #[error("field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
