//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by samplers, the warp machinery and estimators.
#[derive(Debug, Error)]
pub enum Error {
    /// Two objects that must live in the same space do not.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A declared thinning bound was exceeded by the true rate. The run is
    /// aborted rather than accepting a silently biased path.
    #[error(
        "envelope violation: rate {rate} exceeds declared bound {bound} at t={t} (channel {channel})"
    )]
    EnvelopeViolation {
        channel: usize,
        t: f64,
        rate: f64,
        bound: f64,
    },

    /// An event rate evaluated to NaN or infinity.
    #[error("non-finite rate on channel {channel} at t={t}")]
    NonFiniteRate { channel: usize, t: f64 },

    /// Adaptive quadrature failed to reach the requested tolerance.
    #[error("quadrature failed to reach tol={tol} within depth {max_depth}")]
    QuadratureFailure { tol: f64, max_depth: usize },

    /// Bounce reflection is undefined where the gradient vanishes.
    #[error("reflection at a critical point: |gradient| = 0")]
    ReflectAtCriticalPoint,

    /// A query time lies outside the skeleton's span.
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    /// A stated precondition failed a grid check.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Invalid parameter for a builtin target or speed function.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A drift, potential or observable evaluated to NaN or infinity.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Discrete-chain state with no neighbors.
    #[error("state {0} has no neighbors")]
    IsolatedState(usize),

    /// The stationary linear system could not be solved reliably.
    #[error("singular or ill-conditioned generator matrix: {0}")]
    SingularSystem(String),

    /// Configuration error for the experiment runner.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
