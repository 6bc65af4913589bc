use thiserror::Error;

/// Errors reported by path construction, scheme guards, oracles, and studies.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("{what} must be positive, got {value}")]
    NonpositiveParameter { what: &'static str, value: f64 },

    #[error("invalid parameter {what}: {why}")]
    InvalidParameter { what: &'static str, why: String },

    #[error("no admissible regularization width in (0, 1): {0}")]
    NoRoot(String),

    #[error("driver sampled too coarsely: stopping-time detection needs resolution <= {required:.3e}, path has gaps up to {actual:.3e}")]
    FineResolutionTooCoarse { required: f64, actual: f64 },

    #[error("CFL violation on interval {interval}: |increment| / (lambda0 h) = {ratio:.6}")]
    CflViolation { interval: usize, ratio: f64 },

    #[error("path is not affine on partition interval {interval}")]
    NotAffine { interval: usize },

    #[error("monotonicity guard failed: {0}")]
    GuardViolation(String),

    #[error("Hamiltonian '{name}' rejected: {why}")]
    HamiltonianRejected { name: String, why: String },

    #[error("Legendre transform unavailable: {0}")]
    MissingLegendre(String),

    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("outside characteristics validity window: {0}")]
    WindowExceeded(String),

    #[error("budget exceeded: requires {required} node-steps, cap is {cap}")]
    BudgetExceeded { required: u128, cap: u128 },

    #[error("premise violation: {0}")]
    PremiseViolation(String),

    #[error("unknown catalogue id '{0}'")]
    UnknownId(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
