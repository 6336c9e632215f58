use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // parameter validation
    #[error("q = {q} is below 1/2 (pass --allow-low-q / allow_low_q to override)")]
    QTooSmall { q: f64 },
    #[error("{field} must be non-negative, got {value}")]
    NegativeCoefficient { field: &'static str, value: f64 },
    #[error("grid needs at least 8 interior points, got n = {n}")]
    BadGrid { n: usize },
    #[error("bad time parameters: {0}")]
    BadTime(String),
    #[error("invalid parameter {field}: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    // initial data
    #[error("initial state file {path:?} does not match the grid: {reason}")]
    FileMismatch { path: PathBuf, reason: String },
    #[error("mode k = {k} is not resolvable on n = {n} interior points (need 1 <= k <= n/4)")]
    BadMode { k: usize, n: usize },

    // linear algebra
    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("eigen-solver did not converge: {0}")]
    ConvergenceFailure(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    // dynamics / integration
    #[error("state contains non-finite entries at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("state with norm {norm} lies outside the ball of radius {radius}")]
    BallViolation { norm: f64, radius: f64 },
    #[error("the two states are identical")]
    IdenticalStates,
    #[error("damping substep did not converge after {iters} iterations")]
    SubstepDiverged { iters: usize },
    #[error("t_end = {t_end} is shorter than one step dt = {dt}")]
    EmptyRun { t_end: f64, dt: f64 },

    // envelopes and trace analysis
    #[error("envelopes require alpha > 0")]
    ZeroDamping,
    #[error("initial energy must be positive, got {0}")]
    NonPositiveInitialEnergy(f64),
    #[error("empty sequence")]
    EmptySequence,
    #[error("trace spans {span} time units, need at least {needed}")]
    TooShort { span: f64, needed: f64 },
    #[error("trace has {density:.2} samples per unit time, need at least {needed}")]
    TooSparse { density: f64, needed: f64 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { got: usize, needed: usize },
    #[error("non-positive energy {value} at t = {t}")]
    NonPositiveEnergy { t: f64, value: f64 },
    #[error("trace and envelope constants disagree on {0}")]
    ParamMismatch(&'static str),
    #[error("convergence study needs at least 3 strictly refined grids: {0}")]
    InsufficientGrids(String),

    // config / io
    #[error("parse error in {path:?}{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { path: PathBuf, line: Option<usize>, message: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid config: {0}")]
    Validation(Box<Error>),
    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
