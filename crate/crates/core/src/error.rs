use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("unbounded support is not supported")]
    UnboundedSupport,

    #[error("empty interval [{a}, {b}]: zero probability mass")]
    EmptyInterval { a: f64, b: f64 },

    #[error("invalid reward function: {0}")]
    InvalidReward(String),

    #[error("reward class mismatch: expected {expected}, got {actual}")]
    ClassMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("singular virtual value at v = {v}: density is zero")]
    SingularVirtualValue { v: f64 },

    #[error("horizon {n} too small (need at least {min})")]
    HorizonTooSmall { n: usize, min: usize },

    #[error("non-finite function value {value} at v = {v}")]
    NonFinite { v: f64, value: f64 },

    #[error("valuation {v} outside support [{lo}, {hi}]")]
    OutOfSupport { v: f64, lo: f64, hi: f64 },

    #[error("invalid payment schedule: {0}")]
    InvalidSchedule(String),

    #[error("malformed menu: {0}")]
    MalformedMenu(String),

    #[error("IR violation: no feasible entry for v = {v} and no outside option")]
    IrViolation { v: f64 },

    #[error("invalid cost function: {0}")]
    InvalidCost(String),

    #[error("invalid reward table: {0}")]
    InvalidRewardTable(String),

    #[error("threshold mechanism requires i.i.d. agents")]
    NotIid,

    #[error("setting too large for brute force: {0}")]
    TooLarge(String),

    #[error("invalid configuration at {path}: {msg}")]
    Config { path: String, msg: String },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// Errors caused by user input rather than by a broken internal invariant.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Invariant(_))
    }

    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
