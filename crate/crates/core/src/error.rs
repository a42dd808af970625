use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FragError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("resource limit: {what} exceeded {limit}; raise the dust threshold (currently {dust:e})")]
    ResourceLimit { what: String, limit: usize, dust: f64 },

    #[error("iteration diverged after {iterations} sweeps (last residual {last:e})")]
    IterationDiverged { iterations: usize, last: f64, history: Vec<f64> },

    #[error("grid too small: mass {mass:e} beyond x_max = {x_max}")]
    GridTooSmall { mass: f64, x_max: f64 },

    #[error("evaluation at unsupported point {0}")]
    UnsupportedPoint(f64),

    #[error("rejection budget of {attempts} attempts exhausted (running acceptance {acceptance:e})")]
    RejectionBudget { attempts: usize, acceptance: f64 },

    #[error("insufficient data: need {need}, have {have}")]
    InsufficientData { need: usize, have: usize },

    #[error("chain too short: S_last = {s_last} does not exceed r = {r}")]
    ChainTooShort { s_last: f64, r: f64 },

    #[error("query time {t} outside ladder range [{lo}, {hi})")]
    WindowExceeded { t: f64, lo: f64, hi: f64 },

    #[error("precision: eps = {eps:e} below the truncation scale {floor:e} set by dust threshold {dust:e}")]
    Precision { eps: f64, floor: f64, dust: f64 },

    #[error("time {t} lies outside the resolved window [{from}, {to}]")]
    Unresolved { t: f64, from: f64, to: f64 },

    #[error("time horizon {t_max} too small: fitted tail {tail:.3e} exceeds 1% of the estimate {estimate:.3e}")]
    TailBudget { t_max: f64, tail: f64, estimate: f64 },

    #[error("law is geometric with ratio {ratio}: limit theorems need a non-arithmetic law (use subsequence mode)")]
    ArithmeticLaw { ratio: f64 },
}

impl FragError {
    /// Process exit status used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            FragError::InvalidArgument(_) | FragError::InvalidConfiguration(_) | FragError::ArithmeticLaw { .. } => 2,
            FragError::ResourceLimit { .. } | FragError::RejectionBudget { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, FragError>;
