use thiserror::Error;

pub type Result<T> = std::result::Result<T, RiskError>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Solver,
    Infeasible,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RiskError {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at line {line}, column {column} (field `{field}`): {message}")]
    Parse {
        line: usize,
        column: usize,
        field: String,
        message: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("inf-convolution infeasible along direction {direction}: recession sum {value}")]
    Feasibility { direction: f64, value: f64 },

    #[error("normalization error: {0}")]
    Normalization(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("unsupported operation: {0}")]
    Capability(String),

    #[error("arbitrage detected: strategy {theta:?} has nonnegative nonzero gain {gain:?}")]
    Arbitrage { theta: Vec<f64>, gain: Vec<f64> },

    #[error("linear program infeasible (Farkas multipliers {farkas:?})")]
    Infeasible { farkas: Vec<f64> },

    #[error("linear program unbounded (ray {ray:?})")]
    Unbounded { ray: Vec<f64> },

    #[error("no convergence after {iterations} iterations, last gap {gap}")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error("control too large at step {step}, node {node}: |mu| sqrt(dt) = {value}")]
    ControlTooLarge { step: usize, node: usize, value: f64 },

    #[error("internal consistency error: {0}")]
    Internal(String),
}

impl RiskError {
    pub fn class(&self) -> ErrorClass {
        match self {
            RiskError::Validation(_) | RiskError::Parse { .. } | RiskError::Normalization(_) => {
                ErrorClass::Validation
            }
            RiskError::Feasibility { .. }
            | RiskError::Arbitrage { .. }
            | RiskError::Infeasible { .. } => ErrorClass::Infeasible,
            _ => ErrorClass::Solver,
        }
    }

    /// Short machine-readable reason tag.
    pub fn reason(&self) -> &'static str {
        match self {
            RiskError::Validation(_) => "validation",
            RiskError::Parse { .. } => "parse",
            RiskError::Domain(_) => "domain",
            RiskError::Feasibility { .. } => "feasibility",
            RiskError::Normalization(_) => "normalization",
            RiskError::NoSolution(_) => "no_solution",
            RiskError::Capability(_) => "capability",
            RiskError::Arbitrage { .. } => "arbitrage",
            RiskError::Infeasible { .. } => "lp_infeasible",
            RiskError::Unbounded { .. } => "lp_unbounded",
            RiskError::NonConvergence { .. } => "non_convergence",
            RiskError::ControlTooLarge { .. } => "control_too_large",
            RiskError::Internal(_) => "internal",
        }
    }
}

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(RiskError::Validation(msg.into()))
}
