use thiserror::Error;

use crate::families::Existence;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("dislocation family `{0}` is analytic-only (infinite total mass); it cannot be simulated event by event")]
    AnalyticOnly(String),

    #[error("hypothesis (H1) fails: {0} diverges")]
    H1Violated(String),

    #[error("stationary sampling refused: existence gate returned `{0}`")]
    GateRefused(Existence),

    #[error("particle count {count} exceeded the guard limit {limit}")]
    GuardBreach { count: usize, limit: usize },

    #[error("residual budget {delta} not met within age limit {max_age} (estimated residual {achieved})")]
    BudgetInfeasible { delta: f64, max_age: f64, achieved: f64 },

    #[error("indeterminate: {0}")]
    Indeterminate(String),

    #[error("assumption {which} fails: {integral} diverges")]
    AssumptionFailed { which: &'static str, integral: String },

    #[error("degenerate immigration measure (I = 0) is excluded")]
    DegenerateImmigration,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("need at least {need} samples per side, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("step budget of {0} grid steps exhausted before the stopping rule fired")]
    StepBudget(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> LabError {
    LabError::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}
