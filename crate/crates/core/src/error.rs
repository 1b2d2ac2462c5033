use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("density {rho} outside [0, 1/{ell}]")]
    DensityDomain { rho: f64, ell: u32 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid rate profile: {0}")]
    InvalidRates(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("event counter overflow")]
    CounterOverflow,

    #[error("absorbing state reached: no event is enabled")]
    Absorbing,

    #[error("state space too large: {states} states (limit {limit})")]
    StateSpaceTooLarge { states: f64, limit: usize },

    #[error("reducible chain: {0}")]
    Reducible(String),

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("negative radicand {radicand:e} at x = {x} (J = {current}, lambda = {lambda})")]
    NegativeRadicand {
        radicand: f64,
        x: f64,
        current: f64,
        lambda: f64,
    },

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("step too large: current drift {drift:e} exceeds {tolerance:e}")]
    StepTooLarge { drift: f64, tolerance: f64 },

    #[error("characteristic reverses before reaching the target (J/lambda exceeds max H at x = {x})")]
    NoDirectPath { x: f64 },

    #[error("no convergence after {steps} steps (residual {residual:e})")]
    NoConvergence { steps: usize, residual: f64 },

    #[error("inference: {0}")]
    Inference(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
