use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Model(ltasep::Error),

    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl From<ltasep::Error> for CliError {
    fn from(e: ltasep::Error) -> Self {
        match e {
            ltasep::Error::InvalidSpec(_) | ltasep::Error::InvalidRates(_) | ltasep::Error::InvalidParameter(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Model(other),
        }
    }
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(ltasep::Error::NoConvergence { .. }) => 3,
            _ => 1,
        }
    }

    /// Machine-readable error identifier.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_error",
            CliError::Io { .. } => "io_error",
            CliError::Model(e) => match e {
                ltasep::Error::NoConvergence { .. } => "no_convergence",
                ltasep::Error::DensityDomain { .. } => "density_domain",
                ltasep::Error::CounterOverflow => "counter_overflow",
                ltasep::Error::Absorbing => "absorbing_state",
                ltasep::Error::StateSpaceTooLarge { .. } => "state_space_too_large",
                ltasep::Error::Reducible(_) => "reducible_chain",
                ltasep::Error::Solve(_) => "solve_failed",
                ltasep::Error::NegativeRadicand { .. } => "negative_radicand",
                ltasep::Error::NoRoot(_) => "no_root",
                ltasep::Error::StepTooLarge { .. } => "step_too_large",
                ltasep::Error::NoDirectPath { .. } => "no_direct_path",
                ltasep::Error::Inference(_) => "inference_error",
                ltasep::Error::Io(_) => "io_error",
                ltasep::Error::Csv(_) => "csv_error",
                ltasep::Error::Json(_) => "json_error",
                _ => "model_error",
            },
        }
    }
}
