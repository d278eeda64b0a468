use thiserror::Error;

/// Errors raised across the sampling and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HmcError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("target `{target}` does not support {capability}")]
    UnsupportedCapability {
        target: String,
        capability: &'static str,
    },

    #[error("trajectory diverged at leapfrog step {step}")]
    DivergedTrajectory { step: usize },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("singular jacobian: {0}")]
    SingularJacobian(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for HmcError {
    fn from(e: std::io::Error) -> Self {
        HmcError::Io(e.to_string())
    }
}

impl From<csv::Error> for HmcError {
    fn from(e: csv::Error) -> Self {
        HmcError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HmcError>;

pub(crate) fn precondition(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(HmcError::Precondition(msg()))
    }
}
