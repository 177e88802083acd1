use thiserror::Error;

/// Errors raised by model construction, evaluation and the statistics layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LhvError {
    /// A setting outside the finite list a model was built for.
    #[error("setting {angle} rad is not admissible for this model (side {side})")]
    InadmissibleSetting { angle: f64, side: &'static str },

    /// A precondition on an input value was violated.
    #[error("domain error: {0}")]
    Domain(String),

    /// The linear program behind a finite-setting model has no feasible point.
    #[error("linear program is infeasible: {0}")]
    Infeasible(String),

    /// No permutation of the Clauser-Horne form is violated at these settings.
    #[error("no CH violation is possible at these settings (best threshold {best:.6})")]
    NoViolation { best: f64 },

    /// An iterative numerical procedure failed.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl LhvError {
    pub fn domain(msg: impl Into<String>) -> Self {
        LhvError::Domain(msg.into())
    }

    /// True for errors caused by bad user input rather than numerical breakdown.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            LhvError::Domain(_) | LhvError::InadmissibleSetting { .. } | LhvError::NoViolation { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, LhvError>;
