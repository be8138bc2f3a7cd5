use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("non-finite value from `{function}` at {location}")]
    Evaluation {
        function: &'static str,
        location: String,
    },

    #[error("advective CFL violated at time index {step}: Courant number {courant:.4} > 1")]
    StepSize { step: usize, courant: f64 },

    #[error("simulation produced a non-finite state at step {step} (path {path}, agent {agent})")]
    Simulation {
        step: usize,
        path: usize,
        agent: usize,
    },

    #[error("adjoint iteration did not converge after {iterations} sweeps (last change {residual:e})")]
    AdjointNotConverged { iterations: usize, residual: f64 },

    #[error("outer iteration {iteration}: {source}")]
    Outer {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn eval(function: &'static str, location: impl Into<String>) -> Self {
        Error::Evaluation {
            function,
            location: location.into(),
        }
    }
}

/// Returns `v` if finite, otherwise an evaluation error naming `function`.
pub(crate) fn finite(v: f64, function: &'static str, location: impl FnOnce() -> String) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::eval(function, location()))
    }
}
