use thiserror::Error;

/// Errors raised by the library.
///
/// Validation findings that are data (for example the per-row findings of
/// [`crate::mdp::validate_mdp`]) are returned as reports, not as errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid layout: {0}")]
    Layout(String),

    #[error("chain is not ergodic ({0}); run check_ergodic before analysis")]
    NotErgodic(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_index(what: &'static str, index: usize, size: usize) -> Result<()> {
    if index < size {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { what, index, size })
    }
}
