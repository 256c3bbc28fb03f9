use thiserror::Error;

/// Errors raised across the library.
///
/// Variants are grouped so the CLI can map them onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// A coordinate or index outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid hyperparameters or model configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("input error: {0}")]
    Input(String),

    /// The Hawkes model is not stationary, so its average intensity is undefined.
    #[error("model is not stationary (spectral radius of D*A = {0:.6} >= 1)")]
    NotStationary(f64),

    /// An observed event has zero conditional intensity.
    #[error("degenerate likelihood: {0} event(s) with zero intensity")]
    DegenerateLikelihood(usize),

    /// The Gibbs kernel underflowed; a larger regularization is needed.
    #[error("sinkhorn kernel underflow at beta = {beta}; try beta >= {suggested}")]
    KernelUnderflow { beta: f64, suggested: f64 },

    /// Reading or writing JSON documents failed.
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
