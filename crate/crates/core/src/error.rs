use thiserror::Error;

/// Errors raised by the workbench. Variants map onto the CLI's exit codes:
/// everything here is a runtime/domain failure (exit 1) except `Usage`.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("structural error: {0}")]
    Structure(String),
    #[error("caustic: sin(omega*T) = {sin:e} vanishes at omega*T = {phase}")]
    Caustic { phase: f64, sin: f64 },
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("grid too small: edge amplitude {edge_amplitude:e} exceeds {threshold:e}")]
    GridTooSmall { edge_amplitude: f64, threshold: f64 },
    #[error("quadrature did not converge: residual estimate {residual:e}")]
    Quadrature { residual: f64 },
    #[error("usage: {0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn structure(msg: impl Into<String>) -> Self {
        Error::Structure(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn ensure_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite, got {x}")))
    }
}

pub(crate) fn ensure_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {x}")))
    }
}
