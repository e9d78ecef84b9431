use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument or configuration value is outside its valid domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data failed validation. `row` is 1-based and counts data rows
    /// (the header is not a row).
    #[error("invalid data at row {row}: {message}")]
    InvalidRow { row: usize, message: String },

    /// Input data failed validation without a specific row.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// Adaptive quadrature stopped before reaching its tolerance.
    #[error("quadrature did not converge: achieved {achieved:.3e}, requested {requested:.3e}")]
    Quadrature { achieved: f64, requested: f64 },

    /// A matrix that must be invertible was not.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// The pilot fit used for bias correction never had an invertible design.
    #[error("pilot fit is degenerate (no event time with invertible design at bandwidth {bandwidth}); increase the pilot bandwidth")]
    DegeneratePilot { bandwidth: f64 },

    /// A bias-rate regression could not distinguish the bias from zero.
    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether the error stems from numerical failure rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Quadrature { .. } | Error::Singular(_) | Error::DegeneratePilot { .. } | Error::Inconclusive(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
