use thiserror::Error;

/// Errors raised by the model, design and simulation layers.
///
/// Check *failures* are not errors: they are reported as verdicts.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not of the required block form: {0}")]
    NotDecomposable(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("rank deficient: {what} has rank {rank}, expected {expected}")]
    RankDeficient {
        what: String,
        rank: usize,
        expected: usize,
    },

    #[error("certificate refused: {0}")]
    CertificateRefused(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("state blow-up at step {index} (t = {time}); last valid index is {last_valid}")]
    BlowUp {
        index: usize,
        last_valid: usize,
        time: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(context: impl Into<String>, expected: impl ToString, found: impl ToString) -> Error {
    Error::DimensionMismatch {
        context: context.into(),
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
