use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {matrix} at row {row}, column {col}")]
    NonFiniteInput {
        matrix: &'static str,
        row: usize,
        col: usize,
    },

    #[error("non-finite residual at row {row}")]
    NonFiniteResidual { row: usize },

    #[error("unknown model specification '{0}'")]
    UnknownModel(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("model declares intercept parameters; they are not identified by the MDD objective, use estimate_two_step")]
    InterceptsNotIdentified,

    #[error("model has no intercept partition; two-step estimation requires one")]
    MissingInterceptPartition,

    #[error("{0}")]
    Singular(String),

    #[error("quadrature: {0}")]
    Quadrature(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
