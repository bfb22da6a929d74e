use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: String, reason: String },

    /// A document parsed but does not match the schema. `path` is a
    /// dotted field path such as `challengers[2].points`.
    #[error("schema error at `{path}`: {reason}")]
    Schema { path: String, reason: String },

    #[error("scenario invariant violated: {0}")]
    Invariant(String),

    #[error("unsupported feature: {0}")]
    Unsupported(String),

    #[error("xml: {0}")]
    Xml(String),

    #[error("scenario generation exhausted after {attempts} draws ({kind})")]
    GenerationExhausted { kind: String, attempts: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite loss in update: {0}")]
    NonFiniteLoss(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn schema(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
