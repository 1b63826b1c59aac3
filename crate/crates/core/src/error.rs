use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval [{start}, {end}]: length must be positive")]
    InvalidInterval { start: f64, end: f64 },

    #[error("invalid annotation for video `{video_id}`: {reason}")]
    InvalidAnnotation { video_id: String, reason: String },

    #[error("invalid prediction for video `{video_id}`: {reason}")]
    InvalidPrediction { video_id: String, reason: String },

    #[error("parse error in {what}: {source}")]
    Parse {
        what: &'static str,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed container: {0}")]
    Container(String),

    #[error("taxonomy error: {0}")]
    Taxonomy(String),

    #[error("unknown video `{0}` in predictions")]
    UnknownVideo(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("instance too large for oracle: {0}")]
    OracleTooLarge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
