use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    /// du_l/du_r equals 1 while du_l/du_m does not, or a divisor flow is zero.
    #[error("inconsistent flow observation: {0}")]
    InconsistentObservation(String),

    /// The ray through a rotated carrier point does not meet the vertical plane in front of the camera.
    #[error("degenerate rotation: z_b - u*sin(theta) = {denominator} for u = {coordinate}")]
    DegenerateRotation { coordinate: f64, denominator: f64 },

    #[error("singular configuration: {0}")]
    SingularConfiguration(String),

    #[error("degenerate depth extent: all vertex depths equal ({0})")]
    DegenerateExtent(f64),

    #[error("parse error{}: {message}", location.as_ref().map(|l| format!(" at {l}")).unwrap_or_default())]
    Parse {
        location: Option<String>,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(expected: impl std::fmt::Display, actual: impl std::fmt::Display) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn parse(location: Option<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
