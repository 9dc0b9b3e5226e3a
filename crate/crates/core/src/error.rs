use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing source joint `{joint}`")]
    MissingJoint { joint: String },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate pose{}: {reason}", frame.map(|f| format!(" at frame {f}")).unwrap_or_default())]
    DegeneratePose { frame: Option<usize>, reason: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("non-finite {what} at epoch {epoch}, step {step}")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        step: usize,
    },

    #[error("empty dataset: {0}")]
    Empty(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    /// Re-tag a pose error with the frame it came from.
    pub(crate) fn at_frame(self, frame: usize) -> Self {
        match self {
            Error::DegeneratePose { reason, .. } => Error::DegeneratePose {
                frame: Some(frame),
                reason,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
