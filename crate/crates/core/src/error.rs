use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("ill-conditioned system (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("non-finite value produced: {0}")]
    NonFinite(String),

    #[error("{} layer(s) failed: {}", .0.len(), format_failures(.0))]
    LayerFailures(Vec<LayerFailure>),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("zip error: {0}")]
    Zip(#[from] zip::result::ZipError),
}

/// One failed layer of a multi-layer run.
#[derive(Debug)]
pub struct LayerFailure {
    pub layer: String,
    pub error: SpaceError,
}

fn format_failures(failures: &[LayerFailure]) -> String {
    failures.iter().map(|f| format!("{}: {}", f.layer, f.error)).collect::<Vec<_>>().join("; ")
}

impl SpaceError {
    /// True for failures caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            SpaceError::IllConditioned { .. } | SpaceError::NonFinite(_) => true,
            SpaceError::LayerFailures(fs) => fs.iter().any(|f| f.error.is_numerical()),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, SpaceError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(SpaceError::InvalidInput(msg.into()))
}

pub(crate) fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(SpaceError::Format(msg.into()))
}
