use thiserror::Error;

pub type Result<T, E = ArmourError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ArmourError {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: expected rank >= {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },

    #[error("softmax: row {row} is fully masked")]
    InvalidMask { row: usize },

    #[error("invalid shape {shape:?}: {reason}")]
    Shape { shape: Vec<usize>, reason: String },

    #[error(
        "weights do not match variant `{variant}`: missing {missing:?}, unexpected {unexpected:?}"
    )]
    StrictWeights {
        variant: String,
        missing: Vec<String>,
        unexpected: Vec<String>,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid architecture spec: {0}")]
    Spec(String),

    #[error("malformed weight container: {0}")]
    Format(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
