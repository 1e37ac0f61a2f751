use thiserror::Error;

#[derive(Debug, Error)]
pub enum NdError {
    #[error("shape {shape:?} holds {expected} elements but {actual} values were given")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("zero-sized extent in shape {0:?}")]
    ZeroExtent(Vec<usize>),
    #[error("shape mismatch at node `{node}`: {detail}")]
    ShapeMismatch { node: String, detail: String },
    #[error("invalid hyperparameter for node `{node}`: {detail}")]
    InvalidHyperparam { node: String, detail: String },
    #[error("non-finite activation produced by node `{node}`")]
    NonFiniteActivation { node: String },
    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },
    #[error("unknown node `{name}`; available: {available}")]
    UnknownNode { name: String, available: String },
    #[error("duplicate node name `{0}`")]
    DuplicateNode(String),
    #[error("backward called before forward")]
    BackwardBeforeForward,
    #[error("fan_in and fan_out must be at least 1 (got {fan_in}, {fan_out})")]
    ZeroFan { fan_in: usize, fan_out: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NdError>;
