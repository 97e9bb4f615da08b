use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("non-finite log density at sample index {index} of batch `{batch}`")]
    Evaluation { batch: String, index: usize },
    #[error("non-finite value in flow layer {layer}")]
    Flow { layer: usize },
    #[error("non-finite gradient in parameter block `{block}`")]
    Gradient { block: String },
    #[error("estimated divergence saturated at {value}; RE² is unbounded")]
    Saturated { value: f64 },
    #[error("training diverged after epoch {epoch}: objective non-finite for 3 consecutive epochs")]
    Diverged { epoch: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("density `{0}` has no exact sampler")]
    NoSampler(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
