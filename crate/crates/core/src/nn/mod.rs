//! Small feed-forward network engine: dense, 1-D convolution, upsampling,
//! relayout, dropout and softmax heads, with hand-written backpropagation,
//! Adam, and a central-difference gradient checker.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod loss;
mod network;
mod params;
mod spec;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, GradCheckConfig, GradCheckReport};
pub use loss::{cross_entropy, cross_entropy_with_grad, PROB_CLAMP};
pub use network::{backward, forward, ForwardPass, Gradients, Mode};
pub use params::{init_parameters, LayerParams, ParameterSet};
pub use spec::{Activation, HeadSpec, LayerSpec, Location, NetworkSpec, ParamGroups, PlannedLayer};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value produced by layer {layer}")]
    NonFinite { layer: usize },
    #[error("non-finite gradient entries")]
    NonFiniteGradient,
    #[error("empty batch")]
    EmptyBatch,
    #[error("forward cache does not match the network")]
    CacheMismatch,
    #[error("finite-difference epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("corrupted checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint network spec differs from the expected one")]
    SpecMismatch,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
