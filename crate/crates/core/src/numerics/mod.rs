//! Numeric substrate shared by the models: tensors, activations, the fused
//! softmax cross-entropy, a named parameter store with Adam/SGD, checkpoints
//! and finite-difference gradient checking. Everything is `f64`.

mod checkpoint;
mod gradcheck;
mod loss;
mod params;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointFile, CHECKPOINT_MAGIC};
pub use gradcheck::{grad_check, relative_error, GradCheckConfig, GradCheckReport, ParamCheck};
pub use loss::{softmax_rows, softmax_xent};
pub use params::{
    adam_step, sgd_step, xavier_uniform, AdamConfig, GradView, Optimizer, ParamId, ParamStore,
    ParamView,
};
pub use tensor::{matmul, Tensor};

pub(crate) use tensor::{gemm_nn, gemm_nt, gemm_tn};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NumericsError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGrad(String),
    #[error("target label {label} at row {row} outside vocabulary of {vocab}")]
    LabelOutOfRange { row: usize, label: usize, vocab: usize },
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
