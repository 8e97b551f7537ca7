//! Small differentiable numerics: tensors, a recording tape, distributions
//! and the Adam optimizer. Everything is `f64` and single-threaded per graph.

mod adam;
mod dist;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig, AdamState};
pub use dist::{
    categorical_entropy, categorical_entropy_of, categorical_sample, gaussian_entropy, gaussian_logprob,
    gaussian_logprob_entropy, softmax, CategoricalSample, LN_2PI,
};
pub use gradcheck::gradcheck;
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Param, ParamId, ParamSet, Tensor};

pub(crate) use tape::softmax_row;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("contract violation: {0}")]
    Contract(String),
}
