//! Agents that learn to communicate by drawing: a population of
//! sender/receiver pairs trained with PPO on an image bandit, plus the
//! rendering, inference and run-artifact machinery around them.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod app;
pub mod data;
pub mod game;
pub mod image;
pub mod inference;
pub mod learner;
pub mod numerics;
pub mod probe;
pub mod render;

pub use agents::{ActionSpace, ClassifierNet, ConvArch, ReceiverNet, SenderArch, SenderNet};
pub use app::{AppError, Checkpoint, TrainOptions};
pub use data::{Dataset, DatasetSpec, LabeledImage, Source};
pub use game::{EpochMetrics, Game, Payoff, Phase, Regime, RunConfig};
pub use image::Image;
pub use inference::{InferenceConfig, SensitivityTable};
pub use learner::{PpoConfig, RolloutBuffer, Transition};
pub use numerics::{NumericsError, Tensor};
pub use render::{CanvasSpec, SplineParams};
