//! Decoder-only transformer in f64 with hand-written backpropagation,
//! deterministic training, checkpoints and activation capture.

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod forward;
mod kernels;
pub mod params;
pub mod train;

use thiserror::Error;

pub use checkpoint::{Checkpoint, RngState};
pub use config::ModelConfig;
pub use kernels::argmax;
pub use decode::{greedy_decode, Decoder};
pub use forward::{forward, loss_and_grad, ActivationCapture, CaptureFlags, ForwardOutput};
pub use params::{Layout, Model};
pub use train::{init_model, train, LossRecord, LossTrace, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence of length {len} exceeds context length {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("non-finite loss at step {step} (batch {batch_hash})")]
    NonFiniteLoss { step: u64, batch_hash: String },
    #[error("training stream too short: {len} tokens, need {need}")]
    StreamTooShort { len: usize, need: usize },
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Sink(String),
}
