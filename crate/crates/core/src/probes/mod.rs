//! Read-only instruments over checkpoints: the logit lens and working-language
//! proportions, LAPE language-transferring neurons, and the knowledge-transfer
//! proportion.

pub mod lape;
pub mod lens;
pub mod table;
pub mod transfer;
pub mod worklang;

use thiserror::Error;

use crate::model::ModelError;
use crate::toylang::LangError;

pub use lape::{lape_from_probabilities, lape_scores, select_transfer_neurons, LapeReport, NeuronRecord, NeuronSelection};
pub use lens::{lens_argmax, logit_lens};
pub use table::{IdentifierEntry, IdentifierTable};
pub use transfer::{empirical_subset, knowledge_transfer_proportion, SubsetMode, TransferReport};
pub use worklang::{default_exclude_top_k, generate_probe_prompts, worklang_from_counts, worklang_proportion, ProbePrompt, WorkLangReport};

/// Version tag written into every probe report.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("layer {layer} out of range (model has {n_layers} layers)")]
    LayerOutOfRange { layer: usize, n_layers: usize },
    #[error("position {pos} out of range ({positions} captured)")]
    PositionOutOfRange { pos: usize, positions: usize },
    #[error("exclude_top_k = {k} must be below the layer count {n_layers}")]
    ExcludeTooLarge { k: usize, n_layers: usize },
    #[error("invalid identifier table: {0}")]
    InvalidTable(String),
    #[error("no samples for language {0}")]
    EmptySamples(String),
    #[error("sample sizes differ across languages: {0}")]
    UnequalSamples(String),
    #[error("{name} = {value} is outside {range}")]
    OutOfRange { name: &'static str, value: f64, range: &'static str },
    #[error("transfer proportion is undefined when the solved set is empty")]
    EmptySolvedSet,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lang(#[from] LangError),
}
