//! Loss-based system proportion, token-share proportion, smoothing, the
//! target-corpus planner and the agreement check between estimators.

mod compare;
mod plan;
mod proportion;
mod series;

use thiserror::Error;

pub use compare::{compare_estimators, pearson, EstimatorComparison};
pub use plan::{plan_target_tokens, MixturePlan, PlanProvenance, TargetTokens};
pub use proportion::{
    loss_anchors, system_proportion_from_loss, system_proportion_from_mixture, LossAnchors, ProportionSource,
    SystemProportion, DEFAULT_INIT_WINDOW,
};
pub use series::{smooth_scores, ScoreRecord, ScoreSeries};

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("smoothing width {0} must be odd and at least 1")]
    BadWidth(usize),
    #[error("series of length {len} is shorter than the window {width}")]
    SeriesTooShort { len: usize, width: usize },
    #[error("trace has no entries in the initial window {0}..={1}")]
    WindowNotCovered(u64, u64),
    #[error("trace shows no learning: alpha {alpha} <= beta {beta}")]
    NoLearning { alpha: f64, beta: f64 },
    #[error("mixture has no tokens")]
    EmptyMixture,
    #[error("unknown language {0:?}")]
    UnknownLanguage(String),
    #[error("no scores")]
    EmptyScores,
    #[error("no trace entry at checkpoint step {0}")]
    MissingStep(u64),
    #[error("sequences must have equal length of at least 3 (got {0} and {1})")]
    BadLengths(usize, usize),
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("bad series file: {0}")]
    Format(String),
}
