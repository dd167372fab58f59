use serde::{Deserialize, Serialize};

use super::proportion::{loss_anchors, system_proportion_from_loss, LossAnchors, SystemProportion};
use super::series::{smooth_scores, ScoreSeries};
use super::EstimatorError;
use crate::model::LossTrace;
use crate::toylang::LangId;

/// Planned corpus size for the target language.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetTokens {
    Tokens(f64),
    /// The best state needs no dominant-language system: use the whole corpus.
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanProvenance {
    /// Index of the chosen checkpoint in the score series.
    pub checkpoint_index: usize,
    pub checkpoint_step: u64,
    pub loss: f64,
    pub proportion: SystemProportion,
    pub smoothed_score: f64,
    pub smoothing_width: usize,
    pub anchors: LossAnchors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePlan {
    pub dominant_language: LangId,
    pub target_language: LangId,
    pub eta_dominant: f64,
    pub eta_target: TargetTokens,
    pub provenance: PlanProvenance,
}

/// Picks the checkpoint with the best smoothed score (earliest on ties),
/// converts the trace loss at that step into the dominant system's share 𝒫,
/// and returns the target budget `η_dom / 𝒫 − η_dom` that gives the
/// dominant language exactly that token share.
pub fn plan_target_tokens(
    trace: &LossTrace,
    scores: &ScoreSeries,
    eta_dominant: f64,
    width: usize,
    init_window: (u64, u64),
    languages: (&str, &str),
) -> Result<MixturePlan, EstimatorError> {
    if scores.is_empty() {
        return Err(EstimatorError::EmptyScores);
    }
    let anchors = loss_anchors(trace, init_window)?;
    let smoothed = smooth_scores(scores, width)?;
    let mut j = 0;
    for (i, e) in smoothed.entries.iter().enumerate() {
        if e.score > smoothed.entries[j].score {
            j = i;
        }
    }
    let step = smoothed.entries[j].step;
    let loss = trace.loss_at(step).ok_or(EstimatorError::MissingStep(step))?;
    let proportion = system_proportion_from_loss(loss, &anchors);
    let eta_target = if proportion.value > 0.0 {
        TargetTokens::Tokens(eta_dominant / proportion.value - eta_dominant)
    } else {
        TargetTokens::Unbounded
    };
    Ok(MixturePlan {
        dominant_language: languages.0.to_string(),
        target_language: languages.1.to_string(),
        eta_dominant,
        eta_target,
        provenance: PlanProvenance {
            checkpoint_index: j,
            checkpoint_step: step,
            loss,
            proportion,
            smoothed_score: smoothed.entries[j].score,
            smoothing_width: width,
            anchors,
        },
    })
}
