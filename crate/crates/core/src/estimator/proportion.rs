use serde::{Deserialize, Serialize};

use super::EstimatorError;
use crate::model::LossTrace;
use crate::toylang::MixtureSpec;

/// Steps whose losses are averaged into α, inclusive.
pub const DEFAULT_INIT_WINDOW: (u64, u64) = (90, 100);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProportionSource {
    LossBased,
    WorklangBased,
    /// Token share of a language in a mixture.
    TokenShare,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemProportion {
    pub value: f64,
    pub source: ProportionSource,
    /// The unclamped value fell outside [0, 1].
    pub clamped: bool,
}

impl SystemProportion {
    pub fn worklang(r: f64) -> Self {
        SystemProportion { value: r.clamp(0.0, 1.0), source: ProportionSource::WorklangBased, clamped: !(0.0..=1.0).contains(&r) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossAnchors {
    /// Mean loss over the initial window.
    pub alpha: f64,
    /// Lowest loss in the trace.
    pub beta: f64,
    pub window: (u64, u64),
}

pub fn loss_anchors(trace: &LossTrace, window: (u64, u64)) -> Result<LossAnchors, EstimatorError> {
    let early: Vec<f64> = trace
        .entries
        .iter()
        .filter(|e| (window.0..=window.1).contains(&e.step))
        .map(|e| e.loss)
        .collect();
    if early.is_empty() {
        return Err(EstimatorError::WindowNotCovered(window.0, window.1));
    }
    let alpha = early.iter().sum::<f64>() / early.len() as f64;
    let beta = trace.entries.iter().map(|e| e.loss).fold(f64::INFINITY, f64::min);
    if alpha <= beta {
        return Err(EstimatorError::NoLearning { alpha, beta });
    }
    Ok(LossAnchors { alpha, beta, window })
}

/// `(ℓ − β) / (α − β)`, clamped to [0, 1].
pub fn system_proportion_from_loss(loss: f64, anchors: &LossAnchors) -> SystemProportion {
    let raw = (loss - anchors.beta) / (anchors.alpha - anchors.beta);
    SystemProportion { value: raw.clamp(0.0, 1.0), source: ProportionSource::LossBased, clamped: !(0.0..=1.0).contains(&raw) }
}

/// `η_i / Σ_j η_j`.
pub fn system_proportion_from_mixture(mixture: &MixtureSpec, language: &str) -> Result<SystemProportion, EstimatorError> {
    let total: u64 = mixture.entries.values().sum();
    if total == 0 {
        return Err(EstimatorError::EmptyMixture);
    }
    let eta = mixture.entries.get(language).ok_or_else(|| EstimatorError::UnknownLanguage(language.to_string()))?;
    Ok(SystemProportion { value: *eta as f64 / total as f64, source: ProportionSource::TokenShare, clamped: false })
}
