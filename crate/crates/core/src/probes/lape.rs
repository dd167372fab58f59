//! Language activation probability entropy over FFN neurons, and selection of
//! language-transferring neurons from its low-entropy tail.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ProbeError, REPORT_SCHEMA_VERSION};
use crate::model::{forward::forward_batch, CaptureFlags, Model};
use crate::toylang::LangId;

/// Tokens per language below which activation probabilities are too coarse.
pub const MIN_LAPE_TOKENS: usize = 10_000;
pub const DEFAULT_QUANTILE: f64 = 0.05;
/// Percentile of the candidate pool's probabilities used as the default
/// assignment threshold.
pub const DEFAULT_THRESHOLD_PERCENTILE: f64 = 0.90;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronRecord {
    /// Block index, 0-based.
    pub layer: usize,
    pub index: usize,
    /// Activation probability per language, in report language order.
    pub p: Vec<f64>,
    pub p_norm: Vec<f64>,
    /// `None` for dead neurons (never active in any language).
    pub entropy: Option<f64>,
}

impl NeuronRecord {
    pub fn is_dead(&self) -> bool {
        self.entropy.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapeReport {
    pub schema_version: u32,
    pub languages: Vec<LangId>,
    pub tokens_per_language: usize,
    pub neurons: Vec<NeuronRecord>,
}

impl LapeReport {
    pub fn dead_count(&self) -> usize {
        self.neurons.iter().filter(|n| n.is_dead()).count()
    }
}

/// Normalized probabilities and entropy in nats; `None` when every p is zero.
pub fn lape_from_probabilities(p: &[f64]) -> Option<(Vec<f64>, f64)> {
    let total: f64 = p.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let norm: Vec<f64> = p.iter().map(|v| v / total).collect();
    let h = norm.iter().filter(|v| **v > 0.0).map(|v| -v * v.ln()).sum::<f64>();
    Some((norm, h.max(0.0)))
}

/// Fraction of positions at which each FFN unit is positive, as
/// `[layer][unit]`, for one language's token stream.
pub fn activation_probabilities(model: &Model, tokens: &[u32]) -> Result<Vec<Vec<f64>>, ProbeError> {
    let c = &model.config;
    let (nl, f, ctx) = (c.n_layers, c.d_ffn, c.context_length);
    let mut active = vec![vec![0u64; f]; nl];
    let full = tokens.len() / ctx;
    const WINDOWS_PER_CALL: usize = 32;
    let mut chunks: Vec<(usize, usize)> = Vec::new();
    let mut w = 0;
    while w < full {
        let b = WINDOWS_PER_CALL.min(full - w);
        chunks.push((b, ctx));
        w += b;
    }
    if !tokens.len().is_multiple_of(ctx) {
        chunks.push((1, tokens.len() % ctx));
    }
    let mut off = 0;
    for (batch, seq) in chunks {
        let slice = &tokens[off..off + batch * seq];
        off += batch * seq;
        let cap = forward_batch(model, slice, batch, seq, CaptureFlags { residual: false, ffn: true })?
            .capture
            .expect("ffn captured");
        for (l, acts) in cap.ffn.iter().enumerate() {
            for row in acts.chunks_exact(f) {
                for (j, v) in row.iter().enumerate() {
                    if *v > 0.0 {
                        active[l][j] += 1;
                    }
                }
            }
        }
    }
    let n = tokens.len() as f64;
    Ok(active.into_iter().map(|row| row.into_iter().map(|a| a as f64 / n).collect()).collect())
}

/// LAPE for every FFN neuron from equally sized per-language token samples.
pub fn lape_scores(model: &Model, samples: &BTreeMap<LangId, Vec<u32>>) -> Result<LapeReport, ProbeError> {
    let mut sizes = samples.iter().map(|(l, s)| (l, s.len()));
    let Some((_, size)) = sizes.next() else {
        return Err(ProbeError::EmptySamples("<none>".into()));
    };
    for (lang, s) in samples {
        if s.is_empty() || s.len() < MIN_LAPE_TOKENS {
            return Err(ProbeError::EmptySamples(format!("{lang} ({} tokens, need {MIN_LAPE_TOKENS})", s.len())));
        }
        if s.len() != size {
            return Err(ProbeError::UnequalSamples(format!("{lang} has {} tokens, expected {size}", s.len())));
        }
    }
    let languages: Vec<LangId> = samples.keys().cloned().collect();
    let probs = samples
        .values()
        .map(|s| activation_probabilities(model, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(report_from_probabilities(languages, size, &probs))
}

/// Assembles a report from `probs[language][layer][unit]`.
pub fn report_from_probabilities(languages: Vec<LangId>, tokens: usize, probs: &[Vec<Vec<f64>>]) -> LapeReport {
    let mut neurons = Vec::new();
    for layer in 0..probs[0].len() {
        for index in 0..probs[0][layer].len() {
            let p: Vec<f64> = probs.iter().map(|lp| lp[layer][index]).collect();
            let (p_norm, entropy) = match lape_from_probabilities(&p) {
                Some((n, h)) => (n, Some(h)),
                None => (vec![0.0; p.len()], None),
            };
            neurons.push(NeuronRecord { layer, index, p, p_norm, entropy });
        }
    }
    LapeReport { schema_version: REPORT_SCHEMA_VERSION, languages, tokens_per_language: tokens, neurons }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronSelection {
    pub quantile: f64,
    /// Largest entropy admitted to the candidate pool.
    pub entropy_cutoff: f64,
    pub threshold: f64,
    /// `(layer, index)` of every candidate.
    pub candidates: Vec<(usize, usize)>,
    pub sets: BTreeMap<LangId, Vec<(usize, usize)>>,
    pub counts: BTreeMap<LangId, usize>,
}

/// Nearest-rank quantile of an ascending slice, `0 < q <= 1`.
fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

/// Candidates are the live neurons whose entropy is at or below the
/// nearest-rank `quantile` of live entropies. A candidate belongs to every
/// language whose activation probability reaches `threshold`; by default the
/// threshold is the 90th percentile of all candidates' probabilities.
pub fn select_transfer_neurons(report: &LapeReport, quantile: f64, threshold: Option<f64>) -> Result<NeuronSelection, ProbeError> {
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(ProbeError::OutOfRange { name: "quantile", value: quantile, range: "(0, 1)" });
    }
    if let Some(t) = threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(ProbeError::OutOfRange { name: "threshold", value: t, range: "[0, 1]" });
        }
    }
    let mut live: Vec<f64> = report.neurons.iter().filter_map(|n| n.entropy).collect();
    let empty_counts = report.languages.iter().map(|l| (l.clone(), 0)).collect::<BTreeMap<_, _>>();
    if live.is_empty() {
        return Ok(NeuronSelection {
            quantile,
            entropy_cutoff: 0.0,
            threshold: threshold.unwrap_or(1.0),
            candidates: Vec::new(),
            sets: report.languages.iter().map(|l| (l.clone(), Vec::new())).collect(),
            counts: empty_counts,
        });
    }
    live.sort_by(f64::total_cmp);
    let cutoff = nearest_rank(&live, quantile);
    let pool: Vec<&NeuronRecord> = report.neurons.iter().filter(|n| n.entropy.is_some_and(|h| h <= cutoff)).collect();
    let threshold = threshold.unwrap_or_else(|| {
        let mut ps: Vec<f64> = pool.iter().flat_map(|n| n.p.iter().copied()).collect();
        ps.sort_by(f64::total_cmp);
        nearest_rank(&ps, DEFAULT_THRESHOLD_PERCENTILE)
    });
    let mut sets: BTreeMap<LangId, Vec<(usize, usize)>> = report.languages.iter().map(|l| (l.clone(), Vec::new())).collect();
    for n in &pool {
        for (li, lang) in report.languages.iter().enumerate() {
            if n.p[li] >= threshold {
                sets.get_mut(lang).expect("language").push((n.layer, n.index));
            }
        }
    }
    let counts = sets.iter().map(|(l, s)| (l.clone(), s.len())).collect();
    Ok(NeuronSelection {
        quantile,
        entropy_cutoff: cutoff,
        threshold,
        candidates: pool.iter().map(|n| (n.layer, n.index)).collect(),
        sets,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn analytic_entropies() {
        let (_, h) = lape_from_probabilities(&[1.0, 0.0]).unwrap();
        assert_eq!(h, 0.0);
        let (_, h) = lape_from_probabilities(&[0.5, 0.5]).unwrap();
        assert!(close(h, std::f64::consts::LN_2));
        let (n, h) = lape_from_probabilities(&[0.5, 0.25, 0.25]).unwrap();
        assert_eq!(n, vec![0.5, 0.25, 0.25]);
        assert!((h - 1.0397207708399179).abs() < 1e-12);
        assert!(lape_from_probabilities(&[0.0, 0.0]).is_none());
    }

    fn langs() -> Vec<LangId> {
        vec!["A".into(), "B".into()]
    }

    fn report(ps: &[[f64; 2]]) -> LapeReport {
        let probs: Vec<Vec<Vec<f64>>> = (0..2).map(|l| vec![ps.iter().map(|p| p[l]).collect()]).collect();
        report_from_probabilities(langs(), 0, &probs)
    }

    #[test]
    fn single_lowest_neuron_assignment() {
        let r = report(&[[0.9, 0.0], [0.5, 0.4], [0.3, 0.3], [0.2, 0.25]]);
        let s = select_transfer_neurons(&r, 0.2, Some(0.5)).unwrap();
        assert_eq!(s.candidates, vec![(0, 0)]);
        assert_eq!(s.counts["A"], 1);
        assert_eq!(s.counts["B"], 0);
    }

    #[test]
    fn threshold_one_assigns_nothing_below_one() {
        let r = report(&[[0.99, 0.0], [0.5, 0.5]]);
        let s = select_transfer_neurons(&r, 0.5, Some(1.0)).unwrap();
        assert_eq!(s.counts.values().sum::<usize>(), 0);
    }

    #[test]
    fn dead_neurons_are_excluded() {
        let r = report(&[[0.0, 0.0], [0.0, 0.0], [0.6, 0.1], [0.3, 0.3]]);
        assert_eq!(r.dead_count(), 2);
        let s = select_transfer_neurons(&r, 0.5, None).unwrap();
        assert_eq!(s.candidates, vec![(0, 2)]);
        // Pool probabilities {0.1, 0.6}; 90th percentile by nearest rank is 0.6.
        assert_eq!(s.threshold, 0.6);
        assert_eq!(s.sets["A"], vec![(0, 2)]);
    }

    #[test]
    fn invalid_parameters() {
        let r = report(&[[0.5, 0.5]]);
        assert!(select_transfer_neurons(&r, 0.0, None).is_err());
        assert!(select_transfer_neurons(&r, 1.0, None).is_err());
        assert!(select_transfer_neurons(&r, 0.5, Some(1.5)).is_err());
    }

    #[test]
    fn language_permutation_equivariance() {
        let ps = [[0.9, 0.1], [0.2, 0.7], [0.5, 0.5], [0.05, 0.6]];
        let swapped: Vec<[f64; 2]> = ps.iter().map(|p| [p[1], p[0]]).collect();
        let (r, rs) = (report(&ps), report(&swapped));
        for (a, b) in r.neurons.iter().zip(&rs.neurons) {
            assert!(close(a.entropy.unwrap(), b.entropy.unwrap()));
        }
        let (s, ss) = (select_transfer_neurons(&r, 0.5, Some(0.5)).unwrap(), select_transfer_neurons(&rs, 0.5, Some(0.5)).unwrap());
        assert_eq!(s.sets["A"], ss.sets["B"]);
        assert_eq!(s.sets["B"], ss.sets["A"]);
    }

    #[test]
    fn scores_from_a_model() {
        let m = Model::init(ModelConfig { n_layers: 2, d_model: 16, n_heads: 2, d_ffn: 32, context_length: 32, vocab_size: 20 }, 1);
        let a: Vec<u32> = (0..MIN_LAPE_TOKENS as u32).map(|i| i % 10).collect();
        let b: Vec<u32> = (0..MIN_LAPE_TOKENS as u32).map(|i| 10 + i % 10).collect();
        let samples: BTreeMap<LangId, Vec<u32>> = [("A".to_string(), a), ("B".to_string(), b.clone())].into_iter().collect();
        let r = lape_scores(&m, &samples).unwrap();
        assert_eq!(r.neurons.len(), 64);
        for n in &r.neurons {
            assert!(n.p.iter().all(|p| (0.0..=1.0).contains(p)));
            if let Some(h) = n.entropy {
                assert!((0.0..=std::f64::consts::LN_2 + 1e-12).contains(&h));
            }
        }
        let short: BTreeMap<LangId, Vec<u32>> = [("A".to_string(), b[..100].to_vec())].into_iter().collect();
        assert!(lape_scores(&m, &short).is_err());
    }
}
