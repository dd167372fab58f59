//! Working-language proportions: while the model writes an identifier keyword,
//! which language's equivalent keyword do the intermediate layers predict?

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lens::lens_argmax;
use super::table::IdentifierTable;
use super::{ProbeError, REPORT_SCHEMA_VERSION};
use crate::model::{argmax, Decoder, Model};
use crate::toylang::ast::standard_check_inputs;
use crate::toylang::render::{render_completion, render_prompt};
use crate::toylang::{AstSampler, Family, LangId, Vocabulary};

/// Prompts per identifier when none is configured.
pub const DEFAULT_PROMPTS_PER_IDENTIFIER: usize = 10;

/// Top layers skipped by default: the five-of-twenty-four ratio scaled to the
/// model's depth, at least one.
pub fn default_exclude_top_k(n_layers: usize) -> usize {
    ((n_layers as f64 * 5.0 / 24.0).round() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbePrompt {
    /// Target keyword this prompt is designed to elicit.
    pub identifier: String,
    /// `# <description> <define> x =` without BOS.
    pub tokens: Vec<String>,
}

/// Completion prompts whose solution uses each identifier's operation, drawn
/// from the elicited language's own program distribution.
pub fn generate_probe_prompts(
    family: &Family,
    table: &IdentifierTable,
    elicit: &str,
    per_identifier: usize,
    seed: u64,
    max_doc_tokens: usize,
) -> Result<Vec<ProbePrompt>, ProbeError> {
    let spec = family.language(elicit)?;
    let sampler = AstSampler::with_banned(family.banned_ops(elicit));
    let checks = standard_check_inputs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (kw, op) in table.target_ops(family, elicit)? {
        let mut seen = BTreeSet::new();
        let mut attempts = 0u64;
        while seen.len() < per_identifier {
            attempts += 1;
            if attempts > 1_000_000 {
                return Err(ProbeError::InvalidTable(format!("cannot build prompts that use {kw:?}")));
            }
            let p = sampler.sample(&mut rng, &checks);
            if !p.ops().contains(&op) {
                continue;
            }
            let tokens = render_prompt(&p, spec);
            if tokens.len() + render_completion(&p, spec).len() + 1 > max_doc_tokens || !seen.insert(tokens.clone()) {
                continue;
            }
            out.push(ProbePrompt { identifier: kw.clone(), tokens });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkLangReport {
    pub schema_version: u32,
    pub elicit_language: LangId,
    pub exclude_top_k: usize,
    /// Residual indices read through the lens (1 = after the first block).
    pub layers_probed: Vec<usize>,
    /// ε_i: attributed lens tokens per language, counted per (layer, position).
    pub counts: BTreeMap<LangId, u64>,
    /// R_i = ε_i / Σ ε; empty when nothing was attributed.
    pub proportions: BTreeMap<LangId, f64>,
    pub defined: bool,
    /// Counts per probed layer, in `layers_probed` order.
    pub per_layer: Vec<BTreeMap<LangId, u64>>,
    /// Decoding steps whose output was a target identifier.
    pub identifier_positions: u64,
    pub prompts: usize,
}

impl WorkLangReport {
    pub fn proportion(&self, lang: &str) -> Option<f64> {
        self.proportions.get(lang).copied()
    }
}

/// R_i from ε; `None` when Σ ε = 0.
pub fn worklang_from_counts(counts: &BTreeMap<LangId, u64>) -> Option<BTreeMap<LangId, f64>> {
    let total: u64 = counts.values().sum();
    (total > 0).then(|| counts.iter().map(|(l, c)| (l.clone(), *c as f64 / total as f64)).collect())
}

/// Greedily completes each prompt; whenever the model's next token is one of
/// the elicited language's identifier keywords, reads layers
/// `1..=n_layers - exclude_top_k` through the lens and attributes each lens
/// token that is an equivalent of that identifier. Other tokens are dropped.
pub fn worklang_proportion(
    model: &Model,
    vocab: &Vocabulary,
    prompts: &[ProbePrompt],
    table: &IdentifierTable,
    elicit: &str,
    exclude_top_k: usize,
) -> Result<WorkLangReport, ProbeError> {
    let n_layers = model.config.n_layers;
    if exclude_top_k >= n_layers {
        return Err(ProbeError::ExcludeTooLarge { k: exclude_top_k, n_layers });
    }
    let languages = table.languages();
    // target token id -> (equivalent token id -> language)
    let mut targets: BTreeMap<u32, BTreeMap<u32, LangId>> = BTreeMap::new();
    for e in table.entries(elicit) {
        let tid = vocab.id(&e.target_keyword).ok_or_else(|| ProbeError::InvalidTable(e.target_keyword.clone()))?;
        let mut eq = BTreeMap::new();
        for (lang, kw) in &e.equivalents {
            eq.insert(vocab.id(kw).ok_or_else(|| ProbeError::InvalidTable(kw.clone()))?, lang.clone());
        }
        targets.insert(tid, eq);
    }
    if targets.is_empty() {
        return Err(ProbeError::InvalidTable(format!("no identifiers for {elicit}")));
    }
    let layers: Vec<usize> = (1..=n_layers - exclude_top_k).collect();
    let zero: BTreeMap<LangId, u64> = languages.iter().map(|l| (l.clone(), 0)).collect();
    let mut counts = zero.clone();
    let mut per_layer = vec![zero; layers.len()];
    let mut identifier_positions = 0;
    let ctx = model.config.context_length;
    let stop = [vocab.eos(), vocab.id(";").unwrap_or(u32::MAX)];

    for prompt in prompts {
        let mut ids = vec![vocab.bos()];
        ids.extend(vocab.encode(&prompt.tokens)?);
        if ids.len() >= ctx {
            continue;
        }
        let mut dec = Decoder::new(model, true);
        let mut last = None;
        for t in &ids {
            last = Some(dec.step(*t)?);
        }
        while let Some(out) = last.take() {
            let next = argmax(&out.logits) as u32;
            if let Some(eq) = targets.get(&next) {
                identifier_positions += 1;
                for (slot, layer) in layers.iter().enumerate() {
                    let tok = lens_argmax(model, &out.residual[*layer]);
                    if let Some(lang) = eq.get(&tok) {
                        *counts.get_mut(lang).expect("table language") += 1;
                        *per_layer[slot].get_mut(lang).expect("table language") += 1;
                    }
                }
            }
            if stop.contains(&next) || dec.len() >= ctx {
                break;
            }
            last = Some(dec.step(next)?);
        }
    }
    let proportions = worklang_from_counts(&counts);
    Ok(WorkLangReport {
        schema_version: REPORT_SCHEMA_VERSION,
        elicit_language: elicit.to_string(),
        exclude_top_k,
        layers_probed: layers,
        counts,
        defined: proportions.is_some(),
        proportions: proportions.unwrap_or_default(),
        per_layer,
        identifier_positions,
        prompts: prompts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::toylang::build_vocabulary;

    fn counts(pairs: &[(&str, u64)]) -> BTreeMap<LangId, u64> {
        pairs.iter().map(|(l, c)| (l.to_string(), *c)).collect()
    }

    #[test]
    fn proportions_from_counts() {
        let r = worklang_from_counts(&counts(&[("A", 3), ("B", 1)])).unwrap();
        assert_eq!(r["A"], 0.75);
        let r = worklang_from_counts(&counts(&[("A", 7), ("B", 0)])).unwrap();
        assert_eq!(r["A"], 1.0);
        assert!(worklang_from_counts(&counts(&[("A", 0), ("B", 0)])).is_none());
    }

    #[test]
    fn default_exclusion_scales_with_depth() {
        assert_eq!(default_exclude_top_k(24), 5);
        assert_eq!(default_exclude_top_k(6), 1);
        assert_eq!(default_exclude_top_k(2), 1);
        assert_eq!(default_exclude_top_k(12), 3);
    }

    #[test]
    fn prompts_use_their_identifier() {
        let fam = Family::builtin();
        let table = IdentifierTable::from_family(&fam, &["B"]).unwrap();
        let prompts = generate_probe_prompts(&fam, &table, "B", 10, 1, 64).unwrap();
        assert_eq!(prompts.len(), 80);
        for p in &prompts {
            let op = fam.language("B").unwrap().op_for_keyword(&p.identifier).unwrap();
            assert!(p.tokens.contains(&op.name().to_string()));
        }
    }

    #[test]
    fn random_model_report_is_well_formed() {
        let fam = Family::builtin();
        let vocab = build_vocabulary(&fam.languages).unwrap();
        let mut cfg = ModelConfig::with_vocab(vocab.len());
        cfg.n_layers = 3;
        cfg.d_model = 16;
        cfg.n_heads = 2;
        cfg.d_ffn = 32;
        cfg.context_length = 64;
        let m = Model::init(cfg, 2);
        let table = IdentifierTable::from_family(&fam, &["A"]).unwrap();
        let prompts = generate_probe_prompts(&fam, &table, "A", 2, 1, 64).unwrap();
        let r = worklang_proportion(&m, &vocab, &prompts, &table, "A", 1).unwrap();
        assert_eq!(r.layers_probed, vec![1, 2]);
        let layer_sum: u64 = r.per_layer.iter().flat_map(|m| m.values()).sum();
        assert_eq!(layer_sum, r.counts.values().sum::<u64>());
        if r.defined {
            assert!((r.proportions.values().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(worklang_proportion(&m, &vocab, &prompts, &table, "A", 3).is_err());
    }
}
