//! Probe job for one checkpoint, plus the fixed inputs every checkpoint of a
//! run is probed with.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ProbeConfig;
use super::HarnessError;
use crate::model::Checkpoint;
use crate::probes::{
    default_exclude_top_k, generate_probe_prompts, knowledge_transfer_proportion, lape_scores, select_transfer_neurons,
    worklang_proportion, IdentifierTable, LapeReport, NeuronSelection, ProbeError, ProbePrompt, SubsetMode, TransferReport,
    WorkLangReport,
};
use crate::toylang::corpus::{generate_corpus, read_token_file, write_token_file};
use crate::toylang::{evaluate, generate_parallel_suites, EvalResult, EvalSuite, Family, LangId, Vocabulary};
use crate::util::{derive_seed, write_atomic};

/// Inputs shared by all probed checkpoints of a run.
#[derive(Debug, Clone)]
pub struct ProbeAssets {
    /// Language whose generation is probed and whose suite defines transfer.
    pub elicit: LangId,
    pub exclude_top_k: usize,
    pub suites: BTreeMap<LangId, EvalSuite>,
    pub table: IdentifierTable,
    pub prompts: Vec<ProbePrompt>,
    pub lape_samples: BTreeMap<LangId, Vec<u32>>,
    pub subset_mode: SubsetMode,
    /// Tasks of the elicited suite that need dominant-language knowledge.
    pub knowledge_subset: BTreeSet<u32>,
    pub lape_quantile: f64,
    pub lape_threshold: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AssetMeta {
    elicit: LangId,
    exclude_top_k: usize,
    subset_mode: SubsetMode,
    knowledge_subset: BTreeSet<u32>,
    lape_quantile: f64,
    lape_threshold: Option<f64>,
}

impl ProbeAssets {
    /// Everything is drawn from seeds derived from `seed`, so runs that share
    /// a probe seed (a sweep's cells, say) are probed with identical inputs.
    pub fn generate(
        family: &Family,
        vocab: &Vocabulary,
        cfg: &ProbeConfig,
        elicit: &str,
        n_layers: usize,
        context_length: usize,
        seed: u64,
    ) -> Result<Self, HarnessError> {
        let ids = family.ids();
        let langs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let suites =
            generate_parallel_suites(family, &langs, elicit, derive_seed(seed, "suites"), cfg.eval_tasks, Some(context_length))?;
        let table = IdentifierTable::from_family(family, &[elicit])?;
        table.validate(vocab)?;
        let prompts = generate_probe_prompts(
            family,
            &table,
            elicit,
            cfg.prompts_per_identifier,
            derive_seed(seed, "probe-prompts"),
            context_length,
        )?;
        let mut lape_samples = BTreeMap::new();
        for lang in &ids {
            let corpus = generate_corpus(vocab, family, lang, derive_seed(seed, &format!("lape/{lang}")), cfg.lape_tokens as u64)?;
            let mut tokens = corpus.tokens;
            tokens.truncate(cfg.lape_tokens);
            lape_samples.insert(lang.clone(), tokens);
        }
        let knowledge_subset = match cfg.transfer_mode {
            SubsetMode::ByConstruction => suites[elicit].knowledge_subset(),
            SubsetMode::Empirical => {
                let (Some(dom), Some(tgt)) = (&cfg.dominant_mono, &cfg.target_mono) else {
                    return Err(HarnessError::Config("empirical subset needs both monolingual checkpoints".into()));
                };
                empirical_knowledge_subset(&Checkpoint::load(dom)?, &Checkpoint::load(tgt)?, &suites, elicit, vocab)?
            }
        };
        Ok(ProbeAssets {
            elicit: elicit.to_string(),
            exclude_top_k: cfg.exclude_top_k.unwrap_or_else(|| default_exclude_top_k(n_layers)),
            suites,
            table,
            prompts,
            lape_samples,
            subset_mode: cfg.transfer_mode,
            knowledge_subset,
            lape_quantile: cfg.lape_quantile,
            lape_threshold: cfg.lape_threshold,
        })
    }

    /// Writes the assets under `dir` and returns the written paths relative to it.
    pub fn write(&self, dir: &Path, vocab: &Vocabulary) -> Result<Vec<String>, HarnessError> {
        let mut written = Vec::new();
        let mut put = |rel: String, bytes: &[u8]| -> Result<(), HarnessError> {
            let p = dir.join(&rel);
            write_atomic(&p, bytes).map_err(|e| HarnessError::io(&p, e))?;
            written.push(rel);
            Ok(())
        };
        for (lang, suite) in &self.suites {
            put(format!("suites/{lang}.json"), suite.to_json().as_bytes())?;
        }
        put("suites/identifiers.json".into(), self.table.to_json().as_bytes())?;
        put("suites/prompts.json".into(), &serde_json::to_vec_pretty(&self.prompts).expect("prompts serialize"))?;
        let meta = AssetMeta {
            elicit: self.elicit.clone(),
            exclude_top_k: self.exclude_top_k,
            subset_mode: self.subset_mode,
            knowledge_subset: self.knowledge_subset.clone(),
            lape_quantile: self.lape_quantile,
            lape_threshold: self.lape_threshold,
        };
        put("suites/probe_meta.json".into(), &serde_json::to_vec_pretty(&meta).expect("meta serializes"))?;
        for (lang, tokens) in &self.lape_samples {
            let rel = format!("suites/lape_{lang}.tok");
            let p = dir.join(&rel);
            write_token_file(&p, tokens, &vocab.content_hash()).map_err(|e| HarnessError::io(&p, e))?;
            written.push(rel);
        }
        Ok(written)
    }

    pub fn load(dir: &Path, vocab: &Vocabulary) -> Result<Self, HarnessError> {
        let read = |rel: &str| -> Result<String, HarnessError> {
            let p = dir.join(rel);
            std::fs::read_to_string(&p).map_err(|e| HarnessError::io(&p, e))
        };
        let bad = |rel: &str, e: String| HarnessError::Artifact(format!("{rel}: {e}"));
        let meta: AssetMeta =
            serde_json::from_str(&read("suites/probe_meta.json")?).map_err(|e| bad("probe_meta.json", e.to_string()))?;
        let table = IdentifierTable::from_json(&read("suites/identifiers.json")?)?;
        let prompts = serde_json::from_str(&read("suites/prompts.json")?).map_err(|e| bad("prompts.json", e.to_string()))?;
        let mut suites = BTreeMap::new();
        let mut lape_samples = BTreeMap::new();
        for lang in table.languages() {
            suites.insert(lang.clone(), EvalSuite::from_json(&read(&format!("suites/{lang}.json"))?)?);
            let tokens = read_token_file(&dir.join(format!("suites/lape_{lang}.tok")), &vocab.content_hash())?;
            lape_samples.insert(lang, tokens);
        }
        Ok(ProbeAssets {
            elicit: meta.elicit,
            exclude_top_k: meta.exclude_top_k,
            suites,
            table,
            prompts,
            lape_samples,
            subset_mode: meta.subset_mode,
            knowledge_subset: meta.knowledge_subset,
            lape_quantile: meta.lape_quantile,
            lape_threshold: meta.lape_threshold,
        })
    }
}

/// Tasks the dominant model solves in its language and the target model
/// misses in the elicited language, over parallel suites.
pub fn empirical_knowledge_subset(
    dominant_model: &Checkpoint,
    target_model: &Checkpoint,
    suites: &BTreeMap<LangId, EvalSuite>,
    elicit: &str,
    vocab: &Vocabulary,
) -> Result<BTreeSet<u32>, HarnessError> {
    let dominant = suites
        .keys()
        .find(|l| l.as_str() != elicit)
        .ok_or_else(|| HarnessError::Config("empirical subset needs a second language".into()))?;
    let solved_dom = evaluate(dominant_model, &suites[dominant], vocab)?.solved();
    let solved_tgt = evaluate(target_model, &suites[elicit], vocab)?.solved();
    Ok(crate::probes::empirical_subset(&solved_dom, &solved_tgt))
}

/// Everything measured at one checkpoint.
#[derive(Debug, Clone)]
pub struct CheckpointProbes {
    pub step: u64,
    pub evals: BTreeMap<LangId, EvalResult>,
    pub worklang: WorkLangReport,
    pub lape: LapeReport,
    pub selection: NeuronSelection,
    /// `None` when the model solved nothing in the elicited language.
    pub transfer: Option<TransferReport>,
}

pub fn probe_checkpoint(ckpt: &Checkpoint, vocab: &Vocabulary, assets: &ProbeAssets) -> Result<CheckpointProbes, HarnessError> {
    let mut evals = BTreeMap::new();
    for (lang, suite) in &assets.suites {
        evals.insert(lang.clone(), evaluate(ckpt, suite, vocab)?);
    }
    let worklang = worklang_proportion(&ckpt.model, vocab, &assets.prompts, &assets.table, &assets.elicit, assets.exclude_top_k)?;
    let lape = lape_scores(&ckpt.model, &assets.lape_samples)?;
    let selection = select_transfer_neurons(&lape, assets.lape_quantile, assets.lape_threshold)?;
    let solved = evals[&assets.elicit].solved();
    let transfer = match knowledge_transfer_proportion(&assets.knowledge_subset, &solved, assets.subset_mode) {
        Ok(t) => Some(t),
        Err(ProbeError::EmptySolvedSet) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(CheckpointProbes { step: ckpt.step, evals, worklang, lape, selection, transfer })
}

pub fn probe_dir(step: u64) -> String {
    format!("probes/step_{step:06}")
}

impl CheckpointProbes {
    /// Writes one JSON file per instrument; returns paths relative to `run_dir`.
    pub fn write(&self, run_dir: &Path) -> Result<Vec<String>, HarnessError> {
        let base = probe_dir(self.step);
        let mut files: Vec<(String, Vec<u8>)> = Vec::new();
        for (lang, r) in &self.evals {
            files.push((format!("{base}/eval_{lang}.json"), to_json(r)));
        }
        files.push((format!("{base}/worklang.json"), to_json(&self.worklang)));
        files.push((format!("{base}/lape.json"), to_json(&self.lape)));
        files.push((format!("{base}/selection.json"), to_json(&self.selection)));
        files.push((format!("{base}/transfer.json"), to_json(&self.transfer)));
        let mut written = Vec::new();
        for (rel, bytes) in files {
            let p = run_dir.join(&rel);
            write_atomic(&p, &bytes).map_err(|e| HarnessError::io(&p, e))?;
            written.push(rel);
        }
        Ok(written)
    }
}

pub(crate) fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec_pretty(v).expect("report serializes")
}
