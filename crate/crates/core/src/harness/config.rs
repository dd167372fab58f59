//! Experiment configuration, read from TOML with one section per module.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::model::{ModelConfig, TrainConfig};
use crate::probes::SubsetMode;
use crate::toylang::{Family, MixtureSpec};
use crate::util::sha256_hex;

/// Bumped whenever a change alters what a run produces, so cached runs from
/// older code are not mistaken for current ones.
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    MonoTrain,
    ContinualPretrain,
    MixtureSweep,
    FromScratchMix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LanguagesConfig {
    /// Family JSON file; the builtin family when absent.
    pub family: Option<PathBuf>,
    /// Builtin languages to include when no file is given.
    pub ids: Vec<String>,
    pub dominant: String,
    pub target: String,
}

impl Default for LanguagesConfig {
    fn default() -> Self {
        LanguagesConfig { family: None, ids: vec!["A".into(), "B".into()], dominant: "A".into(), target: "B".into() }
    }
}

/// Model shape without the vocabulary size, which comes from the family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ffn: usize,
    pub context_length: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let c = ModelConfig::with_vocab(0);
        ModelSection { n_layers: c.n_layers, d_model: c.d_model, n_heads: c.n_heads, d_ffn: c.d_ffn, context_length: c.context_length }
    }
}

impl ModelSection {
    pub fn with_vocab(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_layers: self.n_layers,
            d_model: self.d_model,
            n_heads: self.n_heads,
            d_ffn: self.d_ffn,
            context_length: self.context_length,
            vocab_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbeSchedule {
    /// `"all"` or `"none"`.
    Keyword(ScheduleKeyword),
    Steps(Vec<u64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKeyword {
    All,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub schedule: ProbeSchedule,
    /// Keep only the last `n` scheduled checkpoints.
    pub last: Option<usize>,
    pub eval_tasks: usize,
    /// Seed for suites, probe prompts and LAPE samples; defaults to the run seed.
    pub probe_seed: Option<u64>,
    pub prompts_per_identifier: usize,
    pub exclude_top_k: Option<usize>,
    pub lape_tokens: usize,
    pub lape_quantile: f64,
    pub lape_threshold: Option<f64>,
    pub transfer_mode: SubsetMode,
    /// Required for the empirical transfer subset: checkpoints of a
    /// dominant-language and a target-language monolingual model.
    pub dominant_mono: Option<PathBuf>,
    pub target_mono: Option<PathBuf>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            schedule: ProbeSchedule::Keyword(ScheduleKeyword::All),
            last: None,
            eval_tasks: crate::toylang::eval::DEFAULT_SUITE_SIZE,
            probe_seed: None,
            prompts_per_identifier: crate::probes::worklang::DEFAULT_PROMPTS_PER_IDENTIFIER,
            exclude_top_k: None,
            lape_tokens: crate::probes::lape::MIN_LAPE_TOKENS,
            lape_quantile: crate::probes::lape::DEFAULT_QUANTILE,
            lape_threshold: None,
            transfer_mode: SubsetMode::ByConstruction,
            dominant_mono: None,
            target_mono: None,
        }
    }
}

impl ProbeConfig {
    /// Scheduled steps among `saved`, in order.
    pub fn steps(&self, saved: &[u64]) -> Vec<u64> {
        let mut steps: Vec<u64> = match &self.schedule {
            ProbeSchedule::Keyword(ScheduleKeyword::All) => saved.to_vec(),
            ProbeSchedule::Keyword(ScheduleKeyword::None) => Vec::new(),
            ProbeSchedule::Steps(s) => saved.iter().copied().filter(|x| s.contains(x)).collect(),
        };
        if let Some(n) = self.last {
            steps = steps.split_off(steps.len().saturating_sub(n));
        }
        steps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Run the estimator after a continual run.
    pub enabled: bool,
    pub smoothing_width: usize,
    pub init_window: (u64, u64),
    /// Transition ends once the smoothed slope stays below this fraction of
    /// its peak magnitude...
    pub stage_slope_fraction: f64,
    /// ...for this many consecutive checkpoint intervals.
    pub stage_consecutive: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { enabled: true, smoothing_width: 5, init_window: crate::estimator::DEFAULT_INIT_WINDOW, stage_slope_fraction: 0.1, stage_consecutive: 3 }
    }
}

/// Dominant-language run that continual and sweep experiments start from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseConfig {
    /// Seed of the base run; derived from the experiment seed when absent.
    /// Experiments that set the same base seed share one cached base.
    #[serde(default)]
    pub seed: Option<u64>,
    pub mixture: MixtureSpec,
    #[serde(default)]
    pub train: TrainConfig,
    /// Where base runs are cached, keyed by their config hash.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Probe schedule for the base run; nothing by default.
    #[serde(default)]
    pub probes: Option<ProbeSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Target-language token budgets, one cell each.
    pub budgets: Vec<u64>,
    /// Dominant-language tokens mixed into every cell.
    pub dominant_tokens: u64,
    /// Checkpoints probed at the end of each cell.
    #[serde(default = "default_final_probes")]
    pub final_probes: usize,
    /// Completed continual run whose estimator output predicts the cells.
    #[serde(default)]
    pub reference_run: Option<PathBuf>,
}

fn default_final_probes() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub languages: LanguagesConfig,
    #[serde(default)]
    pub model: ModelSection,
    /// Training for the main run (each cell, for a sweep).
    #[serde(default)]
    pub train: TrainConfig,
    /// Data for the main run; unused by sweeps.
    #[serde(default)]
    pub mixture: Option<MixtureSpec>,
    #[serde(default)]
    pub base: Option<BaseConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub probes: ProbeConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Parses `text` after applying `section.key=value` overrides. Values are
    /// read as TOML and fall back to plain strings.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self, HarnessError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        for o in overrides {
            let (key, raw) = o.split_once('=').ok_or_else(|| HarnessError::Config(format!("override {o:?} is not key=value")))?;
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            let parts: Vec<&str> = key.trim().split('.').collect();
            let mut node = &mut table;
            for part in &parts[..parts.len() - 1] {
                node = node
                    .entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| HarnessError::Config(format!("override {key}: {part} is not a table")))?;
            }
            node.insert(parts[parts.len() - 1].to_string(), value);
        }
        Self::deserialize(table).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::load_with(path, &[])
    }

    pub fn load_with(path: &Path, overrides: &[String]) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_with(&text, overrides)?;
        // Relative paths inside the file are relative to the file.
        if let Some(dir) = path.parent() {
            let fix = |p: &mut Option<PathBuf>| {
                if let Some(q) = p.as_mut() {
                    if q.is_relative() {
                        *q = dir.join(&*q);
                    }
                }
            };
            fix(&mut cfg.languages.family);
            fix(&mut cfg.output_dir);
            fix(&mut cfg.probes.dominant_mono);
            fix(&mut cfg.probes.target_mono);
            if let Some(b) = cfg.base.as_mut() {
                fix(&mut b.cache_dir);
            }
            if let Some(s) = cfg.sweep.as_mut() {
                fix(&mut s.reference_run);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn family(&self) -> Result<Family, HarnessError> {
        match &self.languages.family {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?;
                Family::from_json(&text).map_err(|e| HarnessError::Config(e.to_string()))
            }
            None => {
                let ids: Vec<&str> = self.languages.ids.iter().map(String::as_str).collect();
                let fam = Family::builtin_with(&ids);
                if fam.languages.len() != ids.len() {
                    return Err(HarnessError::Config(format!("builtin languages are A, B and C; got {ids:?}")));
                }
                Ok(fam)
            }
        }
    }

    pub fn probe_seed(&self) -> u64 {
        self.probes.probe_seed.unwrap_or(self.seed)
    }

    /// Hash over everything that influences results; output locations excluded.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        if let Some(b) = c.base.as_mut() {
            b.cache_dir = None;
        }
        let body = serde_json::json!({ "artifact_version": ARTIFACT_VERSION, "config": c });
        sha256_hex(body.to_string().as_bytes())
    }

    pub fn validate(&self) -> Result<Family, HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let family = self.family()?;
        family.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let ids = family.ids();
        for l in [&self.languages.dominant, &self.languages.target] {
            if !ids.contains(l) {
                return bad(format!("language {l:?} is not in the family {ids:?}"));
            }
        }
        self.model.with_vocab(2).validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        // Configs are persisted as TOML, whose integers are signed 64-bit.
        let seeds = [Some(self.seed), Some(self.train.seed), self.probes.probe_seed, self.base.as_ref().and_then(|b| b.seed)];
        if let Some(s) = seeds.into_iter().flatten().find(|s| *s > i64::MAX as u64) {
            return bad(format!("seed {s} does not fit in a signed 64-bit integer"));
        }
        let check_mix = |m: &MixtureSpec| -> Result<(), HarnessError> {
            m.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
            match m.entries.keys().find(|l| !ids.contains(l)) {
                Some(l) => Err(HarnessError::Config(format!("mixture names unknown language {l:?}"))),
                None => Ok(()),
            }
        };
        let check_train = |t: &TrainConfig| -> Result<(), HarnessError> {
            if t.steps == 0 || t.batch_size == 0 {
                return Err(HarnessError::Config("steps and batch_size must be positive".into()));
            }
            Ok(())
        };
        check_train(&self.train)?;
        match self.kind {
            ExperimentKind::MonoTrain | ExperimentKind::FromScratchMix | ExperimentKind::ContinualPretrain => {
                let Some(m) = &self.mixture else {
                    return bad("this experiment needs a [mixture]".into());
                };
                check_mix(m)?;
                if self.kind == ExperimentKind::MonoTrain && m.entries.values().filter(|n| **n > 0).count() != 1 {
                    return bad("mono-train needs exactly one language in the mixture".into());
                }
            }
            ExperimentKind::MixtureSweep => {
                let Some(s) = &self.sweep else {
                    return bad("mixture-sweep needs a [sweep] section".into());
                };
                if s.budgets.is_empty() || s.budgets.contains(&0) {
                    return bad("sweep budgets must be a non-empty list of positive token counts".into());
                }
                if s.final_probes == 0 {
                    return bad("final_probes must be positive".into());
                }
            }
        }
        if matches!(self.kind, ExperimentKind::ContinualPretrain | ExperimentKind::MixtureSweep) {
            let Some(b) = &self.base else {
                return bad("this experiment needs a [base] run".into());
            };
            check_mix(&b.mixture)?;
            check_train(&b.train)?;
        }
        if let ProbeSchedule::Steps(steps) = &self.probes.schedule {
            let saved: Vec<u64> = (1..=self.train.steps).filter(|s| self.train.is_save_step(*s)).collect();
            if let Some(s) = steps.iter().find(|s| !saved.contains(s)) {
                return bad(format!("probe step {s} is not a checkpoint step"));
            }
        }
        let p = &self.probes;
        if p.eval_tasks == 0 || p.prompts_per_identifier == 0 {
            return bad("eval_tasks and prompts_per_identifier must be positive".into());
        }
        if !(p.lape_quantile > 0.0 && p.lape_quantile < 1.0) {
            return bad(format!("lape_quantile {} outside (0, 1)", p.lape_quantile));
        }
        if p.lape_threshold.is_some_and(|t| !(0.0..=1.0).contains(&t)) {
            return bad("lape_threshold outside [0, 1]".into());
        }
        if p.lape_tokens < crate::probes::lape::MIN_LAPE_TOKENS {
            return bad(format!("lape_tokens must be at least {}", crate::probes::lape::MIN_LAPE_TOKENS));
        }
        if p.exclude_top_k.is_some_and(|k| k >= self.model.n_layers) {
            return bad("exclude_top_k must be below n_layers".into());
        }
        if p.transfer_mode == SubsetMode::Empirical && (p.dominant_mono.is_none() || p.target_mono.is_none()) {
            return bad("the empirical transfer subset needs dominant_mono and target_mono checkpoints".into());
        }
        let w = self.estimator.smoothing_width;
        if w == 0 || w.is_multiple_of(2) {
            return bad(format!("smoothing_width {w} must be odd"));
        }
        Ok(family)
    }
}
