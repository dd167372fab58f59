//! Runs an experiment into a directory, recording every artifact with its hash.
//!
//! Layout of a run directory:
//!
//! ```text
//! manifest.json  config.toml  family.json  vocab.json
//! checkpoints/step_NNNNNN.ckpt   trace.jsonl
//! suites/        fixed probe inputs (eval suites, prompts, LAPE samples)
//! probes/step_NNNNNN/{eval_<lang>,worklang,lape,selection,transfer}.json
//! scores.jsonl  plan.json  comparison.json      continual runs
//! sweep.json  cells/<target>_<budget>/          sweeps
//! report/        CSVs and summary.json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{BaseConfig, EstimatorConfig, ExperimentConfig, ExperimentKind, ProbeConfig, ProbeSchedule, ScheduleKeyword};
use super::manifest::{unix_now, RunManifest, RunStatus, StageFailure, MANIFEST_FILE};
use super::probe::{probe_checkpoint, to_json, ProbeAssets};
use super::HarnessError;
use crate::estimator::{
    compare_estimators, loss_anchors, plan_target_tokens, smooth_scores, system_proportion_from_loss, EstimatorComparison,
    ScoreSeries, SystemProportion,
};
use crate::model::{init_model, train, Checkpoint, LossTrace, TrainConfig};
use crate::toylang::{build_mixture, build_vocabulary, Family, LangId, MixtureSpec, Vocabulary};
use crate::util::{derive_config_seed, derive_seed, write_atomic};

/// Directories and files a run owns; cleared before a recomputation.
const OWNED_DIRS: [&str; 4] = ["checkpoints", "probes", "suites", "report"];
const OWNED_FILES: [&str; 9] = [
    "config.toml",
    "family.json",
    "vocab.json",
    "trace.jsonl",
    "scores.jsonl",
    "plan.json",
    "comparison.json",
    "sweep.json",
    MANIFEST_FILE,
];

pub fn checkpoint_path(step: u64) -> String {
    format!("checkpoints/step_{step:06}.ckpt")
}

/// Runs `cfg` into its `output_dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunManifest, HarnessError> {
    let dir = cfg.output_dir.clone().ok_or_else(|| HarnessError::Config("output_dir is not set".into()))?;
    run_in(cfg, &dir)
}

/// Runs `cfg` into `dir`. A completed run with the same config hash and intact
/// artifacts is returned as is; anything else is cleared and recomputed.
pub fn run_in(cfg: &ExperimentConfig, dir: &Path) -> Result<RunManifest, HarnessError> {
    let family = cfg.validate()?;
    let hash = cfg.content_hash();
    if let Ok(mut m) = RunManifest::load(dir) {
        if m.config_hash == hash && m.status == RunStatus::Complete && m.verify(dir).is_ok() {
            log::info!("{}: reusing completed run", dir.display());
            m.cached = true;
            return Ok(m);
        }
    }
    clear_run(dir)?;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let vocab = build_vocabulary(&family.languages).map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut runner = Runner { cfg, dir, family, vocab, manifest: RunManifest::new(hash, cfg.kind) };
    let result = runner.execute();
    let mut manifest = runner.manifest;
    manifest.finished_at = Some(unix_now());
    match result {
        Ok(()) => {
            manifest.status = RunStatus::Complete;
            manifest.save(dir)?;
            Ok(manifest)
        }
        Err(e) => {
            let e = e.in_stage("run");
            let (stage, message) = match &e {
                HarnessError::Stage { stage, message } => (stage.clone(), message.clone()),
                other => ("config".to_string(), other.to_string()),
            };
            manifest.status = RunStatus::Failed;
            manifest.failure = Some(StageFailure { stage, message });
            manifest.save(dir)?;
            Err(e)
        }
    }
}

fn clear_run(dir: &Path) -> Result<(), HarnessError> {
    for d in OWNED_DIRS {
        let p = dir.join(d);
        if p.exists() {
            std::fs::remove_dir_all(&p).map_err(|e| HarnessError::io(&p, e))?;
        }
    }
    for f in OWNED_FILES {
        let p = dir.join(f);
        if p.exists() {
            std::fs::remove_file(&p).map_err(|e| HarnessError::io(&p, e))?;
        }
    }
    Ok(())
}

/// Language whose generation is probed: the trained language of a
/// monolingual run, the target otherwise.
pub fn elicit_language(cfg: &ExperimentConfig) -> LangId {
    if cfg.kind == ExperimentKind::MonoTrain {
        if let Some((lang, _)) = cfg.mixture.as_ref().and_then(|m| m.entries.iter().find(|(_, n)| **n > 0)) {
            return lang.clone();
        }
    }
    cfg.languages.target.clone()
}

/// Config of the run a continual experiment or sweep starts from.
pub fn base_config(cfg: &ExperimentConfig, base: &BaseConfig) -> ExperimentConfig {
    let single = base.mixture.entries.values().filter(|n| **n > 0).count() == 1;
    let probes = match &base.probes {
        None | Some(ProbeSchedule::Keyword(ScheduleKeyword::None)) => {
            ProbeConfig { schedule: ProbeSchedule::Keyword(ScheduleKeyword::None), ..ProbeConfig::default() }
        }
        Some(schedule) => ProbeConfig { schedule: schedule.clone(), last: None, probe_seed: Some(cfg.probe_seed()), ..cfg.probes.clone() },
    };
    ExperimentConfig {
        kind: if single { ExperimentKind::MonoTrain } else { ExperimentKind::FromScratchMix },
        seed: base.seed.unwrap_or_else(|| derive_config_seed(cfg.seed, "base")),
        output_dir: None,
        languages: cfg.languages.clone(),
        model: cfg.model,
        train: base.train.clone(),
        mixture: Some(base.mixture.clone()),
        base: None,
        sweep: None,
        probes,
        estimator: EstimatorConfig::default(),
    }
}

/// Where a base run lives: `<cache_dir>/<hash prefix>`, the cache defaulting
/// to `base-cache` inside the experiment directory.
pub fn base_dir(base_cfg: &ExperimentConfig, cache_dir: Option<&Path>, run_dir: &Path) -> PathBuf {
    let root = cache_dir.map(Path::to_path_buf).unwrap_or_else(|| run_dir.join("base-cache"));
    root.join(&base_cfg.content_hash()[..16])
}

/// Config of one sweep cell: continual training from the shared base on the
/// fixed dominant budget plus `budget` target tokens, probing only the final
/// checkpoints.
pub fn cell_config(cfg: &ExperimentConfig, budget: u64, cache_dir: &Path) -> ExperimentConfig {
    let sweep = cfg.sweep.as_ref().expect("sweep config");
    let mut base = cfg.base.clone().expect("base config");
    base.seed = Some(base.seed.unwrap_or_else(|| derive_config_seed(cfg.seed, "base")));
    base.cache_dir = Some(cache_dir.to_path_buf());
    let mut entries = BTreeMap::new();
    entries.insert(cfg.languages.dominant.clone(), sweep.dominant_tokens);
    entries.insert(cfg.languages.target.clone(), budget);
    ExperimentConfig {
        kind: ExperimentKind::ContinualPretrain,
        // One seed for every cell: only the budget differs between them.
        seed: derive_config_seed(cfg.seed, "cells"),
        output_dir: None,
        languages: cfg.languages.clone(),
        model: cfg.model,
        train: cfg.train.clone(),
        mixture: Some(MixtureSpec { entries, schedule: Default::default() }),
        base: Some(base),
        sweep: None,
        probes: ProbeConfig { last: Some(sweep.final_probes), probe_seed: Some(cfg.probe_seed()), ..cfg.probes.clone() },
        estimator: EstimatorConfig { enabled: false, ..cfg.estimator },
    }
}

pub fn cell_dir_name(target: &str, budget: u64) -> String {
    format!("cells/{target}_{budget}")
}

/// Loss-based versus working-language proportion of the dominant system at
/// every probed checkpoint where the latter is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub dominant_language: LangId,
    pub points: Vec<ComparisonPoint>,
    pub raw: Option<EstimatorComparison>,
    /// Same comparison after width-`smoothing_width` smoothing of both series.
    pub smoothed: Option<EstimatorComparison>,
    pub smoothing_width: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPoint {
    pub step: u64,
    pub loss: f64,
    pub loss_based: f64,
    pub worklang_based: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub dominant_language: LangId,
    pub target_language: LangId,
    pub dominant_tokens: u64,
    pub cells: Vec<SweepCell>,
    /// Continual run whose estimator curve predicts the cells, relative to
    /// the sweep directory when it lies inside it.
    pub reference_run: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub budget: u64,
    pub dir: String,
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    dir: &'a Path,
    family: Family,
    vocab: Vocabulary,
    manifest: RunManifest,
}

impl Runner<'_> {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T, HarnessError>) -> Result<T, HarnessError> {
        log::info!("{}: {name}", self.dir.display());
        let t = Instant::now();
        let out = f(self).map_err(|e| e.in_stage(name));
        self.manifest.timing(name, t.elapsed().as_secs_f64());
        self.manifest.save(self.dir)?;
        out
    }

    fn put(&mut self, rel: &str, bytes: &[u8], kind: &str) -> Result<(), HarnessError> {
        let p = self.dir.join(rel);
        write_atomic(&p, bytes).map_err(|e| HarnessError::io(&p, e))?;
        self.manifest.record(self.dir, rel, kind)
    }

    fn execute(&mut self) -> Result<(), HarnessError> {
        self.put("config.toml", self.cfg.to_toml().as_bytes(), "config")?;
        self.put("family.json", self.family.to_json().as_bytes(), "family")?;
        self.put("vocab.json", self.vocab.to_json().as_bytes(), "vocab")?;
        self.manifest.save(self.dir)?;
        match self.cfg.kind {
            ExperimentKind::MonoTrain | ExperimentKind::FromScratchMix => {
                let start = self.stage("init", |r| {
                    let mc = r.cfg.model.with_vocab(r.vocab.len());
                    Ok(init_model(mc, derive_seed(r.cfg.seed, "init"), &r.vocab.content_hash())?)
                })?;
                self.train_and_probe(start)?;
            }
            ExperimentKind::ContinualPretrain => {
                let start = self.stage("base", |r| r.base_checkpoint())?;
                let trace = self.train_and_probe(start)?;
                if self.cfg.estimator.enabled {
                    self.stage("estimate", |r| r.estimate(&trace))?;
                }
            }
            ExperimentKind::MixtureSweep => {
                self.stage("base", |r| r.base_checkpoint().map(|_| ()))?;
                self.stage("sweep", |r| r.sweep())?;
            }
        }
        self.stage("report", |r| {
            for rel in super::report::report(r.dir)?.files {
                r.manifest.record(r.dir, &rel, "report")?;
            }
            Ok(())
        })
    }

    fn base_checkpoint(&mut self) -> Result<Checkpoint, HarnessError> {
        let base = self.cfg.base.as_ref().expect("validated");
        let bcfg = base_config(self.cfg, base);
        let bdir = base_dir(&bcfg, base.cache_dir.as_deref(), self.dir);
        let m = run_in(&bcfg, &bdir).map_err(|e| HarnessError::Stage { stage: "base".into(), message: e.to_string() })?;
        self.manifest.dependencies.push(bdir.clone());
        let last = m
            .artifacts_of("checkpoint")
            .map(|a| a.path.clone())
            .max()
            .ok_or_else(|| HarnessError::Artifact("base run has no checkpoints".into()))?;
        let ck = Checkpoint::load(&bdir.join(last))?;
        if ck.vocab_hash != self.vocab.content_hash() {
            return Err(HarnessError::Artifact("base run used a different vocabulary".into()));
        }
        Ok(ck)
    }

    fn train_and_probe(&mut self, start: Checkpoint) -> Result<LossTrace, HarnessError> {
        let (trace, saved) = self.stage("train", |r| r.train(&start))?;
        let steps = self.cfg.probes.steps(&saved);
        if !steps.is_empty() {
            self.stage("probe", |r| r.probe(&steps))?;
        }
        Ok(trace)
    }

    fn train(&mut self, start: &Checkpoint) -> Result<(LossTrace, Vec<u64>), HarnessError> {
        let mixture = self.cfg.mixture.as_ref().expect("validated");
        let stream = build_mixture(&self.vocab, &self.family, mixture, derive_seed(self.cfg.seed, "data"))?;
        log::info!("training on {:?}", stream.tokens_per_language());
        let tc = TrainConfig { seed: derive_seed(self.cfg.seed, &format!("train/{}", self.cfg.train.seed)), ..self.cfg.train.clone() };
        let dir = self.dir;
        let mut written = Vec::new();
        let outcome = train(start, &stream, &tc, &mut |ck| {
            let rel = checkpoint_path(ck.step);
            ck.save(&dir.join(&rel))?;
            written.push(rel);
            Ok(())
        })?;
        for rel in &written {
            self.manifest.record(dir, rel, "checkpoint")?;
        }
        self.put("trace.jsonl", outcome.trace.to_jsonl().as_bytes(), "trace")?;
        Ok((outcome.trace, outcome.saved_steps))
    }

    fn probe(&mut self, steps: &[u64]) -> Result<(), HarnessError> {
        let elicit = elicit_language(self.cfg);
        let assets = ProbeAssets::generate(
            &self.family,
            &self.vocab,
            &self.cfg.probes,
            &elicit,
            self.cfg.model.n_layers,
            self.cfg.model.context_length,
            self.cfg.probe_seed(),
        )?;
        for rel in assets.write(self.dir, &self.vocab)? {
            self.manifest.record(self.dir, &rel, "probe-input")?;
        }
        for step in steps {
            let ck = Checkpoint::load(&self.dir.join(checkpoint_path(*step)))?;
            let t = Instant::now();
            let probes = probe_checkpoint(&ck, &self.vocab, &assets)?;
            log::info!(
                "step {step}: pass {:?} R {:?} neurons {:?} ({:.1}s)",
                probes.evals.iter().map(|(l, e)| (l.clone(), e.pass_rate)).collect::<Vec<_>>(),
                probes.worklang.proportions,
                probes.selection.counts,
                t.elapsed().as_secs_f64()
            );
            for rel in probes.write(self.dir)? {
                self.manifest.record(self.dir, &rel, "probe")?;
            }
            self.manifest.save(self.dir)?;
        }
        Ok(())
    }

    fn estimate(&mut self, trace: &LossTrace) -> Result<(), HarnessError> {
        let cfg = self.cfg;
        let (dom, target) = (cfg.languages.dominant.as_str(), cfg.languages.target.as_str());
        let series = super::report::load_probe_series(self.dir)?;
        let pass = series.pass_rates(target).ok_or_else(|| HarnessError::Artifact(format!("no {target} evaluations")))?;
        let scores = ScoreSeries::from_pairs(&series.steps.iter().copied().zip(pass).collect::<Vec<_>>());
        self.put("scores.jsonl", scores.to_jsonl().as_bytes(), "scores")?;

        let base = cfg.base.as_ref().expect("validated");
        let eta_dominant = *base.mixture.entries.get(dom).unwrap_or(&0) as f64;
        let est = &cfg.estimator;
        let plan = plan_target_tokens(trace, &scores, eta_dominant, est.smoothing_width, est.init_window, (dom, target))?;
        self.put("plan.json", &to_json(&plan), "plan")?;

        let anchors = loss_anchors(trace, est.init_window)?;
        let mut points = Vec::new();
        for (i, step) in series.steps.iter().enumerate() {
            let (Some(r), Some(loss)) = (series.worklang[i].as_ref().and_then(|m| m.get(dom)), trace.loss_at(*step)) else {
                continue;
            };
            points.push(ComparisonPoint {
                step: *step,
                loss,
                loss_based: system_proportion_from_loss(loss, &anchors).value,
                worklang_based: SystemProportion::worklang(*r).value,
            });
        }
        let record = comparison_record(dom, points, est.smoothing_width);
        self.put("comparison.json", &to_json(&record), "comparison")
    }

    fn sweep(&mut self) -> Result<(), HarnessError> {
        let cfg = self.cfg;
        let sweep = cfg.sweep.as_ref().expect("validated");
        let base = cfg.base.as_ref().expect("validated");
        let cache = base.cache_dir.clone().unwrap_or_else(|| self.dir.join("base-cache"));
        let mut cells = Vec::new();
        for budget in &sweep.budgets {
            let rel = cell_dir_name(&cfg.languages.target, *budget);
            let child = cell_config(cfg, *budget, &cache);
            run_in(&child, &self.dir.join(&rel))
                .map_err(|e| HarnessError::Stage { stage: format!("sweep cell {budget}"), message: e.to_string() })?;
            self.manifest.dependencies.push(PathBuf::from(&rel));
            cells.push(SweepCell { budget: *budget, dir: rel });
        }
        let record = SweepRecord {
            dominant_language: cfg.languages.dominant.clone(),
            target_language: cfg.languages.target.clone(),
            dominant_tokens: sweep.dominant_tokens,
            cells,
            reference_run: sweep.reference_run.clone(),
        };
        self.put("sweep.json", &to_json(&record), "sweep")
    }
}

pub fn comparison_record(dominant: &str, points: Vec<ComparisonPoint>, width: usize) -> ComparisonRecord {
    let wrap = |v: Vec<f64>, f: fn(f64) -> SystemProportion| v.into_iter().map(f).collect::<Vec<_>>();
    let loss: Vec<f64> = points.iter().map(|p| p.loss_based).collect();
    let wl: Vec<f64> = points.iter().map(|p| p.worklang_based).collect();
    let as_loss = |v: f64| SystemProportion { value: v, source: crate::estimator::ProportionSource::LossBased, clamped: false };
    let raw = compare_estimators(&wrap(loss.clone(), as_loss), &wrap(wl.clone(), SystemProportion::worklang));
    let smooth = |v: &[f64]| -> Option<Vec<f64>> {
        let s = ScoreSeries::from_pairs(&points.iter().map(|p| p.step).zip(v.iter().copied()).collect::<Vec<_>>());
        smooth_scores(&s, width).ok().map(|s| s.scores())
    };
    let smoothed = match (smooth(&loss), smooth(&wl)) {
        (Some(a), Some(b)) => compare_estimators(&wrap(a, as_loss), &wrap(b, SystemProportion::worklang)).ok(),
        _ => None,
    };
    let note = raw.as_ref().err().map(|e| e.to_string());
    ComparisonRecord { dominant_language: dominant.to_string(), points, raw: raw.ok(), smoothed, smoothing_width: width, note }
}
