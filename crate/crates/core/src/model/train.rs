//! Deterministic next-token training with AdamW, warmup and cosine decay.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, RngState};
use super::config::ModelConfig;
use super::forward::loss_and_grad;
use super::params::Model;
use super::ModelError;
use crate::toylang::MixedStream;
use crate::util::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    /// Window length; `None` uses the model's context length.
    pub seq_len: Option<usize>,
    pub lr: f64,
    pub warmup_steps: u64,
    /// Cosine decay ends at `lr * min_lr_ratio`.
    pub min_lr_ratio: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
    pub save_interval: u64,
    /// Additional steps at which to save, e.g. a denser early schedule.
    pub extra_save_steps: Vec<u64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch_size: 64,
            seq_len: None,
            lr: 3e-4,
            warmup_steps: 100,
            min_lr_ratio: 0.1,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weight_decay: 0.0,
            grad_clip: 1.0,
            save_interval: 250,
            extra_save_steps: Vec::new(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.warmup_steps > 0 && step <= self.warmup_steps {
            return self.lr * step as f64 / self.warmup_steps as f64;
        }
        let span = self.steps.saturating_sub(self.warmup_steps).max(1) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.lr * (self.min_lr_ratio + (1.0 - self.min_lr_ratio) * cosine)
    }

    pub fn is_save_step(&self, step: u64) -> bool {
        step == self.steps
            || (self.save_interval > 0 && step.is_multiple_of(self.save_interval))
            || self.extra_save_steps.contains(&step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub loss: f64,
}

/// One mean cross-entropy per optimizer step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub entries: Vec<LossRecord>,
}

impl LossTrace {
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&serde_json::to_string(e).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ModelError> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str::<LossRecord>(l).map_err(|e| ModelError::Format(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let trace = LossTrace { entries };
        trace.validate()?;
        Ok(trace)
    }

    /// Steps strictly increasing, losses finite and positive.
    pub fn validate(&self) -> Result<(), ModelError> {
        for w in self.entries.windows(2) {
            if w[1].step <= w[0].step {
                return Err(ModelError::Format(format!("trace steps not increasing at {}", w[1].step)));
            }
        }
        if let Some(e) = self.entries.iter().find(|e| !(e.loss.is_finite() && e.loss > 0.0)) {
            return Err(ModelError::Format(format!("invalid loss {} at step {}", e.loss, e.step)));
        }
        Ok(())
    }

    pub fn loss_at(&self, step: u64) -> Option<f64> {
        self.entries
            .binary_search_by_key(&step, |e| e.step)
            .ok()
            .map(|i| self.entries[i].loss)
    }
}

/// Fresh model at step 0.
pub fn init_model(config: ModelConfig, seed: u64, vocab_hash: &str) -> Result<Checkpoint, ModelError> {
    config.validate()?;
    Ok(Checkpoint {
        model: Model::init(config, seed),
        step: 0,
        total_steps: 0,
        rng_state: RngState { seed, word_pos: 0 },
        trained_tokens: BTreeMap::new(),
        vocab_hash: vocab_hash.to_string(),
    })
}

struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    fn new(n: usize) -> Self {
        AdamW { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * (mhat / (vhat.sqrt() + cfg.eps) + cfg.weight_decay * params[i]);
        }
    }
}

pub struct TrainOutcome {
    pub trace: LossTrace,
    pub final_checkpoint: Checkpoint,
    pub saved_steps: Vec<u64>,
}

/// Continues training `start` on `stream`. Windows of `seq_len + 1` tokens are
/// drawn uniformly from the stream; `sink` receives every saved checkpoint,
/// always including the final step. Step numbers restart at 1 for each run.
pub fn train(
    start: &Checkpoint,
    stream: &MixedStream,
    cfg: &TrainConfig,
    sink: &mut dyn FnMut(&Checkpoint) -> Result<(), ModelError>,
) -> Result<TrainOutcome, ModelError> {
    let mut ckpt = start.clone();
    ckpt.step = 0;
    let config = ckpt.model.config;
    let seq = cfg.seq_len.unwrap_or(config.context_length).min(config.context_length);
    let batch = cfg.batch_size;
    if stream.tokens.len() < seq + 1 {
        return Err(ModelError::StreamTooShort { len: stream.tokens.len(), need: seq + 1 });
    }
    if let Some(bad) = stream.tokens.iter().find(|t| **t as usize >= config.vocab_size) {
        return Err(ModelError::TokenOutOfRange { id: *bad, vocab: config.vocab_size });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(ckpt.model.params.len());
    let mut trace = LossTrace::default();
    let mut saved_steps = Vec::new();
    let max_start = stream.tokens.len() - (seq + 1);
    let mut windows = vec![0u32; batch * (seq + 1)];
    let mut lang_counts = vec![0u64; stream.languages.len()];

    for step in 1..=cfg.steps {
        for b in 0..batch {
            let s = rng.gen_range(0..=max_start);
            windows[b * (seq + 1)..(b + 1) * (seq + 1)].copy_from_slice(&stream.tokens[s..s + seq + 1]);
            for l in &stream.lang_of[s..s + seq] {
                lang_counts[*l as usize] += 1;
            }
        }
        let (loss, mut grads) = loss_and_grad(&ckpt.model, &windows, batch, seq)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            let bytes: Vec<u8> = windows.iter().flat_map(|t| t.to_le_bytes()).collect();
            return Err(ModelError::NonFiniteLoss { step, batch_hash: sha256_hex(&bytes)[..16].to_string() });
        }
        if cfg.grad_clip > 0.0 {
            let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > cfg.grad_clip {
                let s = cfg.grad_clip / norm;
                grads.iter_mut().for_each(|g| *g *= s);
            }
        }
        opt.step(&mut ckpt.model.params, &grads, cfg.lr_at(step), cfg);
        trace.entries.push(LossRecord { step, loss });
        ckpt.step = step;
        ckpt.total_steps += 1;
        if cfg.is_save_step(step) {
            ckpt.rng_state = RngState { seed: cfg.seed, word_pos: rng.get_word_pos() };
            for (lang, n) in stream.languages.iter().zip(lang_counts.iter_mut()) {
                *ckpt.trained_tokens.entry(lang.clone()).or_insert(0) += *n;
                *n = 0;
            }
            sink(&ckpt)?;
            saved_steps.push(step);
        }
        if step % 50 == 0 {
            log::info!("step {step}/{} loss {loss:.4}", cfg.steps);
        }
    }
    Ok(TrainOutcome { trace, final_checkpoint: ckpt, saved_steps })
}
