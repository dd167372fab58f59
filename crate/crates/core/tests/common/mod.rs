//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use babel_core::model::{loss_and_grad, Model, ModelConfig};

pub fn tiny_config() -> ModelConfig {
    ModelConfig { n_layers: 2, d_model: 16, n_heads: 2, d_ffn: 32, context_length: 8, vocab_size: 20 }
}

/// Per-tensor relative error `|g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|)`
/// using central differences over every parameter.
pub fn gradient_check(model: &Model, windows: &[u32], batch: usize, seq: usize, h: f64) -> Vec<(String, f64)> {
    let (_, analytic) = loss_and_grad(model, windows, batch, seq).unwrap();
    let mut probe = model.clone();
    let mut out = Vec::new();
    for t in &model.layout.tensors {
        let (mut diff, mut na, mut nn) = (0.0f64, 0.0f64, 0.0f64);
        for i in t.range.clone() {
            let orig = probe.params[i];
            probe.params[i] = orig + h;
            let (lp, _) = loss_and_grad(&probe, windows, batch, seq).unwrap();
            probe.params[i] = orig - h;
            let (lm, _) = loss_and_grad(&probe, windows, batch, seq).unwrap();
            probe.params[i] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            diff += (analytic[i] - numeric).powi(2);
            na += analytic[i].powi(2);
            nn += numeric.powi(2);
        }
        let denom = na.sqrt().max(nn.sqrt()).max(1e-12);
        out.push((t.name.clone(), diff.sqrt() / denom));
    }
    out
}

/// Randomly perturbed tiny model so that biases, gains and ReLU patterns are
/// all exercised, with a fixed token batch.
pub fn gradcheck_fixture() -> (Model, Vec<u32>, usize, usize) {
    use rand::{Rng, SeedableRng};
    let mut m = Model::init(tiny_config(), 11);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for p in m.params.iter_mut() {
        *p += rng.gen_range(-0.3..0.3);
    }
    let (batch, seq) = (3, 7);
    let windows: Vec<u32> = (0..batch * (seq + 1)).map(|_| rng.gen_range(0..20)).collect();
    (m, windows, batch, seq)
}
