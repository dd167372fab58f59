//! Batched forward pass with optional caching, loss, and backpropagation.

use super::kernels::{
    add_in_place, gemm, layer_norm, layer_norm_backward, linear, linear_backward, softmax_in_place, LnCache, View,
};
use super::params::Model;
use super::ModelError;

struct LayerCache {
    x_in: Vec<f64>,
    ln1: LnCache,
    h1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    attn: Vec<f64>,
    ln2: LnCache,
    h2: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
}

pub(crate) struct Cache {
    batch: usize,
    seq: usize,
    layers: Vec<LayerCache>,
    x_final: Vec<f64>,
    lnf: LnCache,
    hf: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CaptureFlags {
    pub residual: bool,
    pub ffn: bool,
}

impl CaptureFlags {
    pub const ALL: CaptureFlags = CaptureFlags { residual: true, ffn: true };
    pub const NONE: CaptureFlags = CaptureFlags { residual: false, ffn: false };
}

/// Per-layer activations for one forward call over `positions` tokens.
///
/// `residual[0]` is the embedding output and `residual[l]` the stream after
/// block `l`, each `positions × d_model`. `ffn[l]` holds block `l+1`'s
/// post-ReLU hidden units, `positions × d_ffn`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationCapture {
    pub positions: usize,
    pub d_model: usize,
    pub d_ffn: usize,
    pub residual: Vec<Vec<f64>>,
    pub ffn: Vec<Vec<f64>>,
}

impl ActivationCapture {
    pub fn residual_at(&self, layer: usize, pos: usize) -> Option<&[f64]> {
        let d = self.d_model;
        self.residual.get(layer).and_then(|r| r.get(pos * d..(pos + 1) * d))
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `positions × vocab_size`, row-major.
    pub logits: Vec<f64>,
    pub capture: Option<ActivationCapture>,
}

fn check_tokens(model: &Model, ids: &[u32], seq: usize) -> Result<(), ModelError> {
    let c = &model.config;
    if seq > c.context_length {
        return Err(ModelError::SequenceTooLong { len: seq, max: c.context_length });
    }
    if let Some(bad) = ids.iter().find(|t| **t as usize >= c.vocab_size) {
        return Err(ModelError::TokenOutOfRange { id: *bad, vocab: c.vocab_size });
    }
    Ok(())
}

/// Final layer norm followed by unembedding for `n` residual rows.
pub(crate) fn unembed_rows(model: &Model, residual: &[f64]) -> (Vec<f64>, LnCache, Vec<f64>) {
    let c = &model.config;
    let lay = &model.layout;
    let (hf, lnf) = layer_norm(residual, c.d_model, model.p(&lay.lnf_g), model.p(&lay.lnf_b));
    let n = residual.len() / c.d_model;
    let logits = linear(&hf, n, c.d_model, model.p(&lay.unembed), None, c.vocab_size);
    (logits, lnf, hf)
}

/// Causal multi-head attention over `batch` sequences of `seq` tokens.
fn attention(model: &Model, q: &[f64], k: &[f64], v: &[f64], batch: usize, seq: usize) -> (Vec<f64>, Vec<f64>) {
    let c = &model.config;
    let (d, h, dh) = (c.d_model, c.n_heads, c.head_dim());
    let scale = 1.0 / (dh as f64).sqrt();
    let tt = seq * seq;
    let mut probs = vec![0.0; batch * h * tt];
    let mut out = vec![0.0; batch * seq * d];
    for b in 0..batch {
        for head in 0..h {
            let off = b * seq * d + head * dh;
            let p_off = (b * h + head) * tt;
            let p = &mut probs[p_off..p_off + tt];
            gemm(seq, dh, seq, scale, q, View { off, rs: d, cs: 1 }, k, View { off, rs: 1, cs: d }, 0.0, p, View::rm(0, seq));
            for i in 0..seq {
                let row = &mut p[i * seq..(i + 1) * seq];
                softmax_in_place(&mut row[..=i]);
                row[i + 1..].fill(0.0);
            }
            gemm(seq, seq, dh, 1.0, p, View::rm(0, seq), v, View { off, rs: d, cs: 1 }, 0.0, &mut out, View { off, rs: d, cs: 1 });
        }
    }
    (out, probs)
}

/// Runs `batch` sequences of length `seq` laid out contiguously in `ids`.
pub(crate) fn forward_cached(model: &Model, ids: &[u32], batch: usize, seq: usize) -> Result<(Vec<f64>, Cache), ModelError> {
    check_tokens(model, ids, seq)?;
    let c = &model.config;
    let lay = &model.layout;
    let (d, f) = (c.d_model, c.d_ffn);
    let n = batch * seq;
    assert_eq!(ids.len(), n);

    let tok = model.p(&lay.tok_emb);
    let pos = model.p(&lay.pos_emb);
    let mut x = vec![0.0; n * d];
    for (i, id) in ids.iter().enumerate() {
        let t = i % seq;
        let row = &mut x[i * d..(i + 1) * d];
        let e = &tok[*id as usize * d..(*id as usize + 1) * d];
        let pe = &pos[t * d..(t + 1) * d];
        for j in 0..d {
            row[j] = e[j] + pe[j];
        }
    }

    let mut layers = Vec::with_capacity(c.n_layers);
    for l in &lay.layers {
        let (h1, ln1) = layer_norm(&x, d, model.p(&l.ln1_g), model.p(&l.ln1_b));
        let q = linear(&h1, n, d, model.p(&l.wq), Some(model.p(&l.bq)), d);
        let k = linear(&h1, n, d, model.p(&l.wk), Some(model.p(&l.bk)), d);
        let v = linear(&h1, n, d, model.p(&l.wv), Some(model.p(&l.bv)), d);
        let (attn, probs) = attention(model, &q, &k, &v, batch, seq);
        let o = linear(&attn, n, d, model.p(&l.wo), Some(model.p(&l.bo)), d);
        let mut x_mid = x.clone();
        add_in_place(&mut x_mid, &o);
        let (h2, ln2) = layer_norm(&x_mid, d, model.p(&l.ln2_g), model.p(&l.ln2_b));
        let pre = linear(&h2, n, d, model.p(&l.w1), Some(model.p(&l.b1)), f);
        let act: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
        let m = linear(&act, n, f, model.p(&l.w2), Some(model.p(&l.b2)), d);
        let mut x_out = x_mid;
        add_in_place(&mut x_out, &m);
        let x_in = std::mem::replace(&mut x, x_out);
        layers.push(LayerCache { x_in, ln1, h1, q, k, v, probs, attn, ln2, h2, pre, act });
    }
    let (logits, lnf, hf) = unembed_rows(model, &x);
    Ok((logits, Cache { batch, seq, layers, x_final: x, lnf, hf }))
}

fn capture_from(cache: Cache, flags: CaptureFlags, c: &super::ModelConfig) -> ActivationCapture {
    let positions = cache.batch * cache.seq;
    let mut residual = Vec::new();
    let mut ffn = Vec::new();
    for lc in cache.layers {
        if flags.residual {
            residual.push(lc.x_in);
        }
        if flags.ffn {
            ffn.push(lc.act);
        }
    }
    if flags.residual {
        residual.push(cache.x_final);
    }
    ActivationCapture { positions, d_model: c.d_model, d_ffn: c.d_ffn, residual, ffn }
}

/// Logits for every position of one sequence, plus requested activations.
pub fn forward(model: &Model, tokens: &[u32], flags: CaptureFlags) -> Result<ForwardOutput, ModelError> {
    forward_batch(model, tokens, 1, tokens.len(), flags)
}

/// Like [`forward`] for `batch` equal-length sequences stored back to back.
pub fn forward_batch(model: &Model, tokens: &[u32], batch: usize, seq: usize, flags: CaptureFlags) -> Result<ForwardOutput, ModelError> {
    let (logits, cache) = forward_cached(model, tokens, batch, seq)?;
    let capture = (flags.residual || flags.ffn).then(|| capture_from(cache, flags, &model.config));
    Ok(ForwardOutput { logits, capture })
}

/// Mean next-token cross-entropy of `batch` windows of `seq + 1` tokens and
/// its gradient with respect to every parameter.
pub fn loss_and_grad(model: &Model, windows: &[u32], batch: usize, seq: usize) -> Result<(f64, Vec<f64>), ModelError> {
    assert_eq!(windows.len(), batch * (seq + 1));
    let mut inputs = Vec::with_capacity(batch * seq);
    let mut targets = Vec::with_capacity(batch * seq);
    for w in windows.chunks_exact(seq + 1) {
        inputs.extend_from_slice(&w[..seq]);
        targets.extend_from_slice(&w[1..]);
    }
    check_tokens(model, &targets, seq)?;
    let (logits, cache) = forward_cached(model, &inputs, batch, seq)?;
    let vsz = model.config.vocab_size;
    let n = batch * seq;

    let mut dlogits = logits;
    let mut loss = 0.0;
    for (i, row) in dlogits.chunks_exact_mut(vsz).enumerate() {
        softmax_in_place(row);
        let t = targets[i] as usize;
        loss -= row[t].ln();
        row[t] -= 1.0;
        for g in row.iter_mut() {
            *g /= n as f64;
        }
    }
    loss /= n as f64;
    let grads = backward(model, &inputs, cache, &dlogits);
    Ok((loss, grads))
}

fn backward(model: &Model, inputs: &[u32], cache: Cache, dlogits: &[f64]) -> Vec<f64> {
    let c = &model.config;
    let lay = &model.layout;
    let (d, f, vsz) = (c.d_model, c.d_ffn, c.vocab_size);
    let (h, dh) = (c.n_heads, c.head_dim());
    let (batch, seq) = (cache.batch, cache.seq);
    let n = batch * seq;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut g = vec![0.0; lay.total];

    let dhf = linear_backward(&cache.hf, dlogits, n, d, vsz, model.p(&lay.unembed), &mut g[lay.unembed.clone()], None);
    let mut dx = {
        let (dg, db) = split2(&mut g, &lay.lnf_g, &lay.lnf_b);
        layer_norm_backward(&dhf, &cache.lnf, d, model.p(&lay.lnf_g), dg, db)
    };

    for (l, lc) in lay.layers.iter().zip(cache.layers.iter()).rev() {
        // FFN branch.
        let dact = linear_backward(&lc.act, &dx, n, f, d, model.p(&l.w2), &mut g[l.w2.clone()], None);
        add_bias_grad(&mut g[l.b2.clone()], &dx, d);
        let dpre: Vec<f64> = dact.iter().zip(&lc.pre).map(|(g, p)| if *p > 0.0 { *g } else { 0.0 }).collect();
        let dh2 = linear_backward(&lc.h2, &dpre, n, d, f, model.p(&l.w1), &mut g[l.w1.clone()], None);
        add_bias_grad(&mut g[l.b1.clone()], &dpre, f);
        let dx_mid = {
            let (dg, db) = split2(&mut g, &l.ln2_g, &l.ln2_b);
            layer_norm_backward(&dh2, &lc.ln2, d, model.p(&l.ln2_g), dg, db)
        };
        add_in_place(&mut dx, &dx_mid);

        // Attention branch.
        let dattn = linear_backward(&lc.attn, &dx, n, d, d, model.p(&l.wo), &mut g[l.wo.clone()], None);
        add_bias_grad(&mut g[l.bo.clone()], &dx, d);
        let mut dq = vec![0.0; n * d];
        let mut dk = vec![0.0; n * d];
        let mut dv = vec![0.0; n * d];
        let tt = seq * seq;
        let mut dp = vec![0.0; tt];
        for b in 0..batch {
            for head in 0..h {
                let off = b * seq * d + head * dh;
                let p = &lc.probs[(b * h + head) * tt..(b * h + head + 1) * tt];
                let strided = View { off, rs: d, cs: 1 };
                // dP = dO Vᵀ
                gemm(seq, dh, seq, 1.0, &dattn, strided, &lc.v, View { off, rs: 1, cs: d }, 0.0, &mut dp, View::rm(0, seq));
                // dV = Pᵀ dO
                gemm(seq, seq, dh, 1.0, p, View::tr(0, seq), &dattn, strided, 0.0, &mut dv, strided);
                // dS = P ⊙ (dP − rowsum(dP ⊙ P)), then the score scale.
                for i in 0..seq {
                    let pr = &p[i * seq..(i + 1) * seq];
                    let dr = &mut dp[i * seq..(i + 1) * seq];
                    let dot: f64 = pr[..=i].iter().zip(&dr[..=i]).map(|(a, b)| a * b).sum();
                    for j in 0..seq {
                        dr[j] = if j <= i { pr[j] * (dr[j] - dot) * scale } else { 0.0 };
                    }
                }
                gemm(seq, seq, dh, 1.0, &dp, View::rm(0, seq), &lc.k, strided, 0.0, &mut dq, strided);
                gemm(seq, seq, dh, 1.0, &dp, View::tr(0, seq), &lc.q, strided, 0.0, &mut dk, strided);
            }
        }
        let mut dh1 = linear_backward(&lc.h1, &dq, n, d, d, model.p(&l.wq), &mut g[l.wq.clone()], None);
        add_bias_grad(&mut g[l.bq.clone()], &dq, d);
        add_in_place(&mut dh1, &linear_backward(&lc.h1, &dk, n, d, d, model.p(&l.wk), &mut g[l.wk.clone()], None));
        add_bias_grad(&mut g[l.bk.clone()], &dk, d);
        add_in_place(&mut dh1, &linear_backward(&lc.h1, &dv, n, d, d, model.p(&l.wv), &mut g[l.wv.clone()], None));
        add_bias_grad(&mut g[l.bv.clone()], &dv, d);
        let dx_in = {
            let (dg, db) = split2(&mut g, &l.ln1_g, &l.ln1_b);
            layer_norm_backward(&dh1, &lc.ln1, d, model.p(&l.ln1_g), dg, db)
        };
        add_in_place(&mut dx, &dx_in);
    }

    for (i, id) in inputs.iter().enumerate() {
        let t = i % seq;
        let row = &dx[i * d..(i + 1) * d];
        let te = lay.tok_emb.start + *id as usize * d;
        add_in_place(&mut g[te..te + d], row);
        let pe = lay.pos_emb.start + t * d;
        add_in_place(&mut g[pe..pe + d], row);
    }
    g
}

fn add_bias_grad(db: &mut [f64], dy: &[f64], width: usize) {
    for row in dy.chunks_exact(width) {
        add_in_place(db, row);
    }
}

/// Two disjoint mutable sub-slices; `a` must precede `b`.
fn split2<'a>(g: &'a mut [f64], a: &std::ops::Range<usize>, b: &std::ops::Range<usize>) -> (&'a mut [f64], &'a mut [f64]) {
    assert!(a.end <= b.start);
    let (lo, hi) = g.split_at_mut(b.start);
    (&mut lo[a.clone()], &mut hi[..b.len()])
}
