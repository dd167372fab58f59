//! Incremental single-sequence decoding with a key/value cache.

use super::forward::unembed_rows;
use super::kernels::{add_in_place, argmax, layer_norm, linear, softmax_in_place};
use super::params::Model;
use super::ModelError;

/// Output of one decoding step at the newest position.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub logits: Vec<f64>,
    /// Residual stream after each block, index 0 = embeddings (only when capturing).
    pub residual: Vec<Vec<f64>>,
    /// Post-ReLU FFN units per block (only when capturing).
    pub ffn: Vec<Vec<f64>>,
}

pub struct Decoder<'m> {
    model: &'m Model,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    len: usize,
    capture: bool,
}

impl<'m> Decoder<'m> {
    pub fn new(model: &'m Model, capture: bool) -> Self {
        let l = model.config.n_layers;
        Decoder { model, keys: vec![Vec::new(); l], values: vec![Vec::new(); l], len: 0, capture }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Feeds one token and returns the logits predicting the next one.
    pub fn step(&mut self, token: u32) -> Result<StepOutput, ModelError> {
        let m = self.model;
        let c = &m.config;
        let lay = &m.layout;
        if self.len >= c.context_length {
            return Err(ModelError::SequenceTooLong { len: self.len + 1, max: c.context_length });
        }
        if token as usize >= c.vocab_size {
            return Err(ModelError::TokenOutOfRange { id: token, vocab: c.vocab_size });
        }
        let (d, f, h, dh) = (c.d_model, c.d_ffn, c.n_heads, c.head_dim());
        let pos = self.len;
        let scale = 1.0 / (dh as f64).sqrt();
        let tok = &m.p(&lay.tok_emb)[token as usize * d..(token as usize + 1) * d];
        let pe = &m.p(&lay.pos_emb)[pos * d..(pos + 1) * d];
        let mut x: Vec<f64> = tok.iter().zip(pe).map(|(a, b)| a + b).collect();
        let mut residual = Vec::new();
        let mut ffn = Vec::new();
        if self.capture {
            residual.push(x.clone());
        }
        for (li, l) in lay.layers.iter().enumerate() {
            let (h1, _) = layer_norm(&x, d, m.p(&l.ln1_g), m.p(&l.ln1_b));
            let q = linear(&h1, 1, d, m.p(&l.wq), Some(m.p(&l.bq)), d);
            let k = linear(&h1, 1, d, m.p(&l.wk), Some(m.p(&l.bk)), d);
            let v = linear(&h1, 1, d, m.p(&l.wv), Some(m.p(&l.bv)), d);
            self.keys[li].extend_from_slice(&k);
            self.values[li].extend_from_slice(&v);
            let keys = &self.keys[li];
            let values = &self.values[li];
            let mut attn = vec![0.0; d];
            let mut scores = vec![0.0; pos + 1];
            for head in 0..h {
                let hs = head * dh;
                for (t, s) in scores.iter_mut().enumerate() {
                    let kr = &keys[t * d + hs..t * d + hs + dh];
                    *s = q[hs..hs + dh].iter().zip(kr).map(|(a, b)| a * b).sum::<f64>() * scale;
                }
                softmax_in_place(&mut scores);
                for (t, p) in scores.iter().enumerate() {
                    let vr = &values[t * d + hs..t * d + hs + dh];
                    for j in 0..dh {
                        attn[hs + j] += p * vr[j];
                    }
                }
            }
            let o = linear(&attn, 1, d, m.p(&l.wo), Some(m.p(&l.bo)), d);
            add_in_place(&mut x, &o);
            let (h2, _) = layer_norm(&x, d, m.p(&l.ln2_g), m.p(&l.ln2_b));
            let pre = linear(&h2, 1, d, m.p(&l.w1), Some(m.p(&l.b1)), f);
            let act: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
            let out = linear(&act, 1, f, m.p(&l.w2), Some(m.p(&l.b2)), d);
            add_in_place(&mut x, &out);
            if self.capture {
                residual.push(x.clone());
                ffn.push(act);
            }
        }
        let (logits, _, _) = unembed_rows(m, &x);
        self.len += 1;
        Ok(StepOutput { logits, residual, ffn })
    }
}

/// Argmax decoding: returns the prompt followed by up to `max_new` tokens,
/// stopping after EOS or any token in `stop`, or when the context is full.
pub fn greedy_decode(model: &Model, prompt: &[u32], max_new: usize, eos: u32, stop: &[u32]) -> Result<Vec<u32>, ModelError> {
    let ctx = model.config.context_length;
    if prompt.len() > ctx {
        return Err(ModelError::SequenceTooLong { len: prompt.len(), max: ctx });
    }
    let mut out = prompt.to_vec();
    if max_new == 0 || prompt.is_empty() {
        return Ok(out);
    }
    let mut dec = Decoder::new(model, false);
    let mut last = None;
    for t in prompt {
        last = Some(dec.step(*t)?);
    }
    for i in 0..max_new {
        let next = argmax(&last.as_ref().expect("prompt is non-empty").logits) as u32;
        out.push(next);
        if next == eos || stop.contains(&next) || out.len() >= ctx || i + 1 == max_new {
            break;
        }
        last = Some(dec.step(next)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::forward::{forward, CaptureFlags};
    use crate::model::ModelConfig;

    fn tiny() -> Model {
        let c = ModelConfig { n_layers: 2, d_model: 16, n_heads: 4, d_ffn: 32, context_length: 16, vocab_size: 20 };
        Model::init(c, 9)
    }

    #[test]
    fn incremental_matches_full_forward() {
        let m = tiny();
        let toks = [3u32, 1, 4, 1, 5, 9, 2, 6];
        let full = forward(&m, &toks, CaptureFlags::ALL).unwrap();
        let cap = full.capture.unwrap();
        let mut dec = Decoder::new(&m, true);
        for (p, t) in toks.iter().enumerate() {
            let s = dec.step(*t).unwrap();
            for (a, b) in s.logits.iter().zip(&full.logits[p * 20..(p + 1) * 20]) {
                assert!((a - b).abs() < 1e-10);
            }
            for l in 0..=2 {
                let want = cap.residual_at(l, p).unwrap();
                for (a, b) in s.residual[l].iter().zip(want) {
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn zero_new_tokens_returns_prompt() {
        let m = tiny();
        assert_eq!(greedy_decode(&m, &[1, 2, 3], 0, 2, &[]).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn decoding_is_prefix_stable() {
        let m = tiny();
        let prompt = [1u32, 7, 7, 3];
        let long = greedy_decode(&m, &prompt, 8, 999, &[]).unwrap();
        for k in 0..8 {
            let short = greedy_decode(&m, &prompt, k, 999, &[]).unwrap();
            assert_eq!(&long[..short.len()], &short[..]);
        }
    }

    #[test]
    fn context_limit_is_respected() {
        let m = tiny();
        let out = greedy_decode(&m, &[1, 2], 100, 999, &[]).unwrap();
        assert!(out.len() <= 16);
        assert!(greedy_decode(&m, &[1; 17], 1, 999, &[]).is_err());
    }
}
