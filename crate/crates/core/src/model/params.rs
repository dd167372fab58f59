use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub range: Range<usize>,
}

/// Weight matrices are stored row-major as `[d_in, d_out]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRanges {
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub wq: Range<usize>,
    pub bq: Range<usize>,
    pub wk: Range<usize>,
    pub bk: Range<usize>,
    pub wv: Range<usize>,
    pub bv: Range<usize>,
    pub wo: Range<usize>,
    pub bo: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tok_emb: Range<usize>,
    pub pos_emb: Range<usize>,
    pub layers: Vec<LayerRanges>,
    pub lnf_g: Range<usize>,
    pub lnf_b: Range<usize>,
    pub unembed: Range<usize>,
    pub tensors: Vec<TensorInfo>,
    pub total: usize,
}

struct Builder {
    tensors: Vec<TensorInfo>,
    next: usize,
}

impl Builder {
    fn add(&mut self, name: String, shape: &[usize]) -> Range<usize> {
        let n: usize = shape.iter().product();
        let range = self.next..self.next + n;
        self.next += n;
        self.tensors.push(TensorInfo { name, shape: shape.to_vec(), range: range.clone() });
        range
    }
}

impl Layout {
    pub fn new(c: &ModelConfig) -> Self {
        let (d, f, v) = (c.d_model, c.d_ffn, c.vocab_size);
        let mut b = Builder { tensors: Vec::new(), next: 0 };
        let tok_emb = b.add("tok_emb".into(), &[v, d]);
        let pos_emb = b.add("pos_emb".into(), &[c.context_length, d]);
        let layers = (0..c.n_layers)
            .map(|l| {
                let mut t = |n: &str, s: &[usize]| b.add(format!("layers.{l}.{n}"), s);
                LayerRanges {
                    ln1_g: t("ln1.gain", &[d]),
                    ln1_b: t("ln1.bias", &[d]),
                    wq: t("attn.wq", &[d, d]),
                    bq: t("attn.bq", &[d]),
                    wk: t("attn.wk", &[d, d]),
                    bk: t("attn.bk", &[d]),
                    wv: t("attn.wv", &[d, d]),
                    bv: t("attn.bv", &[d]),
                    wo: t("attn.wo", &[d, d]),
                    bo: t("attn.bo", &[d]),
                    ln2_g: t("ln2.gain", &[d]),
                    ln2_b: t("ln2.bias", &[d]),
                    w1: t("ffn.w1", &[d, f]),
                    b1: t("ffn.b1", &[f]),
                    w2: t("ffn.w2", &[f, d]),
                    b2: t("ffn.b2", &[d]),
                }
            })
            .collect();
        let lnf_g = b.add("lnf.gain".into(), &[d]);
        let lnf_b = b.add("lnf.bias".into(), &[d]);
        let unembed = b.add("unembed".into(), &[d, v]);
        Layout { tok_emb, pos_emb, layers, lnf_g, lnf_b, unembed, total: b.next, tensors: b.tensors }
    }
}

/// Config, layout and flat parameters together.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub layout: Layout,
    pub params: Vec<f64>,
}

pub const INIT_STD: f64 = 0.02;

impl Model {
    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Self {
        let layout = Layout::new(&config);
        assert_eq!(layout.total, params.len(), "parameter count does not match config");
        Model { config, layout, params }
    }

    /// N(0, 0.02) weights with residual output projections scaled by
    /// 1/sqrt(2 * n_layers); zero biases; unit layer-norm gains.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).unwrap();
        let proj_scale = 1.0 / (2.0 * config.n_layers as f64).sqrt();
        let mut fill = |r: &Range<usize>, scale: f64, rng: &mut ChaCha8Rng| {
            for p in &mut params[r.clone()] {
                *p = normal.sample(rng) * scale;
            }
        };
        fill(&layout.tok_emb, 1.0, &mut rng);
        fill(&layout.pos_emb, 1.0, &mut rng);
        for l in &layout.layers {
            fill(&l.wq, 1.0, &mut rng);
            fill(&l.wk, 1.0, &mut rng);
            fill(&l.wv, 1.0, &mut rng);
            fill(&l.wo, proj_scale, &mut rng);
            fill(&l.w1, 1.0, &mut rng);
            fill(&l.w2, proj_scale, &mut rng);
        }
        fill(&layout.unembed, 1.0, &mut rng);
        for r in layout.layers.iter().flat_map(|l| [&l.ln1_g, &l.ln2_g]).chain([&layout.lnf_g]) {
            params[r.clone()].fill(1.0);
        }
        Model { config, layout, params }
    }

    pub fn p(&self, r: &Range<usize>) -> &[f64] {
        &self.params[r.clone()]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_matches_closed_form() {
        let c = ModelConfig { n_layers: 6, d_model: 128, n_heads: 4, d_ffn: 512, context_length: 256, vocab_size: 400 };
        let (l, d, f, t, v) = (6, 128, 512, 256, 400);
        // embeddings + per block (ln1, qkv + bias, out proj + bias, ln2, ffn) + final ln + unembed
        let per_block = 2 * d + 3 * (d * d + d) + (d * d + d) + 2 * d + (d * f + f) + (f * d + d);
        let expected = v * d + t * d + l * per_block + 2 * d + d * v;
        assert_eq!(expected, 1_325_056);
        assert_eq!(c.param_count(), expected);
    }

    #[test]
    fn init_is_deterministic() {
        let c = ModelConfig { n_layers: 2, d_model: 16, n_heads: 2, d_ffn: 32, context_length: 8, vocab_size: 20 };
        let a = Model::init(c, 5);
        let b = Model::init(c, 5);
        assert_eq!(a.params, b.params);
        assert_ne!(Model::init(c, 6).params, a.params);
        assert!(a.p(&a.layout.layers[0].bq).iter().all(|x| *x == 0.0));
        assert!(a.p(&a.layout.lnf_g).iter().all(|x| *x == 1.0));
    }

    #[test]
    fn tensors_tile_the_vector() {
        let lay = Layout::new(&ModelConfig::default());
        let mut next = 0;
        for t in &lay.tensors {
            assert_eq!(t.range.start, next);
            next = t.range.end;
        }
        assert_eq!(next, lay.total);
    }
}
