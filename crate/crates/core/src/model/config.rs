use serde::{Deserialize, Serialize};

use super::ModelError;

/// Pre-norm GPT-style decoder: learned absolute positions, ReLU FFN, final
/// layer norm, unembedding untied from the token embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ffn: usize,
    pub context_length: usize,
    pub vocab_size: usize,
}

impl ModelConfig {
    pub fn with_vocab(vocab_size: usize) -> Self {
        ModelConfig { n_layers: 6, d_model: 128, n_heads: 4, d_ffn: 512, context_length: 256, vocab_size }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.n_layers == 0 || self.d_model == 0 || self.n_heads == 0 {
            return bad("layers, width and heads must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.d_ffn < self.d_model {
            return bad(format!("d_ffn {} smaller than d_model {}", self.d_ffn, self.d_model));
        }
        if self.context_length < 2 || self.vocab_size < 2 {
            return bad("context length and vocabulary need at least two entries".into());
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        super::params::Layout::new(self).total
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::with_vocab(400)
    }
}
