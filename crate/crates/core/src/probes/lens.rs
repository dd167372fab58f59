//! Logit lens: read an intermediate residual through the model's own final
//! normalization and unembedding.

use super::ProbeError;
use crate::model::forward::unembed_rows;
use crate::model::argmax;
use crate::model::{ActivationCapture, Model};

/// Lens logits for one residual row.
pub fn lens_logits(model: &Model, residual: &[f64]) -> Vec<f64> {
    unembed_rows(model, residual).0
}

/// Argmax token of `unembed(final_norm(residual))`, first maximum on ties.
pub fn lens_argmax(model: &Model, residual: &[f64]) -> u32 {
    argmax(&lens_logits(model, residual)) as u32
}

/// Lens token at `layer` (0 = embeddings, `n_layers` = final stream) and
/// `position` of a capture taken from this model.
pub fn logit_lens(model: &Model, capture: &ActivationCapture, layer: usize, position: usize) -> Result<u32, ProbeError> {
    let n_layers = model.config.n_layers;
    if layer > n_layers || layer >= capture.residual.len() {
        return Err(ProbeError::LayerOutOfRange { layer, n_layers });
    }
    let row = capture
        .residual_at(layer, position)
        .ok_or(ProbeError::PositionOutOfRange { pos: position, positions: capture.positions })?;
    Ok(lens_argmax(model, row))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, CaptureFlags, ModelConfig};

    fn model() -> Model {
        Model::init(ModelConfig { n_layers: 2, d_model: 16, n_heads: 2, d_ffn: 32, context_length: 16, vocab_size: 20 }, 4)
    }

    #[test]
    fn final_layer_matches_model_argmax() {
        let m = model();
        let toks = [1u32, 5, 7, 2, 9, 9, 3];
        let out = forward(&m, &toks, CaptureFlags::ALL).unwrap();
        let cap = out.capture.unwrap();
        for p in 0..toks.len() {
            let want = argmax(&out.logits[p * 20..(p + 1) * 20]) as u32;
            assert_eq!(logit_lens(&m, &cap, 2, p).unwrap(), want);
        }
    }

    #[test]
    fn zero_residual_is_a_fixed_token() {
        let m = model();
        let z = vec![0.0; 16];
        assert_eq!(lens_argmax(&m, &z), lens_argmax(&m, &z));
    }

    #[test]
    fn out_of_range_layer_and_position() {
        let m = model();
        let cap = forward(&m, &[1, 2], CaptureFlags::ALL).unwrap().capture.unwrap();
        assert!(matches!(logit_lens(&m, &cap, 3, 0), Err(ProbeError::LayerOutOfRange { .. })));
        assert!(matches!(logit_lens(&m, &cap, 1, 2), Err(ProbeError::PositionOutOfRange { .. })));
    }
}
