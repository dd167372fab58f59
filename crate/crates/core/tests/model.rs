//! Forward, incremental decoding, training and checkpoint persistence.

use babel_core::model::{forward, greedy_decode, init_model, train, CaptureFlags, Checkpoint, Decoder, Model, ModelConfig, TrainConfig};
use babel_core::toylang::{build_mixture, build_vocabulary, Family, MixtureSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn perturbed(cfg: ModelConfig, seed: u64) -> Model {
    let mut m = Model::init(cfg, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    m.params.iter_mut().for_each(|p| *p += rng.gen_range(-0.05..0.05));
    m
}

#[test]
fn cached_decoding_matches_full_forward() {
    let cfg = ModelConfig { n_layers: 3, d_model: 24, n_heads: 3, d_ffn: 48, context_length: 32, vocab_size: 30 };
    let model = perturbed(cfg, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let tokens: Vec<u32> = (0..32).map(|_| rng.gen_range(0..30)).collect();
    let full = forward(&model, &tokens, CaptureFlags::ALL).unwrap();
    let cap = full.capture.unwrap();
    let mut dec = Decoder::new(&model, true);
    for (pos, t) in tokens.iter().enumerate() {
        let step = dec.step(*t).unwrap();
        for (a, b) in step.logits.iter().zip(&full.logits[pos * 30..(pos + 1) * 30]) {
            assert!((a - b).abs() < 1e-9, "logits differ at {pos}");
        }
        for l in 0..=cfg.n_layers {
            let want = cap.residual_at(l, pos).unwrap();
            assert!(step.residual[l].iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-9));
        }
    }
    // The context is full: one more token is refused.
    assert!(dec.step(0).is_err());
}

#[test]
fn greedy_decoding_extends_the_prompt() {
    let cfg = ModelConfig { n_layers: 2, d_model: 16, n_heads: 2, d_ffn: 32, context_length: 16, vocab_size: 12 };
    let model = perturbed(cfg, 1);
    let out = greedy_decode(&model, &[1, 2, 3], 40, 11, &[]).unwrap();
    assert_eq!(&out[..3], &[1, 2, 3]);
    assert!(out.len() <= 16);
    let last = out.len() - 1;
    assert!(out.len() == 16 || out[last] == 11);
}

#[test]
fn training_lowers_loss_and_checkpoints_round_trip() {
    let fam = Family::builtin();
    let vocab = build_vocabulary(&fam.languages).unwrap();
    let cfg = ModelConfig { n_layers: 2, d_model: 32, n_heads: 2, d_ffn: 64, context_length: 64, vocab_size: vocab.len() };
    let start = init_model(cfg, 2, &vocab.content_hash()).unwrap();
    let stream = build_mixture(&vocab, &fam, &MixtureSpec::single("A", 30_000), 3).unwrap();
    let tc = TrainConfig { steps: 150, batch_size: 4, seq_len: Some(32), lr: 3e-3, warmup_steps: 10, save_interval: 50, ..Default::default() };
    let dir = tempfile::tempdir().unwrap();
    let mut saved = Vec::new();
    let out = train(&start, &stream, &tc, &mut |c| {
        let p = dir.path().join(format!("{}.ckpt", c.step));
        c.save(&p).unwrap();
        saved.push((c.step, p));
        Ok(())
    })
    .unwrap();
    assert_eq!(saved.iter().map(|s| s.0).collect::<Vec<_>>(), vec![50, 100, 150]);
    let first: f64 = out.trace.entries[..10].iter().map(|e| e.loss).sum::<f64>() / 10.0;
    let last: f64 = out.trace.entries[140..].iter().map(|e| e.loss).sum::<f64>() / 10.0;
    assert!(last < 0.7 * first, "{first} -> {last}");
    let loaded = Checkpoint::load(&saved[2].1).unwrap();
    assert_eq!(loaded.to_bytes(), out.final_checkpoint.to_bytes());
    assert_eq!(loaded.trained_tokens.values().sum::<u64>(), 150 * 4 * 32);
}
