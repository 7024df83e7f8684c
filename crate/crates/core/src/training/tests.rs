use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::blocks::norm::silu_grad;
use crate::error::Error;
use crate::model::{load_checkpoint, masked_cross_entropy_grad, ComposedSequence, Model, ModelConfig, PrefixMode};
use crate::ssm::{ScanMode, SsmVariant};
use crate::tensor::{Parameters, Tensor};
use crate::tokens::NUM_SPECIAL;

/// A matrix and a vector, enough to exercise the decay rule.
#[derive(Debug, Clone, PartialEq)]
struct Pair {
    matrix: Tensor<f64>,
    vector: Tensor<f64>,
}

impl Parameters<f64> for Pair {
    fn visit<'a>(&'a self, _: &str, f: &mut dyn FnMut(String, &'a Tensor<f64>)) {
        f("matrix".into(), &self.matrix);
        f("vector".into(), &self.vector);
    }

    fn visit_mut(&mut self, _: &str, f: &mut dyn FnMut(String, &mut Tensor<f64>)) {
        f("matrix".into(), &mut self.matrix);
        f("vector".into(), &mut self.vector);
    }
}

fn pair(seed: u64) -> Pair {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Pair {
        matrix: Tensor::uniform(&[2, 3], 1.0, &mut r),
        vector: Tensor::uniform(&[4], 1.0, &mut r),
    }
}

#[test]
fn lr_reference_points() {
    let peak = 0.006;
    assert_eq!(lr_at(5000, 5000, peak), 0.006);
    assert!((lr_at(1, 5000, peak) - peak / 5000.0).abs() < 1e-18);
    assert!((lr_at(20_000, 5000, peak) - peak / 2.0).abs() < 1e-15);
    assert_eq!(Schedule::Constant.lr(50, 100, 1.0), 0.5);
    assert_eq!(Schedule::Constant.lr(500, 100, 1.0), 1.0);
}

#[test]
fn lr_continuous_at_warmup() {
    for warmup in [1usize, 7, 100, 5000] {
        let at = lr_at(warmup, warmup, 1.0);
        let before = lr_at(warmup.saturating_sub(1).max(1), warmup, 1.0);
        let after = lr_at(warmup + 1, warmup, 1.0);
        assert_eq!(at, 1.0);
        assert!((at - before) <= 1.0 / warmup as f64 + 1e-12);
        assert!((at - after) <= 1.0 / warmup as f64);
    }
}

#[test]
fn silu_derivative_at_zero() {
    assert_eq!(silu_grad(0.0f64), 0.5);
}

#[test]
fn zero_gradient_only_decays_matrices() {
    let mut p = pair(1);
    let before = p.clone();
    let grads = Pair {
        matrix: before.matrix.zeros_like(),
        vector: before.vector.zeros_like(),
    };
    let cfg = AdamWConfig {
        weight_decay: 0.1,
        ..AdamWConfig::default()
    };
    let lr = 0.05;
    let mut opt = AdamW::new(&p, cfg);
    opt.step(&mut p, &grads, lr).unwrap();
    for (a, b) in p.matrix.data().iter().zip(before.matrix.data()) {
        assert_eq!(*a, b * (1.0 - lr * 0.1));
    }
    assert_eq!(p.vector, before.vector);
}

#[test]
fn first_step_moves_by_lr_times_sign() {
    let mut p = pair(2);
    let before = p.clone();
    let mut grads = pair(3);
    grads.vector.data_mut()[0] = 0.0;
    let cfg = AdamWConfig {
        weight_decay: 0.0,
        ..AdamWConfig::default()
    };
    let lr = 0.01;
    let mut opt = AdamW::new(&p, cfg);
    opt.step(&mut p, &grads, lr).unwrap();
    let moved = p.named_tensors();
    let orig = before.named_tensors();
    for ((_, g), ((_, now), (_, was))) in grads.named_tensors().iter().zip(moved.iter().zip(&orig)) {
        for ((&g, &now), &was) in g.data().iter().zip(now.data()).zip(was.data()) {
            let expected = if g == 0.0 { 0.0 } else { -lr * g.signum() };
            assert!((now - was - expected).abs() < lr * 1e-6, "{g}: {}", now - was);
        }
    }
}

#[test]
fn adamw_matches_reference_loop() {
    let cfg = AdamWConfig {
        beta1: 0.8,
        beta2: 0.95,
        eps: 1e-6,
        weight_decay: 0.05,
    };
    let mut p = pair(4);
    let mut opt = AdamW::new(&p, cfg);

    // Reference: plain loops over flat vectors.
    let mut theta: Vec<Vec<f64>> = vec![p.matrix.data().to_vec(), p.vector.data().to_vec()];
    let decays = [true, false];
    let mut m: Vec<Vec<f64>> = theta.iter().map(|t| vec![0.0; t.len()]).collect();
    let mut v = m.clone();
    let mut r = ChaCha8Rng::seed_from_u64(5);
    for t in 1..=10 {
        let lr = 0.01 * t as f64;
        let grads = Pair {
            matrix: Tensor::uniform(&[2, 3], 2.0, &mut r),
            vector: Tensor::uniform(&[4], 2.0, &mut r),
        };
        let g = [grads.matrix.data().to_vec(), grads.vector.data().to_vec()];
        for k in 0..2 {
            for i in 0..theta[k].len() {
                m[k][i] = 0.8 * m[k][i] + 0.2 * g[k][i];
                v[k][i] = 0.95 * v[k][i] + 0.05 * g[k][i] * g[k][i];
                let mh = m[k][i] / (1.0 - 0.8f64.powi(t));
                let vh = v[k][i] / (1.0 - 0.95f64.powi(t));
                if decays[k] {
                    theta[k][i] -= lr * 0.05 * theta[k][i];
                }
                theta[k][i] -= lr * mh / (vh.sqrt() + 1e-6);
            }
        }
        opt.step(&mut p, &grads, lr).unwrap();
    }
    assert_eq!(opt.step_count(), 10);
    for (ours, reference) in [p.matrix.data(), p.vector.data()].iter().zip(&theta) {
        for (a, b) in ours.iter().zip(reference) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn clipping() {
    let g = pair(6);
    let norm = global_grad_norm(&g);
    let mut same = g.clone();
    assert_eq!(clip_grad_norm(&mut same, f64::INFINITY), norm);
    assert_eq!(same, g);
    let mut loose = g.clone();
    clip_grad_norm(&mut loose, norm * 2.0);
    assert_eq!(loose, g);
    let mut tight = g.clone();
    clip_grad_norm(&mut tight, norm / 4.0);
    assert!((global_grad_norm(&tight) - norm / 4.0).abs() < 1e-12);
}

fn small_config(variant: SsmVariant, mode: PrefixMode) -> ModelConfig {
    ModelConfig {
        n_blocks: 2,
        m_in: 16,
        m_inner: 32,
        state_size: 8,
        conv_width: 4,
        heads: 4,
        head_dim: 8,
        ssm_variant: variant,
        prefix_mode: mode,
        vocab_size: 20,
        max_seq_len: 128,
        embed_mask_prob: 0.0,
    }
}

fn sample(seed: u64, speech: usize, text: usize) -> ComposedSequence {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<u32> { (0..n).map(|_| r.gen_range(NUM_SPECIAL..20)).collect() };
    let s = draw(speech);
    let t = draw(text);
    ComposedSequence::new(&s, &t).unwrap()
}

fn overfit_config() -> TrainConfig {
    TrainConfig {
        batch_size: 1,
        epochs: 500,
        seed: 3,
        schedule: Schedule::Constant,
        lr_peak: 3e-3,
        warmup_steps: 20,
        ..TrainConfig::default()
    }
}

#[test]
fn single_sample_overfit() {
    let seq = sample(7, 12, 8);
    let model: Model<f32> =
        Model::new(small_config(SsmVariant::Mamba, PrefixMode::None), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let mut trainer = Trainer::new(model, overfit_config()).unwrap();
    let report = trainer.run(std::slice::from_ref(&seq), &[], None).unwrap();
    let losses = report.losses();
    assert_eq!(losses.len(), 500);
    let last = *losses.last().unwrap();
    assert!(last < 0.01, "final loss {last}");
    let windows: Vec<f64> = losses.chunks(100).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    for pair in windows.windows(2) {
        assert!(pair[1] < pair[0], "window means {windows:?}");
    }
}

#[test]
fn fixed_seed_is_bitwise_reproducible() {
    let data: Vec<ComposedSequence> = (0..6).map(|i| sample(20 + i, 6, 4)).collect();
    let cfg = TrainConfig {
        batch_size: 2,
        epochs: 2,
        seed: 11,
        warmup_steps: 3,
        ..TrainConfig::default()
    };
    let run = || {
        let mut mc = small_config(SsmVariant::Mamba2, PrefixMode::Parallel);
        mc.embed_mask_prob = 0.2;
        let model: Model<f32> = Model::new(mc, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        let mut t = Trainer::new(model, cfg.clone()).unwrap();
        let report = t.run(&data, &data[..2], None).unwrap();
        (report, t.model)
    };
    let (a, ma) = run();
    let (b, mb) = run();
    assert_eq!(a.steps.len(), 6);
    let bits = |r: &TrainReport| r.losses().iter().map(|l| l.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a, b);
    assert_eq!(ma, mb);
}

#[test]
fn masked_rows_leave_head_bias_untouched() {
    let model: Model<f64> =
        Model::new(small_config(SsmVariant::S4d, PrefixMode::Serial), &mut ChaCha8Rng::seed_from_u64(13)).unwrap();
    let seq = sample(14, 5, 3);
    let (logits, _) = model.forward_trace::<ChaCha8Rng>(&seq, None, ScanMode::Sequential).unwrap();
    let (_, dlogits) = masked_cross_entropy_grad(&logits, 20, &seq, 1.0).unwrap();
    for (l, row) in dlogits.chunks(20).enumerate() {
        let nonzero = row.iter().any(|&g| g != 0.0);
        assert_eq!(nonzero, seq.loss_mask[l], "position {l}");
    }
}

#[test]
fn gradient_check_tiny_model() {
    let cfg = ModelConfig {
        n_blocks: 2,
        m_in: 8,
        m_inner: 16,
        state_size: 4,
        conv_width: 4,
        heads: 4,
        head_dim: 4,
        ssm_variant: SsmVariant::Mamba,
        prefix_mode: PrefixMode::Parallel,
        vocab_size: 12,
        max_seq_len: 32,
        embed_mask_prob: 0.0,
    };
    let mut r = ChaCha8Rng::seed_from_u64(15);
    let mut model: Model<f64> = Model::new(cfg, &mut r).unwrap();
    // Step sizes of order one keep every gradient well above the stencil's roundoff floor.
    model.visit_mut("", &mut |name, t| {
        let shift = if name.ends_with("delta_bias") { 1.0 } else { 0.0 };
        t.data_mut().iter_mut().for_each(|v| *v += shift + r.gen_range(-0.2..0.2))
    });
    let seq = ComposedSequence::new(&[4, 5, 6], &[7, 8]).unwrap();
    assert_eq!(seq.len(), 8);
    let checks = gradient_check(&model, &seq, 1e-3).unwrap();
    assert_eq!(checks.len(), model.named_tensors().len());
    for c in &checks {
        assert!(c.rel_error < 1e-6, "{}: {}", c.name, c.rel_error);
    }
}

#[test]
fn non_finite_parameters_are_reported() {
    let mut model: Model<f32> =
        Model::new(small_config(SsmVariant::Mamba, PrefixMode::None), &mut ChaCha8Rng::seed_from_u64(16)).unwrap();
    assert_eq!(first_non_finite(&model), None);
    model.blocks[1].out_proj.data_mut()[3] = f32::NAN;
    assert_eq!(first_non_finite(&model).as_deref(), Some("blocks.1.out_proj"));
    let mut trainer = Trainer::new(model, overfit_config()).unwrap();
    let err = trainer.train_step(&[sample(17, 4, 4)]).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)), "{err}");
}

#[test]
fn run_writes_logs_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let data: Vec<ComposedSequence> = (0..5).map(|i| sample(30 + i, 4, 3)).collect();
    let cfg = TrainConfig {
        batch_size: 2,
        epochs: 3,
        max_steps: Some(4),
        log_every: 2,
        eval_every: 2,
        ..TrainConfig::default()
    };
    let model: Model<f32> =
        Model::new(small_config(SsmVariant::S4d, PrefixMode::None), &mut ChaCha8Rng::seed_from_u64(18)).unwrap();
    let out = RunOutput {
        dir: dir.path().join("run"),
        meta: [("vocab".to_string(), "abc".to_string())].into(),
    };
    let mut trainer = Trainer::new(model, cfg).unwrap();
    let report = trainer.run(&data, &data[..2], Some(&out)).unwrap();
    assert_eq!(report.steps.len(), 4);
    assert_eq!(trainer.steps_taken(), 4);
    assert_eq!(report.valid.iter().map(|v| v.step).collect::<Vec<_>>(), vec![2, 4]);

    let metrics = std::fs::read_to_string(out.dir.join("metrics.jsonl")).unwrap();
    let lines: Vec<StepMetrics> = metrics.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.iter().map(|m| m.step).collect::<Vec<_>>(), vec![2, 4]);
    assert_eq!(lines[1], report.steps[3]);
    let first: serde_json::Value = serde_json::from_str(metrics.lines().next().unwrap()).unwrap();
    let keys: Vec<&str> = first.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, vec!["loss", "lr", "step", "token_acc"]);

    let (last, meta) = load_checkpoint(&out.dir.join("last.ckpt")).unwrap();
    assert_eq!(meta["vocab"], "abc");
    assert_eq!(meta["step"], "4");
    assert_eq!(last, trainer.model);
    assert!(out.dir.join("best.ckpt").exists());
}

#[test]
fn invalid_configs_and_empty_data() {
    let model: Model<f32> =
        Model::new(small_config(SsmVariant::S4d, PrefixMode::None), &mut ChaCha8Rng::seed_from_u64(19)).unwrap();
    let bad = TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    };
    assert!(Trainer::new(model.clone(), bad).is_err());
    let mut t = Trainer::new(model, TrainConfig::default()).unwrap();
    assert!(t.run(&[], &[], None).is_err());
    let cfg: std::result::Result<TrainConfig, _> = serde_json::from_str(r#"{"batch": 3}"#);
    assert!(cfg.is_err());
    let cfg: TrainConfig = serde_json::from_str(r#"{"batch_size": 3, "schedule": "constant"}"#).unwrap();
    assert_eq!(cfg.schedule, Schedule::Constant);
}
