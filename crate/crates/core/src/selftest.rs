//! Fast internal consistency checks, runnable from the command line.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocks::{reverse_speech_rows, PrefixLayout};
use crate::error::Result;
use crate::model::{ComposedSequence, Model, ModelConfig, PrefixMode};
use crate::ssm::{parallel_scan, sequential_scan, ScanElement, ScanMode, SsmVariant};
use crate::tensor::Parameters;
use crate::tokens::NUM_SPECIAL;
use crate::training::gradient_check;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

pub const CHECK_NAMES: [&str; 4] = [
    "scan-equivalence",
    "step-consistency",
    "gradient",
    "reversal-involution",
];

/// Run every check; a check that errors counts as failed.
pub fn run_selftest(seed: u64) -> Vec<CheckOutcome> {
    let checks: [(&'static str, fn(u64) -> Result<(bool, String)>); 4] = [
        (CHECK_NAMES[0], scan_equivalence),
        (CHECK_NAMES[1], step_consistency),
        (CHECK_NAMES[2], gradient),
        (CHECK_NAMES[3], reversal_involution),
    ];
    checks
        .iter()
        .map(|&(name, check)| {
            let start = Instant::now();
            let (passed, detail) = check(seed).unwrap_or_else(|e| (false, format!("error: {e}")));
            CheckOutcome {
                name,
                passed,
                detail,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

pub(crate) fn tiny_model(variant: SsmVariant, mode: PrefixMode, seed: u64) -> Result<Model<f64>> {
    let cfg = ModelConfig {
        n_blocks: 2,
        m_in: 8,
        m_inner: 16,
        state_size: 4,
        conv_width: 4,
        heads: 4,
        head_dim: 4,
        ssm_variant: variant,
        prefix_mode: mode,
        vocab_size: 12,
        max_seq_len: 64,
        embed_mask_prob: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::new(cfg, &mut rng)?;
    model.visit_mut("", &mut |name, t| {
        let shift = if name.ends_with("delta_bias") { 1.0 } else { 0.0 };
        for v in t.data_mut() {
            *v += shift + rng.gen_range(-0.2..0.2);
        }
    });
    Ok(model)
}

fn random_sequence(rng: &mut ChaCha8Rng, speech: usize, text: usize) -> Result<ComposedSequence> {
    let mut draw = |n: usize| -> Vec<u32> { (0..n).map(|_| rng.gen_range(NUM_SPECIAL..12)).collect() };
    let s = draw(speech);
    let t = draw(text);
    ComposedSequence::new(&s, &t)
}

fn all_combos() -> impl Iterator<Item = (SsmVariant, PrefixMode)> {
    SsmVariant::ALL
        .into_iter()
        .flat_map(|v| PrefixMode::ALL.into_iter().map(move |m| (v, m)))
}

fn scan_equivalence(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f32;
    for len in [7, 64, 1024] {
        for n in [1, 16] {
            let elements: Vec<ScanElement<f32>> = (0..len)
                .map(|_| ScanElement {
                    gain: (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
                    load: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                })
                .collect();
            let h0: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (a, _) = sequential_scan(&elements, &h0)?;
            let (b, _) = parallel_scan(&elements, &h0)?;
            worst = a
                .iter()
                .flatten()
                .zip(b.iter().flatten())
                .map(|(x, y)| (x - y).abs())
                .fold(worst, f32::max);
        }
    }
    let mut model_worst = 0.0f64;
    for variant in SsmVariant::ALL {
        let model = tiny_model(variant, PrefixMode::Parallel, seed)?;
        let seq = random_sequence(&mut rng, 9, 6)?;
        let a = model.forward_logits_with(&seq.ids, &seq.layout, ScanMode::Sequential)?;
        let b = model.forward_logits_with(&seq.ids, &seq.layout, ScanMode::Parallel)?;
        model_worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(model_worst, f64::max);
    }
    let passed = worst < 1e-5 && model_worst < 1e-9;
    Ok((passed, format!("scan max diff {worst:.2e}, model max diff {model_worst:.2e}")))
}

fn step_consistency(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let mut worst = 0.0f64;
    for (variant, mode) in all_combos() {
        let model = tiny_model(variant, mode, seed)?;
        let seq = random_sequence(&mut rng, 7, 5)?;
        let full = model.forward_sequence(&seq)?;
        let v = model.vocab_size();
        let bos = seq.bos_position();
        let (mut cache, mut logits) = model.prefill(seq.prefix())?;
        for l in bos..seq.len() {
            let expected = &full[l * v..(l + 1) * v];
            worst = logits.iter().zip(expected).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
            if l + 1 < seq.len() {
                logits = model.decode_step(seq.ids[l + 1], &mut cache)?;
            }
        }
    }
    Ok((worst < 1e-4, format!("max logit diff {worst:.2e} over 9 configurations")))
}

fn gradient(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
    let mut worst = (0.0f64, String::new());
    for (variant, mode) in [(SsmVariant::Mamba, PrefixMode::Parallel), (SsmVariant::Mamba2, PrefixMode::Serial)] {
        let model = tiny_model(variant, mode, seed)?;
        let seq = random_sequence(&mut rng, 3, 2)?;
        for c in gradient_check(&model, &seq, 1e-3)? {
            if c.rel_error >= worst.0 {
                worst = (c.rel_error, format!("{variant}/{mode} {}", c.name));
            }
        }
    }
    Ok((worst.0 < 1e-6, format!("worst relative error {:.2e} ({})", worst.0, worst.1)))
}

fn reversal_involution(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
    for _ in 0..200 {
        let total = rng.gen_range(0..40);
        let start = rng.gen_range(0..=total);
        let len = rng.gen_range(0..=total - start);
        let dim = rng.gen_range(1..5);
        let layout = PrefixLayout::new(start, len, total)?;
        let x: Vec<f64> = (0..total * dim).map(|_| rng.gen()).collect();
        let mut y = x.clone();
        reverse_speech_rows(&mut y, dim, &layout)?;
        let outside_fixed = (0..total)
            .filter(|&l| l < start || l >= start + len)
            .all(|l| y[l * dim..(l + 1) * dim] == x[l * dim..(l + 1) * dim]);
        reverse_speech_rows(&mut y, dim, &layout)?;
        if y != x || !outside_fixed {
            return Ok((false, format!("layout {layout:?} is not an involution")));
        }
    }
    Ok((true, "200 random layouts".into()))
}
