use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::norm::{layer_norm, silu};
use super::*;
use crate::ssm::{ssm_step, SsmParams, SsmVariant};
use crate::tensor::{Parameters, Tensor};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vec(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn config(variant: SsmVariant, parallel_sp: bool) -> BlockConfig {
    BlockConfig {
        model_dim: 6,
        inner_dim: 8,
        state_size: 3,
        conv_width: 4,
        variant,
        heads: 2,
        head_dim: 4,
        parallel_sp,
    }
}

/// A block whose every parameter is perturbed away from its structured init.
fn random_block(cfg: &BlockConfig, seed: u64) -> MambaBlock<f64> {
    let mut r = rng(seed);
    let mut block = MambaBlock::new(cfg, &mut r).unwrap();
    block.visit_mut("", &mut |_, t| {
        for v in t.data_mut() {
            *v += r.gen_range(-0.2..0.2);
        }
    });
    block
}

fn all_configs() -> Vec<BlockConfig> {
    let mut out = Vec::new();
    for v in SsmVariant::ALL {
        out.push(config(v, false));
        out.push(config(v, true));
    }
    out
}

#[test]
fn zero_out_proj_is_identity() {
    let mut r = rng(1);
    for cfg in all_configs() {
        let mut block = random_block(&cfg, 2);
        block.out_proj.fill(0.0);
        let len = 7;
        let x = random_vec(len * cfg.model_dim, &mut r);
        let layout = PrefixLayout::new(1, 3, len).unwrap();
        let (y, _) = block.forward(&x, &layout, None, ScanMode::Sequential).unwrap();
        assert_eq!(y, x);
    }
}

#[test]
fn output_shape_matches_input() {
    let mut r = rng(3);
    for cfg in all_configs() {
        let block = random_block(&cfg, 4);
        for len in [1usize, 2, 9] {
            let x = random_vec(len * cfg.model_dim, &mut r);
            let (y, cache) = block
                .forward(&x, &PrefixLayout::causal(len), None, ScanMode::Sequential)
                .unwrap();
            assert_eq!(y.len(), x.len());
            assert_eq!(cache.conv.len(), (cfg.conv_width - 1) * cfg.inner_dim);
        }
    }
}

#[test]
fn rejects_wrong_input_length() {
    let block = random_block(&config(SsmVariant::Mamba, false), 5);
    let x = vec![0.0; 5 * 6 + 1];
    assert!(block
        .forward(&x, &PrefixLayout::causal(5), None, ScanMode::Sequential)
        .is_err());
    assert!(block.step(&[0.0; 5], &mut block.empty_cache()).is_err());
}

#[test]
fn config_validation() {
    let mut cfg = config(SsmVariant::Mamba2, false);
    cfg.heads = 3;
    assert!(cfg.validate().is_err());
    let mut cfg = config(SsmVariant::Mamba, false);
    cfg.conv_width = 0;
    assert!(MambaBlock::<f64>::new(&cfg, &mut rng(0)).is_err());
}

/// Hand-assembled single-position evaluation from a fresh state: only the
/// current conv tap sees a nonzero input.
fn single_position_oracle(block: &MambaBlock<f64>, x: &[f64]) -> Vec<f64> {
    let (md, mi, w) = (block.model_dim(), block.inner_dim(), block.conv_width());
    let xn = layer_norm(x, block.norm_gain.data(), block.norm_bias.data());
    let mut proj = vec![0.0; 2 * mi];
    for (i, p) in proj.iter_mut().enumerate() {
        *p = (0..md).map(|j| block.in_proj.data()[i * md + j] * xn[j]).sum();
    }
    let u: Vec<f64> = (0..mi)
        .map(|m| silu(block.conv_weight.data()[m * w + w - 1] * proj[m] + block.conv_bias.data()[m]))
        .collect();
    let mut state = vec![0.0; block.ssm.state_len()];
    let mut ys = ssm_step(&block.ssm, &u, &xn, &mut state).unwrap();
    if let Some(b) = &block.ssm_backward {
        let mut sb = vec![0.0; b.state_len()];
        let yb = ssm_step(b, &u, &xn, &mut sb).unwrap();
        for (a, v) in ys.iter_mut().zip(yb) {
            *a += v;
        }
    }
    let gated: Vec<f64> = (0..mi).map(|m| ys[m] * silu(proj[mi + m])).collect();
    (0..md)
        .map(|i| x[i] + (0..mi).map(|m| block.out_proj.data()[i * mi + m] * gated[m]).sum::<f64>())
        .collect()
}

#[test]
fn single_position_matches_step_oracle() {
    let mut r = rng(6);
    for cfg in all_configs() {
        let block = random_block(&cfg, 7);
        let x = random_vec(cfg.model_dim, &mut r);
        let (y, _) = block
            .forward(&x, &PrefixLayout::causal(1), None, ScanMode::Sequential)
            .unwrap();
        let oracle = single_position_oracle(&block, &x);
        assert!(max_abs_diff(&y, &oracle) < 1e-12, "{cfg:?}");
        let stepped = block.step(&x, &mut block.empty_cache()).unwrap();
        assert!(max_abs_diff(&stepped, &oracle) < 1e-12, "{cfg:?}");
    }
}

#[test]
fn prefill_then_steps_match_full_sequence() {
    let mut r = rng(8);
    for cfg in all_configs() {
        let block = random_block(&cfg, 9);
        let (prefix, len) = (5, 12);
        let layout = PrefixLayout::new(1, 3, len).unwrap();
        let x = random_vec(len * cfg.model_dim, &mut r);
        let (full, _) = block.forward(&x, &layout, None, ScanMode::Sequential).unwrap();

        let md = cfg.model_dim;
        let (head, mut cache) = block
            .forward(&x[..prefix * md], &layout.with_total(prefix), None, ScanMode::Sequential)
            .unwrap();
        assert!(max_abs_diff(&head, &full[..prefix * md]) < 1e-12);
        for l in prefix..len {
            let y = block.step(&x[l * md..(l + 1) * md], &mut cache).unwrap();
            assert!(max_abs_diff(&y, &full[l * md..(l + 1) * md]) < 1e-10, "{cfg:?} at {l}");
        }

        let (tail, _) = block
            .forward(&x[prefix * md..], &PrefixLayout::causal(len - prefix), Some(&{
                let (_, c) = block
                    .forward(&x[..prefix * md], &layout.with_total(prefix), None, ScanMode::Sequential)
                    .unwrap();
                c
            }), ScanMode::Sequential)
            .unwrap();
        assert!(max_abs_diff(&tail, &full[prefix * md..]) < 1e-10);
    }
}

#[test]
fn continuation_cannot_reverse() {
    let block = random_block(&config(SsmVariant::Mamba, true), 10);
    let cache = block.empty_cache();
    let x = vec![0.1; 4 * 6];
    let layout = PrefixLayout::new(0, 3, 4).unwrap();
    assert!(block
        .forward(&x, &layout, Some(&cache), ScanMode::Sequential)
        .is_err());
}

#[test]
fn parallel_scan_matches_sequential() {
    let mut r = rng(11);
    for cfg in all_configs() {
        let block = random_block(&cfg, 12);
        let len = 13;
        let layout = PrefixLayout::new(1, 6, len).unwrap();
        let x = random_vec(len * cfg.model_dim, &mut r);
        let (a, _) = block.forward(&x, &layout, None, ScanMode::Sequential).unwrap();
        let (b, _) = block.forward(&x, &layout, None, ScanMode::Parallel).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-12);
    }
}

#[test]
fn text_outputs_ignore_future_text() {
    let mut r = rng(13);
    for cfg in all_configs() {
        let block = random_block(&cfg, 14);
        let md = cfg.model_dim;
        let (speech_end, len) = (5, 11);
        let layout = PrefixLayout::new(1, 4, len).unwrap();
        let x = random_vec(len * md, &mut r);
        let (base, _) = block.forward(&x, &layout, None, ScanMode::Sequential).unwrap();
        for t in speech_end..len - 1 {
            let mut changed = x.clone();
            for v in &mut changed[(t + 1) * md..] {
                *v += r.gen_range(-2.0..2.0);
            }
            let (y, _) = block.forward(&changed, &layout, None, ScanMode::Sequential).unwrap();
            assert_eq!(&y[..(t + 1) * md], &base[..(t + 1) * md], "{cfg:?} t={t}");
        }
    }
}

#[test]
fn speech_changes_reach_earlier_speech_only_with_backward_branch() {
    let mut r = rng(15);
    for cfg in all_configs() {
        let block = random_block(&cfg, 16);
        let md = cfg.model_dim;
        let len = 8;
        let layout = PrefixLayout::new(1, 4, len).unwrap();
        let x = random_vec(len * md, &mut r);
        let (base, _) = block.forward(&x, &layout, None, ScanMode::Sequential).unwrap();
        let mut changed = x.clone();
        for v in &mut changed[4 * md..5 * md] {
            *v += r.gen_range(-1.0..1.0);
        }
        let (y, _) = block.forward(&changed, &layout, None, ScanMode::Sequential).unwrap();
        let moved = max_abs_diff(&y[md..2 * md], &base[md..2 * md]) > 1e-9;
        assert_eq!(moved, cfg.parallel_sp, "{cfg:?}");
        assert_eq!(&y[..md], &base[..md]);
    }
}

/// Silence the backward branch: no readout and no skip path.
fn silence(ssm: &mut SsmParams<f64>) {
    match ssm {
        SsmParams::Lti(p) => {
            p.c.fill(0.0);
            p.d.fill(0.0);
        }
        SsmParams::Selective(p) => {
            p.w_c.fill(0.0);
            p.d.fill(0.0);
        }
        SsmParams::Scalar(p) => {
            let (n, md) = (p.state_size, p.proj.shape()[1]);
            p.proj.data_mut()[n * md..2 * n * md].fill(0.0);
            p.d.fill(0.0);
        }
    }
}

#[test]
fn silenced_backward_branch_reduces_to_unidirectional_block() {
    let mut r = rng(17);
    for v in SsmVariant::ALL {
        let mut sp = random_block(&config(v, true), 18);
        silence(sp.ssm_backward.as_mut().unwrap());
        let mut uni = sp.clone();
        uni.ssm_backward = None;
        let len = 9;
        let layout = PrefixLayout::new(1, 5, len).unwrap();
        let x = random_vec(len * 6, &mut r);
        let (a, _) = sp.forward(&x, &layout, None, ScanMode::Sequential).unwrap();
        let (b, _) = uni.forward(&x, &layout, None, ScanMode::Sequential).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-12, "{v}");
    }
}

/// With identical branch parameters and no span to reverse, the two branches
/// produce the same output, so the block equals a unidirectional one whose
/// readout and skip are doubled.
fn doubled(ssm: &SsmParams<f64>) -> SsmParams<f64> {
    let mut out = ssm.clone();
    let scale = |t: &mut Tensor<f64>| t.data_mut().iter_mut().for_each(|v| *v *= 2.0);
    match &mut out {
        SsmParams::Lti(p) => {
            scale(&mut p.c);
            scale(&mut p.d);
        }
        SsmParams::Selective(p) => {
            scale(&mut p.w_c);
            scale(&mut p.d);
        }
        SsmParams::Scalar(p) => {
            let (n, md) = (p.state_size, p.proj.shape()[1]);
            p.proj.data_mut()[n * md..2 * n * md].iter_mut().for_each(|v| *v *= 2.0);
            scale(&mut p.d);
        }
    }
    out
}

#[test]
fn empty_speech_span_sums_two_forward_branches() {
    let mut r = rng(19);
    for v in SsmVariant::ALL {
        let mut sp = random_block(&config(v, true), 20);
        sp.ssm_backward = Some(sp.ssm.clone());
        let mut uni = sp.clone();
        uni.ssm_backward = None;
        uni.ssm = doubled(&sp.ssm);
        let len = 7;
        let x = random_vec(len * 6, &mut r);
        for layout in [PrefixLayout::new(1, 0, len).unwrap(), PrefixLayout::new(2, 1, len).unwrap()] {
            let (a, _) = sp.forward(&x, &layout, None, ScanMode::Sequential).unwrap();
            let (b, _) = uni.forward(&x, &layout, None, ScanMode::Sequential).unwrap();
            assert!(max_abs_diff(&a, &b) < 1e-12, "{v}");
        }
    }
}

#[test]
fn helper_entry_points() {
    let block = random_block(&config(SsmVariant::S4d, false), 21);
    let x = vec![0.3; 3 * 6];
    let layout = PrefixLayout::causal(3);
    assert!(mamba_block_forward(&x, &block, &layout, None).is_ok());
    assert!(parallel_sp_block_forward(&x, &block, &layout, None).is_err());
    let sp = random_block(&config(SsmVariant::S4d, true), 21);
    assert!(parallel_sp_block_forward(&x, &sp, &layout, None).is_ok());
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

/// Norm-wise relative agreement, with an absolute floor for tensors whose
/// gradient is itself at the finite-difference noise level.
fn close(analytic: &[f64], numeric: &[f64]) -> bool {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    rel_err(analytic, numeric) < 1e-6 || diff < 1e-9
}

#[test]
fn backward_matches_finite_differences() {
    let mut r = rng(22);
    let eps = 1e-5;
    for cfg in all_configs() {
        let block = random_block(&cfg, 23);
        let len = 6;
        let layout = PrefixLayout::new(1, 3, len).unwrap();
        let x = random_vec(len * cfg.model_dim, &mut r);
        let weights = random_vec(len * cfg.model_dim, &mut r);
        let loss = |b: &MambaBlock<f64>, x: &[f64]| -> f64 {
            let (y, _) = b.forward(x, &layout, None, ScanMode::Sequential).unwrap();
            y.iter().zip(&weights).map(|(a, w)| a * w).sum()
        };

        let (_, trace) = block.forward_trace(&x, &layout, ScanMode::Sequential).unwrap();
        let mut grads = block.zeros_like();
        let dx = block.backward(&trace, &weights, &mut grads);

        let analytic: Vec<(String, Vec<f64>)> = grads
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.data().to_vec()))
            .collect();
        for (name, g) in analytic {
            let mut numeric = vec![0.0; g.len()];
            for (k, slot) in numeric.iter_mut().enumerate() {
                let mut plus = block.clone();
                let mut minus = block.clone();
                let bump = |b: &mut MambaBlock<f64>, by: f64| {
                    b.visit_mut("", &mut |n, t| {
                        if n == name {
                            t.data_mut()[k] += by;
                        }
                    })
                };
                bump(&mut plus, eps);
                bump(&mut minus, -eps);
                *slot = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * eps);
            }
            assert!(close(&g, &numeric), "{cfg:?} {name}: {g:?} {numeric:?}");
        }

        let mut numeric = vec![0.0; x.len()];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += eps;
            xm[k] -= eps;
            *slot = (loss(&block, &xp) - loss(&block, &xm)) / (2.0 * eps);
        }
        assert!(close(&dx, &numeric), "{cfg:?} input");
    }
}
