use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tensor::Parameters;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vec(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

fn max_abs_diff<T: crate::Scalar>(a: &[T], b: &[T]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.as_f64() - y.as_f64()).abs())
        .fold(0.0, f64::max)
}

#[test]
fn discretize_examples() {
    let (g, l) = discretize(1.0f64, &[-1.0], &[2.0]).unwrap();
    assert!((g[0] - (-1.0f64).exp()).abs() < 1e-15);
    assert!((g[0] - 0.367879).abs() < 1e-6);
    assert_eq!(l, vec![2.0]);

    let (g, l) = discretize(0.5f64, &[-2.0, -4.0], &[1.0, 1.0]).unwrap();
    assert!((g[0] - (-1.0f64).exp()).abs() < 1e-15);
    assert!((g[1] - (-2.0f64).exp()).abs() < 1e-15);
    assert_eq!(l, vec![0.5, 0.5]);

    let (g, l) = discretize(1e-12f64, &[-3.0, -7.0], &[4.0, -2.0]).unwrap();
    assert!(g.iter().all(|&v| (v - 1.0).abs() < 1e-10));
    assert!(l.iter().all(|&v| v.abs() < 1e-10));
}

#[test]
fn discretize_rejects_non_positive_step() {
    assert!(discretize(0.0f32, &[-1.0], &[1.0]).is_err());
    assert!(discretize(-0.1f32, &[-1.0], &[1.0]).is_err());
    assert!(discretize(f32::NAN, &[-1.0], &[1.0]).is_err());
    assert!(discretize(0.1f32, &[-1.0], &[1.0, 2.0]).is_err());
}

#[test]
fn gains_lie_strictly_inside_unit_interval() {
    let mut r = rng(3);
    for _ in 0..100 {
        let a: Vec<f64> = (0..8).map(|_| -r.gen_range(0.01..50.0)).collect();
        let delta = r.gen_range(1e-4..2.0);
        let (g, _) = discretize(delta, &a, &[1.0; 8]).unwrap();
        assert!(g.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}

#[test]
fn selection_at_zero_input() {
    let sel = SelectiveSsm::<f64>::init(5, 3, &mut rng(1));
    let s = selection_forward(&[0.0; 5], &sel).unwrap();
    assert!(s.b.iter().chain(&s.c).all(|&v| v == 0.0));
    for (d, &bias) in s.delta.iter().zip(sel.delta_bias.data()) {
        assert!((d - crate::scalar::softplus(bias)).abs() < 1e-15);
    }
}

#[test]
fn selection_softplus_of_zero_is_ln2() {
    let mut sel = SelectiveSsm::<f64>::init(2, 2, &mut rng(1));
    sel.delta_bias.data_mut().copy_from_slice(&[-0.5, 0.25]);
    sel.w_delta.data_mut().copy_from_slice(&[0.5, 1.0]);
    // w·x = 0.5 and -0.25 make the two arguments zero
    let s = selection_forward(&[1.0, 0.0], &sel).unwrap();
    assert!((s.delta[0] - std::f64::consts::LN_2).abs() < 1e-12);
    let s = selection_forward(&[0.0, -0.25], &sel).unwrap();
    assert!((s.delta[1] - std::f64::consts::LN_2).abs() < 1e-6);
    assert!(selection_forward(&[0.0; 3], &sel).is_err());
}

#[test]
fn selection_matches_naive_products() {
    let mut r = rng(9);
    let sel = SelectiveSsm::<f64>::init(6, 4, &mut r);
    let x = random_vec(6, &mut r);
    let s = selection_forward(&x, &sel).unwrap();
    for n in 0..4 {
        let mut b = 0.0;
        let mut c = 0.0;
        for m in 0..6 {
            b += sel.w_b.data()[n * 6 + m] * x[m];
            c += sel.w_c.data()[n * 6 + m] * x[m];
        }
        assert!((b - s.b[n]).abs() < 1e-14);
        assert!((c - s.c[n]).abs() < 1e-14);
    }
    let w: f64 = (0..6).map(|m| sel.w_delta.data()[m] * x[m]).sum();
    for m in 0..6 {
        let expect = (1.0 + (sel.delta_bias.data()[m] + w).exp()).ln();
        assert!((expect - s.delta[m]).abs() < 1e-14);
        assert!(s.delta[m] > 0.0);
    }
}

#[test]
fn mamba_with_zero_readout_is_skip_only() {
    let mut r = rng(5);
    let mut sel = SelectiveSsm::<f64>::init(3, 4, &mut r);
    sel.w_c.fill(0.0);
    sel.d.data_mut().copy_from_slice(&[0.5, -2.0, 1.5]);
    let x = random_vec(7 * 3, &mut r);
    let (y, _) = mamba_ssm_forward(&x, 7, &sel, &[0.0; 12], ScanMode::Sequential).unwrap();
    for l in 0..7 {
        for m in 0..3 {
            assert!((y[l * 3 + m] - sel.d.data()[m] * x[l * 3 + m]).abs() < 1e-15);
        }
    }
}

#[test]
fn mamba_single_step_closed_form() {
    // M = 1, N = 1, L = 1, h0 = 0
    let sel = SelectiveSsm::<f64> {
        a_log: crate::Tensor::from_vec(&[1], vec![0.3]),
        d: crate::Tensor::from_vec(&[1], vec![0.7]),
        w_b: crate::Tensor::from_vec(&[1, 1], vec![1.5]),
        w_c: crate::Tensor::from_vec(&[1, 1], vec![-0.4]),
        w_delta: crate::Tensor::from_vec(&[1], vec![0.2]),
        delta_bias: crate::Tensor::from_vec(&[1], vec![-1.0]),
    };
    let x = 0.8;
    let b = 1.5 * x;
    let c = -0.4 * x;
    let delta = (1.0f64 + (-1.0f64 + 0.2 * x).exp()).ln();
    let expect = c * (delta * b * x) + 0.7 * x;
    let (y, fin) = mamba_ssm_forward(&[x], 1, &sel, &[0.0], ScanMode::Sequential).unwrap();
    assert!((y[0] - expect).abs() < 1e-15);
    assert!((fin[0] - delta * b * x).abs() < 1e-15);
}

#[test]
fn mamba2_vanishing_step_is_skip_only() {
    let mut r = rng(2);
    let (len, heads, jd, n) = (5, 2, 3, 4);
    let x = random_vec(len * heads * jd, &mut r);
    let b = random_vec(len * n, &mut r);
    let c = random_vec(len * n, &mut r);
    let delta = vec![1e-14; len * heads];
    let a = [-1.0, -3.0];
    let d = [0.5, 2.0];
    let (y, fin) = mamba2_ssm_forward(
        &x,
        len,
        &b,
        &c,
        &delta,
        &a,
        &d,
        jd,
        &vec![0.0; heads * jd * n],
        ScanMode::Sequential,
    )
    .unwrap();
    for l in 0..len {
        for ch in 0..heads * jd {
            let expect = d[ch / jd] * x[l * heads * jd + ch];
            assert!((y[l * heads * jd + ch] - expect).abs() < 1e-12);
        }
    }
    assert!(fin.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn mamba2_unit_heads_match_diagonal_with_matched_constants() {
    // Diagonal LTI with N = 1 and per-channel steps vs. scalar SSM with I = M:
    // the same recurrence when b, c are held constant over time.
    let mut r = rng(8);
    let (len, m) = (9, 4);
    let x = random_vec(len * m, &mut r);
    let lti = DiagonalSsm::<f64> {
        a_log: crate::Tensor::from_vec(&[1], vec![0.4]),
        b: crate::Tensor::from_vec(&[1], vec![1.3]),
        c: crate::Tensor::from_vec(&[1], vec![-0.6]),
        d: crate::Tensor::from_vec(&[m], vec![0.1, 0.2, 0.3, 0.4]),
        delta_bias: crate::Tensor::from_vec(&[m], vec![0.5, -0.5, 1.0, 0.0]),
    };
    let (y1, f1) = diagonal_ssm_forward(&x, len, &lti, &[0.0; 4], ScanMode::Sequential).unwrap();
    let delta: Vec<f64> = (0..len)
        .flat_map(|_| lti.delta_bias.data().iter().map(|&v| crate::scalar::softplus(v)))
        .collect();
    let a = vec![-(0.4f64).exp(); m];
    let (y2, f2) = mamba2_ssm_forward(
        &x,
        len,
        &vec![1.3; len],
        &vec![-0.6; len],
        &delta,
        &a,
        lti.d.data(),
        1,
        &[0.0; 4],
        ScanMode::Parallel,
    )
    .unwrap();
    assert!(max_abs_diff(&y1, &y2) < 1e-13);
    assert!(max_abs_diff(&f1, &f2) < 1e-13);
}

#[test]
fn mamba2_matches_unrolled_oracle() {
    let mut r = rng(17);
    let (len, heads, jd, n) = (16, 2, 2, 3);
    let mm = heads * jd;
    let x = random_vec(len * mm, &mut r);
    let b = random_vec(len * n, &mut r);
    let c = random_vec(len * n, &mut r);
    let delta: Vec<f64> = (0..len * heads).map(|_| r.gen_range(0.01..1.0)).collect();
    let a = [-0.7, -2.5];
    let d = [1.1, -0.3];
    let h0 = random_vec(mm * n, &mut r);

    let mut h = h0.clone();
    let mut expect = vec![0.0; len * mm];
    for l in 0..len {
        for i in 0..heads {
            let abar = (delta[l * heads + i] * a[i]).exp();
            for j in 0..jd {
                let ch = i * jd + j;
                let xv = x[l * mm + ch];
                let mut y = d[i] * xv;
                for k in 0..n {
                    let hv = &mut h[ch * n + k];
                    *hv = abar * *hv + delta[l * heads + i] * b[l * n + k] * xv;
                    y += c[l * n + k] * *hv;
                }
                expect[l * mm + ch] = y;
            }
        }
    }
    for mode in [ScanMode::Sequential, ScanMode::Parallel] {
        let (y, fin) =
            mamba2_ssm_forward(&x, len, &b, &c, &delta, &a, &d, jd, &h0, mode).unwrap();
        assert!(max_abs_diff(&y, &expect) < 1e-12, "{mode:?}");
        assert!(max_abs_diff(&fin, &h) < 1e-12);
    }
}

#[test]
fn mamba2_rejects_bad_dimensions() {
    let r = mamba2_ssm_forward(
        &[0.0f32; 6],
        2,
        &[0.0; 2],
        &[0.0; 2],
        &[0.1; 3],
        &[-1.0],
        &[1.0],
        3,
        &[0.0; 3],
        ScanMode::Sequential,
    );
    assert!(r.is_err());
}

fn all_variants(seed: u64) -> Vec<(SsmParams<f64>, usize)> {
    let mut r = rng(seed);
    let model_dim = 3;
    vec![
        (SsmParams::Lti(DiagonalSsm::init(4, 3, &mut r)), model_dim),
        (SsmParams::Selective(SelectiveSsm::init(4, 3, &mut r)), model_dim),
        (SsmParams::Scalar(ScalarSsm::init(model_dim, 2, 2, 3, &mut r)), model_dim),
    ]
}

/// Perturb the random initialization so gradients are not degenerate.
fn jitter(p: &mut SsmParams<f64>, r: &mut ChaCha8Rng) {
    p.visit_mut("", &mut |_, t| {
        for v in t.data_mut() {
            *v += r.gen_range(-0.3..0.3);
        }
    });
}

#[test]
fn step_reproduces_forward_for_every_variant() {
    for (p, md) in all_variants(4) {
        let mut r = rng(99);
        let len = 64;
        let u = random_vec(len * p.channels(), &mut r);
        let xn = random_vec(len * md, &mut r);
        let h0 = random_vec(p.state_len(), &mut r);
        let full = p.trace_forward(&u, &xn, len, &h0, ScanMode::Sequential, false);
        let mut h = h0.clone();
        let mut ys = Vec::new();
        for l in 0..len {
            let m = p.channels();
            ys.extend(
                ssm_step(&p, &u[l * m..(l + 1) * m], &xn[l * md..(l + 1) * md], &mut h).unwrap(),
            );
        }
        assert!(max_abs_diff(&ys, &full.output.y) < 1e-12, "{:?}", p.variant());
        assert!(max_abs_diff(&h, &full.output.final_state) < 1e-12);
    }
}

#[test]
fn step_consistency_in_single_precision() {
    for (p, md) in all_variants(6) {
        let p: SsmParams<f32> = p.cast();
        let mut r = rng(7);
        let len = 64;
        let u: Vec<f32> = (0..len * p.channels()).map(|_| r.gen_range(-1.0..1.0)).collect();
        let xn: Vec<f32> = (0..len * md).map(|_| r.gen_range(-1.0..1.0)).collect();
        let h0 = vec![0.0f32; p.state_len()];
        let full = p.trace_forward(&u, &xn, len, &h0, ScanMode::Parallel, false);
        let mut h = h0.clone();
        let mut ys = Vec::new();
        let m = p.channels();
        for l in 0..len {
            ys.extend(p.step(&u[l * m..(l + 1) * m], &xn[l * md..(l + 1) * md], &mut h));
        }
        assert!(max_abs_diff(&ys, &full.output.y) < 1e-4);
    }
}

#[test]
fn parallel_and_sequential_paths_agree() {
    for (p, md) in all_variants(12) {
        let mut r = rng(5);
        let len = 37;
        let u = random_vec(len * p.channels(), &mut r);
        let xn = random_vec(len * md, &mut r);
        let h0 = random_vec(p.state_len(), &mut r);
        let a = p.trace_forward(&u, &xn, len, &h0, ScanMode::Sequential, true);
        let b = p.trace_forward(&u, &xn, len, &h0, ScanMode::Parallel, true);
        assert!(max_abs_diff(&a.output.y, &b.output.y) < 1e-12);
        assert!(max_abs_diff(&a.output.states, &b.output.states) < 1e-12);
    }
}

/// Central finite differences of `loss = Σ w ⊙ y` against the analytic backward.
#[test]
fn parameter_and_input_gradients_match_finite_differences() {
    for (mut p, md) in all_variants(31) {
        let mut r = rng(77);
        jitter(&mut p, &mut r);
        let len = 8;
        let m = p.channels();
        let u = random_vec(len * m, &mut r);
        let xn = random_vec(len * md, &mut r);
        let h0 = random_vec(p.state_len(), &mut r);
        let w = random_vec(len * m, &mut r);
        let loss = |p: &SsmParams<f64>, u: &[f64], xn: &[f64], h0: &[f64]| -> f64 {
            let t = p.trace_forward(u, xn, len, h0, ScanMode::Sequential, false);
            t.output.y.iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let trace = p.trace_forward(&u, &xn, len, &h0, ScanMode::Sequential, true);
        let mut grads = p.zeros_like();
        let ig = p.backward(&trace, &w, &mut grads);

        let eps = 1e-5;
        let analytic: Vec<(String, Vec<f64>)> = grads
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.data().to_vec()))
            .collect();
        for (ti, (name, ga)) in analytic.iter().enumerate() {
            let fd: Vec<f64> = (0..ga.len())
                .map(|k| {
                    let mut plus = p.clone();
                    let mut minus = p.clone();
                    bump(&mut plus, ti, k, eps);
                    bump(&mut minus, ti, k, -eps);
                    (loss(&plus, &u, &xn, &h0) - loss(&minus, &u, &xn, &h0)) / (2.0 * eps)
                })
                .collect();
            let err = rel_err(ga, &fd);
            assert!(err < 1e-6, "{:?} {name}: rel err {err}", p.variant());
        }
        let check_input = |v: &[f64], g: &[f64], which: usize| {
            let fd: Vec<f64> = (0..v.len())
                .map(|k| {
                    let mut vp = v.to_vec();
                    let mut vm = v.to_vec();
                    vp[k] += eps;
                    vm[k] -= eps;
                    let (lp, lm) = match which {
                        0 => (loss(&p, &vp, &xn, &h0), loss(&p, &vm, &xn, &h0)),
                        1 => (loss(&p, &u, &vp, &h0), loss(&p, &u, &vm, &h0)),
                        _ => (loss(&p, &u, &xn, &vp), loss(&p, &u, &xn, &vm)),
                    };
                    (lp - lm) / (2.0 * eps)
                })
                .collect();
            let err = rel_err(g, &fd);
            assert!(err < 1e-6, "{:?} input {which}: rel err {err}", p.variant());
        };
        check_input(&u, &ig.du, 0);
        if p.variant() == SsmVariant::Mamba2 {
            check_input(&xn, &ig.dxn, 1);
        }
        check_input(&h0, &ig.dh0, 2);
    }
}

fn bump(p: &mut SsmParams<f64>, tensor: usize, k: usize, eps: f64) {
    let mut i = 0;
    p.visit_mut("", &mut |_, t| {
        if i == tensor {
            t.data_mut()[k] += eps;
        }
        i += 1;
    });
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
