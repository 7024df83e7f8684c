//! Parameter sets of the three SSM variants and their sequence-level
//! forward, backward and single-step evaluation.

use rand::Rng;

use super::recurrence::{self, Decay, RecurrenceInputs, RecurrenceOutput, ScanMode};
use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, linear, linear_backward_acc, matvec};
use crate::scalar::{sigmoid, softplus, softplus_inv, Scalar};
use crate::tensor::{join, Parameters, Tensor};

/// Which SSM family a block uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SsmVariant {
    /// Time-invariant diagonal SSM (S4D-style).
    S4d,
    /// Selective SSM with input-dependent `b`, `c`, `Δ`.
    Mamba,
    /// Scalar-decay multi-head selective SSM.
    Mamba2,
}

impl SsmVariant {
    pub const ALL: [SsmVariant; 3] = [SsmVariant::S4d, SsmVariant::Mamba, SsmVariant::Mamba2];

    pub fn as_str(self) -> &'static str {
        match self {
            SsmVariant::S4d => "s4d",
            SsmVariant::Mamba => "mamba",
            SsmVariant::Mamba2 => "mamba2",
        }
    }
}

impl std::str::FromStr for SsmVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s4d" => Ok(SsmVariant::S4d),
            "mamba" => Ok(SsmVariant::Mamba),
            "mamba2" => Ok(SsmVariant::Mamba2),
            other => Err(Error::Config(format!("unknown ssm variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for SsmVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `(exp(Δ·a), Δ·b)`: exact exponential for the decay, Euler step for the input.
pub fn discretize<T: Scalar>(delta: T, a_diag: &[T], b: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    if !(delta > T::zero()) {
        return Err(Error::Domain(format!("step size must be positive, got {delta}")));
    }
    check_len("discretize b", a_diag.len(), b.len())?;
    let gain = a_diag.iter().map(|&a| (delta * a).exp()).collect();
    let load = b.iter().map(|&v| delta * v).collect();
    Ok((gain, load))
}

/// `a_n = -exp(raw_n)` with `a` log-spaced over `[-1, -hi]`.
fn log_spaced_decay<T: Scalar>(count: usize, hi: f64) -> Tensor<T> {
    let data = (0..count)
        .map(|n| {
            let t = if count > 1 {
                n as f64 / (count - 1) as f64
            } else {
                0.0
            };
            T::lit(hi.ln() * t)
        })
        .collect();
    Tensor::from_vec(&[count], data)
}

/// Step-size biases with `softplus(bias)` log-uniform in `[0.001, 0.1]`.
fn delta_bias_init<T: Scalar, R: Rng>(count: usize, rng: &mut R) -> Tensor<T> {
    let (lo, hi) = (0.001f64.ln(), 0.1f64.ln());
    let data = (0..count)
        .map(|_| T::lit(softplus_inv(rng.gen_range(lo..hi).exp())))
        .collect();
    Tensor::from_vec(&[count], data)
}

fn negated_exp<T: Scalar>(raw: &Tensor<T>) -> Vec<T> {
    raw.data().iter().map(|&r| -r.exp()).collect()
}

/// Time-invariant diagonal SSM shared across the `M` channels, with a
/// per-channel skip weight and step size.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalSsm<T> {
    /// `a = -exp(a_log)`, length `N`.
    pub a_log: Tensor<T>,
    pub b: Tensor<T>,
    pub c: Tensor<T>,
    /// Skip weights, length `M`.
    pub d: Tensor<T>,
    /// `Δ_m = softplus(delta_bias_m)`, length `M`.
    pub delta_bias: Tensor<T>,
}

impl<T: Scalar> DiagonalSsm<T> {
    pub fn init<R: Rng>(channels: usize, state: usize, rng: &mut R) -> Self {
        Self {
            a_log: log_spaced_decay(state, state as f64),
            b: Tensor::filled(&[state], T::one()),
            c: Tensor::uniform(&[state], 1.0 / (state as f64).sqrt(), rng),
            d: Tensor::filled(&[channels], T::one()),
            delta_bias: delta_bias_init(channels, rng),
        }
    }

    pub fn a_diag(&self) -> Vec<T> {
        negated_exp(&self.a_log)
    }

    pub fn channels(&self) -> usize {
        self.d.len()
    }

    pub fn state(&self) -> usize {
        self.a_log.len()
    }

    fn steps(&self) -> Vec<T> {
        self.delta_bias.data().iter().map(|&v| softplus(v)).collect()
    }
}

/// Selective SSM: `b_l = W_B u_l`, `c_l = W_C u_l`,
/// `Δ_{m,l} = softplus(Δ_m + w_Δ·u_l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveSsm<T> {
    pub a_log: Tensor<T>,
    pub d: Tensor<T>,
    /// `N×M`
    pub w_b: Tensor<T>,
    /// `N×M`
    pub w_c: Tensor<T>,
    /// `M`
    pub w_delta: Tensor<T>,
    /// `M`
    pub delta_bias: Tensor<T>,
}

/// Per-step selection outputs for one input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection<T> {
    pub b: Vec<T>,
    pub c: Vec<T>,
    pub delta: Vec<T>,
}

impl<T: Scalar> SelectiveSsm<T> {
    pub fn init<R: Rng>(channels: usize, state: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (channels as f64).sqrt();
        Self {
            a_log: log_spaced_decay(state, state as f64),
            d: Tensor::filled(&[channels], T::one()),
            w_b: Tensor::uniform(&[state, channels], bound, rng),
            w_c: Tensor::uniform(&[state, channels], bound, rng),
            w_delta: Tensor::uniform(&[channels], bound, rng),
            delta_bias: delta_bias_init(channels, rng),
        }
    }

    pub fn a_diag(&self) -> Vec<T> {
        negated_exp(&self.a_log)
    }

    pub fn channels(&self) -> usize {
        self.d.len()
    }

    pub fn state(&self) -> usize {
        self.a_log.len()
    }
}

/// Compute the input-dependent `(b_l, c_l, Δ_l)` for one step.
pub fn selection_forward<T: Scalar>(x: &[T], sel: &SelectiveSsm<T>) -> Result<Selection<T>> {
    let m = sel.channels();
    check_len("selection input", m, x.len())?;
    let n = sel.state();
    let b = matvec(sel.w_b.data(), n, x);
    let c = matvec(sel.w_c.data(), n, x);
    let s = dot(sel.w_delta.data(), x);
    let delta = sel
        .delta_bias
        .data()
        .iter()
        .map(|&bias| softplus(bias + s))
        .collect();
    Ok(Selection { b, c, delta })
}

/// Mamba-2 scalar SSM: one negative decay and one skip weight per head,
/// with `(b, c, Δ)` emitted by a projection of the block input.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSsm<T> {
    /// Per-head `a_i = -exp(a_log_i)`.
    pub a_log: Tensor<T>,
    /// Per-head skip weights.
    pub d: Tensor<T>,
    /// Per-head step-size bias.
    pub delta_bias: Tensor<T>,
    /// `(2N + I) × M_in` projection producing `[b | c | Δ_raw]`.
    pub proj: Tensor<T>,
    pub heads: usize,
    pub head_dim: usize,
    pub state_size: usize,
}

impl<T: Scalar> ScalarSsm<T> {
    pub fn init<R: Rng>(
        model_dim: usize,
        heads: usize,
        head_dim: usize,
        state: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            a_log: log_spaced_decay(heads, 16.0),
            d: Tensor::filled(&[heads], T::one()),
            delta_bias: delta_bias_init(heads, rng),
            proj: Tensor::uniform(
                &[2 * state + heads, model_dim],
                1.0 / (model_dim as f64).sqrt(),
                rng,
            ),
            heads,
            head_dim,
            state_size: state,
        }
    }

    pub fn channels(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn a_head(&self) -> Vec<T> {
        negated_exp(&self.a_log)
    }

    fn proj_width(&self) -> usize {
        2 * self.state_size + self.heads
    }

    fn model_dim(&self) -> usize {
        self.proj.shape()[1]
    }
}

/// Per-head scalar recurrence over `I` heads of `J` dims each.
///
/// `x` is `L×(I·J)`, `b_seq`/`c_seq` are `L×N`, `delta_seq` is `L×I`
/// (already positive), `a_head`/`d_head` have `I` entries and `h0` is
/// `(I·J)×N`.
#[allow(clippy::too_many_arguments)]
pub fn mamba2_ssm_forward<T: Scalar>(
    x: &[T],
    len: usize,
    b_seq: &[T],
    c_seq: &[T],
    delta_seq: &[T],
    a_head: &[T],
    d_head: &[T],
    head_dim: usize,
    h0: &[T],
    mode: ScanMode,
) -> Result<(Vec<T>, Vec<T>)> {
    let heads = a_head.len();
    let channels = heads * head_dim;
    check_len("mamba2 x", len * channels, x.len())?;
    check_len("mamba2 delta", len * heads, delta_seq.len())?;
    check_len("mamba2 d", heads, d_head.len())?;
    if len == 0 {
        return Ok((Vec::new(), h0.to_vec()));
    }
    let state = b_seq.len() / len;
    check_len("mamba2 b", len * state, b_seq.len())?;
    check_len("mamba2 c", len * state, c_seq.len())?;
    check_len("mamba2 state", channels * state, h0.len())?;
    if let Some(bad) = delta_seq.iter().find(|&&v| !(v > T::zero())) {
        return Err(Error::Domain(format!("step size must be positive, got {bad}")));
    }
    let delta = expand_heads(delta_seq, len, heads, head_dim);
    let a = broadcast_heads(a_head, head_dim);
    let d = broadcast_heads(d_head, head_dim);
    let out = recurrence::forward(
        &RecurrenceInputs {
            len,
            channels,
            state,
            u: x,
            delta: &delta,
            decay: Decay::PerChannel(&a),
            b: b_seq,
            c: c_seq,
            d: &d,
        },
        h0,
        mode,
        false,
    );
    Ok((out.y, out.final_state))
}

/// Selective (Mamba) SSM over a whole sequence `x` of shape `L×M`.
pub fn mamba_ssm_forward<T: Scalar>(
    x: &[T],
    len: usize,
    sel: &SelectiveSsm<T>,
    h0: &[T],
    mode: ScanMode,
) -> Result<(Vec<T>, Vec<T>)> {
    check_len("mamba x", len * sel.channels(), x.len())?;
    check_len("mamba state", sel.channels() * sel.state(), h0.len())?;
    let trace = SsmParams::Selective(sel.clone()).trace_forward(x, &[], len, h0, mode, false);
    Ok((trace.output.y, trace.output.final_state))
}

/// Time-invariant diagonal SSM over a whole sequence.
pub fn diagonal_ssm_forward<T: Scalar>(
    x: &[T],
    len: usize,
    ssm: &DiagonalSsm<T>,
    h0: &[T],
    mode: ScanMode,
) -> Result<(Vec<T>, Vec<T>)> {
    check_len("s4d x", len * ssm.channels(), x.len())?;
    check_len("s4d state", ssm.channels() * ssm.state(), h0.len())?;
    let trace = SsmParams::Lti(ssm.clone()).trace_forward(x, &[], len, h0, mode, false);
    Ok((trace.output.y, trace.output.final_state))
}

fn broadcast_heads<T: Scalar>(per_head: &[T], head_dim: usize) -> Vec<T> {
    per_head
        .iter()
        .flat_map(|&v| std::iter::repeat_n(v, head_dim))
        .collect()
}

fn expand_heads<T: Scalar>(v: &[T], len: usize, heads: usize, head_dim: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(len * heads * head_dim);
    for l in 0..len {
        for i in 0..heads {
            let x = v[l * heads + i];
            out.extend(std::iter::repeat_n(x, head_dim));
        }
    }
    out
}

/// One SSM mixer of any variant.
#[derive(Debug, Clone, PartialEq)]
pub enum SsmParams<T> {
    Lti(DiagonalSsm<T>),
    Selective(SelectiveSsm<T>),
    Scalar(ScalarSsm<T>),
}

/// Everything the backward pass needs from a forward evaluation.
#[derive(Debug, Clone)]
pub struct SsmTrace<T> {
    pub len: usize,
    pub u: Vec<T>,
    pub xn: Vec<T>,
    pub delta: Vec<T>,
    /// Pre-softplus step-size arguments (`M` for LTI, `L×M` for Mamba, `L×I` for Mamba-2).
    pub pre: Vec<T>,
    pub decay: Vec<T>,
    pub b: Vec<T>,
    pub c: Vec<T>,
    pub d: Vec<T>,
    pub h0: Vec<T>,
    pub output: RecurrenceOutput<T>,
}

/// Input gradients of an SSM mixer.
#[derive(Debug, Clone)]
pub struct SsmInputGrads<T> {
    /// Gradient w.r.t. the channel inputs `u`.
    pub du: Vec<T>,
    /// Gradient w.r.t. the block-normalized input (Mamba-2 projections only; empty otherwise).
    pub dxn: Vec<T>,
    pub dh0: Vec<T>,
}

impl<T: Scalar> SsmParams<T> {
    pub fn variant(&self) -> SsmVariant {
        match self {
            SsmParams::Lti(_) => SsmVariant::S4d,
            SsmParams::Selective(_) => SsmVariant::Mamba,
            SsmParams::Scalar(_) => SsmVariant::Mamba2,
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            SsmParams::Lti(p) => p.channels(),
            SsmParams::Selective(p) => p.channels(),
            SsmParams::Scalar(p) => p.channels(),
        }
    }

    pub fn state_size(&self) -> usize {
        match self {
            SsmParams::Lti(p) => p.state(),
            SsmParams::Selective(p) => p.state(),
            SsmParams::Scalar(p) => p.state_size,
        }
    }

    /// Length of the flattened recurrent state (`M×N`).
    pub fn state_len(&self) -> usize {
        self.channels() * self.state_size()
    }

    fn uses_block_input(&self) -> bool {
        matches!(self, SsmParams::Scalar(_))
    }

    /// Full-sequence forward, recording what [`Self::backward`] needs.
    ///
    /// `u` is the `L×M` channel input; `xn` is the `L×M_in` normalized
    /// block input, only read by the Mamba-2 projection.
    pub fn trace_forward(
        &self,
        u: &[T],
        xn: &[T],
        len: usize,
        h0: &[T],
        mode: ScanMode,
        keep_states: bool,
    ) -> SsmTrace<T> {
        let mm = self.channels();
        let nn = self.state_size();
        assert_eq!(u.len(), len * mm, "ssm input must be L×M");
        let (delta, pre, decay, b, c, d) = match self {
            SsmParams::Lti(p) => {
                let steps = p.steps();
                let delta: Vec<T> = (0..len).flat_map(|_| steps.iter().copied()).collect();
                let a = p.a_diag();
                let decay: Vec<T> = (0..mm).flat_map(|_| a.iter().copied()).collect();
                let b: Vec<T> = (0..len).flat_map(|_| p.b.data().iter().copied()).collect();
                let c: Vec<T> = (0..len).flat_map(|_| p.c.data().iter().copied()).collect();
                (delta, p.delta_bias.data().to_vec(), decay, b, c, p.d.data().to_vec())
            }
            SsmParams::Selective(p) => {
                let b = linear(u, len, mm, p.w_b.data(), nn);
                let c = linear(u, len, mm, p.w_c.data(), nn);
                let s = linear(u, len, mm, p.w_delta.data(), 1);
                let mut pre = Vec::with_capacity(len * mm);
                for &sl in &s {
                    pre.extend(p.delta_bias.data().iter().map(|&bias| bias + sl));
                }
                let delta = pre.iter().map(|&v| softplus(v)).collect();
                let a = p.a_diag();
                let decay: Vec<T> = (0..mm).flat_map(|_| a.iter().copied()).collect();
                (delta, pre, decay, b, c, p.d.data().to_vec())
            }
            SsmParams::Scalar(p) => {
                let md = p.model_dim();
                assert_eq!(xn.len(), len * md, "mamba2 projection input must be L×M_in");
                let w = p.proj_width();
                let bcdt = linear(xn, len, md, p.proj.data(), w);
                let mut b = Vec::with_capacity(len * nn);
                let mut c = Vec::with_capacity(len * nn);
                let mut pre = Vec::with_capacity(len * p.heads);
                for row in bcdt.chunks_exact(w) {
                    b.extend_from_slice(&row[..nn]);
                    c.extend_from_slice(&row[nn..2 * nn]);
                    pre.extend(
                        row[2 * nn..]
                            .iter()
                            .zip(p.delta_bias.data())
                            .map(|(&raw, &bias)| raw + bias),
                    );
                }
                let dh: Vec<T> = pre.iter().map(|&v| softplus(v)).collect();
                let delta = expand_heads(&dh, len, p.heads, p.head_dim);
                let decay = broadcast_heads(&p.a_head(), p.head_dim);
                let d = broadcast_heads(p.d.data(), p.head_dim);
                (delta, pre, decay, b, c, d)
            }
        };
        let output = {
            let decay_view = if self.uses_block_input() {
                Decay::PerChannel(&decay)
            } else {
                Decay::PerState(&decay)
            };
            recurrence::forward(
                &RecurrenceInputs {
                    len,
                    channels: mm,
                    state: nn,
                    u,
                    delta: &delta,
                    decay: decay_view,
                    b: &b,
                    c: &c,
                    d: &d,
                },
                h0,
                mode,
                keep_states,
            )
        };
        SsmTrace {
            len,
            u: u.to_vec(),
            xn: if self.uses_block_input() {
                xn.to_vec()
            } else {
                Vec::new()
            },
            delta,
            pre,
            decay,
            b,
            c,
            d,
            h0: h0.to_vec(),
            output,
        }
    }

    /// Backpropagate `dy` (`L×M`) through a recorded forward pass,
    /// accumulating parameter gradients into `grads` (same variant).
    pub fn backward(&self, trace: &SsmTrace<T>, dy: &[T], grads: &mut Self) -> SsmInputGrads<T> {
        let len = trace.len;
        let mm = self.channels();
        let nn = self.state_size();
        let decay_view = if self.uses_block_input() {
            Decay::PerChannel(&trace.decay)
        } else {
            Decay::PerState(&trace.decay)
        };
        let inputs = RecurrenceInputs {
            len,
            channels: mm,
            state: nn,
            u: &trace.u,
            delta: &trace.delta,
            decay: decay_view,
            b: &trace.b,
            c: &trace.c,
            d: &trace.d,
        };
        let rg = recurrence::backward(&inputs, &trace.h0, &trace.output.states, dy);
        let mut du = rg.du;
        let mut dxn = Vec::new();
        match (self, grads) {
            (SsmParams::Lti(p), SsmParams::Lti(g)) => {
                let a = p.a_diag();
                for n in 0..nn {
                    let s: T = (0..mm).map(|m| rg.decay[m * nn + n]).sum();
                    g.a_log.data_mut()[n] += s * a[n];
                    let sb: T = (0..len).map(|l| rg.b[l * nn + n]).sum();
                    let sc: T = (0..len).map(|l| rg.c[l * nn + n]).sum();
                    g.b.data_mut()[n] += sb;
                    g.c.data_mut()[n] += sc;
                }
                for m in 0..mm {
                    g.d.data_mut()[m] += rg.d[m];
                    let s: T = (0..len).map(|l| rg.delta[l * mm + m]).sum();
                    g.delta_bias.data_mut()[m] += s * sigmoid(trace.pre[m]);
                }
            }
            (SsmParams::Selective(p), SsmParams::Selective(g)) => {
                let a = p.a_diag();
                for n in 0..nn {
                    let s: T = (0..mm).map(|m| rg.decay[m * nn + n]).sum();
                    g.a_log.data_mut()[n] += s * a[n];
                }
                for m in 0..mm {
                    g.d.data_mut()[m] += rg.d[m];
                }
                let mut ds = vec![T::zero(); len];
                for l in 0..len {
                    for m in 0..mm {
                        let idx = l * mm + m;
                        let dpre = rg.delta[idx] * sigmoid(trace.pre[idx]);
                        g.delta_bias.data_mut()[m] += dpre;
                        ds[l] += dpre;
                    }
                }
                let u = &trace.u;
                linear_backward_acc(u, len, mm, p.w_b.data(), nn, &rg.b, g.w_b.data_mut(), &mut du);
                linear_backward_acc(u, len, mm, p.w_c.data(), nn, &rg.c, g.w_c.data_mut(), &mut du);
                linear_backward_acc(
                    u,
                    len,
                    mm,
                    p.w_delta.data(),
                    1,
                    &ds,
                    g.w_delta.data_mut(),
                    &mut du,
                );
            }
            (SsmParams::Scalar(p), SsmParams::Scalar(g)) => {
                let (heads, jd) = (p.heads, p.head_dim);
                let a = p.a_head();
                for i in 0..heads {
                    let sa: T = rg.decay[i * jd..(i + 1) * jd].iter().copied().sum();
                    g.a_log.data_mut()[i] += sa * a[i];
                    let sd: T = rg.d[i * jd..(i + 1) * jd].iter().copied().sum();
                    g.d.data_mut()[i] += sd;
                }
                let w = p.proj_width();
                let mut dbcdt = vec![T::zero(); len * w];
                for l in 0..len {
                    let row = &mut dbcdt[l * w..(l + 1) * w];
                    row[..nn].copy_from_slice(&rg.b[l * nn..(l + 1) * nn]);
                    row[nn..2 * nn].copy_from_slice(&rg.c[l * nn..(l + 1) * nn]);
                    for i in 0..heads {
                        let s: T = rg.delta[l * mm + i * jd..l * mm + (i + 1) * jd]
                            .iter()
                            .copied()
                            .sum();
                        let dpre = s * sigmoid(trace.pre[l * heads + i]);
                        row[2 * nn + i] = dpre;
                        g.delta_bias.data_mut()[i] += dpre;
                    }
                }
                let md = p.model_dim();
                dxn = vec![T::zero(); len * md];
                linear_backward_acc(
                    &trace.xn,
                    len,
                    md,
                    p.proj.data(),
                    w,
                    &dbcdt,
                    g.proj.data_mut(),
                    &mut dxn,
                );
            }
            _ => panic!("gradient buffer variant does not match parameters"),
        }
        SsmInputGrads {
            du,
            dxn,
            dh0: rg.h0,
        }
    }

    /// One decoding step: consumes `u_l` (`M`) and, for Mamba-2, the
    /// normalized block input `xn_l` (`M_in`); updates `h` in place.
    pub fn step(&self, u_l: &[T], xn_l: &[T], h: &mut [T]) -> Vec<T> {
        let nn = self.state_size();
        match self {
            SsmParams::Lti(p) => {
                let a = p.a_diag();
                let decay: Vec<T> = (0..p.channels()).flat_map(|_| a.iter().copied()).collect();
                recurrence::step(
                    u_l,
                    &p.steps(),
                    Decay::PerState(&decay),
                    p.b.data(),
                    p.c.data(),
                    p.d.data(),
                    h,
                    nn,
                )
            }
            SsmParams::Selective(p) => {
                let sel = selection_forward(u_l, p).expect("step input matches channels");
                let a = p.a_diag();
                let decay: Vec<T> = (0..p.channels()).flat_map(|_| a.iter().copied()).collect();
                recurrence::step(
                    u_l,
                    &sel.delta,
                    Decay::PerState(&decay),
                    &sel.b,
                    &sel.c,
                    p.d.data(),
                    h,
                    nn,
                )
            }
            SsmParams::Scalar(p) => {
                let bcdt = matvec(p.proj.data(), p.proj_width(), xn_l);
                let dh: Vec<T> = bcdt[2 * nn..]
                    .iter()
                    .zip(p.delta_bias.data())
                    .map(|(&raw, &bias)| softplus(raw + bias))
                    .collect();
                let delta = broadcast_heads(&dh, p.head_dim);
                let a = broadcast_heads(&p.a_head(), p.head_dim);
                let d = broadcast_heads(p.d.data(), p.head_dim);
                recurrence::step(
                    u_l,
                    &delta,
                    Decay::PerChannel(&a),
                    &bcdt[..nn],
                    &bcdt[nn..2 * nn],
                    &d,
                    h,
                    nn,
                )
            }
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero_grad();
        z
    }

    pub fn cast<U: Scalar>(&self) -> SsmParams<U> {
        match self {
            SsmParams::Lti(p) => SsmParams::Lti(DiagonalSsm {
                a_log: p.a_log.cast(),
                b: p.b.cast(),
                c: p.c.cast(),
                d: p.d.cast(),
                delta_bias: p.delta_bias.cast(),
            }),
            SsmParams::Selective(p) => SsmParams::Selective(SelectiveSsm {
                a_log: p.a_log.cast(),
                d: p.d.cast(),
                w_b: p.w_b.cast(),
                w_c: p.w_c.cast(),
                w_delta: p.w_delta.cast(),
                delta_bias: p.delta_bias.cast(),
            }),
            SsmParams::Scalar(p) => SsmParams::Scalar(ScalarSsm {
                a_log: p.a_log.cast(),
                d: p.d.cast(),
                delta_bias: p.delta_bias.cast(),
                proj: p.proj.cast(),
                heads: p.heads,
                head_dim: p.head_dim,
                state_size: p.state_size,
            }),
        }
    }
}

impl<T: Scalar> Parameters<T> for SsmParams<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        match self {
            SsmParams::Lti(p) => {
                f(join(prefix, "a_log"), &p.a_log);
                f(join(prefix, "b"), &p.b);
                f(join(prefix, "c"), &p.c);
                f(join(prefix, "d"), &p.d);
                f(join(prefix, "delta_bias"), &p.delta_bias);
            }
            SsmParams::Selective(p) => {
                f(join(prefix, "a_log"), &p.a_log);
                f(join(prefix, "d"), &p.d);
                f(join(prefix, "w_b"), &p.w_b);
                f(join(prefix, "w_c"), &p.w_c);
                f(join(prefix, "w_delta"), &p.w_delta);
                f(join(prefix, "delta_bias"), &p.delta_bias);
            }
            SsmParams::Scalar(p) => {
                f(join(prefix, "a_log"), &p.a_log);
                f(join(prefix, "d"), &p.d);
                f(join(prefix, "delta_bias"), &p.delta_bias);
                f(join(prefix, "proj"), &p.proj);
            }
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        match self {
            SsmParams::Lti(p) => {
                f(join(prefix, "a_log"), &mut p.a_log);
                f(join(prefix, "b"), &mut p.b);
                f(join(prefix, "c"), &mut p.c);
                f(join(prefix, "d"), &mut p.d);
                f(join(prefix, "delta_bias"), &mut p.delta_bias);
            }
            SsmParams::Selective(p) => {
                f(join(prefix, "a_log"), &mut p.a_log);
                f(join(prefix, "d"), &mut p.d);
                f(join(prefix, "w_b"), &mut p.w_b);
                f(join(prefix, "w_c"), &mut p.w_c);
                f(join(prefix, "w_delta"), &mut p.w_delta);
                f(join(prefix, "delta_bias"), &mut p.delta_bias);
            }
            SsmParams::Scalar(p) => {
                f(join(prefix, "a_log"), &mut p.a_log);
                f(join(prefix, "d"), &mut p.d);
                f(join(prefix, "delta_bias"), &mut p.delta_bias);
                f(join(prefix, "proj"), &mut p.proj);
            }
        }
    }
}
