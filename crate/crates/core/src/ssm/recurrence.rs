//! The shared selective recurrence underlying every SSM variant.
//!
//! All three variants reduce to, per channel `m` and state index `n`:
//!
//! ```text
//! h[l,m,n] = exp(delta[l,m] · a[m,n]) · h[l-1,m,n] + delta[l,m] · b[l,n] · u[l,m]
//! y[l,m]   = Σ_n c[l,n] · h[l,m,n] + d[m] · u[l,m]
//! ```
//!
//! The variants differ only in how `delta`, `a`, `b` and `c` are produced,
//! so they expand their parameters into this form and share one forward,
//! one backward and one single-step kernel.

use super::scan::{parallel_scan, sequential_scan, ScanElement};
use crate::scalar::Scalar;

/// Evaluation strategy for the scan over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScanMode {
    /// Fused step-by-step loop.
    #[default]
    Sequential,
    /// Associative tree scan over explicit [`ScanElement`]s.
    Parallel,
}

/// Continuous-time decay rates (always negative).
#[derive(Debug, Clone, Copy)]
pub enum Decay<'a, T> {
    /// One rate per (channel, state) pair, `M×N` row-major.
    PerState(&'a [T]),
    /// One rate per channel shared across the state dimension.
    PerChannel(&'a [T]),
}

impl<T: Scalar> Decay<'_, T> {
    #[inline]
    fn rate(&self, m: usize, n: usize, state: usize) -> T {
        match self {
            Decay::PerState(a) => a[m * state + n],
            Decay::PerChannel(a) => a[m],
        }
    }
}

/// Borrowed, fully expanded inputs of the recurrence.
#[derive(Debug, Clone, Copy)]
pub struct RecurrenceInputs<'a, T> {
    pub len: usize,
    pub channels: usize,
    pub state: usize,
    /// `L×M` channel inputs.
    pub u: &'a [T],
    /// `L×M` positive step sizes.
    pub delta: &'a [T],
    pub decay: Decay<'a, T>,
    /// `L×N` input vectors.
    pub b: &'a [T],
    /// `L×N` readout vectors.
    pub c: &'a [T],
    /// `M` skip weights.
    pub d: &'a [T],
}

impl<T: Scalar> RecurrenceInputs<'_, T> {
    fn validate(&self, h0: &[T]) {
        let (l, m, n) = (self.len, self.channels, self.state);
        assert_eq!(self.u.len(), l * m, "u must be L×M");
        assert_eq!(self.delta.len(), l * m, "delta must be L×M");
        assert_eq!(self.b.len(), l * n, "b must be L×N");
        assert_eq!(self.c.len(), l * n, "c must be L×N");
        assert_eq!(self.d.len(), m, "d must have M entries");
        match self.decay {
            Decay::PerState(a) => assert_eq!(a.len(), m * n, "decay must be M×N"),
            Decay::PerChannel(a) => assert_eq!(a.len(), m, "decay must have M entries"),
        }
        assert_eq!(h0.len(), m * n, "state must be M×N");
    }
}

#[derive(Debug, Clone)]
pub struct RecurrenceOutput<T> {
    /// `L×M` outputs.
    pub y: Vec<T>,
    /// `L×M×N` states when requested, otherwise empty.
    pub states: Vec<T>,
    /// `M×N` state after the last step.
    pub final_state: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct RecurrenceGrads<T> {
    pub du: Vec<T>,
    pub delta: Vec<T>,
    /// Same layout as the [`Decay`] that was passed in.
    pub decay: Vec<T>,
    pub b: Vec<T>,
    pub c: Vec<T>,
    pub d: Vec<T>,
    pub h0: Vec<T>,
}

pub fn forward<T: Scalar>(
    inp: &RecurrenceInputs<'_, T>,
    h0: &[T],
    mode: ScanMode,
    keep_states: bool,
) -> RecurrenceOutput<T> {
    inp.validate(h0);
    match mode {
        ScanMode::Sequential => forward_fused(inp, h0, keep_states),
        ScanMode::Parallel => forward_tree(inp, h0, keep_states),
    }
}

fn forward_fused<T: Scalar>(
    inp: &RecurrenceInputs<'_, T>,
    h0: &[T],
    keep_states: bool,
) -> RecurrenceOutput<T> {
    let (len, mm, nn) = (inp.len, inp.channels, inp.state);
    let mut h = h0.to_vec();
    let mut y = vec![T::zero(); len * mm];
    let mut states = if keep_states {
        Vec::with_capacity(len * mm * nn)
    } else {
        Vec::new()
    };
    let mut gain = vec![T::zero(); nn];
    for l in 0..len {
        let b = &inp.b[l * nn..(l + 1) * nn];
        let c = &inp.c[l * nn..(l + 1) * nn];
        for m in 0..mm {
            let dl = inp.delta[l * mm + m];
            let x = inp.u[l * mm + m];
            let hm = &mut h[m * nn..(m + 1) * nn];
            match inp.decay {
                Decay::PerState(a) => {
                    for (g, &r) in gain.iter_mut().zip(&a[m * nn..(m + 1) * nn]) {
                        *g = (dl * r).exp();
                    }
                }
                Decay::PerChannel(a) => gain.fill((dl * a[m]).exp()),
            }
            let scale = dl * x;
            let mut acc = T::zero();
            for n in 0..nn {
                let v = gain[n] * hm[n] + scale * b[n];
                hm[n] = v;
                acc += c[n] * v;
            }
            y[l * mm + m] = acc + inp.d[m] * x;
        }
        if keep_states {
            states.extend_from_slice(&h);
        }
    }
    RecurrenceOutput {
        y,
        states,
        final_state: h,
    }
}

fn forward_tree<T: Scalar>(
    inp: &RecurrenceInputs<'_, T>,
    h0: &[T],
    keep_states: bool,
) -> RecurrenceOutput<T> {
    let (len, mm, nn) = (inp.len, inp.channels, inp.state);
    let elements: Vec<ScanElement<T>> = (0..len)
        .map(|l| {
            let mut gain = Vec::with_capacity(mm * nn);
            let mut load = Vec::with_capacity(mm * nn);
            for m in 0..mm {
                let dl = inp.delta[l * mm + m];
                let x = inp.u[l * mm + m];
                for n in 0..nn {
                    gain.push((dl * inp.decay.rate(m, n, nn)).exp());
                    load.push(dl * inp.b[l * nn + n] * x);
                }
            }
            ScanElement { gain, load }
        })
        .collect();
    let (hs, final_state) = parallel_scan(&elements, h0).expect("validated dimensions");
    let mut y = vec![T::zero(); len * mm];
    for (l, h) in hs.iter().enumerate() {
        let c = &inp.c[l * nn..(l + 1) * nn];
        for m in 0..mm {
            let hm = &h[m * nn..(m + 1) * nn];
            let acc: T = hm.iter().zip(c).map(|(&a, &b)| a * b).sum();
            y[l * mm + m] = acc + inp.d[m] * inp.u[l * mm + m];
        }
    }
    let states = if keep_states { hs.concat() } else { Vec::new() };
    RecurrenceOutput {
        y,
        states,
        final_state,
    }
}

/// Reference evaluation through [`sequential_scan`]; used by the parallel
/// path's tests and by the self-check suite.
pub fn forward_via_scan<T: Scalar>(inp: &RecurrenceInputs<'_, T>, h0: &[T]) -> RecurrenceOutput<T> {
    inp.validate(h0);
    let (len, mm, nn) = (inp.len, inp.channels, inp.state);
    let elements: Vec<ScanElement<T>> = (0..len)
        .map(|l| {
            let mut e = ScanElement::identity(mm * nn);
            for m in 0..mm {
                let dl = inp.delta[l * mm + m];
                for n in 0..nn {
                    e.gain[m * nn + n] = (dl * inp.decay.rate(m, n, nn)).exp();
                    e.load[m * nn + n] = dl * inp.b[l * nn + n] * inp.u[l * mm + m];
                }
            }
            e
        })
        .collect();
    let (hs, final_state) = sequential_scan(&elements, h0).expect("validated dimensions");
    let mut y = vec![T::zero(); len * mm];
    for (l, h) in hs.iter().enumerate() {
        for m in 0..mm {
            let mut acc = inp.d[m] * inp.u[l * mm + m];
            for n in 0..nn {
                acc += inp.c[l * nn + n] * h[m * nn + n];
            }
            y[l * mm + m] = acc;
        }
    }
    RecurrenceOutput {
        y,
        states: hs.concat(),
        final_state,
    }
}

/// Reverse-mode pass through the recurrence. `states` must be the
/// `L×M×N` trajectory produced by [`forward`] with `keep_states`.
pub fn backward<T: Scalar>(
    inp: &RecurrenceInputs<'_, T>,
    h0: &[T],
    states: &[T],
    dy: &[T],
) -> RecurrenceGrads<T> {
    inp.validate(h0);
    let (len, mm, nn) = (inp.len, inp.channels, inp.state);
    assert_eq!(states.len(), len * mm * nn, "missing recorded states");
    assert_eq!(dy.len(), len * mm);

    let mut du = vec![T::zero(); len * mm];
    let mut ddelta = vec![T::zero(); len * mm];
    let mut ddecay = match inp.decay {
        Decay::PerState(_) => vec![T::zero(); mm * nn],
        Decay::PerChannel(_) => vec![T::zero(); mm],
    };
    let mut db = vec![T::zero(); len * nn];
    let mut dc = vec![T::zero(); len * nn];
    let mut dd = vec![T::zero(); mm];
    let mut dh = vec![T::zero(); mm * nn];
    let mut gain = vec![T::zero(); nn];

    for l in (0..len).rev() {
        let h_cur = &states[l * mm * nn..(l + 1) * mm * nn];
        let h_prev = if l == 0 {
            h0
        } else {
            &states[(l - 1) * mm * nn..l * mm * nn]
        };
        let b = &inp.b[l * nn..(l + 1) * nn];
        let c = &inp.c[l * nn..(l + 1) * nn];
        for m in 0..mm {
            let idx = l * mm + m;
            let g_out = dy[idx];
            let dl = inp.delta[idx];
            let x = inp.u[idx];
            match inp.decay {
                Decay::PerState(a) => {
                    for (g, &r) in gain.iter_mut().zip(&a[m * nn..(m + 1) * nn]) {
                        *g = (dl * r).exp();
                    }
                }
                Decay::PerChannel(a) => gain.fill((dl * a[m]).exp()),
            }
            let dhm = &mut dh[m * nn..(m + 1) * nn];
            let mut d_delta = T::zero();
            let mut d_x = g_out * inp.d[m];
            let mut d_rate_shared = T::zero();
            let scale = dl * x;
            for n in 0..nn {
                let hi = m * nn + n;
                let dcur = dhm[n] + g_out * c[n];
                dc[l * nn + n] += g_out * h_cur[hi];
                let rate = inp.decay.rate(m, n, nn);
                // d/d(gain) · d(gain)/d(·)
                let dg = dcur * h_prev[hi] * gain[n];
                d_delta += dg * rate + dcur * b[n] * x;
                match inp.decay {
                    Decay::PerState(_) => ddecay[hi] += dg * dl,
                    Decay::PerChannel(_) => d_rate_shared += dg * dl,
                }
                db[l * nn + n] += dcur * scale;
                d_x += dcur * dl * b[n];
                dhm[n] = dcur * gain[n];
            }
            if let Decay::PerChannel(_) = inp.decay {
                ddecay[m] += d_rate_shared;
            }
            ddelta[idx] = d_delta;
            du[idx] = d_x;
            dd[m] += g_out * x;
        }
    }

    RecurrenceGrads {
        du,
        delta: ddelta,
        decay: ddecay,
        b: db,
        c: dc,
        d: dd,
        h0: dh,
    }
}

/// One recurrence update and readout; `h` is the `M×N` state, updated in place.
#[allow(clippy::too_many_arguments)]
pub fn step<T: Scalar>(
    u: &[T],
    delta: &[T],
    decay: Decay<'_, T>,
    b: &[T],
    c: &[T],
    d: &[T],
    h: &mut [T],
    state: usize,
) -> Vec<T> {
    let mm = u.len();
    assert_eq!(delta.len(), mm);
    assert_eq!(b.len(), state);
    assert_eq!(c.len(), state);
    assert_eq!(h.len(), mm * state);
    let mut y = vec![T::zero(); mm];
    for m in 0..mm {
        let dl = delta[m];
        let x = u[m];
        let mut acc = T::zero();
        for n in 0..state {
            let g = (dl * decay.rate(m, n, state)).exp();
            let v = g * h[m * state + n] + dl * x * b[n];
            h[m * state + n] = v;
            acc += c[n] * v;
        }
        y[m] = acc + d[m] * x;
    }
    y
}
