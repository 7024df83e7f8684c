//! Analytic gradients against five-point central differences.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{masked_cross_entropy, masked_cross_entropy_grad, ComposedSequence, Model};
use crate::ssm::ScanMode;
use crate::tensor::Parameters;

/// Agreement for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub len: usize,
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`, zero when both vanish.
    pub rel_error: f64,
    pub max_abs_error: f64,
}

/// Mean masked cross-entropy and its analytic gradient (no embedding masking).
pub fn loss_and_grad(model: &Model<f64>, seq: &ComposedSequence) -> Result<(f64, Model<f64>)> {
    let (logits, trace) = model.forward_trace::<ChaCha8Rng>(seq, None, ScanMode::Sequential)?;
    let v = model.vocab_size();
    let scale = 1.0 / seq.num_targets().max(1) as f64;
    let (stats, dlogits) = masked_cross_entropy_grad(&logits, v, seq, scale)?;
    let mut grads = model.zeros_like();
    model.backward(&trace, &dlogits, &mut grads);
    Ok((stats.mean_loss(), grads))
}

/// Compare every parameter tensor's analytic gradient with the stencil
/// `(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h`.
pub fn gradient_check(model: &Model<f64>, seq: &ComposedSequence, h: f64) -> Result<Vec<TensorCheck>> {
    let (_, grads) = loss_and_grad(model, seq)?;
    let v = model.vocab_size();
    let mut probe = model.clone();
    let mut checks = Vec::new();
    for (index, (name, analytic)) in grads.named_tensors().into_iter().enumerate() {
        let mut numeric = Vec::with_capacity(analytic.len());
        for k in 0..analytic.len() {
            let mut eval = |offset: f64| -> Result<f64> {
                let original = set_entry(&mut probe, index, k, None);
                set_entry(&mut probe, index, k, Some(original + offset));
                let loss = masked_cross_entropy(&probe.forward_sequence(seq)?, v, seq);
                set_entry(&mut probe, index, k, Some(original));
                loss
            };
            let (p1, m1, p2, m2) = (eval(h)?, eval(-h)?, eval(2.0 * h)?, eval(-2.0 * h)?);
            numeric.push((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h));
        }
        checks.push(compare(name, analytic.data(), &numeric));
    }
    Ok(checks)
}

/// Read entry `k` of the `index`-th tensor, optionally overwriting it.
fn set_entry(model: &mut Model<f64>, index: usize, k: usize, value: Option<f64>) -> f64 {
    let (mut i, mut old) = (0, 0.0);
    model.visit_mut("", &mut |_, t| {
        if i == index {
            old = t.data()[k];
            if let Some(v) = value {
                t.data_mut()[k] = v;
            }
        }
        i += 1;
    });
    old
}

fn compare(name: String, analytic: &[f64], numeric: &[f64]) -> TensorCheck {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    let max_abs_error = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    TensorCheck {
        name,
        len: analytic.len(),
        rel_error: if scale == 0.0 { diff } else { diff / scale },
        max_abs_error,
    }
}
