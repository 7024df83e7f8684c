//! Depthwise causal 1-D convolution over `L×M` sequences.

use crate::error::{check_len, Result};
use crate::scalar::Scalar;

/// `y[l][m] = Σ_w kernel[m][w] · x[l - W + 1 + w][m]`.
///
/// Positions before the start read from `carry` (the previous `W-1` input
/// rows, oldest first) or zero when no carry is given. Returns the output
/// and the carry for continuing the sequence.
pub fn causal_conv1d<T: Scalar>(
    x: &[T],
    channels: usize,
    kernel: &[T],
    width: usize,
    carry: Option<&[T]>,
) -> Result<(Vec<T>, Vec<T>)> {
    check_len("conv kernel", channels * width, kernel.len())?;
    if width == 0 {
        return Err(crate::Error::Config("conv width must be at least 1".into()));
    }
    let hist = width - 1;
    let zeros;
    let carry = match carry {
        Some(c) => {
            check_len("conv carry", hist * channels, c.len())?;
            c
        }
        None => {
            zeros = vec![T::zero(); hist * channels];
            &zeros
        }
    };
    let len = x.len() / channels;
    check_len("conv input", len * channels, x.len())?;
    // history rows followed by the input rows
    let mut padded = Vec::with_capacity((hist + len) * channels);
    padded.extend_from_slice(carry);
    padded.extend_from_slice(x);
    let mut y = vec![T::zero(); len * channels];
    for l in 0..len {
        let out = &mut y[l * channels..(l + 1) * channels];
        for w in 0..width {
            let row = &padded[(l + w) * channels..(l + w + 1) * channels];
            for m in 0..channels {
                out[m] += kernel[m * width + w] * row[m];
            }
        }
    }
    let next_carry = padded[(len) * channels..].to_vec();
    Ok((y, next_carry))
}

/// Backward of [`causal_conv1d`] from a zero carry: accumulates into
/// `dkernel` and returns `dx`.
pub fn causal_conv1d_backward<T: Scalar>(
    x: &[T],
    channels: usize,
    kernel: &[T],
    width: usize,
    dy: &[T],
    dkernel: &mut [T],
) -> Vec<T> {
    let len = x.len() / channels;
    let mut dx = vec![T::zero(); x.len()];
    for l in 0..len {
        let g = &dy[l * channels..(l + 1) * channels];
        for w in 0..width {
            // input row read by tap w at output l
            let Some(src) = (l + w).checked_sub(width - 1) else {
                continue;
            };
            for m in 0..channels {
                dkernel[m * width + w] += g[m] * x[src * channels + m];
                dx[src * channels + m] += g[m] * kernel[m * width + w];
            }
        }
    }
    dx
}
