//! Speech token reversal: reorder the feature rows of the speech span
//! back to front while every other position stays in place.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Where the reversible speech span sits inside a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PrefixLayout {
    pub speech_start: usize,
    pub speech_len: usize,
    pub total_len: usize,
}

impl PrefixLayout {
    pub fn new(speech_start: usize, speech_len: usize, total_len: usize) -> Result<Self> {
        let layout = Self {
            speech_start,
            speech_len,
            total_len,
        };
        layout.validate()?;
        Ok(layout)
    }

    /// A layout with nothing to reverse.
    pub fn causal(total_len: usize) -> Self {
        Self {
            speech_start: 0,
            speech_len: 0,
            total_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.speech_start + self.speech_len > self.total_len {
            return Err(Error::Layout {
                start: self.speech_start,
                len: self.speech_len,
                total: self.total_len,
            });
        }
        Ok(())
    }

    pub fn speech_end(&self) -> usize {
        self.speech_start + self.speech_len
    }

    /// Whether reversal actually moves anything.
    pub fn is_trivial(&self) -> bool {
        self.speech_len <= 1
    }

    /// Same span inside a shorter or longer sequence.
    pub fn with_total(&self, total_len: usize) -> Self {
        Self { total_len, ..*self }
    }
}

/// Reverse the speech rows of an `L×D` row-major matrix in place.
pub fn reverse_speech_rows<T: Copy>(x: &mut [T], dim: usize, layout: &PrefixLayout) -> Result<()> {
    layout.validate()?;
    if x.len() != layout.total_len * dim {
        return Err(Error::Shape {
            context: "speech reversal input",
            expected: layout.total_len * dim,
            actual: x.len(),
        });
    }
    let (mut lo, mut hi) = (layout.speech_start, layout.speech_end());
    while lo + 1 < hi {
        hi -= 1;
        let (head, tail) = x.split_at_mut(hi * dim);
        head[lo * dim..(lo + 1) * dim].swap_with_slice(&mut tail[..dim]);
        lo += 1;
    }
    Ok(())
}

/// Return a copy of a sequence of feature vectors with the speech span reversed.
pub fn speech_token_reversal<T: Scalar>(x: &[Vec<T>], layout: &PrefixLayout) -> Result<Vec<Vec<T>>> {
    layout.validate()?;
    if x.len() != layout.total_len {
        return Err(Error::Shape {
            context: "speech reversal sequence",
            expected: layout.total_len,
            actual: x.len(),
        });
    }
    let mut out = x.to_vec();
    out[layout.speech_start..layout.speech_end()].reverse();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn speech_span_reversed_text_untouched() {
        // [<Speech>, s1, s2, s3, <BOS>, w1, w2] as scalar features
        let x: Vec<Vec<f32>> = [0.0, 1.0, 2.0, 3.0, 10.0, 11.0, 12.0]
            .iter()
            .map(|&v| vec![v])
            .collect();
        let layout = PrefixLayout::new(1, 3, 7).unwrap();
        let out = speech_token_reversal(&x, &layout).unwrap();
        let flat: Vec<f32> = out.into_iter().flatten().collect();
        assert_eq!(flat, vec![0.0, 3.0, 2.0, 1.0, 10.0, 11.0, 12.0]);
    }

    #[test]
    fn short_spans_are_identity() {
        let x: Vec<Vec<f64>> = (0..5).map(|v| vec![v as f64, -(v as f64)]).collect();
        for len in 0..=1 {
            let layout = PrefixLayout::new(2, len, 5).unwrap();
            assert_eq!(speech_token_reversal(&x, &layout).unwrap(), x);
        }
    }

    #[test]
    fn out_of_bounds_layout_is_rejected() {
        assert!(PrefixLayout::new(3, 4, 6).is_err());
        let bad = PrefixLayout {
            speech_start: 1,
            speech_len: 5,
            total_len: 4,
        };
        let mut x = vec![0.0f32; 8];
        assert!(reverse_speech_rows(&mut x, 2, &bad).is_err());
        let ok = PrefixLayout::new(0, 2, 3).unwrap();
        assert!(reverse_speech_rows(&mut x, 2, &ok).is_err());
    }

    proptest! {
        #[test]
        fn reversal_is_an_involution(
            total in 0usize..20,
            start_frac in 0.0f64..1.0,
            len_frac in 0.0f64..1.0,
            dim in 1usize..4,
        ) {
            let start = (start_frac * total as f64) as usize;
            let len = (len_frac * (total - start) as f64) as usize;
            let layout = PrefixLayout::new(start, len, total).unwrap();
            let x: Vec<u32> = (0..(total * dim) as u32).collect();
            let mut y = x.clone();
            reverse_speech_rows(&mut y, dim, &layout).unwrap();
            for pos in (0..total).filter(|p| *p < start || *p >= start + len) {
                prop_assert_eq!(&y[pos * dim..(pos + 1) * dim], &x[pos * dim..(pos + 1) * dim]);
            }
            reverse_speech_rows(&mut y, dim, &layout).unwrap();
            prop_assert_eq!(y, x);
        }
    }
}
