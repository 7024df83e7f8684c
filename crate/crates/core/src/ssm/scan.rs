//! First-order linear recurrences `h[l] = gain[l] ⊙ h[l-1] + load[l]`
//! evaluated either step by step or with an associative tree scan.

use crate::error::{check_len, Result};
use crate::scalar::Scalar;
use std::cell::Cell;

/// One step of a diagonal linear recurrence, viewed as the affine map
/// `h ↦ gain ⊙ h + load`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanElement<T> {
    pub gain: Vec<T>,
    pub load: Vec<T>,
}

impl<T: Scalar> ScanElement<T> {
    pub fn new(gain: Vec<T>, load: Vec<T>) -> Result<Self> {
        check_len("scan element load", gain.len(), load.len())?;
        Ok(Self { gain, load })
    }

    /// The monoid identity `(1, 0)`.
    pub fn identity(n: usize) -> Self {
        Self {
            gain: vec![T::one(); n],
            load: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.gain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gain.is_empty()
    }

    /// Composition "`self` first, then `later`":
    /// `(g1, v1) ∘ (g2, v2) = (g2 ⊙ g1, g2 ⊙ v1 + v2)`.
    pub fn then(&self, later: &Self) -> Self {
        let gain = self
            .gain
            .iter()
            .zip(&later.gain)
            .map(|(&g1, &g2)| g2 * g1)
            .collect();
        let load = self
            .load
            .iter()
            .zip(later.gain.iter().zip(&later.load))
            .map(|(&v1, (&g2, &v2))| g2 * v1 + v2)
            .collect();
        Self { gain, load }
    }

    /// Apply the affine map to a state vector.
    pub fn apply(&self, h: &[T]) -> Vec<T> {
        self.gain
            .iter()
            .zip(&self.load)
            .zip(h)
            .map(|((&g, &v), &x)| g * x + v)
            .collect()
    }
}

/// Associative combine; `earlier` is applied first.
pub fn combine<T: Scalar>(earlier: &ScanElement<T>, later: &ScanElement<T>) -> ScanElement<T> {
    earlier.then(later)
}

fn check_elements<T: Scalar>(elements: &[ScanElement<T>], h0: &[T]) -> Result<()> {
    for e in elements {
        check_len("scan element gain", h0.len(), e.gain.len())?;
        check_len("scan element load", h0.len(), e.load.len())?;
    }
    Ok(())
}

/// Step-by-step evaluation. Returns every intermediate state and the final one.
pub fn sequential_scan<T: Scalar>(
    elements: &[ScanElement<T>],
    h0: &[T],
) -> Result<(Vec<Vec<T>>, Vec<T>)> {
    check_elements(elements, h0)?;
    let mut states = Vec::with_capacity(elements.len());
    let mut h = h0.to_vec();
    for e in elements {
        for ((x, &g), &v) in h.iter_mut().zip(&e.gain).zip(&e.load) {
            *x = g * *x + v;
        }
        states.push(h.clone());
    }
    Ok((states, h))
}

thread_local! {
    static SCAN_FAULT: Cell<bool> = const { Cell::new(false) };
}

/// Test hook for the self-check: while enabled on the calling thread, the
/// parallel scan composes operands in the wrong order during its down-sweep.
#[doc(hidden)]
pub fn inject_scan_fault(enabled: bool) {
    SCAN_FAULT.with(|f| f.set(enabled));
}

/// Work-efficient (up-sweep / down-sweep) tree scan.
///
/// The sequence is padded with identity elements to the next power of two,
/// an exclusive prefix of every position is computed with `2·log2(P)`
/// levels of independent combines, and each state is then recovered as
/// `(prefix ∘ element)` applied to `h0`.
pub fn parallel_scan<T: Scalar>(
    elements: &[ScanElement<T>],
    h0: &[T],
) -> Result<(Vec<Vec<T>>, Vec<T>)> {
    check_elements(elements, h0)?;
    let len = elements.len();
    if len == 0 {
        return Ok((Vec::new(), h0.to_vec()));
    }
    let n = h0.len();
    let padded = len.next_power_of_two();
    let mut tree: Vec<ScanElement<T>> = elements.to_vec();
    tree.resize(padded, ScanElement::identity(n));

    // up-sweep: tree[i] becomes the composition of its subtree
    let mut stride = 2;
    while stride <= padded {
        let half = stride / 2;
        for right in (stride - 1..padded).step_by(stride) {
            tree[right] = combine(&tree[right - half], &tree[right]);
        }
        stride *= 2;
    }

    // down-sweep: tree[i] becomes the exclusive prefix ending before i
    let faulty = SCAN_FAULT.with(Cell::get);
    tree[padded - 1] = ScanElement::identity(n);
    let mut stride = padded;
    while stride >= 2 {
        let half = stride / 2;
        for right in (stride - 1..padded).step_by(stride) {
            let left = right - half;
            let parent = tree[right].clone();
            let left_total = std::mem::replace(&mut tree[left], parent.clone());
            tree[right] = if faulty {
                combine(&left_total, &parent)
            } else {
                combine(&parent, &left_total)
            };
        }
        stride /= 2;
    }

    let states: Vec<Vec<T>> = tree
        .iter()
        .zip(elements)
        .map(|(prefix, e)| combine(prefix, e).apply(h0))
        .collect();
    let last = states[len - 1].clone();
    Ok((states, last))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_elements(len: usize, n: usize, seed: u64) -> Vec<ScanElement<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len)
            .map(|_| ScanElement {
                gain: (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
                load: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            })
            .collect()
    }

    #[test]
    fn zero_gain_collapses_to_loads() {
        let elems: Vec<_> = (0..5)
            .map(|i| ScanElement::new(vec![0.0; 2], vec![i as f64, -(i as f64)]).unwrap())
            .collect();
        let (states, _) = sequential_scan(&elems, &[3.0, 4.0]).unwrap();
        for (i, s) in states.iter().enumerate() {
            assert_eq!(s, &vec![i as f64, -(i as f64)]);
        }
    }

    #[test]
    fn single_step_from_zero_is_load() {
        let e = ScanElement::new(vec![0.5f32, 0.25], vec![1.5, -2.0]).unwrap();
        let (states, fin) = sequential_scan(std::slice::from_ref(&e), &[0.0, 0.0]).unwrap();
        assert_eq!(states[0], e.load);
        assert_eq!(fin, e.load);
        let (pstates, _) = parallel_scan(std::slice::from_ref(&e), &[0.0, 0.0]).unwrap();
        assert_eq!(pstates, states);
    }

    #[test]
    fn empty_returns_initial_state() {
        let h0 = vec![1.0f32, 2.0];
        let (s, f) = sequential_scan::<f32>(&[], &h0).unwrap();
        assert!(s.is_empty());
        assert_eq!(f, h0);
        let (s, f) = parallel_scan::<f32>(&[], &h0).unwrap();
        assert!(s.is_empty());
        assert_eq!(f, h0);
    }

    #[test]
    fn matches_hand_unrolled_loop() {
        let elems = random_elements(8, 3, 11);
        let h0 = [0.3, -0.7, 1.1];
        // unrolled oracle written independently of the scan routines
        let mut expected = Vec::new();
        let mut h = h0.to_vec();
        for e in &elems {
            let next: Vec<f64> = (0..3).map(|k| e.gain[k] * h[k] + e.load[k]).collect();
            expected.push(next.clone());
            h = next;
        }
        let (states, fin) = sequential_scan(&elems, &h0).unwrap();
        assert_eq!(states, expected);
        assert_eq!(fin, h);
    }

    #[test]
    fn parallel_matches_sequential_on_odd_and_even_lengths() {
        for &len in &[1usize, 2, 3, 7, 8, 33, 1024] {
            let elems = random_elements(len, 4, len as u64);
            let h0 = [0.5, -0.5, 0.0, 2.0];
            let (a, fa) = sequential_scan(&elems, &h0).unwrap();
            let (b, fb) = parallel_scan(&elems, &h0).unwrap();
            for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
                assert!((x - y).abs() < 1e-10, "len {len}: {x} vs {y}");
            }
            for (x, y) in fa.iter().zip(&fb) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let e = ScanElement::new(vec![0.5f32], vec![1.0]).unwrap();
        assert!(sequential_scan(std::slice::from_ref(&e), &[0.0, 0.0]).is_err());
        assert!(parallel_scan(&[e], &[0.0, 0.0]).is_err());
        assert!(ScanElement::new(vec![1.0f32], vec![]).is_err());
    }

    #[test]
    fn identity_is_neutral() {
        let e = &random_elements(1, 5, 3)[0];
        let id = ScanElement::identity(5);
        assert_eq!(&combine(&id, e), e);
        assert_eq!(&combine(e, &id), e);
    }
}
