//! k-means quantization of feature frames.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// `K` cluster centers of dimension `D`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub k: usize,
    pub dim: usize,
    pub centers: Vec<f64>,
}

impl Codebook {
    pub fn new(k: usize, dim: usize, centers: Vec<f64>) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::Domain("codebook needs K >= 1 and D >= 1".into()));
        }
        check_len("codebook centers", k * dim, centers.len())?;
        if centers.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("codebook center".into()));
        }
        Ok(Self { k, dim, centers })
    }

    pub fn center(&self, k: usize) -> &[f64] {
        &self.centers[k * self.dim..(k + 1) * self.dim]
    }
}

/// Result of [`kmeans_fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansFit {
    pub codebook: Codebook,
    /// Mean squared distance to the assigned center after each assignment pass.
    pub distortion: Vec<f64>,
    /// Whether assignments reached a fixpoint before `max_iters`.
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center by squared Euclidean distance; ties go to the lowest index.
pub fn vq_assign(z: &[f64], codebook: &Codebook) -> Result<usize> {
    check_len("vq input", codebook.dim, z.len())?;
    Ok(nearest(z, codebook).0)
}

fn nearest(z: &[f64], codebook: &Codebook) -> (usize, f64) {
    let mut best = (0, sq_dist(z, codebook.center(0)));
    for k in 1..codebook.k {
        let d = sq_dist(z, codebook.center(k));
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Quantize every row of an `n × D` matrix.
pub fn vq_assign_all(points: &[f64], codebook: &Codebook) -> Result<Vec<u32>> {
    if !points.len().is_multiple_of(codebook.dim) {
        return Err(Error::Domain("feature rows do not match the codebook dimension".into()));
    }
    Ok(points
        .chunks_exact(codebook.dim)
        .map(|row| nearest(row, codebook).0 as u32)
        .collect())
}

fn distinct_rows(points: &[f64], dim: usize) -> usize {
    let mut rows: Vec<Vec<u64>> = points
        .chunks_exact(dim)
        .map(|r| r.iter().map(|v| v.to_bits()).collect())
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}

/// k-means++ seeding followed by Lloyd iterations.
///
/// An empty cluster keeps its previous center, so the distortion never
/// increases from one pass to the next.
pub fn kmeans_fit(points: &[f64], dim: usize, k: usize, max_iters: usize, seed: u64) -> Result<KmeansFit> {
    if dim == 0 || k == 0 {
        return Err(Error::Domain("k-means needs K >= 1 and D >= 1".into()));
    }
    if !points.len().is_multiple_of(dim) {
        return Err(Error::Domain("feature rows do not tile the buffer".into()));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature value".into()));
    }
    let n = points.len() / dim;
    let distinct = distinct_rows(points, dim);
    if distinct < k {
        return Err(Error::Domain(format!(
            "{distinct} distinct points cannot support {k} clusters"
        )));
    }
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centers = Vec::with_capacity(k * dim);
    centers.extend_from_slice(row(rng.gen_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), &centers[..dim])).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 {
                pick = Some(i);
                if target < w {
                    break;
                }
                target -= w;
            }
        }
        let pick = pick.expect("enough distinct points remain");
        let start = centers.len();
        centers.extend_from_slice(row(pick));
        for (i, slot) in d2.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(row(i), &centers[start..start + dim]));
        }
    }

    let mut codebook = Codebook { k, dim, centers };
    let mut assignment = vec![usize::MAX; n];
    let mut distortion = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        let mut total = 0.0;
        for i in 0..n {
            let (c, d) = nearest(row(i), &codebook);
            total += d;
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        distortion.push(total / n as f64);
        if !changed {
            converged = true;
            break;
        }
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignment[i];
            counts[c] += 1;
            for (s, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..dim {
                    codebook.centers[c * dim + j] = sums[c * dim + j] / counts[c] as f64;
                }
            }
        }
    }
    Ok(KmeansFit {
        codebook,
        distortion,
        converged,
    })
}

/// Collapse runs of equal adjacent ids.
pub fn deduplicate(ids: &[u32]) -> Vec<u32> {
    let mut out: Vec<u32> = Vec::with_capacity(ids.len());
    for &id in ids {
        if out.last() != Some(&id) {
            out.push(id);
        }
    }
    out
}
