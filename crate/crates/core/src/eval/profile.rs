use super::edit_distance;
use crate::error::{Error, Result};

/// Errors and reference counts per relative-position bucket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorProfile {
    pub errors: Vec<usize>,
    pub refs: Vec<usize>,
}

impl ErrorProfile {
    pub fn new(n_buckets: usize) -> Result<Self> {
        if n_buckets == 0 {
            return Err(Error::Domain("need at least one bucket".into()));
        }
        Ok(Self {
            errors: vec![0; n_buckets],
            refs: vec![0; n_buckets],
        })
    }

    pub fn n_buckets(&self) -> usize {
        self.errors.len()
    }

    /// `errors / refs` per bucket (0 for buckets without reference tokens).
    pub fn normalized(&self) -> Vec<f64> {
        self.errors
            .iter()
            .zip(&self.refs)
            .map(|(&e, &r)| if r == 0 { 0.0 } else { e as f64 / r as f64 })
            .collect()
    }

    pub fn total_errors(&self) -> usize {
        self.errors.iter().sum()
    }

    pub fn merge(&mut self, other: &ErrorProfile) -> Result<()> {
        if other.n_buckets() != self.n_buckets() {
            return Err(Error::Domain("profiles have different bucket counts".into()));
        }
        for (a, b) in self.errors.iter_mut().zip(&other.errors) {
            *a += b;
        }
        for (a, b) in self.refs.iter_mut().zip(&other.refs) {
            *a += b;
        }
        Ok(())
    }

    /// Tab-separated `bucket  normalized_error` table with a header line.
    pub fn to_table(&self) -> String {
        let mut out = String::from("bucket\tnormalized_error\n");
        for (b, v) in self.normalized().iter().enumerate() {
            out.push_str(&format!("{b}\t{v:.6}\n"));
        }
        out
    }

    /// Plain-text horizontal bar chart, `width` characters for an error of 1.0.
    pub fn to_chart(&self, width: usize) -> String {
        let n = self.n_buckets();
        let mut out = String::new();
        for (b, v) in self.normalized().iter().enumerate() {
            let lo = b as f64 / n as f64;
            let hi = (b + 1) as f64 / n as f64;
            let bar = "#".repeat((v.min(1.0) * width as f64).round() as usize);
            out.push_str(&format!("[{lo:.2},{hi:.2}) {v:>6.3} |{bar}\n"));
        }
        out
    }
}

/// Attribute alignment errors to relative reference positions.
///
/// Reference token `i` of `R` lands in bucket `⌊i/R · B⌋`. Substitutions and
/// deletions count against their own token; an insertion counts against the
/// next reference token, or the last bucket when nothing follows.
pub fn position_profile<S: PartialEq>(
    refs: &[Vec<S>],
    hyps: &[Vec<S>],
    n_buckets: usize,
) -> Result<ErrorProfile> {
    if refs.len() != hyps.len() {
        return Err(Error::Domain(format!(
            "{} references but {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    let mut p = ErrorProfile::new(n_buckets)?;
    for (r, h) in refs.iter().zip(hyps) {
        let len = r.len();
        let bucket = |i: usize| {
            if i >= len {
                n_buckets - 1
            } else {
                (i * n_buckets) / len
            }
        };
        for i in 0..len {
            p.refs[bucket(i)] += 1;
        }
        let mut i = 0;
        for op in edit_distance(r, h).ops {
            if op.is_error() {
                p.errors[bucket(i)] += 1;
            }
            if op.consumes_reference() {
                i += 1;
            }
        }
    }
    Ok(p)
}
