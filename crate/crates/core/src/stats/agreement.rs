//! Inter-rater agreement: Kendall's W, Fleiss' κ, nominal Krippendorff's α
//! and unanimity rates.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::correlation::average_ranks;
use crate::model::ImageId;
use crate::{Error, Result};

/// `m` raters ranking the same `n` items. Row `r` holds rater `r`'s
/// average ranks, aligned with `items`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingMatrix {
    pub items: Vec<ImageId>,
    pub raters: Vec<alloc::string::String>,
    pub ranks: Vec<Vec<f64>>,
}

impl RankingMatrix {
    /// Ranks each rater's scores (higher score → higher rank).
    pub fn from_scores(
        items: Vec<ImageId>,
        raters: Vec<alloc::string::String>,
        scores: &[Vec<f64>],
    ) -> Result<Self> {
        if raters.len() != scores.len() {
            return Err(Error::LengthMismatch { left: raters.len(), right: scores.len() });
        }
        let mut ranks = Vec::with_capacity(scores.len());
        for row in scores {
            if row.len() != items.len() {
                return Err(Error::LengthMismatch { left: items.len(), right: row.len() });
            }
            ranks.push(average_ranks(row));
        }
        Ok(Self { items, raters, ranks })
    }
}

/// Tie-corrected coefficient of concordance.
pub fn kendalls_w(matrix: &RankingMatrix) -> Result<f64> {
    let m = matrix.ranks.len();
    let n = matrix.items.len();
    if m < 2 || n < 2 {
        return Err(Error::Degenerate("Kendall's W needs at least two raters and two items"));
    }
    let mut sums = alloc::vec![0.0; n];
    let mut tie_term = 0.0;
    for row in &matrix.ranks {
        if row.len() != n {
            return Err(Error::LengthMismatch { left: n, right: row.len() });
        }
        for (s, r) in sums.iter_mut().zip(row) {
            *s += r;
        }
        let mut counts: BTreeMap<u64, f64> = BTreeMap::new();
        for r in row {
            *counts.entry(r.to_bits()).or_insert(0.0) += 1.0;
        }
        tie_term += counts.values().map(|t| t * t * t - t).sum::<f64>();
    }
    let (mf, nf) = (m as f64, n as f64);
    let mean = sums.iter().sum::<f64>() / nf;
    let s: f64 = sums.iter().map(|r| (r - mean) * (r - mean)).sum();
    let denom = mf * mf * (nf * nf * nf - nf) - mf * tie_term;
    if denom <= 0.0 {
        return Err(Error::Degenerate("every rater ties all items"));
    }
    Ok((12.0 * s / denom).clamp(0.0, 1.0))
}

/// Subjects × raters table of categorical labels; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelMatrix {
    pub labels: Vec<Vec<Option<i32>>>,
}

impl LabelMatrix {
    pub fn new(labels: Vec<Vec<Option<i32>>>) -> Self {
        Self { labels }
    }

    pub fn complete(labels: Vec<Vec<i32>>) -> Self {
        Self { labels: labels.into_iter().map(|r| r.into_iter().map(Some).collect()).collect() }
    }

    pub fn subjects(&self) -> usize {
        self.labels.len()
    }

    /// Rater count, taken as the widest row.
    pub fn raters(&self) -> usize {
        self.labels.iter().map(Vec::len).max().unwrap_or(0)
    }
}

fn category_counts(row: impl Iterator<Item = i32>) -> BTreeMap<i32, usize> {
    let mut counts = BTreeMap::new();
    for l in row {
        *counts.entry(l).or_insert(0) += 1;
    }
    counts
}

/// Fleiss' κ over a complete label matrix.
pub fn fleiss_kappa(matrix: &LabelMatrix) -> Result<f64> {
    let n_subj = matrix.subjects();
    let m = matrix.raters();
    if n_subj == 0 {
        return Err(Error::Empty("label matrix"));
    }
    if m < 2 {
        return Err(Error::Degenerate("Fleiss' kappa needs at least two raters"));
    }
    let mut totals: BTreeMap<i32, usize> = BTreeMap::new();
    let mut p_bar = 0.0;
    let mf = m as f64;
    for row in &matrix.labels {
        if row.len() != m || row.iter().any(Option::is_none) {
            return Err(Error::Degenerate("Fleiss' kappa needs every cell labelled"));
        }
        let counts = category_counts(row.iter().flatten().copied());
        let agree: f64 = counts.values().map(|&c| (c * c) as f64).sum::<f64>() - mf;
        p_bar += agree / (mf * (mf - 1.0));
        for (k, c) in counts {
            *totals.entry(k).or_insert(0) += c;
        }
    }
    p_bar /= n_subj as f64;
    let all = (n_subj * m) as f64;
    let p_e: f64 = totals.values().map(|&c| (c as f64 / all) * (c as f64 / all)).sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Err(Error::Degenerate("chance agreement is 1, kappa undefined"));
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Krippendorff's α with the nominal metric. Units with fewer than two
/// labels are not pairable and are skipped.
pub fn krippendorff_alpha_nominal(matrix: &LabelMatrix) -> Result<f64> {
    // coincidence matrix o[c][k]
    let mut o: BTreeMap<(i32, i32), f64> = BTreeMap::new();
    for row in &matrix.labels {
        let vals: Vec<i32> = row.iter().flatten().copied().collect();
        let mu = vals.len();
        if mu < 2 {
            continue;
        }
        let w = 1.0 / (mu as f64 - 1.0);
        for (i, &c) in vals.iter().enumerate() {
            for (j, &k) in vals.iter().enumerate() {
                if i != j {
                    *o.entry((c, k)).or_insert(0.0) += w;
                }
            }
        }
    }
    let mut n_c: BTreeMap<i32, f64> = BTreeMap::new();
    for (&(c, _), &v) in &o {
        *n_c.entry(c).or_insert(0.0) += v;
    }
    let n: f64 = n_c.values().sum();
    if n < 2.0 {
        return Err(Error::Degenerate("Krippendorff's alpha needs at least two pairable labels"));
    }
    let observed: f64 = o.iter().filter(|((c, k), _)| c != k).map(|(_, v)| v).sum();
    let mut expected = 0.0;
    for (c, a) in &n_c {
        for (k, b) in &n_c {
            if c != k {
                expected += a * b;
            }
        }
    }
    if expected == 0.0 {
        return Err(Error::Degenerate("only one category observed, alpha undefined"));
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}

/// Fraction of subjects whose modal label is shared by at least `k` raters.
pub fn agreement_at_least(matrix: &LabelMatrix, k: usize) -> Result<f64> {
    if matrix.subjects() == 0 {
        return Err(Error::Empty("label matrix"));
    }
    let hits = matrix
        .labels
        .iter()
        .filter(|row| {
            category_counts(row.iter().flatten().copied()).values().copied().max().unwrap_or(0) >= k
        })
        .count();
    Ok(hits as f64 / matrix.subjects() as f64)
}

/// `(full, at_least_four)` agreement rates for a five-rater panel.
pub fn unanimity_rates(matrix: &LabelMatrix) -> Result<(f64, f64)> {
    let m = matrix.raters();
    if m != 5 || matrix.labels.iter().any(|r| r.len() != 5 || r.iter().any(Option::is_none)) {
        return Err(Error::Config(alloc::format!(
            "unanimity rates expect a complete five-rater panel, got {m} raters"
        )));
    }
    Ok((agreement_at_least(matrix, 5)?, agreement_at_least(matrix, 4)?))
}
