//! Two-sample Kolmogorov–Smirnov test.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Largest `n·m` for which the exact lattice-path p-value is used.
pub const EXACT_MAX_CELLS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Returns `max |i·m − j·n|` over the merged walk, so that `D = value/(n·m)`.
fn scaled_statistic(a: &[f64], b: &[f64]) -> u64 {
    let (n, m) = (a.len() as i64, b.len() as i64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0i64;
    while i < a.len() || j < b.len() {
        let v = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        best = best.max((i as i64 * m - j as i64 * n).abs());
    }
    best as u64
}

/// `P(D ≥ d)` under H0 by counting monotone lattice paths from `(0,0)` to
/// `(n,m)` that keep `|i·m − j·n| < d_scaled`.
fn exact_p(n: usize, m: usize, d_scaled: u64) -> f64 {
    let (ni, mi) = (n as i64, m as i64);
    let inside = |i: usize, j: usize| ((i as i64 * mi - j as i64 * ni).unsigned_abs()) < d_scaled;
    // row[j] holds count(i, j) / C(i + j, i), which keeps the values in [0, 1]
    let mut row = alloc::vec![0.0f64; m + 1];
    for i in 0..=n {
        for j in 0..=m {
            let v = if i == 0 && j == 0 {
                1.0
            } else if !inside(i, j) {
                0.0
            } else {
                let total = (i + j) as f64;
                let from_left = if i > 0 { row[j] * i as f64 / total } else { 0.0 };
                let from_below = if j > 0 { row[j - 1] * j as f64 / total } else { 0.0 };
                from_left + from_below
            };
            row[j] = v;
        }
    }
    (1.0 - row[m]).clamp(0.0, 1.0)
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = libm::exp(-2.0 * kf * kf * lambda * lambda);
        sum += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample test. Exact when `n·m ≤` [`EXACT_MAX_CELLS`], asymptotic with
/// the `(√nₑ + 0.12 + 0.11/√nₑ)` correction otherwise.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("KS sample"));
    }
    if let Some(&v) = a.iter().chain(b).find(|v| v.is_nan()) {
        return Err(Error::OutOfRange { what: "NaN in KS sample", value: v });
    }
    let mut a: Vec<f64> = a.to_vec();
    let mut b: Vec<f64> = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let scaled = scaled_statistic(&a, &b);
    let statistic = scaled as f64 / (n as f64 * m as f64);
    let exact = n.saturating_mul(m) <= EXACT_MAX_CELLS;
    if scaled == 0 {
        return Ok(KsResult { statistic: 0.0, p_value: 1.0, exact });
    }
    if exact {
        return Ok(KsResult { statistic, p_value: exact_p(n, m, scaled), exact: true });
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = libm::sqrt(ne);
    let lambda = (sq + 0.12 + 0.11 / sq) * statistic;
    Ok(KsResult { statistic, p_value: kolmogorov_q(lambda), exact: false })
}
