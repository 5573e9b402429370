//! Latent-to-score calibration.
//!
//! Two sigmoid maps are provided. The global map `low + span·σ(a q + b)` is
//! fitted to anchors by linear least squares in logit space. The bridge map
//! normalises `q` by the corpus extrema and applies a fixed steepness, so the
//! extrema land on `σ(±λ/2)`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::model::{Anchor, AnchorSet, ImageId};
use crate::{sigmoid, Error, Result};

/// Closed score range, `(1, 5)` by default or `(1, 10)` in wide mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreSpan {
    pub low: f64,
    pub high: f64,
}

impl ScoreSpan {
    pub const FIVE_POINT: ScoreSpan = ScoreSpan { low: 1.0, high: 5.0 };
    pub const TEN_POINT: ScoreSpan = ScoreSpan { low: 1.0, high: 10.0 };

    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.low && v <= self.high
    }
}

impl Default for ScoreSpan {
    fn default() -> Self {
        Self::FIVE_POINT
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidFit {
    pub slope: f64,
    pub offset: f64,
    pub span: ScoreSpan,
}

fn logit(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}

/// Fits `s̄ ≈ 1 + 4σ(a q + b)` to `(q, s̄)` points on the 1–5 scale.
pub fn fit_global_sigmoid(points: &[(f64, f64)]) -> Result<SigmoidFit> {
    fit_global_sigmoid_in(points, ScoreSpan::FIVE_POINT)
}

pub fn fit_global_sigmoid_in(points: &[(f64, f64)], span: ScoreSpan) -> Result<SigmoidFit> {
    if points.len() < 2 {
        return Err(Error::Degenerate("sigmoid fit needs at least two anchor points"));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(q, s) in points {
        if !(s > span.low && s < span.high) {
            return Err(Error::OutOfRange { what: "anchor score (logit undefined)", value: s });
        }
        xs.push(q);
        ys.push(logit((s - span.low) / span.width()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::Degenerate("anchor latents are all equal"));
    }
    let slope = sxy / sxx;
    if !(slope > 0.0) {
        return Err(Error::Degenerate("fitted sigmoid slope is not positive"));
    }
    Ok(SigmoidFit { slope, offset: my - slope * mx, span })
}

/// Pairs each anchor's latent with its mean rating. Anchors missing from the
/// table are skipped.
pub fn anchor_points(latent: &BTreeMap<ImageId, f64>, anchors: &AnchorSet) -> Vec<(f64, f64)> {
    anchors
        .entries
        .iter()
        .filter_map(|a| latent.get(&a.image).map(|&q| (q, a.mean_rating)))
        .collect()
}

pub fn apply_sigmoid(q: f64, fit: &SigmoidFit) -> f64 {
    fit.span.low + fit.span.width() * sigmoid(fit.slope * q + fit.offset)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeCalibration {
    pub steepness: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub span: ScoreSpan,
}

impl BridgeCalibration {
    pub fn new(q_min: f64, q_max: f64) -> Self {
        Self { steepness: 6.0, q_min, q_max, span: ScoreSpan::FIVE_POINT }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q_max > self.q_min) {
            return Err(Error::Config(alloc::format!(
                "q_max ({}) must exceed q_min ({})",
                self.q_max,
                self.q_min
            )));
        }
        if !(self.steepness > 0.0) {
            return Err(Error::Config("calibration steepness must be positive".into()));
        }
        Ok(())
    }

    /// Output range `[low + span σ(−λ/2), low + span σ(λ/2)]`.
    pub fn output_range(&self) -> (f64, f64) {
        let half = 0.5 * self.steepness;
        (
            self.span.low + self.span.width() * sigmoid(-half),
            self.span.low + self.span.width() * sigmoid(half),
        )
    }
}

/// Min–max normalised sigmoid; `q` outside the extrema is clamped.
pub fn bridge_calibrate(q: f64, cal: &BridgeCalibration) -> Result<f64> {
    cal.validate()?;
    let q = q.clamp(cal.q_min, cal.q_max);
    let t = (q - cal.q_min) / (cal.q_max - cal.q_min);
    Ok(cal.span.low + cal.span.width() * sigmoid(cal.steepness * t - 0.5 * cal.steepness))
}

/// Picks up to `per_level` anchors at each requested level from per-image
/// rating lists. An image's level is its rounded mean; within a level the
/// lowest rating standard deviations win (ties broken by id).
pub fn select_anchors(
    ratings: &BTreeMap<ImageId, Vec<f64>>,
    levels: &[u8],
    per_level: usize,
) -> AnchorSet {
    let mut by_level: BTreeMap<u8, Vec<(f64, Anchor)>> = BTreeMap::new();
    for (image, scores) in ratings {
        if scores.is_empty() {
            continue;
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        let level = libm::round(mean) as i64;
        if let Some(&lvl) = levels.iter().find(|&&l| i64::from(l) == level) {
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            let mid = sorted.len() / 2;
            let median = if sorted.len() % 2 == 1 {
                sorted[mid]
            } else {
                0.5 * (sorted[mid - 1] + sorted[mid])
            };
            let anchor = Anchor {
                image: image.clone(),
                mean_rating: mean,
                median_rating: Some(median),
                level: lvl,
            };
            by_level.entry(lvl).or_default().push((libm::sqrt(var), anchor));
        }
    }
    let mut entries = Vec::new();
    for (_, mut cands) in by_level {
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.image.cmp(&b.1.image)));
        entries.extend(cands.into_iter().take(per_level).map(|(_, a)| a));
    }
    AnchorSet::new(entries)
}
