//! Confidence-weighted ranking-fidelity reward and GRPO value math.
//!
//! For candidate `k` of image `i` and partner image `z` on dimension `d`, the
//! predicted probability that `i` outranks `z` is
//! `Φ((ŝ_ik − s̄_z) / √(σ²_i + σ²_z + ε))`; the target is the ordering of the
//! pseudo-scores; agreement is the Bhattacharyya coefficient; and each
//! partner is weighted by `min(|s̃_i − s̃_z| / τ_w, 1)`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::calibration::ScoreSpan;
use crate::model::ImageId;
use crate::{normal_cdf, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RewardConfig {
    /// τ_w, the score gap at which a partner gets full weight.
    pub gap_threshold: f64,
    /// When false every partner gets weight 1.
    pub pair_weighting: bool,
    /// ε under the Thurstone square root.
    pub variance_floor: f64,
    pub clip: f64,
    pub kl_coeff: f64,
    pub format_weight: f64,
    pub range_weight: f64,
    pub span: ScoreSpan,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            gap_threshold: 0.5,
            pair_weighting: true,
            variance_floor: 1e-8,
            clip: 0.2,
            kl_coeff: 0.0,
            format_weight: 0.1,
            range_weight: 0.1,
            span: ScoreSpan::FIVE_POINT,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gap_threshold > 0.0) {
            return Err(Error::Config("gap threshold must be positive".into()));
        }
        for (name, v) in [
            ("variance floor", self.variance_floor),
            ("clip", self.clip),
            ("kl coefficient", self.kl_coeff),
            ("format weight", self.format_weight),
            ("range weight", self.range_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(alloc::format!("{name} must be a non-negative number")));
            }
        }
        Ok(())
    }
}

pub fn thurstone_prob(s_ik: f64, mean_z: f64, var_i: f64, var_z: f64, eps: f64) -> f64 {
    normal_cdf((s_ik - mean_z) / libm::sqrt(var_i + var_z + eps))
}

pub fn target_prob(s_i: f64, s_z: f64) -> f64 {
    if s_i > s_z {
        1.0
    } else if s_i < s_z {
        0.0
    } else {
        0.5
    }
}

/// Bhattacharyya coefficient between Bernoulli(p) and Bernoulli(q).
pub fn fidelity(p_pred: f64, p_gt: f64) -> Result<f64> {
    for v in [p_pred, p_gt] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange { what: "probability", value: v });
        }
    }
    Ok(libm::sqrt(p_pred * p_gt) + libm::sqrt((1.0 - p_pred) * (1.0 - p_gt)))
}

pub fn pair_weight(s_i: f64, s_z: f64, gap_threshold: f64) -> Result<f64> {
    if !(gap_threshold > 0.0) {
        return Err(Error::Config("gap threshold must be positive".into()));
    }
    Ok(((s_i - s_z).abs() / gap_threshold).min(1.0))
}

/// The `G` candidate responses for one image. `None` marks a response that
/// failed to parse.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSample {
    pub image: ImageId,
    pub candidates: Vec<Option<Vec<f64>>>,
}

/// Per-dimension mean and unbiased variance over an image's parsed
/// candidates. A single parsed candidate has variance 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub parsed: usize,
}

/// Statistics per sample; `None` when no candidate parsed.
pub fn batch_stats(samples: &[GroupSample], dims: usize) -> Result<Vec<Option<ImageStats>>> {
    samples
        .iter()
        .map(|s| {
            let valid: Vec<&Vec<f64>> = s.candidates.iter().flatten().collect();
            if let Some(bad) = valid.iter().find(|v| v.len() != dims) {
                return Err(Error::LengthMismatch { left: dims, right: bad.len() });
            }
            if valid.is_empty() {
                return Ok(None);
            }
            let g = valid.len() as f64;
            let mut mean = alloc::vec![0.0; dims];
            for v in &valid {
                for (m, x) in mean.iter_mut().zip(v.iter()) {
                    *m += x / g;
                }
            }
            let mut variance = alloc::vec![0.0; dims];
            if valid.len() > 1 {
                for v in &valid {
                    for ((s, x), m) in variance.iter_mut().zip(v.iter()).zip(&mean) {
                        *s += (x - m) * (x - m) / (g - 1.0);
                    }
                }
            }
            Ok(Some(ImageStats { mean, variance, parsed: valid.len() }))
        })
        .collect()
}

/// `R_rank` for every candidate, shaped like `samples[i].candidates`.
/// Unparsed candidates get 0. Partners whose candidates all failed to parse
/// are skipped. When every partner weight on a dimension is zero, that
/// dimension uses the unweighted mean fidelity.
pub fn rank_reward(
    samples: &[GroupSample],
    pseudo: &BTreeMap<ImageId, Vec<f64>>,
    config: &RewardConfig,
) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    if samples.len() < 2 {
        return Err(Error::Degenerate("rank reward needs at least two images in the batch"));
    }
    let targets: Vec<&Vec<f64>> = samples
        .iter()
        .map(|s| pseudo.get(&s.image).ok_or_else(|| Error::UnknownImage(s.image.clone())))
        .collect::<Result<_>>()?;
    let dims = targets[0].len();
    if let Some(t) = targets.iter().find(|t| t.len() != dims) {
        return Err(Error::LengthMismatch { left: dims, right: t.len() });
    }
    if dims == 0 {
        return Err(Error::Empty("dimensions"));
    }
    let stats = batch_stats(samples, dims)?;

    let mut out = Vec::with_capacity(samples.len());
    for (i, sample) in samples.iter().enumerate() {
        let mut rewards = Vec::with_capacity(sample.candidates.len());
        for cand in &sample.candidates {
            let (Some(scores), Some(own)) = (cand, &stats[i]) else {
                rewards.push(0.0);
                continue;
            };
            let mut total = 0.0;
            for d in 0..dims {
                let (mut wsum, mut wfid, mut fsum, mut partners) = (0.0, 0.0, 0.0, 0usize);
                for (z, other) in stats.iter().enumerate() {
                    let Some(other) = other else { continue };
                    if z == i {
                        continue;
                    }
                    let p = thurstone_prob(
                        scores[d],
                        other.mean[d],
                        own.variance[d],
                        other.variance[d],
                        config.variance_floor,
                    );
                    let f = fidelity(p, target_prob(targets[i][d], targets[z][d]))?;
                    let w = if config.pair_weighting {
                        pair_weight(targets[i][d], targets[z][d], config.gap_threshold)?
                    } else {
                        1.0
                    };
                    wsum += w;
                    wfid += w * f;
                    fsum += f;
                    partners += 1;
                }
                if partners == 0 {
                    return Err(Error::Degenerate("no partner image has a parsed candidate"));
                }
                total += if wsum > 0.0 { wfid / wsum } else { fsum / partners as f64 };
            }
            rewards.push(total / dims as f64);
        }
        out.push(rewards);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateReward {
    pub rank: f64,
    pub format: f64,
    pub range: f64,
    pub total: f64,
}

/// `(format, range)` terms: format is 1 when the response parsed; range is 1
/// when it parsed and every score lies in the span.
pub fn aux_rewards(scores: Option<&[f64]>, span: ScoreSpan) -> (f64, f64) {
    match scores {
        None => (0.0, 0.0),
        Some(s) => (1.0, if s.iter().all(|&v| span.contains(v)) { 1.0 } else { 0.0 }),
    }
}

/// Rank reward plus weighted auxiliary terms for every candidate.
pub fn candidate_rewards(
    samples: &[GroupSample],
    pseudo: &BTreeMap<ImageId, Vec<f64>>,
    config: &RewardConfig,
) -> Result<Vec<Vec<CandidateReward>>> {
    let ranks = rank_reward(samples, pseudo, config)?;
    Ok(samples
        .iter()
        .zip(ranks)
        .map(|(s, rank_row)| {
            s.candidates
                .iter()
                .zip(rank_row)
                .map(|(c, rank)| {
                    let (format, range) = aux_rewards(c.as_deref(), config.span);
                    CandidateReward {
                        rank,
                        format,
                        range,
                        total: rank + config.format_weight * format + config.range_weight * range,
                    }
                })
                .collect()
        })
        .collect())
}

/// Within-group normalisation with the population standard deviation.
/// Constant rewards (std below 1e-12) give all-zero advantages.
pub fn grpo_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::Degenerate("advantages need at least two rewards"));
    }
    let g = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / g;
    let std = libm::sqrt(rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / g);
    if std < 1e-12 {
        return Ok(alloc::vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Mean clipped surrogate over all `(image, candidate)` cells minus `β·kl`.
pub fn grpo_surrogate(
    ratios: &[Vec<f64>],
    advantages: &[Vec<f64>],
    kl: f64,
    config: &RewardConfig,
) -> Result<f64> {
    if ratios.len() != advantages.len() {
        return Err(Error::LengthMismatch { left: ratios.len(), right: advantages.len() });
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for (r_row, a_row) in ratios.iter().zip(advantages) {
        if r_row.len() != a_row.len() {
            return Err(Error::LengthMismatch { left: r_row.len(), right: a_row.len() });
        }
        for (&rho, &a) in r_row.iter().zip(a_row) {
            if !(rho > 0.0) {
                return Err(Error::OutOfRange { what: "importance ratio", value: rho });
            }
            let clipped = rho.clamp(1.0 - config.clip, 1.0 + config.clip);
            sum += (rho * a).min(clipped * a);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Empty("surrogate cells"));
    }
    Ok(sum / count as f64 - config.kl_coeff * kl)
}

/// Mean rank reward over all parsed candidates for each gap threshold.
pub fn gap_threshold_sweep(
    samples: &[GroupSample],
    pseudo: &BTreeMap<ImageId, Vec<f64>>,
    thresholds: &[f64],
    config: &RewardConfig,
) -> Result<Vec<(f64, f64)>> {
    thresholds
        .iter()
        .map(|&t| {
            let cfg = RewardConfig { gap_threshold: t, ..config.clone() };
            let r = rank_reward(samples, pseudo, &cfg)?;
            let vals: Vec<f64> = samples
                .iter()
                .zip(&r)
                .flat_map(|(s, row)| s.candidates.iter().zip(row).filter(|(c, _)| c.is_some()).map(|(_, v)| *v))
                .collect();
            if vals.is_empty() {
                return Err(Error::Empty("parsed candidates"));
            }
            Ok((t, vals.iter().sum::<f64>() / vals.len() as f64))
        })
        .collect()
}
