//! Reference-pool pseudo-labelling.
//!
//! Stage 1 judges every pair of a seeded `N`-image pool and freezes per
//! dimension Elo ratings. Stage 2 compares each remaining image with `K`
//! pool members and takes the MAP of a Gaussian prior (pool mean and spread)
//! times the Elo-logistic likelihood of the observed outcomes. Stage 3 maps
//! all latents through the min–max bridge sigmoid.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;

use crate::calibration::{bridge_calibrate, BridgeCalibration, ScoreSpan};
use crate::elo::{run_elo, EloConfig};
use crate::judge::{Judge, JudgeError};
use crate::model::{DimensionSet, ImageId, Outcome, PairJudgment};
use crate::rng::{keyed_rng, mix_key};
use crate::{sigmoid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeConfig {
    pub pool_size: usize,
    pub refs_per_image: usize,
    /// Prior std is the pool rating std times this factor.
    pub prior_scale: f64,
    pub pool_seed: u64,
    pub elo: EloConfig,
    pub steepness: f64,
    pub span: ScoreSpan,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            pool_size: 50,
            refs_per_image: 10,
            prior_scale: 1.0,
            pool_seed: 0,
            elo: EloConfig::default(),
            steepness: 6.0,
            span: ScoreSpan::FIVE_POINT,
        }
    }
}

impl BridgeConfig {
    pub fn validate(&self, corpus_size: usize) -> Result<()> {
        self.elo.validate()?;
        if self.pool_size < 2 {
            return Err(Error::Config("pool size must be at least 2".into()));
        }
        if self.pool_size > corpus_size {
            return Err(Error::Config(alloc::format!(
                "pool size {} exceeds corpus size {corpus_size}",
                self.pool_size
            )));
        }
        if self.refs_per_image < 1 || self.refs_per_image > self.pool_size {
            return Err(Error::Config(alloc::format!(
                "refs per image {} outside [1, {}]",
                self.refs_per_image,
                self.pool_size
            )));
        }
        if !(self.prior_scale > 0.0) {
            return Err(Error::Config("prior scale must be positive".into()));
        }
        Ok(())
    }
}

/// Frozen Stage-1 ratings. Fields are private so nothing can edit the pool
/// after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePool {
    members: Vec<ImageId>,
    /// One table per dimension, in `DimensionSet` order.
    frozen: Vec<BTreeMap<ImageId, f64>>,
    pool_seed: u64,
}

impl ReferencePool {
    pub fn members(&self) -> &[ImageId] {
        &self.members
    }

    pub fn rating(&self, dim: usize, id: &ImageId) -> Option<f64> {
        self.frozen.get(dim)?.get(id).copied()
    }

    pub fn ratings(&self, dim: usize) -> &BTreeMap<ImageId, f64> {
        &self.frozen[dim]
    }

    pub fn pool_seed(&self) -> u64 {
        self.pool_seed
    }

    /// Pool mean and population std on one dimension.
    pub fn moments(&self, dim: usize) -> (f64, f64) {
        let v: Vec<f64> = self.frozen[dim].values().copied().collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        (mean, libm::sqrt(var))
    }

    /// Hash of every frozen value, for checking the pool is never mutated.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0u64;
        for table in &self.frozen {
            for (id, q) in table {
                h = mix_key(&[&h.to_le_bytes(), id.as_str().as_bytes(), &q.to_bits().to_le_bytes()]);
            }
        }
        h
    }
}

fn judge_err(e: JudgeError) -> Error {
    Error::Judge(e)
}

fn pairwise_outcomes(
    judge: &mut impl Judge,
    a: &ImageId,
    b: &ImageId,
    dims: usize,
) -> Result<Vec<Outcome>> {
    let verdict = judge.compare(a, b).map_err(judge_err)?;
    let outcomes = verdict
        .outcomes()
        .ok_or_else(|| JudgeError::Protocol("expected a pairwise verdict".into()))?;
    if outcomes.len() != dims {
        return Err(Error::Judge(JudgeError::Protocol(alloc::format!(
            "verdict covers {} dimensions, expected {dims}",
            outcomes.len()
        ))));
    }
    Ok(outcomes.to_vec())
}

/// Samples the pool from `corpus`, judges all `C(N, 2)` pairs and freezes
/// per-dimension Elo ratings.
pub fn build_pool(
    corpus: &[ImageId],
    judge: &mut impl Judge,
    config: &BridgeConfig,
) -> Result<ReferencePool> {
    config.validate(corpus.len())?;
    let dims = judge.dimensions().clone();
    let mut sorted = corpus.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != corpus.len() {
        return Err(Error::Config("corpus contains duplicate image ids".into()));
    }
    let mut members: Vec<ImageId> =
        sorted.choose_multiple(&mut keyed_rng(config.pool_seed, 0), config.pool_size).cloned().collect();
    members.sort();

    let mut per_dim: Vec<Vec<PairJudgment>> = alloc::vec![Vec::new(); dims.len()];
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            let outcomes = pairwise_outcomes(judge, &members[i], &members[j], dims.len())?;
            for (d, o) in outcomes.into_iter().enumerate() {
                per_dim[d].push(PairJudgment::new(
                    "pool",
                    members[i].clone(),
                    members[j].clone(),
                    dims.as_slice()[d].clone(),
                    o,
                ));
            }
        }
    }
    let frozen = per_dim
        .iter()
        .map(|js| run_elo(js, &config.elo).map(|t| t.values))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReferencePool { members, frozen, pool_seed: config.pool_seed })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub q: f64,
    pub iterations: usize,
    /// No outcomes were given; `q` is the prior mean.
    pub prior_only: bool,
}

/// Derivative of the log posterior and its (negative) curvature.
fn log_post_derivs(q: f64, refs: &[(f64, f64)], mean: f64, std: f64, tau: f64) -> (f64, f64) {
    let mut d1 = -(q - mean) / (std * std);
    let mut d2 = -1.0 / (std * std);
    for &(r, o) in refs {
        let p = sigmoid((q - r) / tau);
        d1 += (o - p) / tau;
        d2 -= p * (1.0 - p) / (tau * tau);
    }
    (d1, d2)
}

/// Log posterior up to a constant, used by tests and diagnostics.
pub fn log_posterior(q: f64, refs: &[(f64, f64)], mean: f64, std: f64, tau: f64) -> f64 {
    let mut v = -0.5 * (q - mean) * (q - mean) / (std * std);
    for &(r, o) in refs {
        let x = (q - r) / tau;
        // log σ(x) = −log(1 + e^{−x}), computed stably
        let log_p = -softplus(-x);
        let log_q = -softplus(x);
        v += o * log_p + (1.0 - o) * log_q;
    }
    v
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// MAP rating given `(reference rating, outcome score)` observations, a
/// `N(mean, std²)` prior and logistic temperature `tau`. The log posterior is
/// strictly concave, so the root of its derivative on
/// `[mean − 6 std, mean + 6 std]` is found by Newton steps that fall back to
/// bisection whenever they leave the current bracket.
pub fn posterior_map(refs: &[(f64, f64)], mean: f64, std: f64, tau: f64) -> Result<Posterior> {
    if !(tau > 0.0) {
        return Err(Error::OutOfRange { what: "temperature", value: tau });
    }
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::OutOfRange { what: "prior std", value: std });
    }
    if refs.is_empty() {
        return Ok(Posterior { q: mean, iterations: 0, prior_only: true });
    }
    let (mut lo, mut hi) = (mean - 6.0 * std, mean + 6.0 * std);
    if log_post_derivs(lo, refs, mean, std, tau).0 <= 0.0 {
        return Ok(Posterior { q: lo, iterations: 0, prior_only: false });
    }
    if log_post_derivs(hi, refs, mean, std, tau).0 >= 0.0 {
        return Ok(Posterior { q: hi, iterations: 0, prior_only: false });
    }
    let tol = 1e-10 * (1.0 + mean.abs() + std);
    let mut q = mean.clamp(lo, hi);
    for it in 1..=200 {
        let (d1, d2) = log_post_derivs(q, refs, mean, std, tau);
        if d1 == 0.0 {
            return Ok(Posterior { q, iterations: it, prior_only: false });
        }
        if d1 > 0.0 {
            lo = q;
        } else {
            hi = q;
        }
        let newton = q - d1 / d2;
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - q).abs() < tol || hi - lo < tol {
            return Ok(Posterior { q: next, iterations: it, prior_only: false });
        }
        q = next;
    }
    Ok(Posterior { q, iterations: 200, prior_only: false })
}

/// MAP rating of one image on dimension `dim` from outcomes against pool
/// members.
pub fn estimate_posterior_rating(
    outcomes: &[(ImageId, Outcome)],
    pool: &ReferencePool,
    dim: usize,
    config: &BridgeConfig,
) -> Result<Posterior> {
    let refs = outcomes
        .iter()
        .map(|(r, o)| {
            pool.rating(dim, r).map(|q| (q, o.score())).ok_or_else(|| Error::UnknownImage(r.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean, std) = pool.moments(dim);
    let std = std * config.prior_scale;
    if std == 0.0 {
        // pool collapsed to one rating; the prior is a point mass
        return Ok(Posterior { q: mean, iterations: 0, prior_only: refs.is_empty() });
    }
    posterior_map(&refs, mean, std, config.elo.temperature)
}

/// Stage-2 references for one image, drawn without replacement from a
/// stream keyed on the pool seed and the image id.
pub fn sample_references(pool: &ReferencePool, image: &ImageId, k: usize) -> Vec<ImageId> {
    let key = mix_key(&[&pool.pool_seed.to_le_bytes(), image.as_str().as_bytes()]);
    pool.members.choose_multiple(&mut keyed_rng(key, 0), k).cloned().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeOutput {
    pub pool: ReferencePool,
    /// Latent rating per image, one entry per dimension.
    pub latent: BTreeMap<ImageId, Vec<f64>>,
    /// Calibrated pseudo-score per image, one entry per dimension.
    pub scores: BTreeMap<ImageId, Vec<f64>>,
    pub calibrations: Vec<BridgeCalibration>,
    /// Stage-2 images whose estimate fell back to the prior mean.
    pub prior_only: Vec<ImageId>,
    pub dimensions: DimensionSet,
}

/// Runs all three stages over `corpus`.
pub fn pseudo_label_corpus(
    corpus: &[ImageId],
    judge: &mut impl Judge,
    config: &BridgeConfig,
) -> Result<BridgeOutput> {
    let pool = build_pool(corpus, judge, config)?;
    let fingerprint = pool.fingerprint();
    let dims = judge.dimensions().clone();
    let nd = dims.len();

    let mut latent: BTreeMap<ImageId, Vec<f64>> = BTreeMap::new();
    for m in &pool.members {
        latent.insert(m.clone(), (0..nd).map(|d| pool.frozen[d][m]).collect());
    }
    let mut prior_only = Vec::new();
    let mut rest: Vec<&ImageId> = corpus.iter().filter(|id| !latent.contains_key(*id)).collect();
    rest.sort();
    for image in rest {
        let refs = sample_references(&pool, image, config.refs_per_image);
        let mut per_dim: Vec<Vec<(ImageId, Outcome)>> = alloc::vec![Vec::new(); nd];
        for r in &refs {
            let outcomes = pairwise_outcomes(judge, image, r, nd)?;
            for (d, o) in outcomes.into_iter().enumerate() {
                per_dim[d].push((r.clone(), o));
            }
        }
        let mut qs = Vec::with_capacity(nd);
        for (d, obs) in per_dim.iter().enumerate() {
            let post = estimate_posterior_rating(obs, &pool, d, config)?;
            if post.prior_only && !prior_only.contains(image) {
                prior_only.push(image.clone());
            }
            qs.push(post.q);
        }
        latent.insert(image.clone(), qs);
    }
    debug_assert_eq!(fingerprint, pool.fingerprint());

    let mut calibrations = Vec::with_capacity(nd);
    for d in 0..nd {
        let (mut q_min, mut q_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in latent.values() {
            q_min = q_min.min(v[d]);
            q_max = q_max.max(v[d]);
        }
        let cal = BridgeCalibration { steepness: config.steepness, q_min, q_max, span: config.span };
        cal.validate().map_err(|_| Error::Degenerate("all latent ratings equal on a dimension"))?;
        calibrations.push(cal);
    }
    let mut scores = BTreeMap::new();
    for (id, qs) in &latent {
        let s = qs
            .iter()
            .zip(&calibrations)
            .map(|(&q, cal)| bridge_calibrate(q, cal))
            .collect::<Result<Vec<_>>>()?;
        scores.insert(id.clone(), s);
    }
    Ok(BridgeOutput { pool, latent, scores, calibrations, prior_only, dimensions: dims })
}

/// Judge calls made by the bridge: `C(N, 2) + (n − N) K`.
pub fn inference_cost(pool_size: u64, refs: u64, corpus: u64) -> Result<u64> {
    if corpus < pool_size {
        return Err(Error::Config(alloc::format!(
            "corpus size {corpus} smaller than pool size {pool_size}"
        )));
    }
    Ok(exhaustive_cost(pool_size) + (corpus - pool_size) * refs)
}

/// Pointwise majority voting with 32 samples per image.
pub fn majority_vote_cost(corpus: u64) -> u64 {
    32 * corpus
}

/// Judging every pair of the corpus.
pub fn exhaustive_cost(corpus: u64) -> u64 {
    corpus * corpus.saturating_sub(1) / 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judge::{SyntheticJudge, SyntheticJudgeConfig};
    use alloc::format;
    use alloc::vec;

    fn corpus(n: usize) -> Vec<ImageId> {
        (0..n).map(|i| ImageId::new(format!("img{i:03}"))).collect()
    }

    fn judge(ids: &[ImageId], noise: f64) -> SyntheticJudge {
        let dims = DimensionSet::from_names(&["overall"]).unwrap();
        let latent = ids.iter().enumerate().map(|(i, id)| (id.clone(), vec![i as f64 * 0.1])).collect();
        SyntheticJudge::new(
            dims,
            SyntheticJudgeConfig { latent, noise_std: noise, tie_band: 0.0, seed: 1, span: ScoreSpan::FIVE_POINT },
        )
        .unwrap()
    }

    #[test]
    fn cost_examples() {
        assert_eq!(inference_cost(50, 10, 3000).unwrap(), 30_725);
        assert_eq!(inference_cost(50, 10, 50).unwrap(), 1225);
        assert_eq!(majority_vote_cost(3000), 96_000);
        assert_eq!(exhaustive_cost(3000), 4_498_500);
        assert!(inference_cost(50, 10, 49).is_err());
    }

    #[test]
    fn two_image_pool() {
        let ids = corpus(2);
        let mut j = judge(&ids, 0.0);
        let cfg = BridgeConfig { pool_size: 2, refs_per_image: 1, ..BridgeConfig::default() };
        let pool = build_pool(&ids, &mut j, &cfg).unwrap();
        assert!(pool.rating(0, &ids[1]).unwrap() > pool.rating(0, &ids[0]).unwrap());
    }

    #[test]
    fn posterior_edges() {
        let p = posterior_map(&[], 1500.0, 100.0, 173.0).unwrap();
        assert!(p.prior_only && p.q == 1500.0);
        let wins: Vec<(f64, f64)> = (0..10).map(|i| (1300.0 + 40.0 * i as f64, 1.0)).collect();
        assert!(posterior_map(&wins, 1500.0, 100.0, 173.0).unwrap().q > 1500.0);
        let tie = posterior_map(&[(1700.0, 0.5)], 1500.0, 100.0, 173.0).unwrap();
        assert!(tie.q > 1500.0 && tie.q < 1700.0);
        assert!(posterior_map(&wins, 1500.0, 0.0, 173.0).is_err());
    }

    #[test]
    fn corpus_equal_to_pool_needs_no_stage_two() {
        let ids = corpus(6);
        let mut j = crate::judge::CountingJudge::new(judge(&ids, 0.3));
        let cfg = BridgeConfig { pool_size: 6, refs_per_image: 3, ..BridgeConfig::default() };
        let out = pseudo_label_corpus(&ids, &mut j, &cfg).unwrap();
        assert_eq!(j.compare_calls, 15);
        assert_eq!(out.scores.len(), 6);
        let (lo, hi) = out.calibrations[0].output_range();
        assert!(out.scores.values().all(|s| s[0] >= lo - 1e-12 && s[0] <= hi + 1e-12));
    }

    #[test]
    fn references_are_stable_per_image() {
        let ids = corpus(12);
        let mut j = judge(&ids, 0.0);
        let cfg = BridgeConfig { pool_size: 8, refs_per_image: 4, ..BridgeConfig::default() };
        let pool = build_pool(&ids, &mut j, &cfg).unwrap();
        let a = sample_references(&pool, &ids[0], 4);
        assert_eq!(a, sample_references(&pool, &ids[0], 4));
        let mut uniq = a.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), 4);
    }
}
