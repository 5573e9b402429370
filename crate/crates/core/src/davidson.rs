//! Davidson's tie-aware Bradley–Terry model with an anchor regulariser,
//! fitted by MAP over `(q, log ν)`.
//!
//! For a pair with strengths `q_i`, `q_j` and tie propensity `ν`:
//!
//! ```text
//! Z        = exp(q_i) + exp(q_j) + ν exp((q_i + q_j) / 2)
//! P(i ≻ j) = exp(q_i) / Z
//! P(i ∼ j) = ν exp((q_i + q_j) / 2) / Z
//! ```
//!
//! The objective is `−Σ log P(o | q, ν) + λ Σ_{anchors} (q_i − q̄_i)²`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::elo::LatentTable;
use crate::model::{AnchorSet, ImageId, Outcome, PairJudgment};
use crate::optim::{minimize, Bound, LbfgsConfig};
use crate::{Error, Result};

/// Bounds on `log ν` during fitting.
pub const LOG_NU_BOUNDS: (f64, f64) = (-20.0, 20.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnchorTarget {
    /// `q̄ = mean rating − 3`.
    #[default]
    Mean,
    /// `q̄ = median rating − 3`; anchors must carry a median.
    Median,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbtConfig {
    /// λ in the anchor penalty.
    pub anchor_penalty: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub nu_init: f64,
    pub anchor_target: AnchorTarget,
}

impl Default for DbtConfig {
    fn default() -> Self {
        Self {
            anchor_penalty: 0.1,
            max_iterations: 2000,
            gradient_tolerance: 1e-6,
            nu_init: 1.0,
            anchor_target: AnchorTarget::Mean,
        }
    }
}

impl DbtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.anchor_penalty >= 0.0) {
            return Err(Error::Config("anchor_penalty must be non-negative".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.nu_init > 0.0) {
            return Err(Error::Config("nu_init must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DavidsonParams {
    pub qualities: BTreeMap<ImageId, f64>,
    pub tie_propensity: f64,
}

impl DavidsonParams {
    pub fn to_latent(&self) -> LatentTable {
        LatentTable { values: self.qualities.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbtFit {
    pub params: DavidsonParams,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Gradient of the negative log posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct DbtGradient {
    pub qualities: BTreeMap<ImageId, f64>,
    /// Derivative with respect to `log ν`.
    pub log_nu: f64,
}

/// Win/tie/loss probabilities for `i` against `j`.
pub fn davidson_probs(q_i: f64, q_j: f64, nu: f64) -> Result<(f64, f64, f64)> {
    if !(nu >= 0.0) {
        return Err(Error::OutOfRange { what: "tie propensity", value: nu });
    }
    if nu == 0.0 {
        let m = q_i.max(q_j);
        let (ei, ej) = (libm::exp(q_i - m), libm::exp(q_j - m));
        let z = ei + ej;
        return Ok((ei / z, 0.0, ej / z));
    }
    Ok(probs_log_nu(q_i, q_j, libm::log(nu)))
}

#[inline]
fn probs_log_nu(q_i: f64, q_j: f64, log_nu: f64) -> (f64, f64, f64) {
    let c = 0.5 * (q_i + q_j) + log_nu;
    let m = q_i.max(q_j).max(c);
    let (ei, ej, ec) = (libm::exp(q_i - m), libm::exp(q_j - m), libm::exp(c - m));
    let z = ei + ej + ec;
    (ei / z, ec / z, ej / z)
}

/// Indexed form of one group's data.
struct Problem {
    ids: Vec<ImageId>,
    pairs: Vec<(usize, usize, Outcome)>,
    anchors: Vec<(usize, f64)>,
    penalty: f64,
}

impl Problem {
    fn new(
        ids: Vec<ImageId>,
        judgments: &[PairJudgment],
        anchors: &AnchorSet,
        penalty: f64,
        target: AnchorTarget,
    ) -> Result<Self> {
        let index: BTreeMap<&ImageId, usize> = ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
        let slot = |id: &ImageId| index.get(id).copied().ok_or_else(|| Error::UnknownImage(id.clone()));
        let pairs = judgments
            .iter()
            .map(|j| Ok((slot(&j.a)?, slot(&j.b)?, j.outcome)))
            .collect::<Result<Vec<_>>>()?;
        let anchors = anchors
            .entries
            .iter()
            .map(|a| {
                let rating = match target {
                    AnchorTarget::Mean => a.mean_rating,
                    AnchorTarget::Median => a.median_rating.ok_or_else(|| {
                        Error::Config(alloc::format!("anchor `{}` has no median rating", a.image))
                    })?,
                };
                Ok((slot(&a.image)?, rating - 3.0))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { ids, pairs, anchors, penalty })
    }

    /// Objective at `x = [q_0 .. q_{n-1}, log ν]`, gradient into `grad`.
    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.ids.len();
        let log_nu = x[n];
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut value = 0.0;
        for &(i, j, outcome) in &self.pairs {
            let (qi, qj) = (x[i], x[j]);
            let c = 0.5 * (qi + qj) + log_nu;
            let m = qi.max(qj).max(c);
            let (ei, ej, ec) = (libm::exp(qi - m), libm::exp(qj - m), libm::exp(c - m));
            let z = ei + ej + ec;
            let log_z = m + libm::log(z);
            let (pw, pt, pl) = (ei / z, ec / z, ej / z);
            let observed = match outcome {
                Outcome::AWins => qi,
                Outcome::Tie => c,
                Outcome::BWins => qj,
            };
            value += log_z - observed;
            let o = outcome.score();
            grad[i] += pw + 0.5 * pt - o;
            grad[j] += pl + 0.5 * pt - (1.0 - o);
            grad[n] += pt - if outcome == Outcome::Tie { 1.0 } else { 0.0 };
        }
        for &(i, target) in &self.anchors {
            let d = x[i] - target;
            value += self.penalty * d * d;
            grad[i] += 2.0 * self.penalty * d;
        }
        value
    }
}

fn collect_ids(judgments: &[PairJudgment], anchors: &AnchorSet) -> Vec<ImageId> {
    let mut ids: Vec<ImageId> = judgments
        .iter()
        .flat_map(|j| [j.a.clone(), j.b.clone()])
        .chain(anchors.entries.iter().map(|a| a.image.clone()))
        .collect();
    ids.sort();
    ids.dedup();
    ids
}

/// Objective value and analytic gradient in `(q, log ν)`.
pub fn neg_log_posterior(
    params: &DavidsonParams,
    judgments: &[PairJudgment],
    anchors: &AnchorSet,
    anchor_penalty: f64,
) -> Result<(f64, DbtGradient)> {
    if !(params.tie_propensity > 0.0) {
        return Err(Error::OutOfRange { what: "tie propensity", value: params.tie_propensity });
    }
    let ids: Vec<ImageId> = params.qualities.keys().cloned().collect();
    let problem = Problem::new(ids, judgments, anchors, anchor_penalty, AnchorTarget::Mean)?;
    let mut x: Vec<f64> = params.qualities.values().copied().collect();
    x.push(libm::log(params.tie_propensity));
    let mut grad = vec![0.0; x.len()];
    let value = problem.evaluate(&x, &mut grad);
    let log_nu = grad.pop().unwrap_or(0.0);
    Ok((
        value,
        DbtGradient { qualities: problem.ids.into_iter().zip(grad).collect(), log_nu },
    ))
}

/// MAP fit from the default start (all `q = 0`, `ν = nu_init`).
pub fn fit_anchored_dbt(
    judgments: &[PairJudgment],
    anchors: &AnchorSet,
    config: &DbtConfig,
) -> Result<DbtFit> {
    let ids = collect_ids(judgments, anchors);
    let start = DavidsonParams {
        qualities: ids.into_iter().map(|id| (id, 0.0)).collect(),
        tie_propensity: config.nu_init,
    };
    fit_anchored_dbt_from(judgments, anchors, config, &start)
}

/// MAP fit from an explicit starting point. Images missing from `start`
/// begin at 0.
pub fn fit_anchored_dbt_from(
    judgments: &[PairJudgment],
    anchors: &AnchorSet,
    config: &DbtConfig,
    start: &DavidsonParams,
) -> Result<DbtFit> {
    config.validate()?;
    if judgments.is_empty() {
        return Err(Error::Empty("judgments"));
    }
    let ids = collect_ids(judgments, anchors);
    let problem =
        Problem::new(ids.clone(), judgments, anchors, config.anchor_penalty, config.anchor_target)?;
    let mut x0: Vec<f64> = ids.iter().map(|id| start.qualities.get(id).copied().unwrap_or(0.0)).collect();
    x0.push(libm::log(start.tie_propensity.max(f64::MIN_POSITIVE)));

    let mut bounds = vec![Bound::FREE; x0.len()];
    bounds[ids.len()] = Bound { lower: LOG_NU_BOUNDS.0, upper: LOG_NU_BOUNDS.1 };
    let lbfgs = LbfgsConfig {
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
        ..LbfgsConfig::default()
    };
    let min = minimize(|x, g| problem.evaluate(x, g), &x0, &bounds, &lbfgs);
    let n = ids.len();
    Ok(DbtFit {
        params: DavidsonParams {
            qualities: ids.into_iter().zip(min.x[..n].iter().copied()).collect(),
            tie_propensity: libm::exp(min.x[n]),
        },
        objective: min.value,
        iterations: min.iterations,
        converged: min.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Anchor;

    fn close(a: (f64, f64, f64), b: (f64, f64, f64)) -> bool {
        (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12 && (a.2 - b.2).abs() < 1e-12
    }

    #[test]
    fn probability_examples() {
        assert!(close(davidson_probs(0.3, 0.3, 0.0).unwrap(), (0.5, 0.0, 0.5)));
        let third = 1.0 / 3.0;
        assert!(close(davidson_probs(1.7, 1.7, 1.0).unwrap(), (third, third, third)));
        assert!(close(davidson_probs(0.0, 0.0, 2.0).unwrap(), (0.25, 0.5, 0.25)));
        assert!(davidson_probs(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn probabilities_are_overflow_safe() {
        let (w, t, l) = davidson_probs(900.0, -900.0, 1.0).unwrap();
        assert!(w.is_finite() && t.is_finite() && l.is_finite());
        assert!((w + t + l - 1.0).abs() < 1e-12);
        assert!(w > 0.999_999);
    }

    #[test]
    fn empty_objective_is_zero() {
        let params = DavidsonParams { qualities: BTreeMap::new(), tie_propensity: 1.0 };
        let (v, g) = neg_log_posterior(&params, &[], &AnchorSet::default(), 0.1).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.qualities.is_empty());
        assert_eq!(g.log_nu, 0.0);
    }

    #[test]
    fn anchor_on_target_adds_nothing() {
        let mut qualities = BTreeMap::new();
        qualities.insert(ImageId::from("a"), 1.0);
        let params = DavidsonParams { qualities, tie_propensity: 1.0 };
        let anchors = AnchorSet::new(alloc::vec![Anchor::new("a", 4.0, 4)]);
        let (v, g) = neg_log_posterior(&params, &[], &anchors, 0.1).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g.qualities[&ImageId::from("a")], 0.0);
    }

    #[test]
    fn missing_image_is_an_error() {
        let params = DavidsonParams { qualities: BTreeMap::new(), tie_propensity: 1.0 };
        let j = PairJudgment::new("r", "a", "b", "mood", Outcome::AWins);
        assert!(matches!(
            neg_log_posterior(&params, &[j], &AnchorSet::default(), 0.1),
            Err(Error::UnknownImage(_))
        ));
    }

    #[test]
    fn all_ties_drive_nu_up_and_keep_qualities_equal() {
        let mut js = Vec::new();
        for (a, b) in [("a", "b"), ("b", "c"), ("a", "c")] {
            for _ in 0..4 {
                js.push(PairJudgment::new("r", a, b, "mood", Outcome::Tie));
            }
        }
        let fit = fit_anchored_dbt(&js, &AnchorSet::default(), &DbtConfig::default()).unwrap();
        assert!(fit.params.tie_propensity > 1e6, "{}", fit.params.tie_propensity);
        let qs: Vec<f64> = fit.params.qualities.values().copied().collect();
        assert!(qs.iter().all(|q| (q - qs[0]).abs() < 1e-6));
    }

    #[test]
    fn no_ties_bounds_log_nu_from_below() {
        let js = alloc::vec![
            PairJudgment::new("r", "a", "b", "mood", Outcome::AWins),
            PairJudgment::new("r", "b", "a", "mood", Outcome::AWins),
        ];
        let fit = fit_anchored_dbt(&js, &AnchorSet::default(), &DbtConfig::default()).unwrap();
        assert!(fit.params.tie_propensity >= libm::exp(LOG_NU_BOUNDS.0) * 0.999);
        assert!(fit.params.tie_propensity.is_finite());
    }
}
