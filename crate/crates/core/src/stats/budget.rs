//! Pair-budget subsampling study: how well Elo on a fraction of the judged
//! pairs reproduces Elo on all of them.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::correlation::{plcc, srcc};
use crate::elo::{run_elo, EloConfig};
use crate::graph::ComparisonGraph;
use crate::model::{ImageId, PairJudgment};
use crate::rng::{keyed_rng, mix_key};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetConfig {
    pub elo: EloConfig,
    /// Redraws allowed when a subsample disconnects the graph.
    pub max_retries: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self { elo: EloConfig::default(), max_retries: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetPoint {
    pub fraction: f64,
    /// `None` when every draw at this fraction was flagged.
    pub mean_srcc: Option<f64>,
    pub mean_plcc: Option<f64>,
    /// Draws that stayed disconnected after every retry; excluded from the means.
    pub flagged: usize,
    pub draws: usize,
}

/// Uniform subsample of `round(fraction · pairs)` distinct pairs, keeping every
/// judgment on a kept pair. Returns `None` if the kept pairs leave the group
/// disconnected after all retries.
pub fn subsample_pairs(
    judgments: &[PairJudgment],
    fraction: f64,
    seed: u64,
    max_retries: usize,
) -> Result<Option<Vec<PairJudgment>>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::OutOfRange { what: "budget fraction", value: fraction });
    }
    let pairs: Vec<(ImageId, ImageId)> =
        judgments.iter().map(PairJudgment::pair_key).collect::<BTreeSet<_>>().into_iter().collect();
    let items: BTreeSet<&ImageId> = pairs.iter().flat_map(|(a, b)| [a, b]).collect();
    let keep = libm::round(fraction * pairs.len() as f64) as usize;
    for attempt in 0..=max_retries {
        let mut order = pairs.clone();
        order.shuffle(&mut keyed_rng(seed, attempt as u64));
        let kept: BTreeSet<(ImageId, ImageId)> = order[..keep].iter().cloned().collect();
        let mut graph = ComparisonGraph::new();
        for id in &items {
            graph.add_node(id);
        }
        for (a, b) in &kept {
            graph.add_edge(a, b);
        }
        if graph.component_count() == 1 {
            return Ok(Some(
                judgments.iter().filter(|j| kept.contains(&j.pair_key())).cloned().collect(),
            ));
        }
    }
    Ok(None)
}

/// Runs the subsampling study over several groups. The reference for each
/// group is Elo on all its judgments; every `(fraction, seed)` draw is
/// compared against it and the results are averaged over seeds and groups.
pub fn budget_subsample_study(
    groups: &[Vec<PairJudgment>],
    fractions: &[f64],
    seeds: &[u64],
    config: &BudgetConfig,
) -> Result<Vec<BudgetPoint>> {
    if groups.is_empty() || fractions.is_empty() || seeds.is_empty() {
        return Err(Error::Empty("budget study inputs"));
    }
    let mut references = Vec::with_capacity(groups.len());
    for g in groups {
        let table = run_elo(g, &config.elo)?;
        let ids: Vec<ImageId> = table.values.keys().cloned().collect();
        let values = table.aligned(&ids)?;
        references.push((ids, values));
    }
    let mut curve = Vec::with_capacity(fractions.len());
    for (fi, &fraction) in fractions.iter().enumerate() {
        let (mut s_sum, mut p_sum, mut used, mut flagged) = (0.0, 0.0, 0usize, 0usize);
        for (gi, group) in groups.iter().enumerate() {
            for &seed in seeds {
                let key = mix_key(&[
                    &seed.to_le_bytes(),
                    &(fi as u64).to_le_bytes(),
                    &(gi as u64).to_le_bytes(),
                ]);
                let Some(sub) = subsample_pairs(group, fraction, key, config.max_retries)? else {
                    flagged += 1;
                    continue;
                };
                let (ids, reference) = &references[gi];
                let estimate = run_elo(&sub, &config.elo)?.aligned(ids)?;
                s_sum += srcc(reference, &estimate)?;
                p_sum += plcc(reference, &estimate)?;
                used += 1;
            }
        }
        let mean = |sum: f64| (used > 0).then(|| sum / used as f64);
        curve.push(BudgetPoint {
            fraction,
            mean_srcc: mean(s_sum),
            mean_plcc: mean(p_sum),
            flagged,
            draws: used + flagged,
        });
    }
    Ok(curve)
}

/// Number of distinct unordered pairs judged.
pub fn unique_pair_count(judgments: &[PairJudgment]) -> usize {
    judgments.iter().map(PairJudgment::pair_key).collect::<BTreeSet<_>>().len()
}

/// Splits judgments by rater id (sorted), e.g. for split-half diagnostics.
pub fn by_rater(judgments: &[PairJudgment]) -> BTreeMap<&str, Vec<PairJudgment>> {
    let mut out: BTreeMap<&str, Vec<PairJudgment>> = BTreeMap::new();
    for j in judgments {
        out.entry(j.rater.as_str()).or_default().push(j.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Outcome;
    use alloc::format;

    fn chain(n: usize) -> Vec<PairJudgment> {
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                out.push(PairJudgment::new("r", format!("i{i:02}"), format!("i{j:02}"), "overall", Outcome::BWins));
            }
        }
        out
    }

    #[test]
    fn full_fraction_matches_reference() {
        let js = chain(8);
        let curve = budget_subsample_study(&[js], &[1.0], &[1, 2], &BudgetConfig::default()).unwrap();
        assert!((curve[0].mean_srcc.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(curve[0].flagged, 0);
    }

    #[test]
    fn subsample_is_deterministic_and_sized() {
        let js = chain(10);
        let a = subsample_pairs(&js, 0.5, 9, 20).unwrap().unwrap();
        let b = subsample_pairs(&js, 0.5, 9, 20).unwrap().unwrap();
        assert_eq!(a, b);
        assert_eq!(unique_pair_count(&a), 23);
        assert!(subsample_pairs(&js, 0.0, 9, 20).is_err());
    }

    #[test]
    fn hopeless_budget_is_flagged() {
        // 4 items need 3 edges; one edge never connects them
        let js = chain(4);
        assert_eq!(subsample_pairs(&js, 1.0 / 6.0, 0, 5).unwrap(), None);
        let curve = budget_subsample_study(&[js], &[1.0 / 6.0], &[0, 1], &BudgetConfig::default()).unwrap();
        assert_eq!((curve[0].mean_srcc, curve[0].flagged, curve[0].draws), (None, 2, 2));
    }
}
