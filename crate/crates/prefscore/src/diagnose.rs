//! Protocol diagnostics over a loaded dataset: agreement, split-half,
//! consensus accuracy, stability, transitivity and repeat consistency.

use std::collections::{BTreeMap, BTreeSet};

use prefscore_core::elo::{run_elo, EloConfig};
use prefscore_core::stats::agreement::agreement_at_least;
use prefscore_core::stats::budget::BudgetPoint;
use prefscore_core::stats::protocol::{elo_aggregate, mean_score_aggregate};
use prefscore_core::stats::{
    cross_method, fleiss_kappa, kendalls_w, krippendorff_alpha_nominal, leave_one_out_stability,
    split_half_spearman, to_consensus_pra, transitivity_violation_rate, triplet_separation, CrossMethodReport,
    LabelMatrix, RankingMatrix, Tier,
};
use prefscore_core::{GroupKey, ImageId, Outcome, PairJudgment, RatingRecord, Result};
use serde::{Deserialize, Serialize};

use crate::formats::Group;

/// First-pass score of every item for each rater (rows follow `raters`).
pub fn pointwise_rows(ratings: &[RatingRecord], raters: &[String], items: &[ImageId]) -> Result<Vec<Vec<f64>>> {
    let per: Vec<Vec<RatingRecord>> = raters
        .iter()
        .map(|r| ratings.iter().filter(|x| &x.rater == r).cloned().collect())
        .collect();
    let refs: Vec<&[RatingRecord]> = per.iter().map(Vec::as_slice).collect();
    (0..raters.len()).map(|r| mean_score_aggregate(&refs, &[r], items)).collect()
}

/// Plain Elo over each rater's own first-pass judgments.
pub fn pairwise_rows(
    judgments: &[PairJudgment],
    raters: &[String],
    items: &[ImageId],
    elo: &EloConfig,
) -> Result<Vec<Vec<f64>>> {
    raters
        .iter()
        .map(|r| {
            let own: Vec<PairJudgment> =
                judgments.iter().filter(|j| &j.rater == r && !j.is_repeat).cloned().collect();
            run_elo(&own, elo)?.aligned(items)
        })
        .collect()
}

pub fn concordance(rows: &[Vec<f64>], raters: &[String], items: &[ImageId]) -> Result<f64> {
    kendalls_w(&RankingMatrix::from_scores(items.to_vec(), raters.to_vec(), rows)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProtocolStats {
    pub kendalls_w: f64,
    pub split_half: Option<f64>,
    pub consensus_pra: f64,
    pub loo_srcc: Option<f64>,
    pub loo_top_overlap: Option<f64>,
    pub triplet_separation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RaterConsistency {
    pub rater: String,
    pub transitivity_violation: f64,
    pub triples: usize,
    /// Exact-match rate on repeated images; `None` without repeats.
    pub pointwise_repeat_agreement: Option<f64>,
    pub pairwise_repeat_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupProtocol {
    pub category: String,
    pub dimension: String,
    pub raters: usize,
    pub items: usize,
    pub pointwise: ProtocolStats,
    pub pairwise: ProtocolStats,
    pub pointwise_fleiss_kappa: f64,
    pub pointwise_krippendorff_alpha: f64,
    pub pairwise_fleiss_kappa: Option<f64>,
    /// Fraction of images on which every rater gave the same score.
    pub pointwise_unanimous: f64,
    /// Same with at most one dissenting rater.
    pub pointwise_near_unanimous: f64,
    pub per_rater: Vec<RaterConsistency>,
}

fn label(o: Outcome) -> i32 {
    match o {
        Outcome::AWins => 1,
        Outcome::Tie => 0,
        Outcome::BWins => -1,
    }
}

fn first_pass_outcomes(js: &[PairJudgment]) -> BTreeMap<(ImageId, ImageId), Outcome> {
    let mut out = BTreeMap::new();
    for j in js.iter().filter(|j| !j.is_repeat) {
        let c = j.clone().canonical();
        out.entry((c.a, c.b)).or_insert(c.outcome);
    }
    out
}

fn repeat_rate<K: Ord, V: PartialEq>(first: &BTreeMap<K, V>, repeats: impl Iterator<Item = (K, V)>) -> Option<f64> {
    let (mut hit, mut n) = (0usize, 0usize);
    for (k, v) in repeats {
        if let Some(f) = first.get(&k) {
            n += 1;
            hit += usize::from(*f == v);
        }
    }
    (n > 0).then(|| hit as f64 / n as f64)
}

fn stats_for<F>(rows: &[Vec<f64>], raters: &[String], items: &[ImageId], consensus: &[f64], mut aggregate: F, tiers: Option<&BTreeMap<ImageId, Tier>>) -> Result<ProtocolStats>
where
    F: FnMut(&[usize]) -> Result<Vec<f64>>,
{
    let m = raters.len();
    let split = if m >= 4 { Some(split_half_spearman(m, &mut aggregate)?) } else { None };
    let loo = if m >= 3 { Some(leave_one_out_stability(m, &mut aggregate)?) } else { None };
    let triplet = match tiers {
        Some(t) => {
            let table: BTreeMap<ImageId, f64> = items.iter().cloned().zip(consensus.iter().copied()).collect();
            let known: BTreeMap<ImageId, Tier> = t.iter().filter(|(k, _)| table.contains_key(*k)).map(|(k, v)| (k.clone(), *v)).collect();
            Some(triplet_separation(&table, &known)?)
        }
        None => None,
    };
    Ok(ProtocolStats {
        kendalls_w: concordance(rows, raters, items)?,
        split_half: split,
        consensus_pra: to_consensus_pra(rows, consensus)?,
        loo_srcc: loo.as_ref().map(|l| l.mean_srcc),
        loo_top_overlap: loo.as_ref().map(|l| l.mean_top_overlap),
        triplet_separation: triplet,
    })
}

/// Full protocol battery for one group. Raters are those present in both the
/// ratings and the judgments; items are the images they all rated.
pub fn group_protocol(
    key: &GroupKey,
    group: &Group,
    elo: &EloConfig,
    tiers: Option<&BTreeMap<ImageId, Tier>>,
) -> Result<GroupProtocol> {
    let rating_raters: BTreeSet<&String> = group.ratings.iter().map(|r| &r.rater).collect();
    let judging_raters: BTreeSet<&String> = group.judgments.iter().map(|j| &j.rater).collect();
    let raters: Vec<String> = rating_raters.intersection(&judging_raters).map(|s| (*s).clone()).collect();
    if raters.len() < 2 {
        return Err(prefscore_core::Error::Degenerate("protocol diagnostics need two raters with both protocols"));
    }
    let mut items: Option<BTreeSet<ImageId>> = None;
    for r in &raters {
        let own: BTreeSet<ImageId> = group.ratings.iter().filter(|x| &x.rater == r).map(|x| x.image.clone()).collect();
        items = Some(match items {
            None => own,
            Some(prev) => prev.intersection(&own).cloned().collect(),
        });
    }
    let items: Vec<ImageId> = items.unwrap_or_default().into_iter().collect();

    let point_rows = pointwise_rows(&group.ratings, &raters, &items)?;
    let pair_rows = pairwise_rows(&group.judgments, &raters, &items, elo)?;

    let per_rater_ratings: Vec<Vec<RatingRecord>> =
        raters.iter().map(|r| group.ratings.iter().filter(|x| &x.rater == r).cloned().collect()).collect();
    let per_rater_judgments: Vec<Vec<PairJudgment>> =
        raters.iter().map(|r| group.judgments.iter().filter(|x| &x.rater == r).cloned().collect()).collect();
    let rating_refs: Vec<&[RatingRecord]> = per_rater_ratings.iter().map(Vec::as_slice).collect();
    let judgment_refs: Vec<&[PairJudgment]> = per_rater_judgments.iter().map(Vec::as_slice).collect();
    let everyone: Vec<usize> = (0..raters.len()).collect();

    let point_consensus = mean_score_aggregate(&rating_refs, &everyone, &items)?;
    let pair_consensus = elo_aggregate(&judgment_refs, &everyone, &items, elo)?;
    let pointwise = stats_for(&point_rows, &raters, &items, &point_consensus, |sel| mean_score_aggregate(&rating_refs, sel, &items), tiers)?;
    let pairwise = stats_for(&pair_rows, &raters, &items, &pair_consensus, |sel| elo_aggregate(&judgment_refs, sel, &items, elo), tiers)?;

    let labels: Vec<Vec<i32>> = (0..items.len())
        .map(|i| point_rows.iter().map(|row| row[i] as i32).collect())
        .collect();
    let point_matrix = LabelMatrix::complete(labels);

    let per_pair: Vec<BTreeMap<(ImageId, ImageId), Outcome>> =
        per_rater_judgments.iter().map(|js| first_pass_outcomes(js)).collect();
    let shared: Vec<&(ImageId, ImageId)> = per_pair[0].keys().filter(|k| per_pair.iter().all(|m| m.contains_key(*k))).collect();
    let pairwise_fleiss_kappa = if shared.is_empty() {
        None
    } else {
        let rows = shared.iter().map(|k| per_pair.iter().map(|m| label(m[*k])).collect()).collect();
        fleiss_kappa(&LabelMatrix::complete(rows)).ok()
    };

    let per_rater = raters
        .iter()
        .enumerate()
        .map(|(r, name)| {
            let t = transitivity_violation_rate(&per_rater_judgments[r]);
            let first_scores: BTreeMap<ImageId, i32> = {
                let mut m = BTreeMap::new();
                for x in per_rater_ratings[r].iter().filter(|x| !x.is_repeat) {
                    m.entry(x.image.clone()).or_insert(x.score);
                }
                m
            };
            let point_rep = repeat_rate(
                &first_scores,
                per_rater_ratings[r].iter().filter(|x| x.is_repeat).map(|x| (x.image.clone(), x.score)),
            );
            let pair_rep = repeat_rate(
                &per_pair[r],
                per_rater_judgments[r].iter().filter(|j| j.is_repeat).map(|j| {
                    let c = j.clone().canonical();
                    ((c.a, c.b), c.outcome)
                }),
            );
            RaterConsistency {
                rater: name.clone(),
                transitivity_violation: t.rate,
                triples: t.triples,
                pointwise_repeat_agreement: point_rep,
                pairwise_repeat_agreement: pair_rep,
            }
        })
        .collect();

    let m = raters.len();
    Ok(GroupProtocol {
        category: key.category.clone(),
        dimension: key.dimension.to_string(),
        raters: m,
        items: items.len(),
        pointwise,
        pairwise,
        pointwise_fleiss_kappa: fleiss_kappa(&point_matrix)?,
        pointwise_krippendorff_alpha: krippendorff_alpha_nominal(&point_matrix)?,
        pairwise_fleiss_kappa,
        pointwise_unanimous: agreement_at_least(&point_matrix, m)?,
        pointwise_near_unanimous: agreement_at_least(&point_matrix, m - 1)?,
        per_rater,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossMethodRow {
    pub category: String,
    pub dimension: String,
    pub srcc: f64,
    pub plcc: f64,
    pub mae: f64,
    pub rmse: f64,
    pub decision_agreement: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
}

impl CrossMethodRow {
    pub fn new(key: &GroupKey, r: &CrossMethodReport) -> Self {
        Self {
            category: key.category.clone(),
            dimension: key.dimension.to_string(),
            srcc: r.srcc,
            plcc: r.plcc,
            mae: r.mae,
            rmse: r.rmse,
            decision_agreement: r.decision_agreement,
            ks_statistic: r.ks.statistic,
            ks_p_value: r.ks.p_value,
        }
    }
}

/// Cross-method comparison over the groups present in both tables.
pub fn cross_method_groups(
    a: &BTreeMap<GroupKey, BTreeMap<ImageId, f64>>,
    b: &BTreeMap<GroupKey, BTreeMap<ImageId, f64>>,
    tie_epsilon: f64,
) -> Result<Vec<CrossMethodRow>> {
    let mut rows = Vec::new();
    for (key, ta) in a {
        if let Some(tb) = b.get(key) {
            rows.push(CrossMethodRow::new(key, &cross_method(ta, tb, tie_epsilon)?));
        }
    }
    if rows.is_empty() {
        return Err(prefscore_core::Error::Empty("groups shared by both score tables"));
    }
    Ok(rows)
}

pub fn budget_csv(curve: &[BudgetPoint]) -> String {
    let mut s = String::from("fraction,mean_srcc,mean_plcc,flagged,draws\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for p in curve {
        s.push_str(&format!("{},{},{},{},{}\n", p.fraction, opt(p.mean_srcc), opt(p.mean_plcc), p.flagged, p.draws));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TierLabel {
    High,
    Medium,
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierLine {
    pub image: String,
    pub tier: TierLabel,
}

pub fn tier_map(lines: &[TierLine]) -> BTreeMap<ImageId, Tier> {
    lines
        .iter()
        .map(|l| {
            let t = match l.tier {
                TierLabel::High => Tier::High,
                TierLabel::Medium => Tier::Medium,
                TierLabel::Low => Tier::Low,
            };
            (ImageId::from(l.image.as_str()), t)
        })
        .collect()
}
