//! Protocol-level diagnostics: rater consistency, tier separation, consensus
//! accuracy, leave-one-out stability, transitivity and cross-method agreement.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use super::correlation::{mae, plcc, rmse, srcc};
use super::ks::{ks_two_sample, KsResult};
use crate::elo::{run_elo, EloConfig};
use crate::model::{ImageId, Outcome, PairJudgment, RatingRecord};
use crate::{Error, Result};

/// Score of every image under a table, in `ids` order.
fn lookup(table: &BTreeMap<ImageId, f64>, ids: &[ImageId]) -> Result<Vec<f64>> {
    ids.iter()
        .map(|id| table.get(id).copied().ok_or_else(|| Error::UnknownImage(id.clone())))
        .collect()
}

fn induced(sa: f64, sb: f64, eps: f64) -> Outcome {
    let d = sa - sb;
    if d.abs() < eps {
        Outcome::Tie
    } else if d > 0.0 {
        Outcome::AWins
    } else {
        Outcome::BWins
    }
}

/// Fraction of pairs on which both score tables induce the same three-way
/// outcome, where a gap below `tie_epsilon` counts as a tie.
pub fn decision_agreement(
    scores_a: &BTreeMap<ImageId, f64>,
    scores_b: &BTreeMap<ImageId, f64>,
    pairs: &[(ImageId, ImageId)],
    tie_epsilon: f64,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair list"));
    }
    if !(tie_epsilon >= 0.0) {
        return Err(Error::OutOfRange { what: "tie epsilon", value: tie_epsilon });
    }
    let mut agree = 0usize;
    for (a, b) in pairs {
        let get = |t: &BTreeMap<ImageId, f64>, id: &ImageId| {
            t.get(id).copied().ok_or_else(|| Error::UnknownImage(id.clone()))
        };
        let oa = induced(get(scores_a, a)?, get(scores_a, b)?, tie_epsilon);
        let ob = induced(get(scores_b, a)?, get(scores_b, b)?, tie_epsilon);
        agree += usize::from(oa == ob);
    }
    Ok(agree as f64 / pairs.len() as f64)
}

/// All unordered pairs over the keys of a table.
pub fn all_pairs(ids: &[ImageId]) -> Vec<(ImageId, ImageId)> {
    let mut out = Vec::with_capacity(ids.len() * ids.len().saturating_sub(1) / 2);
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            out.push((ids[i].clone(), ids[j].clone()));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossMethodReport {
    pub srcc: f64,
    pub plcc: f64,
    pub mae: f64,
    pub rmse: f64,
    pub decision_agreement: f64,
    pub ks: KsResult,
}

/// Compares two calibrated score tables over their shared images. Decision
/// agreement runs over all pairs of shared images.
pub fn cross_method(
    scores_a: &BTreeMap<ImageId, f64>,
    scores_b: &BTreeMap<ImageId, f64>,
    tie_epsilon: f64,
) -> Result<CrossMethodReport> {
    let ids: Vec<ImageId> = scores_a.keys().filter(|k| scores_b.contains_key(*k)).cloned().collect();
    if ids.len() < 2 {
        return Err(Error::Degenerate("fewer than two images shared by both tables"));
    }
    let x = lookup(scores_a, &ids)?;
    let y = lookup(scores_b, &ids)?;
    Ok(CrossMethodReport {
        srcc: srcc(&x, &y)?,
        plcc: plcc(&x, &y)?,
        mae: mae(&x, &y)?,
        rmse: rmse(&x, &y)?,
        decision_agreement: decision_agreement(scores_a, scores_b, &all_pairs(&ids), tie_epsilon)?,
        ks: ks_two_sample(&x, &y)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Tier {
    High,
    Medium,
    Low,
}

/// Fraction of high×medium×low triplets ordered strictly by score.
pub fn triplet_separation(
    scores: &BTreeMap<ImageId, f64>,
    tiers: &BTreeMap<ImageId, Tier>,
) -> Result<f64> {
    let mut by_tier: [Vec<f64>; 3] = Default::default();
    for (id, tier) in tiers {
        let s = scores.get(id).copied().ok_or_else(|| Error::UnknownImage(id.clone()))?;
        by_tier[*tier as usize].push(s);
    }
    if by_tier.iter().any(Vec::is_empty) {
        return Err(Error::Empty("quality tier"));
    }
    let [high, medium, low] = &by_tier;
    let mut hits = 0usize;
    for &h in high {
        for &m in medium {
            if h <= m {
                continue;
            }
            hits += low.iter().filter(|&&l| m > l).count();
        }
    }
    Ok(hits as f64 / (high.len() * medium.len() * low.len()) as f64)
}

/// Mean over raters of the fraction of item pairs ordered as in the
/// consensus. Pairs tied in the consensus are skipped; a rater tie on a
/// non-tied pair counts as a miss.
pub fn to_consensus_pra(per_rater: &[Vec<f64>], consensus: &[f64]) -> Result<f64> {
    if per_rater.is_empty() {
        return Err(Error::Empty("rater rankings"));
    }
    let n = consensus.len();
    let mut total = 0.0;
    for row in per_rater {
        if row.len() != n {
            return Err(Error::LengthMismatch { left: n, right: row.len() });
        }
        let (mut hit, mut counted) = (0usize, 0usize);
        for i in 0..n {
            for j in i + 1..n {
                let c = consensus[i].total_cmp(&consensus[j]);
                if c.is_eq() {
                    continue;
                }
                counted += 1;
                hit += usize::from(row[i].total_cmp(&row[j]) == c);
            }
        }
        if counted == 0 {
            return Err(Error::Degenerate("consensus ties every pair"));
        }
        total += hit as f64 / counted as f64;
    }
    Ok(total / per_rater.len() as f64)
}

/// Mean SRCC between the two half-panel aggregates over every split of the
/// `m` raters into groups of `⌊m/2⌋` and `⌈m/2⌉`. For even `m` each split is
/// visited once (subsets containing rater 0).
///
/// `aggregate` receives rater indices and returns scores aligned to a fixed
/// item order.
pub fn split_half_spearman<F>(raters: usize, mut aggregate: F) -> Result<f64>
where
    F: FnMut(&[usize]) -> Result<Vec<f64>>,
{
    if raters < 4 {
        return Err(Error::Degenerate("split-half needs at least four raters"));
    }
    let half = raters / 2;
    let mut sum = 0.0;
    let mut count = 0usize;
    for subset in combinations(raters, half) {
        if raters % 2 == 0 && subset[0] != 0 {
            continue;
        }
        let rest: Vec<usize> = (0..raters).filter(|r| !subset.contains(r)).collect();
        let a = aggregate(&subset)?;
        let b = aggregate(&rest)?;
        sum += srcc(&a, &b)?;
        count += 1;
    }
    Ok(sum / count as f64)
}

/// k-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaveOneOut {
    pub mean_srcc: f64,
    pub mean_top_overlap: f64,
    /// `(srcc, top-k overlap)` with rater `r` removed.
    pub per_rater: Vec<(f64, f64)>,
}

fn top_k(scores: &[f64], k: usize) -> BTreeSet<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.into_iter().take(k).collect()
}

/// Drops each rater in turn and compares the remaining panel's aggregate with
/// the full-panel aggregate (SRCC and top-10 overlap).
pub fn leave_one_out_stability<F>(raters: usize, mut aggregate: F) -> Result<LeaveOneOut>
where
    F: FnMut(&[usize]) -> Result<Vec<f64>>,
{
    if raters < 3 {
        return Err(Error::Degenerate("leave-one-out needs at least three raters"));
    }
    let all: Vec<usize> = (0..raters).collect();
    let full = aggregate(&all)?;
    let k = full.len().min(10);
    if k == 0 {
        return Err(Error::Empty("aggregate"));
    }
    let full_top = top_k(&full, k);
    let mut per_rater = Vec::with_capacity(raters);
    for r in 0..raters {
        let rest: Vec<usize> = all.iter().copied().filter(|&x| x != r).collect();
        let part = aggregate(&rest)?;
        let rho = srcc(&full, &part)?;
        let overlap = top_k(&part, k).intersection(&full_top).count() as f64 / k as f64;
        per_rater.push((rho, overlap));
    }
    let m = raters as f64;
    Ok(LeaveOneOut {
        mean_srcc: per_rater.iter().map(|p| p.0).sum::<f64>() / m,
        mean_top_overlap: per_rater.iter().map(|p| p.1).sum::<f64>() / m,
        per_rater,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transitivity {
    pub rate: f64,
    pub cycles: usize,
    pub triples: usize,
    /// Set when no triple had all three pairs judged; `rate` is then 0.
    pub no_triples: bool,
}

/// Strict 3-cycles among fully judged triples of one rater's judgments.
/// Repeats are ignored; for a pair judged twice the first judgment counts.
pub fn transitivity_violation_rate(judgments: &[PairJudgment]) -> Transitivity {
    // canonical pair → +1 if first wins, −1 if second wins, 0 tie
    let mut dir: BTreeMap<(ImageId, ImageId), i8> = BTreeMap::new();
    let mut items: BTreeSet<ImageId> = BTreeSet::new();
    for j in judgments.iter().filter(|j| !j.is_repeat && j.a != j.b) {
        let c = j.clone().canonical();
        let v = match c.outcome {
            Outcome::AWins => 1,
            Outcome::Tie => 0,
            Outcome::BWins => -1,
        };
        items.insert(c.a.clone());
        items.insert(c.b.clone());
        dir.entry((c.a, c.b)).or_insert(v);
    }
    let items: Vec<ImageId> = items.into_iter().collect();
    let n = items.len();
    // dense orientation matrix: beats[i][j] = Some(sign of i over j)
    let mut beats = alloc::vec![alloc::vec![None::<i8>; n]; n];
    let pos: BTreeMap<&ImageId, usize> = items.iter().enumerate().map(|(i, id)| (id, i)).collect();
    for ((a, b), v) in &dir {
        let (i, j) = (pos[a], pos[b]);
        beats[i][j] = Some(*v);
        beats[j][i] = Some(-*v);
    }
    let (mut triples, mut cycles) = (0usize, 0usize);
    for i in 0..n {
        for j in i + 1..n {
            let Some(ij) = beats[i][j] else { continue };
            for k in j + 1..n {
                let (Some(jk), Some(ki)) = (beats[j][k], beats[k][i]) else { continue };
                triples += 1;
                if ij != 0 && ij == jk && jk == ki {
                    cycles += 1;
                }
            }
        }
    }
    Transitivity {
        rate: if triples == 0 { 0.0 } else { cycles as f64 / triples as f64 },
        cycles,
        triples,
        no_triples: triples == 0,
    }
}

/// Mean-score aggregator over raters' pointwise records for one group.
/// Returns scores in `items` order; every image needs at least one rating
/// from the selected raters.
pub fn mean_score_aggregate(
    per_rater: &[&[RatingRecord]],
    selected: &[usize],
    items: &[ImageId],
) -> Result<Vec<f64>> {
    let mut acc: BTreeMap<&ImageId, (f64, usize)> = BTreeMap::new();
    for &r in selected {
        for rec in per_rater[r].iter().filter(|rec| !rec.is_repeat) {
            let e = acc.entry(&rec.image).or_insert((0.0, 0));
            e.0 += f64::from(rec.score);
            e.1 += 1;
        }
    }
    items
        .iter()
        .map(|id| match acc.get(id) {
            Some(&(s, c)) if c > 0 => Ok(s / c as f64),
            _ => Err(Error::UnknownImage(id.clone())),
        })
        .collect()
}

/// Plain Elo over the pooled non-repeat judgments of the selected raters.
pub fn elo_aggregate(
    per_rater: &[&[PairJudgment]],
    selected: &[usize],
    items: &[ImageId],
    config: &EloConfig,
) -> Result<Vec<f64>> {
    let pooled: Vec<PairJudgment> = selected
        .iter()
        .flat_map(|&r| per_rater[r].iter().filter(|j| !j.is_repeat).cloned())
        .collect();
    run_elo(&pooled, config)?.aligned(items)
}
