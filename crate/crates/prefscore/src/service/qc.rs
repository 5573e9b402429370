//! Per-annotator quality control over accepted answers.

use std::collections::BTreeMap;

use prefscore_core::stats::correlation::srcc;
use prefscore_core::stats::protocol::transitivity_violation_rate;
use prefscore_core::{ImageId, PairJudgment};
use serde::{Deserialize, Serialize};

use super::campaign::{TaskKind, TaskRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatAgreement {
    pub repeats: usize,
    /// Share of (repeat, dimension) answers equal to the first answer.
    pub per_dimension: Option<f64>,
    /// Share of repeats whose answers match on every dimension.
    pub per_task: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorQc {
    pub annotator: String,
    pub category: String,
    pub pointwise_answered: usize,
    pub pairwise_answered: usize,
    pub pointwise_repeat: RepeatAgreement,
    pub pairwise_repeat: RepeatAgreement,
    /// Strict 3-cycles over fully judged triples, pooled over dimensions.
    pub transitivity_violation_rate: Option<f64>,
    pub median_seconds_pointwise: Option<f64>,
    pub median_seconds_pairwise: Option<f64>,
    /// Mean over dimensions of the SRCC between this annotator's scores and
    /// the mean score of the rest of the panel.
    pub consensus_srcc: Option<f64>,
    /// Lowest consensus SRCC in a category of three or more annotators.
    pub consensus_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignQc {
    pub campaign: String,
    pub annotators: Vec<AnnotatorQc>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn answers(r: &TaskRecord) -> BTreeMap<&str, String> {
    match r.kind {
        TaskKind::Pointwise => r.scores.iter().map(|(d, s)| (d.as_str(), s.to_string())).collect(),
        TaskKind::Pairwise => r.outcomes.iter().map(|(d, o)| (d.as_str(), format!("{o:?}"))).collect(),
    }
}

fn repeat_agreement(mine: &[&TaskRecord], kind: TaskKind) -> RepeatAgreement {
    let (mut dims, mut dim_hits, mut tasks, mut task_hits) = (0usize, 0usize, 0usize, 0usize);
    for rep in mine.iter().filter(|r| r.kind == kind && r.is_repeat) {
        let Some(first) = mine.iter().find(|r| r.kind == kind && !r.is_repeat && r.item == rep.item) else {
            continue;
        };
        let (a, b) = (answers(first), answers(rep));
        let hits = a.iter().filter(|(d, v)| b.get(*d) == Some(v)).count();
        dims += a.len();
        dim_hits += hits;
        tasks += 1;
        task_hits += usize::from(hits == a.len());
    }
    let share = |hit: usize, n: usize| (n > 0).then(|| hit as f64 / n as f64);
    RepeatAgreement { repeats: tasks, per_dimension: share(dim_hits, dims), per_task: share(task_hits, tasks) }
}

fn transitivity(mine: &[&TaskRecord]) -> Option<f64> {
    let mut by_dim: BTreeMap<&str, Vec<PairJudgment>> = BTreeMap::new();
    for r in mine.iter().filter(|r| r.kind == TaskKind::Pairwise && !r.is_repeat) {
        for (d, &o) in &r.outcomes {
            by_dim.entry(d).or_default().push(PairJudgment::new(
                r.annotator.as_str(),
                r.images[0].clone(),
                r.images[1].clone(),
                d.as_str(),
                o.into(),
            ));
        }
    }
    let (mut cycles, mut triples) = (0, 0);
    for js in by_dim.values() {
        let t = transitivity_violation_rate(js);
        cycles += t.cycles;
        triples += t.triples;
    }
    (triples > 0).then(|| cycles as f64 / triples as f64)
}

type ScoreTable<'a> = BTreeMap<&'a str, BTreeMap<&'a str, BTreeMap<&'a ImageId, f64>>>;

/// First-pass pointwise scores of one category: annotator → dimension →
/// image → score.
fn first_scores<'a>(records: &'a [TaskRecord], category: &str) -> ScoreTable<'a> {
    let mut out: ScoreTable<'a> = BTreeMap::new();
    for r in records.iter().filter(|r| r.category == category && r.kind == TaskKind::Pointwise && !r.is_repeat) {
        for (d, &s) in &r.scores {
            out.entry(r.annotator.as_str()).or_default().entry(d.as_str()).or_default().insert(&r.images[0], f64::from(s));
        }
    }
    out
}

fn consensus_srcc(table: &ScoreTable<'_>, annotator: &str) -> Option<f64> {
    let mine = table.get(annotator)?;
    let mut per_dim = Vec::new();
    for (dim, scores) in mine {
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (img, &s) in scores {
            let others: Vec<f64> = table
                .iter()
                .filter(|(a, _)| **a != annotator)
                .filter_map(|(_, dims)| dims.get(dim).and_then(|m| m.get(img)).copied())
                .collect();
            if !others.is_empty() {
                x.push(s);
                y.push(others.iter().sum::<f64>() / others.len() as f64);
            }
        }
        if x.len() >= 3 {
            if let Ok(r) = srcc(&x, &y) {
                per_dim.push(r);
            }
        }
    }
    (!per_dim.is_empty()).then(|| per_dim.iter().sum::<f64>() / per_dim.len() as f64)
}

/// QC rows for every `(category, annotator)` in `roster`, including those
/// with no answers yet.
pub fn qc_report(campaign: &str, roster: &[(String, String)], records: &[TaskRecord]) -> CampaignQc {
    let mut tables = BTreeMap::new();
    let mut rows = Vec::new();
    for (category, annotator) in roster {
        let table = tables.entry(category.as_str()).or_insert_with(|| first_scores(records, category));
        let mine: Vec<&TaskRecord> =
            records.iter().filter(|r| &r.category == category && &r.annotator == annotator).collect();
        let secs = |kind| {
            median(
                mine.iter()
                    .filter(|r| r.kind == kind)
                    .map(|r| (r.submitted_at_ms - r.issued_at_ms) as f64 / 1000.0)
                    .collect(),
            )
        };
        rows.push(AnnotatorQc {
            annotator: annotator.clone(),
            category: category.clone(),
            pointwise_answered: mine.iter().filter(|r| r.kind == TaskKind::Pointwise).count(),
            pairwise_answered: mine.iter().filter(|r| r.kind == TaskKind::Pairwise).count(),
            pointwise_repeat: repeat_agreement(&mine, TaskKind::Pointwise),
            pairwise_repeat: repeat_agreement(&mine, TaskKind::Pairwise),
            transitivity_violation_rate: transitivity(&mine),
            median_seconds_pointwise: secs(TaskKind::Pointwise),
            median_seconds_pairwise: secs(TaskKind::Pairwise),
            consensus_srcc: consensus_srcc(table, annotator),
            consensus_flag: false,
        });
    }
    let categories: Vec<String> = rows.iter().map(|r| r.category.clone()).collect();
    for category in categories {
        let scored: Vec<usize> = (0..rows.len())
            .filter(|&i| rows[i].category == category && rows[i].consensus_srcc.is_some())
            .collect();
        if scored.len() >= 3 {
            let worst = scored
                .iter()
                .copied()
                .min_by(|&a, &b| rows[a].consensus_srcc.unwrap().total_cmp(&rows[b].consensus_srcc.unwrap()))
                .unwrap();
            rows[worst].consensus_flag = true;
        }
    }
    CampaignQc { campaign: campaign.to_string(), annotators: rows }
}
