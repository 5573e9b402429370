//! Study harnesses over synthetic campaigns: cross-method agreement, the
//! Elo-gap ablation, pair weighting, ranking-pool seeds and evaluation
//! against pointwise targets.

use std::collections::BTreeMap;

use prefscore_core::bridge::pseudo_label_corpus;
use prefscore_core::fusion::{fuse_groups, FusionConfig, FusionMethod, GroupInput};
use prefscore_core::judge::{SyntheticJudge, SyntheticJudgeConfig};
use prefscore_core::reward::{rank_reward, GroupSample, RewardConfig};
use prefscore_core::sim::{simulate_campaign, CampaignSpec};
use prefscore_core::stats::{mae, plcc, rmse, srcc};
use prefscore_core::{keyed_rng, mix_key, AnchorSet, GroupKey, ImageId, PairJudgment, RatingRecord, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::config::ToolConfig;
use crate::diagnose::{cross_method_groups, CrossMethodRow};
use crate::formats::{Corpus, CorpusEntry, Dataset};
use crate::pipeline::resolve_anchors;

pub type ScoreTables = BTreeMap<GroupKey, BTreeMap<ImageId, f64>>;

/// A simulated multi-category campaign with its planted latents.
#[derive(Debug, Clone)]
pub struct SimCampaign {
    pub dataset: Dataset,
    pub anchors: BTreeMap<GroupKey, AnchorSet>,
    pub planted: ScoreTables,
}

/// Simulates one campaign per category; each category gets its own seed
/// derived from `spec.seed`.
pub fn simulate_categories(spec: &CampaignSpec, categories: &[String]) -> Result<SimCampaign> {
    let mut judgments = Vec::new();
    let mut ratings = Vec::new();
    let mut corpus = Corpus::new();
    let mut anchors = BTreeMap::new();
    let mut planted: ScoreTables = BTreeMap::new();
    for cat in categories {
        let seed = if categories.len() == 1 { spec.seed } else { mix_key(&[&spec.seed.to_le_bytes(), cat.as_bytes()]) };
        let c = simulate_campaign(&CampaignSpec { category: cat.clone(), seed, ..spec.clone() })?;
        for id in &c.images {
            corpus.insert(id.to_string(), CorpusEntry { category: cat.clone(), path: String::new() });
        }
        for (d, dim) in c.dimensions.iter().enumerate() {
            let key = GroupKey::new(cat.clone(), dim.clone());
            anchors.insert(key.clone(), c.anchors[d].clone());
            planted.insert(key, c.images.iter().map(|id| (id.clone(), c.latent[id][d])).collect());
        }
        judgments.extend(c.judgments);
        ratings.extend(c.ratings);
    }
    Ok(SimCampaign { dataset: Dataset { judgments, ratings, corpus: Some(corpus) }, anchors, planted })
}

/// Calibrated scores for every group with judgments. `per_group` fits one
/// sigmoid per group instead of the pooled one.
pub fn fused_scores(
    ds: &Dataset,
    anchors: &BTreeMap<GroupKey, AnchorSet>,
    method: FusionMethod,
    config: &ToolConfig,
    per_group: bool,
) -> Result<ScoreTables> {
    let groups = ds.groups();
    let anchors = resolve_anchors(ds, Some(anchors), config.anchors_per_level);
    let judgments: BTreeMap<&GroupKey, Vec<PairJudgment>> = anchors
        .keys()
        .map(|k| (k, groups[k].judgments.iter().filter(|j| !j.is_repeat).cloned().collect()))
        .collect();
    let fusion = FusionConfig { elo: config.elo(), dbt: config.dbt(), span: config.span() };
    let keys: Vec<&GroupKey> = anchors.keys().collect();
    let inputs: Vec<GroupInput<'_>> =
        keys.iter().map(|k| GroupInput { judgments: &judgments[k], anchors: &anchors[*k] }).collect();
    let mut out = BTreeMap::new();
    if per_group {
        for (k, input) in keys.iter().zip(&inputs) {
            let f = fuse_groups(std::slice::from_ref(input), method, &fusion)?;
            out.insert((*k).clone(), f.groups.into_iter().next().expect("one group").scores);
        }
    } else {
        let f = fuse_groups(&inputs, method, &fusion)?;
        for (k, g) in keys.iter().zip(f.groups) {
            out.insert((*k).clone(), g.scores);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementSummary {
    pub label: String,
    pub groups: usize,
    pub srcc: f64,
    pub plcc: f64,
    pub mae: f64,
    pub rmse: f64,
    pub decision_agreement: f64,
    /// Groups whose two-sample KS test gives p > 0.05.
    pub ks_pass: usize,
}

pub fn summarize(label: impl Into<String>, rows: &[CrossMethodRow]) -> AgreementSummary {
    let n = rows.len() as f64;
    let mean = |f: fn(&CrossMethodRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    AgreementSummary {
        label: label.into(),
        groups: rows.len(),
        srcc: mean(|r| r.srcc),
        plcc: mean(|r| r.plcc),
        mae: mean(|r| r.mae),
        rmse: mean(|r| r.rmse),
        decision_agreement: mean(|r| r.decision_agreement),
        ks_pass: rows.iter().filter(|r| r.ks_p_value > 0.05).count(),
    }
}

/// Anchored Elo against anchored Davidson BT on the same data.
pub fn elo_vs_dbt(
    sim: &SimCampaign,
    config: &ToolConfig,
    anchored: bool,
    per_group: bool,
) -> Result<Vec<CrossMethodRow>> {
    let (elo, dbt) = if anchored {
        (FusionMethod::AnchoredElo, FusionMethod::AnchoredDbt)
    } else {
        (FusionMethod::Elo, FusionMethod::Dbt)
    };
    let a = fused_scores(&sim.dataset, &sim.anchors, elo, config, per_group)?;
    let b = fused_scores(&sim.dataset, &sim.anchors, dbt, config, per_group)?;
    cross_method_groups(&a, &b, config.tie_epsilon)
}

/// Cross-method agreement for each anchor gap. Davidson BT does not depend
/// on the gap, so its scores are computed once.
pub fn gap_ablation(sim: &SimCampaign, gaps: &[f64], per_group: bool, config: &ToolConfig) -> Result<Vec<AgreementSummary>> {
    let dbt = fused_scores(&sim.dataset, &sim.anchors, FusionMethod::AnchoredDbt, config, per_group)?;
    let mut out = Vec::new();
    for &gap in gaps {
        let mut cfg = config.clone();
        cfg.elo.anchor_gap = gap;
        let elo = fused_scores(&sim.dataset, &sim.anchors, FusionMethod::AnchoredElo, &cfg, per_group)?;
        let rows = cross_method_groups(&elo, &dbt, config.tie_epsilon)?;
        let label = format!("{} + gap {gap}", if per_group { "per-group sigmoid" } else { "global sigmoid" });
        out.push(summarize(label, &rows));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardStudy {
    pub images: usize,
    pub batch: usize,
    pub candidates: usize,
    pub dimensions: usize,
    /// Noise of the pseudo-labels around the planted scores.
    pub pseudo_noise: f64,
    /// Spread of the per-candidate bias.
    pub candidate_bias: f64,
    pub candidate_noise: f64,
    pub parse_failure: f64,
    pub seed: u64,
}

impl Default for RewardStudy {
    fn default() -> Self {
        Self {
            images: 256,
            batch: 8,
            candidates: 8,
            dimensions: 5,
            pseudo_noise: 0.3,
            candidate_bias: 0.5,
            candidate_noise: 0.3,
            parse_failure: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardRow {
    pub variant: String,
    pub gap_threshold: f64,
    /// SRCC between candidate reward and candidate accuracy (negative mean
    /// absolute error to the planted scores), over parsed candidates.
    pub reward_accuracy_srcc: f64,
    pub mean_reward: f64,
}

/// How well the rank reward tracks candidate accuracy, with and without
/// pair weighting, on synthetic rollouts.
pub fn pair_weight_study(study: &RewardStudy, thresholds: &[f64], base: &RewardConfig) -> Result<Vec<RewardRow>> {
    let mut rng = keyed_rng(study.seed, 0);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let d = study.dimensions;
    let mut planted = BTreeMap::new();
    let mut pseudo = BTreeMap::new();
    for i in 0..study.images {
        let id = ImageId::new(format!("r{i:05}"));
        let truth: Vec<f64> = (0..d).map(|_| (3.0 + normal()).clamp(1.0, 5.0)).collect();
        pseudo.insert(id.clone(), truth.iter().map(|t| (t + study.pseudo_noise * normal()).clamp(1.0, 5.0)).collect());
        planted.insert(id, truth);
    }
    let mut rng = keyed_rng(study.seed, 1);
    let mut batches: Vec<Vec<GroupSample>> = Vec::new();
    let ids: Vec<ImageId> = planted.keys().cloned().collect();
    for chunk in ids.chunks(study.batch) {
        if chunk.len() < 2 {
            continue;
        }
        let batch = chunk
            .iter()
            .map(|id| {
                let candidates = (0..study.candidates)
                    .map(|_| {
                        if rng.random::<f64>() < study.parse_failure {
                            return None;
                        }
                        let bias = study.candidate_bias * rng.sample::<f64, _>(StandardNormal);
                        Some(
                            planted[id]
                                .iter()
                                .map(|t| t + bias + study.candidate_noise * rng.sample::<f64, _>(StandardNormal))
                                .collect(),
                        )
                    })
                    .collect();
                GroupSample { image: id.clone(), candidates }
            })
            .collect();
        batches.push(batch);
    }
    let mut variants: Vec<(String, RewardConfig)> =
        vec![("unweighted".into(), RewardConfig { pair_weighting: false, ..base.clone() })];
    for &t in thresholds {
        variants.push((format!("weighted τ_w={t}"), RewardConfig { gap_threshold: t, pair_weighting: true, ..base.clone() }));
    }
    let mut rows = Vec::new();
    for (variant, cfg) in variants {
        let (mut rewards, mut accuracy) = (Vec::new(), Vec::new());
        for batch in &batches {
            let r = rank_reward(batch, &pseudo, &cfg)?;
            for (sample, row) in batch.iter().zip(r) {
                for (cand, reward) in sample.candidates.iter().zip(row) {
                    if let Some(c) = cand {
                        let err = c.iter().zip(&planted[&sample.image]).map(|(x, t)| (x - t).abs()).sum::<f64>() / d as f64;
                        rewards.push(reward);
                        accuracy.push(-err);
                    }
                }
            }
        }
        rows.push(RewardRow {
            variant,
            gap_threshold: cfg.gap_threshold,
            reward_accuracy_srcc: srcc(&rewards, &accuracy)?,
            mean_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolSeedRow {
    pub pool_seed: u64,
    /// Mean over dimensions of pseudo-label agreement with planted latents.
    pub srcc: f64,
    pub plcc: f64,
    pub judge_calls: u64,
}

/// Bridge pseudo-labels from a synthetic judge for several ranking-pool
/// seeds, scored against the planted latents.
pub fn pool_seed_study(
    corpus_size: usize,
    judge_noise: f64,
    pool_seeds: &[u64],
    seed: u64,
    config: &ToolConfig,
) -> Result<Vec<PoolSeedRow>> {
    let dims = config.dimension_set()?;
    let mut rng = keyed_rng(seed, 0);
    let latent: BTreeMap<ImageId, Vec<f64>> = (0..corpus_size)
        .map(|i| (ImageId::new(format!("c{i:05}")), (0..dims.len()).map(|_| 3.0 + rng.sample::<f64, _>(StandardNormal)).collect()))
        .collect();
    let corpus: Vec<ImageId> = latent.keys().cloned().collect();
    let mut rows = Vec::new();
    for &pool_seed in pool_seeds {
        let judge = SyntheticJudge::new(
            dims.clone(),
            SyntheticJudgeConfig { latent: latent.clone(), noise_std: judge_noise, tie_band: 0.05, seed, span: config.span() },
        )?;
        let mut judge = prefscore_core::judge::CountingJudge::new(judge);
        let mut bridge = config.bridge();
        bridge.pool_seed = pool_seed;
        let out = pseudo_label_corpus(&corpus, &mut judge, &bridge)?;
        let (mut s, mut p) = (0.0, 0.0);
        for d in 0..dims.len() {
            let truth: Vec<f64> = corpus.iter().map(|id| latent[id][d]).collect();
            let est: Vec<f64> = corpus.iter().map(|id| out.scores[id][d]).collect();
            s += srcc(&truth, &est)?;
            p += plcc(&truth, &est)?;
        }
        let n = dims.len() as f64;
        rows.push(PoolSeedRow { pool_seed, srcc: s / n, plcc: p / n, judge_calls: judge.total_calls() });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetRow {
    /// A dimension name, or `all` for the pooled row.
    pub dimension: String,
    pub target: String,
    pub n: usize,
    pub srcc: f64,
    pub plcc: f64,
    pub mae: f64,
    pub rmse: f64,
    pub predicted_mean: f64,
    pub target_mean: f64,
}

fn target_row(dimension: &str, target: &str, x: &[f64], y: &[f64]) -> Result<TargetRow> {
    let n = x.len();
    Ok(TargetRow {
        dimension: dimension.to_string(),
        target: target.to_string(),
        n,
        srcc: srcc(x, y)?,
        plcc: plcc(x, y)?,
        mae: mae(x, y)?,
        rmse: rmse(x, y)?,
        predicted_mean: x.iter().sum::<f64>() / n as f64,
        target_mean: y.iter().sum::<f64>() / n as f64,
    })
}

/// Scores a table against the per-image mean and median of first-pass
/// pointwise ratings, per dimension and pooled.
pub fn evaluate_against_ratings(scores: &ScoreTables, ratings: &[RatingRecord]) -> Result<Vec<TargetRow>> {
    let mut human: BTreeMap<(String, ImageId), Vec<f64>> = BTreeMap::new();
    for r in ratings.iter().filter(|r| !r.is_repeat) {
        human.entry((r.dimension.to_string(), r.image.clone())).or_default().push(f64::from(r.score));
    }
    let mut rows = Vec::new();
    for target in ["mean", "median"] {
        let summary = |v: &Vec<f64>| -> f64 {
            if target == "mean" {
                return v.iter().sum::<f64>() / v.len() as f64;
            }
            let mut s = v.clone();
            s.sort_by(f64::total_cmp);
            let m = s.len() / 2;
            if s.len() % 2 == 1 { s[m] } else { 0.5 * (s[m - 1] + s[m]) }
        };
        let mut per_dim: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for (key, table) in scores {
            for (id, &v) in table {
                if let Some(h) = human.get(&(key.dimension.to_string(), id.clone())) {
                    let e = per_dim.entry(key.dimension.to_string()).or_default();
                    e.0.push(v);
                    e.1.push(summary(h));
                }
            }
        }
        let (mut all_x, mut all_y) = (Vec::new(), Vec::new());
        for (dim, (x, y)) in &per_dim {
            rows.push(target_row(dim, target, x, y)?);
            all_x.extend(x);
            all_y.extend(y);
        }
        if per_dim.is_empty() {
            return Err(prefscore_core::Error::Empty("images with both a score and ratings"));
        }
        rows.push(target_row("all", target, &all_x, &all_y)?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(seed: u64) -> CampaignSpec {
        CampaignSpec {
            images: 20,
            raters: 4,
            dimensions: prefscore_core::DimensionSet::from_names(&["mood"]).unwrap(),
            pair_budget: None,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn categories_do_not_share_ids() {
        let sim = simulate_categories(&small_spec(1), &["ink".into(), "silk".into()]).unwrap();
        assert_eq!(sim.planted.len(), 2);
        assert_eq!(sim.dataset.corpus.as_ref().unwrap().len(), 40);
        assert_eq!(sim.dataset.groups().len(), 2);
    }

    #[test]
    fn per_group_calibration_hits_each_groups_anchors() {
        let sim = simulate_categories(&small_spec(2), &["ink".into(), "silk".into()]).unwrap();
        let cfg = ToolConfig { dimensions: vec!["mood".into()], ..Default::default() };
        let global = fused_scores(&sim.dataset, &sim.anchors, FusionMethod::AnchoredElo, &cfg, false).unwrap();
        let local = fused_scores(&sim.dataset, &sim.anchors, FusionMethod::AnchoredElo, &cfg, true).unwrap();
        assert_eq!(global.len(), 2);
        assert_ne!(global, local);
        for (k, t) in &local {
            let ids: Vec<&ImageId> = t.keys().collect();
            let a: Vec<f64> = ids.iter().map(|i| t[*i]).collect();
            let b: Vec<f64> = ids.iter().map(|i| global[k][*i]).collect();
            // one monotone map per group: the order is unchanged
            assert!((srcc(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn targets_on_the_ratings_themselves() {
        let sim = simulate_categories(&small_spec(3), &["ink".into()]).unwrap();
        let mut table = BTreeMap::new();
        for r in &sim.dataset.ratings {
            table.entry(GroupKey::new("ink", r.dimension.clone())).or_insert_with(BTreeMap::new);
        }
        let mut sums: BTreeMap<ImageId, Vec<f64>> = BTreeMap::new();
        for r in &sim.dataset.ratings {
            sums.entry(r.image.clone()).or_default().push(f64::from(r.score));
        }
        let means: BTreeMap<ImageId, f64> = sums.iter().map(|(k, v)| (k.clone(), v.iter().sum::<f64>() / v.len() as f64)).collect();
        table.insert(GroupKey::new("ink", "mood"), means);
        let rows = evaluate_against_ratings(&table, &sim.dataset.ratings).unwrap();
        let mean_row = rows.iter().find(|r| r.target == "mean" && r.dimension == "all").unwrap();
        assert!(mean_row.mae < 1e-12);
        assert!((mean_row.srcc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reward_study_runs() {
        let study = RewardStudy { images: 32, dimensions: 2, ..Default::default() };
        let rows = pair_weight_study(&study, &[0.5], &RewardConfig::default()).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.reward_accuracy_srcc > 0.0));
    }
}
