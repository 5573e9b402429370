//! Dataset-level fusion and calibration.

use std::collections::BTreeMap;

use prefscore_core::calibration::{
    anchor_points, apply_sigmoid, bridge_calibrate, fit_global_sigmoid_in, BridgeCalibration,
};
use prefscore_core::fusion::{fuse_groups, FusionConfig, FusionMethod, GroupInput};
use prefscore_core::model::{validate_dataset, Issue};
use prefscore_core::{AnchorSet, GroupKey, ImageId, PairJudgment};
use serde::Serialize;

use crate::config::ToolConfig;
use crate::formats::{anchors_from_ratings, score_lines, Dataset, ScoreLine};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] prefscore_core::Error),
}

fn describe(issue: &Issue) -> String {
    match issue {
        Issue::ScoreOutOfRange { rater, image, dimension, score } => {
            format!("{rater} scored {image}/{dimension} as {score}")
        }
        Issue::SelfPair { rater, image, dimension } => format!("{rater} compared {image} with itself on {dimension}"),
        Issue::DuplicateJudgment { rater, a, b, dimension } => {
            format!("{rater} judged ({a}, {b}) on {dimension} more than once")
        }
        Issue::DisconnectedGroup { group, components } => format!("group {group} has {components} components"),
    }
}

/// Checks records before fusion. Duplicate judgments only warn; everything
/// else is fatal.
pub fn check_dataset(ds: &Dataset) -> Result<Vec<String>, PipelineError> {
    let report = validate_dataset(&ds.ratings, &ds.judgments, &ds.category_map());
    let (warn, fatal): (Vec<&Issue>, Vec<&Issue>) =
        report.issues.iter().partition(|i| matches!(i, Issue::DuplicateJudgment { .. }));
    if !fatal.is_empty() {
        let text: Vec<String> = fatal.iter().map(|i| describe(i)).collect();
        return Err(PipelineError::Validation(text.join("; ")));
    }
    Ok(warn.into_iter().map(describe).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub category: String,
    pub dimension: String,
    pub images: usize,
    pub judgments: usize,
    pub anchors: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tie_propensity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuseReport {
    pub method: String,
    pub slope: f64,
    pub offset: f64,
    pub converged: bool,
    pub groups: Vec<GroupSummary>,
    pub warnings: Vec<String>,
}

pub fn method_name(m: FusionMethod) -> &'static str {
    match m {
        FusionMethod::Elo => "elo",
        FusionMethod::AnchoredElo => "anchored-elo",
        FusionMethod::Dbt => "dbt",
        FusionMethod::AnchoredDbt => "anchored-dbt",
    }
}

/// Anchors for every group that has judgments: the explicit set when one is
/// given for that group, otherwise picked from the group's ratings.
pub fn resolve_anchors(
    ds: &Dataset,
    explicit: Option<&BTreeMap<GroupKey, AnchorSet>>,
    per_level: usize,
) -> BTreeMap<GroupKey, AnchorSet> {
    ds.groups()
        .into_iter()
        .filter(|(_, g)| !g.judgments.is_empty())
        .map(|(key, g)| {
            let set = explicit
                .and_then(|e| e.get(&key).cloned())
                .unwrap_or_else(|| anchors_from_ratings(&g.ratings, per_level));
            (key, set)
        })
        .collect()
}

/// Fuses every group with judgments and calibrates all of them through one
/// sigmoid fitted on the pooled anchors. Repeat judgments are left out.
pub fn fuse_dataset(
    ds: &Dataset,
    explicit_anchors: Option<&BTreeMap<GroupKey, AnchorSet>>,
    method: FusionMethod,
    config: &ToolConfig,
) -> Result<(FuseReport, Vec<ScoreLine>), PipelineError> {
    let warnings = check_dataset(ds)?;
    let groups = ds.groups();
    let anchors = resolve_anchors(ds, explicit_anchors, config.anchors_per_level);
    if anchors.is_empty() {
        return Err(PipelineError::Validation("no pairwise judgments to fuse".into()));
    }
    let mut keys = Vec::new();
    let mut judgments: Vec<Vec<PairJudgment>> = Vec::new();
    for (key, set) in &anchors {
        if method.is_anchored() && set.is_empty() {
            return Err(PipelineError::Validation(format!("group {key} has no anchors")));
        }
        keys.push(key.clone());
        judgments.push(groups[key].judgments.iter().filter(|j| !j.is_repeat).cloned().collect());
    }
    let inputs: Vec<GroupInput<'_>> = keys
        .iter()
        .zip(&judgments)
        .map(|(k, js)| GroupInput { judgments: js, anchors: &anchors[k] })
        .collect();
    let fusion_config = FusionConfig { elo: config.elo(), dbt: config.dbt(), span: config.span() };
    let fused = fuse_groups(&inputs, method, &fusion_config)?;

    let mut lines = Vec::new();
    let mut summaries = Vec::new();
    for ((key, js), g) in keys.iter().zip(&judgments).zip(&fused.groups) {
        lines.extend(score_lines(key, &g.latent.values, &g.scores));
        summaries.push(GroupSummary {
            category: key.category.clone(),
            dimension: key.dimension.to_string(),
            images: g.latent.len(),
            judgments: js.len(),
            anchors: anchors[key].len(),
            converged: g.converged,
            tie_propensity: g.tie_propensity,
        });
    }
    let report = FuseReport {
        method: method_name(method).to_string(),
        slope: fused.fit.slope,
        offset: fused.fit.offset,
        converged: fused.converged(),
        groups: summaries,
        warnings,
    };
    Ok((report, lines))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub mode: String,
    /// Global mode: one `(slope, offset)`; bridge mode: per-group extrema.
    pub parameters: BTreeMap<String, (f64, f64)>,
}

/// Maps per-group latents to scores with the global anchor sigmoid.
pub fn calibrate_global(
    latents: &BTreeMap<GroupKey, BTreeMap<ImageId, f64>>,
    anchors: &BTreeMap<GroupKey, AnchorSet>,
    config: &ToolConfig,
) -> Result<(CalibrationReport, Vec<ScoreLine>), PipelineError> {
    let mut points = Vec::new();
    for (key, table) in latents {
        if let Some(set) = anchors.get(key) {
            points.extend(anchor_points(table, set));
        }
    }
    let fit = fit_global_sigmoid_in(&points, config.span())?;
    let mut lines = Vec::new();
    for (key, table) in latents {
        let scores: BTreeMap<ImageId, f64> = table.iter().map(|(id, &q)| (id.clone(), apply_sigmoid(q, &fit))).collect();
        lines.extend(score_lines(key, table, &scores));
    }
    let parameters = BTreeMap::from([("global".to_string(), (fit.slope, fit.offset))]);
    Ok((CalibrationReport { mode: "global".into(), parameters }, lines))
}

/// Min–max bridge sigmoid per group.
pub fn calibrate_bridge(
    latents: &BTreeMap<GroupKey, BTreeMap<ImageId, f64>>,
    config: &ToolConfig,
) -> Result<(CalibrationReport, Vec<ScoreLine>), PipelineError> {
    let mut parameters = BTreeMap::new();
    let mut lines = Vec::new();
    for (key, table) in latents {
        let lo = table.values().copied().fold(f64::INFINITY, f64::min);
        let hi = table.values().copied().fold(f64::NEG_INFINITY, f64::max);
        let cal = BridgeCalibration { steepness: config.bridge.steepness, q_min: lo, q_max: hi, span: config.span() };
        let scores = table
            .iter()
            .map(|(id, &q)| bridge_calibrate(q, &cal).map(|s| (id.clone(), s)))
            .collect::<Result<BTreeMap<_, _>, _>>()?;
        lines.extend(score_lines(key, table, &scores));
        parameters.insert(key.to_string(), (lo, hi));
    }
    Ok((CalibrationReport { mode: "bridge".into(), parameters }, lines))
}
