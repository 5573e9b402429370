//! Fused ground truth: a latent estimator per group followed by one sigmoid
//! fitted to the anchors of every group at once.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::calibration::{anchor_points, apply_sigmoid, fit_global_sigmoid_in, ScoreSpan, SigmoidFit};
use crate::davidson::{fit_anchored_dbt, DbtConfig, DbtFit};
use crate::elo::{run_anchored_elo, run_elo, EloConfig, LatentTable};
use crate::model::{AnchorSet, ImageId, PairJudgment};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMethod {
    Elo,
    AnchoredElo,
    /// Davidson BT with the anchor penalty switched off.
    Dbt,
    AnchoredDbt,
}

impl FusionMethod {
    pub fn is_anchored(self) -> bool {
        matches!(self, Self::AnchoredElo | Self::AnchoredDbt)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FusionConfig {
    pub elo: EloConfig,
    pub dbt: DbtConfig,
    pub span: ScoreSpan,
}

#[derive(Debug, Clone, Copy)]
pub struct GroupInput<'a> {
    pub judgments: &'a [PairJudgment],
    pub anchors: &'a AnchorSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedGroup {
    pub latent: LatentTable,
    pub scores: BTreeMap<ImageId, f64>,
    /// False when the DBT optimiser hit its iteration cap.
    pub converged: bool,
    /// Fitted ν for the Davidson methods.
    pub tie_propensity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fusion {
    pub fit: SigmoidFit,
    pub groups: Vec<FusedGroup>,
}

impl Fusion {
    pub fn converged(&self) -> bool {
        self.groups.iter().all(|g| g.converged)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentEstimate {
    pub latent: LatentTable,
    pub converged: bool,
    pub tie_propensity: Option<f64>,
}

/// Latent qualities for one group. Unanchored methods ignore `anchors`.
pub fn estimate_latent(
    judgments: &[PairJudgment],
    anchors: &AnchorSet,
    method: FusionMethod,
    config: &FusionConfig,
) -> Result<LatentEstimate> {
    let elo = |latent| LatentEstimate { latent, converged: true, tie_propensity: None };
    let dbt = |fit: DbtFit| LatentEstimate {
        latent: fit.params.to_latent(),
        converged: fit.converged,
        tie_propensity: Some(fit.params.tie_propensity),
    };
    match method {
        FusionMethod::Elo => Ok(elo(run_elo(judgments, &config.elo)?)),
        FusionMethod::AnchoredElo => Ok(elo(run_anchored_elo(judgments, anchors, &config.elo)?)),
        FusionMethod::Dbt => {
            let cfg = DbtConfig { anchor_penalty: 0.0, ..config.dbt.clone() };
            Ok(dbt(fit_anchored_dbt(judgments, &AnchorSet::default(), &cfg)?))
        }
        FusionMethod::AnchoredDbt => Ok(dbt(fit_anchored_dbt(judgments, anchors, &config.dbt)?)),
    }
}

/// Estimates every group, fits the shared sigmoid on the pooled anchor
/// points and maps each group's latents through it.
pub fn fuse_groups(groups: &[GroupInput<'_>], method: FusionMethod, config: &FusionConfig) -> Result<Fusion> {
    if groups.is_empty() {
        return Err(Error::Empty("groups"));
    }
    let mut latents = Vec::with_capacity(groups.len());
    let mut points = Vec::new();
    for g in groups {
        let est = estimate_latent(g.judgments, g.anchors, method, config)?;
        points.extend(anchor_points(&est.latent.values, g.anchors));
        latents.push(est);
    }
    let fit = fit_global_sigmoid_in(&points, config.span)?;
    let groups = latents
        .into_iter()
        .map(|LatentEstimate { latent, converged, tie_propensity }| {
            let scores = latent.values.iter().map(|(id, &q)| (id.clone(), apply_sigmoid(q, &fit))).collect();
            FusedGroup { latent, scores, converged, tie_propensity }
        })
        .collect();
    Ok(Fusion { fit, groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Anchor, Outcome};
    use alloc::vec;

    fn ladder() -> Vec<PairJudgment> {
        let ids = ["a", "b", "c", "d", "e"];
        let mut out = Vec::new();
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                out.push(PairJudgment::new("r", ids[i], ids[j], "overall", Outcome::BWins));
                if j == i + 1 {
                    out.push(PairJudgment::new("s", ids[i], ids[j], "overall", Outcome::Tie));
                }
            }
        }
        out
    }

    #[test]
    fn scores_are_ordered_and_in_span() {
        let js = ladder();
        let anchors = AnchorSet::new(vec![Anchor::new("b", 2.0, 2), Anchor::new("d", 4.0, 4)]);
        for method in [FusionMethod::Elo, FusionMethod::AnchoredElo, FusionMethod::Dbt, FusionMethod::AnchoredDbt] {
            let f = fuse_groups(&[GroupInput { judgments: &js, anchors: &anchors }], method, &FusionConfig::default())
                .unwrap();
            let s = &f.groups[0].scores;
            let order: Vec<f64> = ["a", "b", "c", "d", "e"].iter().map(|k| s[&ImageId::from(*k)]).collect();
            assert!(order.windows(2).all(|w| w[0] < w[1]), "{method:?}: {order:?}");
            assert!(order.iter().all(|v| *v > 1.0 && *v < 5.0));
            // two anchors: the sigmoid passes through both exactly
            assert!((s[&ImageId::from("b")] - 2.0).abs() < 1e-9);
            assert!((s[&ImageId::from("d")] - 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn needs_two_anchor_points() {
        let js = ladder();
        let anchors = AnchorSet::new(vec![Anchor::new("b", 2.0, 2)]);
        let r = fuse_groups(&[GroupInput { judgments: &js, anchors: &anchors }], FusionMethod::Elo, &FusionConfig::default());
        assert!(r.is_err());
        assert!(fuse_groups(&[], FusionMethod::Elo, &FusionConfig::default()).is_err());
    }
}
