//! Iterative Elo aggregation and the anchored variant that pulls anchor
//! ratings toward level-mapped targets after every pass.
//!
//! Expected score: `E_ij = σ((q_i − q_j) / τ)`. A judgment with outcome `o`
//! for the first image moves `q_i` by `K (o − E_ij)` and `q_j` by
//! `K ((1 − o) − E_ji)`, which is zero-sum. Passes visit the judgments in a
//! fresh order drawn from stream `pass` of `shuffle_seed`, so extending the
//! pass count never changes earlier passes.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::model::{AnchorSet, ImageId, PairJudgment};
use crate::rng::keyed_rng;
use crate::{sigmoid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EloConfig {
    pub initial_rating: f64,
    /// Step size on pairs without anchors.
    pub step_k: f64,
    /// Step size on pairs touching at least one anchor.
    pub step_k_anchor: f64,
    /// Geometric step decay per pass.
    pub step_decay: f64,
    /// Anchor pull-back strength α.
    pub anchor_strength: f64,
    /// Elo units between adjacent score levels.
    pub anchor_gap: f64,
    pub passes: u32,
    pub shuffle_seed: u64,
    /// Logistic temperature τ.
    pub temperature: f64,
}

impl Default for EloConfig {
    fn default() -> Self {
        Self {
            initial_rating: 1500.0,
            step_k: 32.0,
            step_k_anchor: 6.0,
            step_decay: 0.995,
            anchor_strength: 0.15,
            anchor_gap: 400.0,
            passes: 150,
            shuffle_seed: 42,
            temperature: 400.0 / core::f64::consts::LN_10,
        }
    }
}

impl EloConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_rating", self.initial_rating),
            ("step_k", self.step_k),
            ("step_k_anchor", self.step_k_anchor),
            ("step_decay", self.step_decay),
            ("anchor_gap", self.anchor_gap),
            ("temperature", self.temperature),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(alloc::format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.anchor_strength > 0.0 && self.anchor_strength <= 1.0) {
            return Err(Error::Config(alloc::format!(
                "anchor_strength must lie in (0, 1], got {}",
                self.anchor_strength
            )));
        }
        if self.passes == 0 {
            return Err(Error::Config("passes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Logistic win expectation of `q_i` over `q_j`.
pub fn expected_score(q_i: f64, q_j: f64, temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::Config(alloc::format!("temperature must be positive, got {temperature}")));
    }
    Ok(sigmoid((q_i - q_j) / temperature))
}

/// Per-image latent quality for one group (Elo rating or BT log-strength).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatentTable {
    pub values: BTreeMap<ImageId, f64>,
}

impl LatentTable {
    pub fn get(&self, id: &ImageId) -> Option<f64> {
        self.values.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values in the order of `ids`; unknown ids are an error.
    pub fn aligned(&self, ids: &[ImageId]) -> Result<Vec<f64>> {
        ids.iter()
            .map(|id| self.get(id).ok_or_else(|| Error::UnknownImage(id.clone())))
            .collect()
    }
}

/// Mutable rating state for a set of images.
#[derive(Debug, Clone)]
pub struct EloState {
    index: BTreeMap<ImageId, usize>,
    ids: Vec<ImageId>,
    ratings: Vec<f64>,
    pub pass_index: u32,
}

impl EloState {
    pub fn new<'a>(images: impl IntoIterator<Item = &'a ImageId>, initial_rating: f64) -> Self {
        let mut index = BTreeMap::new();
        let mut ids = Vec::new();
        for id in images {
            if !index.contains_key(id) {
                index.insert(id.clone(), ids.len());
                ids.push(id.clone());
            }
        }
        let ratings = alloc::vec![initial_rating; ids.len()];
        Self { index, ids, ratings, pass_index: 0 }
    }

    pub fn rating(&self, id: &ImageId) -> Option<f64> {
        self.index.get(id).map(|&i| self.ratings[i])
    }

    pub fn set_rating(&mut self, id: &ImageId, value: f64) -> Result<()> {
        let i = self.slot(id)?;
        self.ratings[i] = value;
        Ok(())
    }

    fn slot(&self, id: &ImageId) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| Error::UnknownImage(id.clone()))
    }

    /// Applies one judgment with outcome score `outcome` (1, 0.5 or 0 for `a`).
    pub fn update_pair(
        &mut self,
        a: &ImageId,
        b: &ImageId,
        outcome: f64,
        step: f64,
        temperature: f64,
    ) -> Result<()> {
        let i = self.slot(a)?;
        let j = self.slot(b)?;
        expected_score(0.0, 0.0, temperature)?;
        self.update_slots(i, j, outcome, step, temperature);
        Ok(())
    }

    #[inline]
    fn update_slots(&mut self, i: usize, j: usize, outcome: f64, step: f64, temperature: f64) {
        let e_ij = sigmoid((self.ratings[i] - self.ratings[j]) / temperature);
        let e_ji = 1.0 - e_ij;
        self.ratings[i] += step * (outcome - e_ij);
        self.ratings[j] += step * ((1.0 - outcome) - e_ji);
    }

    pub fn into_table(self) -> LatentTable {
        LatentTable { values: self.ids.into_iter().zip(self.ratings).collect() }
    }
}

/// Maps a mean rating on the 1–5 scale to its Elo target: score 3 sits at
/// the initial rating and each level adds `anchor_gap`.
pub fn level_to_elo_target(mean_rating: f64, config: &EloConfig) -> Result<f64> {
    if !(1.0..=5.0).contains(&mean_rating) {
        return Err(Error::OutOfRange { what: "anchor mean rating", value: mean_rating });
    }
    Ok(config.initial_rating + (mean_rating - 3.0) * config.anchor_gap)
}

/// Plain Elo over one group's judgments.
pub fn run_elo(judgments: &[PairJudgment], config: &EloConfig) -> Result<LatentTable> {
    run(judgments, None, config)
}

/// Elo with smaller steps on anchor-touching pairs and a pull-back of every
/// anchor toward its level target after each pass.
pub fn run_anchored_elo(
    judgments: &[PairJudgment],
    anchors: &AnchorSet,
    config: &EloConfig,
) -> Result<LatentTable> {
    if anchors.is_empty() {
        return Err(Error::Empty("anchor set"));
    }
    run(judgments, Some(anchors), config)
}

fn run(
    judgments: &[PairJudgment],
    anchors: Option<&AnchorSet>,
    config: &EloConfig,
) -> Result<LatentTable> {
    config.validate()?;
    if judgments.is_empty() {
        return Err(Error::Empty("judgments"));
    }
    let mut state = EloState::new(
        judgments.iter().flat_map(|j| [&j.a, &j.b]),
        config.initial_rating,
    );

    let n = state.ids.len();
    let mut is_anchor = alloc::vec![false; n];
    let mut targets = Vec::new();
    if let Some(anchors) = anchors {
        for a in &anchors.entries {
            let slot = state.slot(&a.image)?;
            is_anchor[slot] = true;
            targets.push((slot, level_to_elo_target(a.mean_rating, config)?));
        }
    }

    let edges: Vec<(usize, usize, f64, bool)> = judgments
        .iter()
        .map(|j| {
            let i = state.index[&j.a];
            let k = state.index[&j.b];
            (i, k, j.outcome.score(), is_anchor[i] || is_anchor[k])
        })
        .collect();

    let mut order: Vec<usize> = (0..edges.len()).collect();
    let mut decay = 1.0;
    for pass in 0..config.passes {
        state.pass_index = pass;
        order.sort_unstable();
        order.shuffle(&mut keyed_rng(config.shuffle_seed, u64::from(pass)));
        let step = config.step_k * decay;
        let step_anchor = config.step_k_anchor * decay;
        for &e in &order {
            let (i, k, o, touches_anchor) = edges[e];
            let s = if touches_anchor { step_anchor } else { step };
            state.update_slots(i, k, o, s, config.temperature);
        }
        for &(slot, target) in &targets {
            let q = state.ratings[slot];
            state.ratings[slot] = q + config.anchor_strength * (target - q);
        }
        decay *= config.step_decay;
    }
    Ok(state.into_table())
}
