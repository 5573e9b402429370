//! Serialisable tool configuration. Every field defaults to the core
//! library's default, so a config file only lists what it changes.

use prefscore_core::bridge::BridgeConfig;
use prefscore_core::calibration::ScoreSpan;
use prefscore_core::davidson::{AnchorTarget, DbtConfig};
use prefscore_core::elo::EloConfig;
use prefscore_core::reward::RewardConfig;
use prefscore_core::DimensionSet;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EloSettings {
    pub initial_rating: f64,
    pub step_k: f64,
    pub step_k_anchor: f64,
    pub step_decay: f64,
    pub anchor_strength: f64,
    pub anchor_gap: f64,
    pub passes: u32,
    pub shuffle_seed: u64,
    pub temperature: f64,
}

impl Default for EloSettings {
    fn default() -> Self {
        let c = EloConfig::default();
        Self {
            initial_rating: c.initial_rating,
            step_k: c.step_k,
            step_k_anchor: c.step_k_anchor,
            step_decay: c.step_decay,
            anchor_strength: c.anchor_strength,
            anchor_gap: c.anchor_gap,
            passes: c.passes,
            shuffle_seed: c.shuffle_seed,
            temperature: c.temperature,
        }
    }
}

impl From<&EloSettings> for EloConfig {
    fn from(s: &EloSettings) -> Self {
        Self {
            initial_rating: s.initial_rating,
            step_k: s.step_k,
            step_k_anchor: s.step_k_anchor,
            step_decay: s.step_decay,
            anchor_strength: s.anchor_strength,
            anchor_gap: s.anchor_gap,
            passes: s.passes,
            shuffle_seed: s.shuffle_seed,
            temperature: s.temperature,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TargetStat {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbtSettings {
    pub anchor_penalty: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub nu_init: f64,
    pub anchor_target: TargetStat,
}

impl Default for DbtSettings {
    fn default() -> Self {
        let c = DbtConfig::default();
        Self {
            anchor_penalty: c.anchor_penalty,
            max_iterations: c.max_iterations,
            gradient_tolerance: c.gradient_tolerance,
            nu_init: c.nu_init,
            anchor_target: TargetStat::Mean,
        }
    }
}

impl From<&DbtSettings> for DbtConfig {
    fn from(s: &DbtSettings) -> Self {
        Self {
            anchor_penalty: s.anchor_penalty,
            max_iterations: s.max_iterations,
            gradient_tolerance: s.gradient_tolerance,
            nu_init: s.nu_init,
            anchor_target: match s.anchor_target {
                TargetStat::Mean => AnchorTarget::Mean,
                TargetStat::Median => AnchorTarget::Median,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeSettings {
    pub pool_size: usize,
    pub refs_per_image: usize,
    pub prior_scale: f64,
    pub pool_seed: u64,
    pub steepness: f64,
    /// Present pool pairs in a seeded random left/right order.
    pub swap_ab: bool,
}

impl Default for BridgeSettings {
    fn default() -> Self {
        let c = BridgeConfig::default();
        Self {
            pool_size: c.pool_size,
            refs_per_image: c.refs_per_image,
            prior_scale: c.prior_scale,
            pool_seed: c.pool_seed,
            steepness: c.steepness,
            swap_ab: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSettings {
    pub gap_threshold: f64,
    pub pair_weighting: bool,
    pub variance_floor: f64,
    pub clip: f64,
    pub kl_coeff: f64,
    pub format_weight: f64,
    pub range_weight: f64,
}

impl Default for RewardSettings {
    fn default() -> Self {
        let c = RewardConfig::default();
        Self {
            gap_threshold: c.gap_threshold,
            pair_weighting: c.pair_weighting,
            variance_floor: c.variance_floor,
            clip: c.clip,
            kl_coeff: c.kl_coeff,
            format_weight: c.format_weight,
            range_weight: c.range_weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    pub dimensions: Vec<String>,
    /// Switches the score span to 1–10.
    pub wide_span: bool,
    pub anchors_per_level: usize,
    pub tie_epsilon: f64,
    pub elo: EloSettings,
    pub dbt: DbtSettings,
    pub bridge: BridgeSettings,
    pub reward: RewardSettings,
}

impl Default for ToolConfig {
    fn default() -> Self {
        Self {
            dimensions: DimensionSet::default().iter().map(|d| d.to_string()).collect(),
            wide_span: false,
            anchors_per_level: 2,
            tie_epsilon: 0.1,
            elo: EloSettings::default(),
            dbt: DbtSettings::default(),
            bridge: BridgeSettings::default(),
            reward: RewardSettings::default(),
        }
    }
}

impl ToolConfig {
    pub fn span(&self) -> ScoreSpan {
        if self.wide_span {
            ScoreSpan::TEN_POINT
        } else {
            ScoreSpan::FIVE_POINT
        }
    }

    pub fn dimension_set(&self) -> prefscore_core::Result<DimensionSet> {
        DimensionSet::from_names(&self.dimensions)
    }

    pub fn elo(&self) -> EloConfig {
        (&self.elo).into()
    }

    pub fn dbt(&self) -> DbtConfig {
        (&self.dbt).into()
    }

    pub fn bridge(&self) -> BridgeConfig {
        BridgeConfig {
            pool_size: self.bridge.pool_size,
            refs_per_image: self.bridge.refs_per_image,
            prior_scale: self.bridge.prior_scale,
            pool_seed: self.bridge.pool_seed,
            elo: self.elo(),
            steepness: self.bridge.steepness,
            span: self.span(),
        }
    }

    pub fn reward(&self) -> RewardConfig {
        let r = &self.reward;
        RewardConfig {
            gap_threshold: r.gap_threshold,
            pair_weighting: r.pair_weighting,
            variance_floor: r.variance_floor,
            clip: r.clip,
            kl_coeff: r.kl_coeff,
            format_weight: r.format_weight,
            range_weight: r.range_weight,
            span: self.span(),
        }
    }
}
