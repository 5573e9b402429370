use std::collections::BTreeMap;
use std::path::PathBuf;

use prefscore_core::DimensionSet;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CategoryConfig {
    /// Image ids; also their file names under `image_dir`.
    pub images: Vec<String>,
    /// Annotator ids allowed to work on this category. The id doubles as the
    /// shared access token.
    pub annotators: Vec<String>,
    /// Overrides the campaign-wide pair budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub id: String,
    pub dimensions: Vec<String>,
    pub categories: BTreeMap<String, CategoryConfig>,
    /// Repeated images woven into each pointwise queue.
    pub repeats_pointwise: usize,
    /// Minimum number of tasks between an image and its repeat.
    pub min_gap_pointwise: usize,
    pub repeats_pairwise: usize,
    pub min_gap_pairwise: usize,
    /// Time a new session must spend on the guidelines page.
    pub guidelines_min_ms: i64,
    pub pointwise_min_view_ms: i64,
    pub pairwise_min_view_ms: i64,
    /// Pairs judged per category (of the `C(n, 2)` possible).
    pub pair_budget: usize,
    pub max_diameter: usize,
    pub sampler_attempts: usize,
    /// Earliest time pairwise tasks may be issued, on top of every
    /// annotator in the category having finished the pointwise phase.
    pub pairwise_unlock_at_ms: Option<i64>,
    pub seed: u64,
    pub image_dir: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            id: "campaign".into(),
            dimensions: DimensionSet::default().iter().map(|d| d.to_string()).collect(),
            categories: BTreeMap::new(),
            repeats_pointwise: 10,
            min_gap_pointwise: 5,
            repeats_pairwise: 30,
            min_gap_pairwise: 10,
            guidelines_min_ms: 10_000,
            pointwise_min_view_ms: 5_000,
            pairwise_min_view_ms: 10_000,
            pair_budget: 612,
            max_diameter: 2,
            sampler_attempts: 1000,
            pairwise_unlock_at_ms: None,
            seed: 0,
            image_dir: None,
            ui_dir: None,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), String> {
        DimensionSet::from_names(&self.dimensions).map_err(|e| e.to_string())?;
        if self.categories.is_empty() {
            return Err("campaign has no categories".into());
        }
        if self.min_gap_pointwise == 0 || self.min_gap_pairwise == 0 {
            return Err("repeat gaps must be at least 1".into());
        }
        for (name, c) in &self.categories {
            let n = c.images.len();
            if n < 2 {
                return Err(format!("category {name} needs at least two images"));
            }
            if c.annotators.is_empty() {
                return Err(format!("category {name} has no annotators"));
            }
            if n <= self.min_gap_pointwise || self.repeats_pointwise > n - self.min_gap_pointwise {
                return Err(format!(
                    "category {name}: {} pointwise repeats with gap {} do not fit {n} images",
                    self.repeats_pointwise, self.min_gap_pointwise
                ));
            }
            let pairs = self.budget_for(c);
            if pairs <= self.min_gap_pairwise || self.repeats_pairwise > pairs - self.min_gap_pairwise {
                return Err(format!(
                    "category {name}: {} pairwise repeats with gap {} do not fit {pairs} pairs",
                    self.repeats_pairwise, self.min_gap_pairwise
                ));
            }
        }
        let mut seen = BTreeMap::new();
        for (name, c) in &self.categories {
            for a in &c.annotators {
                if let Some(prev) = seen.insert(a.clone(), name.clone()) {
                    if prev == *name {
                        return Err(format!("annotator {a} listed twice in {name}"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Pair budget for a category, capped at the number of possible pairs.
    pub fn budget_for(&self, c: &CategoryConfig) -> usize {
        let n = c.images.len();
        c.pair_budget.unwrap_or(self.pair_budget).min(n * n.saturating_sub(1) / 2)
    }
}
