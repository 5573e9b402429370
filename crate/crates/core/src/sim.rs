//! Synthetic annotation campaigns with planted latent quality.
//!
//! Latents live on the rating scale (3 is the centre). A rater's pointwise
//! score is `round(3 + scale·(θ − 3) + offset + noise)` clamped to 1–5, so
//! raters disagree about where the scale sits. Pairwise judgments are
//! Thurstone draws `u ~ N(θ_a − θ_b, 2σ²)` with a symmetric tie band.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::calibration::select_anchors;
use crate::graph::sample_budget_pairs;
use crate::model::{AnchorSet, DimensionSet, ImageId, Outcome, PairJudgment, RatingRecord};
use crate::rng::{keyed_rng, mix_key};
use crate::{Error, Result};

/// Affine distortion a rater applies to the latent before rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaterProfile {
    pub offset: f64,
    pub scale: f64,
}

impl Default for RaterProfile {
    fn default() -> Self {
        Self { offset: 0.0, scale: 1.0 }
    }
}

/// Per-dimension overrides; each dimension is its own fusion group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionProfile {
    pub latent_mean: f64,
    pub latent_std: f64,
    pub judgment_noise: f64,
    pub tie_band: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSpec {
    pub images: usize,
    pub raters: usize,
    pub dimensions: DimensionSet,
    pub category: String,
    /// Shared pair set size; `None` judges every pair.
    pub pair_budget: Option<usize>,
    pub max_diameter: usize,
    pub latent_mean: f64,
    pub latent_std: f64,
    pub rating_noise: f64,
    pub judgment_noise: f64,
    pub tie_band: f64,
    /// Offsets drawn uniformly from `±offset_spread`.
    pub offset_spread: f64,
    /// Scales drawn uniformly from `1 ± scale_spread`.
    pub scale_spread: f64,
    /// Explicit per-rater profiles; overrides the spreads when set.
    pub profiles: Option<Vec<RaterProfile>>,
    /// One entry per dimension, replacing the shared latent and judgment settings.
    pub dimension_profiles: Option<Vec<DimensionProfile>>,
    pub anchors_per_level: usize,
    pub seed: u64,
}

impl Default for CampaignSpec {
    fn default() -> Self {
        Self {
            images: 50,
            raters: 5,
            dimensions: DimensionSet::default(),
            category: "synthetic".into(),
            pair_budget: Some(612),
            max_diameter: 2,
            latent_mean: 3.0,
            latent_std: 1.0,
            rating_noise: 0.5,
            judgment_noise: 0.4,
            tie_band: 0.1,
            offset_spread: 0.3,
            scale_spread: 0.3,
            profiles: None,
            dimension_profiles: None,
            anchors_per_level: 2,
            seed: 0,
        }
    }
}

impl CampaignSpec {
    pub fn validate(&self) -> Result<()> {
        if self.images < 3 {
            return Err(Error::Config("a campaign needs at least three images".into()));
        }
        if self.raters == 0 {
            return Err(Error::Config("a campaign needs at least one rater".into()));
        }
        for (name, v) in [
            ("latent_std", self.latent_std),
            ("rating_noise", self.rating_noise),
            ("judgment_noise", self.judgment_noise),
            ("tie_band", self.tie_band),
            ("offset_spread", self.offset_spread),
            ("scale_spread", self.scale_spread),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(alloc::format!("{name} must be a non-negative number")));
            }
        }
        if self.scale_spread >= 1.0 {
            return Err(Error::Config("scale_spread must stay below 1".into()));
        }
        if let Some(p) = &self.profiles {
            if p.len() != self.raters {
                return Err(Error::LengthMismatch { left: self.raters, right: p.len() });
            }
        }
        if let Some(p) = &self.dimension_profiles {
            if p.len() != self.dimensions.len() {
                return Err(Error::LengthMismatch { left: self.dimensions.len(), right: p.len() });
            }
            if p.iter().any(|d| !(d.latent_std >= 0.0 && d.judgment_noise >= 0.0 && d.tie_band >= 0.0)) {
                return Err(Error::Config("dimension profile spreads must be non-negative".into()));
            }
        }
        Ok(())
    }

    fn dimension(&self, d: usize) -> DimensionProfile {
        match &self.dimension_profiles {
            Some(p) => p[d],
            None => DimensionProfile {
                latent_mean: self.latent_mean,
                latent_std: self.latent_std,
                judgment_noise: self.judgment_noise,
                tie_band: self.tie_band,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub images: Vec<ImageId>,
    pub raters: Vec<String>,
    pub dimensions: DimensionSet,
    pub category: String,
    /// Planted latent per image, one value per dimension.
    pub latent: BTreeMap<ImageId, Vec<f64>>,
    pub profiles: Vec<RaterProfile>,
    pub pairs: Vec<(ImageId, ImageId)>,
    pub ratings: Vec<RatingRecord>,
    pub judgments: Vec<PairJudgment>,
    /// Low-spread anchors per dimension (levels 2, 3, 4).
    pub anchors: Vec<AnchorSet>,
}

impl Campaign {
    pub fn judgments_for(&self, dim: usize) -> Vec<PairJudgment> {
        let name = &self.dimensions.as_slice()[dim];
        self.judgments.iter().filter(|j| &j.dimension == name).cloned().collect()
    }

    pub fn ratings_for(&self, dim: usize) -> Vec<RatingRecord> {
        let name = &self.dimensions.as_slice()[dim];
        self.ratings.iter().filter(|r| &r.dimension == name).cloned().collect()
    }

    /// Planted latents on one dimension, in `images` order.
    pub fn planted(&self, dim: usize) -> Vec<f64> {
        self.images.iter().map(|id| self.latent[id][dim]).collect()
    }
}

pub fn simulate_campaign(spec: &CampaignSpec) -> Result<Campaign> {
    spec.validate()?;
    let dims = spec.dimensions.clone();
    let images: Vec<ImageId> =
        (0..spec.images).map(|i| ImageId::new(alloc::format!("{}-{i:04}", spec.category))).collect();
    let raters: Vec<String> = (0..spec.raters).map(|r| alloc::format!("rater{r}")).collect();

    let groups: Vec<DimensionProfile> = (0..dims.len()).map(|d| spec.dimension(d)).collect();
    let mut rng = keyed_rng(spec.seed, 0);
    let latent_dists = groups
        .iter()
        .map(|g| Normal::new(g.latent_mean, g.latent_std))
        .collect::<core::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Config("invalid latent distribution".into()))?;
    let latent: BTreeMap<ImageId, Vec<f64>> = images
        .iter()
        .map(|id| (id.clone(), latent_dists.iter().map(|dist| dist.sample(&mut rng)).collect()))
        .collect();

    let profiles = match &spec.profiles {
        Some(p) => p.clone(),
        None => {
            let mut rng = keyed_rng(spec.seed, 1);
            (0..spec.raters)
                .map(|_| RaterProfile {
                    offset: if spec.offset_spread > 0.0 {
                        rng.random_range(-spec.offset_spread..=spec.offset_spread)
                    } else {
                        0.0
                    },
                    scale: if spec.scale_spread > 0.0 {
                        rng.random_range(1.0 - spec.scale_spread..=1.0 + spec.scale_spread)
                    } else {
                        1.0
                    },
                })
                .collect()
        }
    };

    let all = spec.images * (spec.images - 1) / 2;
    let pairs = match spec.pair_budget {
        Some(b) if b < all => sample_budget_pairs(&images, b, spec.max_diameter, spec.seed, 200)?,
        _ => crate::stats::protocol::all_pairs(&images),
    };

    let mut ratings = Vec::new();
    let mut judgments = Vec::new();
    let mut clock = 0i64;
    for (r, rater) in raters.iter().enumerate() {
        let prof = profiles[r];
        for (d, dim) in dims.iter().enumerate() {
            let key = mix_key(&[&spec.seed.to_le_bytes(), rater.as_bytes(), dim.as_str().as_bytes()]);
            let mut rng = keyed_rng(key, 0);
            for id in &images {
                let z: f64 = StandardNormal.sample(&mut rng);
                let raw = 3.0 + prof.scale * (latent[id][d] - 3.0) + prof.offset + spec.rating_noise * z;
                let score = libm::round(raw.clamp(1.0, 5.0)) as i32;
                clock += 1000;
                let mut rec = RatingRecord::new(rater.clone(), id.clone(), dim.clone(), score);
                rec.timestamp_ms = clock;
                ratings.push(rec);
            }
            let mut rng = keyed_rng(key, 1);
            let scale = core::f64::consts::SQRT_2 * groups[d].judgment_noise;
            let band = groups[d].tie_band;
            for (a, b) in &pairs {
                let z: f64 = StandardNormal.sample(&mut rng);
                let u = latent[a][d] - latent[b][d] + scale * z;
                let outcome = if u > band {
                    Outcome::AWins
                } else if u < -band {
                    Outcome::BWins
                } else {
                    Outcome::Tie
                };
                clock += 1000;
                let mut j = PairJudgment::new(rater.clone(), a.clone(), b.clone(), dim.clone(), outcome);
                j.timestamp_ms = clock;
                judgments.push(j);
            }
        }
    }

    let mut anchors = Vec::with_capacity(dims.len());
    for dim in dims.iter() {
        let mut per_image: BTreeMap<ImageId, Vec<f64>> = BTreeMap::new();
        for rec in ratings.iter().filter(|r| &r.dimension == dim) {
            per_image.entry(rec.image.clone()).or_default().push(f64::from(rec.score));
        }
        anchors.push(select_anchors(&per_image, &[2, 3, 4], spec.anchors_per_level));
    }

    Ok(Campaign {
        images,
        raters,
        dimensions: dims,
        category: spec.category.clone(),
        latent,
        profiles,
        pairs,
        ratings,
        judgments,
        anchors,
    })
}
