//! Domain records shared by every pipeline.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::graph::ComparisonGraph;
use crate::{Error, Result};

/// Opaque image identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ImageId(String);

impl ImageId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ImageId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl From<String> for ImageId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// Name of an aesthetic dimension.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Dimension(String);

impl Dimension {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Dimension {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// Ordered, duplicate-free list of dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionSet(Vec<Dimension>);

pub const DEFAULT_DIMENSIONS: [&str; 5] =
    ["technique", "coloration", "composition", "mood", "overall"];

/// Three-dimension configuration used for the 1–10 painting benchmark mode.
pub const WIDE_SPAN_DIMENSIONS: [&str; 3] =
    ["layout_composition", "details_texture", "overall"];

impl DimensionSet {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Empty("dimension list"));
        }
        let unique: BTreeSet<&Dimension> = dims.iter().collect();
        if unique.len() != dims.len() {
            return Err(Error::Config("dimension names must be unique".into()));
        }
        Ok(Self(dims))
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        Self::new(names.iter().map(|n| Dimension::new(n.as_ref())).collect())
    }

    pub fn wide_span() -> Self {
        Self(WIDE_SPAN_DIMENSIONS.iter().map(|&d| Dimension::from(d)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Dimension] {
        &self.0
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Dimension> {
        self.0.iter()
    }

    pub fn position(&self, dim: &Dimension) -> Option<usize> {
        self.0.iter().position(|d| d == dim)
    }
}

impl Default for DimensionSet {
    fn default() -> Self {
        Self(DEFAULT_DIMENSIONS.iter().map(|&d| Dimension::from(d)).collect())
    }
}

/// Three-way outcome from the point of view of the first image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    AWins,
    Tie,
    BWins,
}

impl Outcome {
    /// 1, 0.5 or 0 for the first image.
    pub fn score(self) -> f64 {
        match self {
            Outcome::AWins => 1.0,
            Outcome::Tie => 0.5,
            Outcome::BWins => 0.0,
        }
    }

    pub fn mirrored(self) -> Self {
        match self {
            Outcome::AWins => Outcome::BWins,
            Outcome::Tie => Outcome::Tie,
            Outcome::BWins => Outcome::AWins,
        }
    }

    pub fn from_scores<T: PartialOrd>(a: T, b: T) -> Self {
        if a > b {
            Outcome::AWins
        } else if a < b {
            Outcome::BWins
        } else {
            Outcome::Tie
        }
    }
}

/// One rater's three-way judgment of an image pair on one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PairJudgment {
    pub rater: String,
    pub a: ImageId,
    pub b: ImageId,
    pub dimension: Dimension,
    pub outcome: Outcome,
    pub timestamp_ms: i64,
    pub is_repeat: bool,
}

impl PairJudgment {
    pub fn new(
        rater: impl Into<String>,
        a: impl Into<ImageId>,
        b: impl Into<ImageId>,
        dimension: impl Into<Dimension>,
        outcome: Outcome,
    ) -> Self {
        Self {
            rater: rater.into(),
            a: a.into(),
            b: b.into(),
            dimension: dimension.into(),
            outcome,
            timestamp_ms: 0,
            is_repeat: false,
        }
    }

    /// Same judgment with `a < b` lexicographically; the outcome is mirrored
    /// when the images are swapped.
    pub fn canonical(mut self) -> Self {
        if self.a > self.b {
            core::mem::swap(&mut self.a, &mut self.b);
            self.outcome = self.outcome.mirrored();
        }
        self
    }

    pub fn pair_key(&self) -> (ImageId, ImageId) {
        canonical_pair(&self.a, &self.b)
    }
}

impl From<String> for Dimension {
    fn from(s: String) -> Self {
        Self(s)
    }
}

pub fn canonical_pair(a: &ImageId, b: &ImageId) -> (ImageId, ImageId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

/// One rater's integer score for an image on one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingRecord {
    pub rater: String,
    pub image: ImageId,
    pub dimension: Dimension,
    pub score: i32,
    pub timestamp_ms: i64,
    pub is_repeat: bool,
}

impl RatingRecord {
    pub fn new(
        rater: impl Into<String>,
        image: impl Into<ImageId>,
        dimension: impl Into<Dimension>,
        score: i32,
    ) -> Self {
        Self {
            rater: rater.into(),
            image: image.into(),
            dimension: dimension.into(),
            score,
            timestamp_ms: 0,
            is_repeat: false,
        }
    }
}

pub const MIN_SCORE: i32 = 1;
pub const MAX_SCORE: i32 = 5;

/// A category–dimension group; all fusion math runs per group.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupKey {
    pub category: String,
    pub dimension: Dimension,
}

impl GroupKey {
    pub fn new(category: impl Into<String>, dimension: impl Into<Dimension>) -> Self {
        Self { category: category.into(), dimension: dimension.into() }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.category, self.dimension)
    }
}

/// A low-disagreement image pinned to a score level.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub image: ImageId,
    /// Mean rating on the 1–5 scale.
    pub mean_rating: f64,
    /// Median rating, when known.
    pub median_rating: Option<f64>,
    pub level: u8,
}

impl Anchor {
    pub fn new(image: impl Into<ImageId>, mean_rating: f64, level: u8) -> Self {
        Self { image: image.into(), mean_rating, median_rating: None, level }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnchorSet {
    pub entries: Vec<Anchor>,
}

impl AnchorSet {
    pub fn new(entries: Vec<Anchor>) -> Self {
        Self { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, image: &ImageId) -> Option<&Anchor> {
        self.entries.iter().find(|a| &a.image == image)
    }

    /// Checks the per-group shape expected of a curated anchor set: 3–6
    /// entries over at least two distinct levels, with means inside [1, 5].
    pub fn check_group_shape(&self) -> Result<()> {
        if !(3..=6).contains(&self.entries.len()) {
            return Err(Error::Config(alloc::format!(
                "anchor group has {} entries, expected 3-6",
                self.entries.len()
            )));
        }
        let levels: BTreeSet<u8> = self.entries.iter().map(|a| a.level).collect();
        if levels.len() < 2 {
            return Err(Error::Config("anchor group spans fewer than 2 levels".into()));
        }
        for a in &self.entries {
            if !(1.0..=5.0).contains(&a.mean_rating) {
                return Err(Error::OutOfRange { what: "anchor mean rating", value: a.mean_rating });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    ScoreOutOfRange { rater: String, image: ImageId, dimension: Dimension, score: i32 },
    SelfPair { rater: String, image: ImageId, dimension: Dimension },
    DuplicateJudgment { rater: String, a: ImageId, b: ImageId, dimension: Dimension },
    DisconnectedGroup { group: GroupKey, components: usize },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Report-only validation. `category_of` maps images to their category;
/// images it does not know fall into the empty-string category.
pub fn validate_dataset(
    ratings: &[RatingRecord],
    judgments: &[PairJudgment],
    category_of: &BTreeMap<ImageId, String>,
) -> ValidationReport {
    let mut issues = Vec::new();
    for r in ratings {
        if !(MIN_SCORE..=MAX_SCORE).contains(&r.score) {
            issues.push(Issue::ScoreOutOfRange {
                rater: r.rater.clone(),
                image: r.image.clone(),
                dimension: r.dimension.clone(),
                score: r.score,
            });
        }
    }

    let mut seen = BTreeSet::new();
    let mut groups: BTreeMap<GroupKey, Vec<(ImageId, ImageId)>> = BTreeMap::new();
    for j in judgments {
        if j.a == j.b {
            issues.push(Issue::SelfPair {
                rater: j.rater.clone(),
                image: j.a.clone(),
                dimension: j.dimension.clone(),
            });
            continue;
        }
        let (a, b) = j.pair_key();
        if !j.is_repeat && !seen.insert((j.rater.clone(), a.clone(), b.clone(), j.dimension.clone()))
        {
            issues.push(Issue::DuplicateJudgment {
                rater: j.rater.clone(),
                a: a.clone(),
                b: b.clone(),
                dimension: j.dimension.clone(),
            });
        }
        let category = category_of.get(&j.a).cloned().unwrap_or_default();
        groups.entry(GroupKey::new(category, j.dimension.clone())).or_default().push((a, b));
    }

    for (group, pairs) in groups {
        let graph = ComparisonGraph::from_pairs(pairs.iter().map(|(a, b)| (a, b)));
        let components = graph.component_count();
        if components > 1 {
            issues.push(Issue::DisconnectedGroup { group, components });
        }
    }
    ValidationReport { issues }
}

/// Projects one rater's pointwise scores onto pairwise outcomes.
///
/// `ratings` must all come from the same rater and dimension. Repeat records
/// are ignored in favour of the first-pass score.
pub fn induce_pairwise_from_ratings(
    ratings: &[RatingRecord],
    pairs: &[(ImageId, ImageId)],
) -> Result<Vec<PairJudgment>> {
    let Some(first) = ratings.first() else {
        return Err(Error::Empty("ratings"));
    };
    let mut score: BTreeMap<&ImageId, &RatingRecord> = BTreeMap::new();
    for r in ratings.iter().filter(|r| !r.is_repeat) {
        score.entry(&r.image).or_insert(r);
    }
    pairs
        .iter()
        .map(|(a, b)| {
            let missing = |img: &ImageId| Error::MissingScore {
                image: img.clone(),
                rater: first.rater.clone(),
            };
            let ra = score.get(a).ok_or_else(|| missing(a))?;
            let rb = score.get(b).ok_or_else(|| missing(b))?;
            Ok(PairJudgment {
                rater: first.rater.clone(),
                a: a.clone(),
                b: b.clone(),
                dimension: first.dimension.clone(),
                outcome: Outcome::from_scores(ra.score, rb.score),
                timestamp_ms: ra.timestamp_ms.max(rb.timestamp_ms),
                is_repeat: false,
            })
        })
        .collect()
}
