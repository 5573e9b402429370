//! JSONL record formats, the corpus manifest and per-group splitting.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use prefscore_core::calibration::select_anchors;
use prefscore_core::{Anchor, AnchorSet, Dimension, GroupKey, ImageId, Outcome, PairJudgment, RatingRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Category used when no corpus manifest is given.
pub const DEFAULT_CATEGORY: &str = "default";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

impl FormatError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

/// Wire label for a three-way outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeLabel {
    #[serde(rename = "A", alias = "a")]
    A,
    #[serde(rename = "TIE", alias = "tie", alias = "T", alias = "t")]
    Tie,
    #[serde(rename = "B", alias = "b")]
    B,
}

impl From<Outcome> for OutcomeLabel {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::AWins => Self::A,
            Outcome::Tie => Self::Tie,
            Outcome::BWins => Self::B,
        }
    }
}

impl From<OutcomeLabel> for Outcome {
    fn from(o: OutcomeLabel) -> Self {
        match o {
            OutcomeLabel::A => Outcome::AWins,
            OutcomeLabel::Tie => Outcome::Tie,
            OutcomeLabel::B => Outcome::BWins,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentLine {
    pub rater: String,
    pub a: String,
    pub b: String,
    pub dimension: String,
    pub outcome: OutcomeLabel,
    #[serde(default)]
    pub ts: i64,
    #[serde(default)]
    pub repeat: bool,
}

impl JudgmentLine {
    /// Converts to a canonical judgment (`a < b`, outcome mirrored if swapped).
    pub fn into_judgment(self) -> PairJudgment {
        PairJudgment {
            rater: self.rater,
            a: self.a.into(),
            b: self.b.into(),
            dimension: self.dimension.into(),
            outcome: self.outcome.into(),
            timestamp_ms: self.ts,
            is_repeat: self.repeat,
        }
        .canonical()
    }
}

impl From<&PairJudgment> for JudgmentLine {
    fn from(j: &PairJudgment) -> Self {
        Self {
            rater: j.rater.clone(),
            a: j.a.to_string(),
            b: j.b.to_string(),
            dimension: j.dimension.to_string(),
            outcome: j.outcome.into(),
            ts: j.timestamp_ms,
            repeat: j.is_repeat,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingLine {
    pub rater: String,
    pub image: String,
    pub dimension: String,
    pub score: i32,
    #[serde(default)]
    pub ts: i64,
    #[serde(default)]
    pub repeat: bool,
}

impl From<RatingLine> for RatingRecord {
    fn from(r: RatingLine) -> Self {
        RatingRecord {
            rater: r.rater,
            image: r.image.into(),
            dimension: r.dimension.into(),
            score: r.score,
            timestamp_ms: r.ts,
            is_repeat: r.repeat,
        }
    }
}

impl From<&RatingRecord> for RatingLine {
    fn from(r: &RatingRecord) -> Self {
        Self {
            rater: r.rater.clone(),
            image: r.image.to_string(),
            dimension: r.dimension.to_string(),
            score: r.score,
            ts: r.timestamp_ms,
            repeat: r.is_repeat,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub category: String,
    #[serde(default)]
    pub path: String,
}

/// Image id → category and file path.
pub type Corpus = BTreeMap<String, CorpusEntry>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorLine {
    #[serde(default = "default_category")]
    pub category: String,
    pub dimension: String,
    pub image: String,
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median: Option<f64>,
    pub level: u8,
}

fn default_category() -> String {
    DEFAULT_CATEGORY.to_string()
}

/// Per-image latent or score for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLine {
    #[serde(default = "default_category")]
    pub category: String,
    pub dimension: String,
    pub image: String,
    #[serde(rename = "q", alias = "latent", default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Bridge output record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLine {
    pub image: String,
    pub dimension: String,
    pub score: f64,
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, FormatError> {
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| FormatError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| FormatError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    rows: impl IntoIterator<Item = &'a T>,
) -> Result<(), FormatError> {
    let file = File::create(path).map_err(|e| FormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row).expect("records always serialise");
        writeln!(w, "{line}").map_err(|e| FormatError::io(path, e))?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FormatError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut text = serde_json::to_string_pretty(value).expect("records always serialise");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| FormatError::io(path, e))
}

pub fn read_judgments(path: &Path) -> Result<Vec<PairJudgment>, FormatError> {
    Ok(read_jsonl::<JudgmentLine>(path)?.into_iter().map(JudgmentLine::into_judgment).collect())
}

pub fn read_ratings(path: &Path) -> Result<Vec<RatingRecord>, FormatError> {
    Ok(read_jsonl::<RatingLine>(path)?.into_iter().map(RatingRecord::from).collect())
}

pub fn read_anchors(path: &Path) -> Result<BTreeMap<GroupKey, AnchorSet>, FormatError> {
    let mut out: BTreeMap<GroupKey, AnchorSet> = BTreeMap::new();
    for a in read_jsonl::<AnchorLine>(path)? {
        out.entry(GroupKey::new(a.category, a.dimension)).or_default().entries.push(Anchor {
            image: a.image.into(),
            mean_rating: a.mean,
            median_rating: a.median,
            level: a.level,
        });
    }
    Ok(out)
}

pub fn anchor_lines(anchors: &BTreeMap<GroupKey, AnchorSet>) -> Vec<AnchorLine> {
    anchors
        .iter()
        .flat_map(|(key, set)| {
            set.entries.iter().map(move |a| AnchorLine {
                category: key.category.clone(),
                dimension: key.dimension.to_string(),
                image: a.image.to_string(),
                mean: a.mean_rating,
                median: a.median_rating,
                level: a.level,
            })
        })
        .collect()
}

/// All records belonging to one category–dimension group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Group {
    pub judgments: Vec<PairJudgment>,
    pub ratings: Vec<RatingRecord>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub judgments: Vec<PairJudgment>,
    pub ratings: Vec<RatingRecord>,
    pub corpus: Option<Corpus>,
}

impl Dataset {
    pub fn load(
        judgments: Option<&Path>,
        ratings: Option<&Path>,
        corpus: Option<&Path>,
    ) -> Result<Self, FormatError> {
        Ok(Self {
            judgments: judgments.map(read_judgments).transpose()?.unwrap_or_default(),
            ratings: ratings.map(read_ratings).transpose()?.unwrap_or_default(),
            corpus: corpus.map(read_json).transpose()?,
        })
    }

    pub fn category_of(&self, image: &ImageId) -> String {
        self.corpus
            .as_ref()
            .and_then(|c| c.get(image.as_str()))
            .map_or_else(default_category, |e| e.category.clone())
    }

    pub fn category_map(&self) -> BTreeMap<ImageId, String> {
        let mut ids: Vec<&ImageId> = self.judgments.iter().flat_map(|j| [&j.a, &j.b]).collect();
        ids.extend(self.ratings.iter().map(|r| &r.image));
        ids.into_iter().map(|id| (id.clone(), self.category_of(id))).collect()
    }

    /// Records split by group. A judgment takes its first image's category.
    pub fn groups(&self) -> BTreeMap<GroupKey, Group> {
        let mut out: BTreeMap<GroupKey, Group> = BTreeMap::new();
        for j in &self.judgments {
            let key = GroupKey::new(self.category_of(&j.a), j.dimension.clone());
            out.entry(key).or_default().judgments.push(j.clone());
        }
        for r in &self.ratings {
            let key = GroupKey::new(self.category_of(&r.image), r.dimension.clone());
            out.entry(key).or_default().ratings.push(r.clone());
        }
        out
    }
}

/// Anchors picked from a group's first-pass ratings: up to `per_level`
/// images at each of levels 2, 3 and 4 with the lowest rating spread.
pub fn anchors_from_ratings(ratings: &[RatingRecord], per_level: usize) -> AnchorSet {
    let mut per_image: BTreeMap<ImageId, Vec<f64>> = BTreeMap::new();
    for r in ratings.iter().filter(|r| !r.is_repeat) {
        per_image.entry(r.image.clone()).or_default().push(f64::from(r.score));
    }
    select_anchors(&per_image, &[2, 3, 4], per_level)
}

pub fn score_lines(key: &GroupKey, latent: &BTreeMap<ImageId, f64>, scores: &BTreeMap<ImageId, f64>) -> Vec<ScoreLine> {
    latent
        .iter()
        .map(|(id, &q)| ScoreLine {
            category: key.category.clone(),
            dimension: key.dimension.to_string(),
            image: id.to_string(),
            latent: Some(q),
            score: scores.get(id).copied(),
        })
        .collect()
}

/// Splits score lines into per-group `image → value` tables, taking the
/// calibrated score when present and the latent otherwise.
pub fn group_scores(lines: &[ScoreLine]) -> BTreeMap<GroupKey, BTreeMap<ImageId, f64>> {
    let mut out: BTreeMap<GroupKey, BTreeMap<ImageId, f64>> = BTreeMap::new();
    for l in lines {
        if let Some(v) = l.score.or(l.latent) {
            out.entry(GroupKey::new(l.category.clone(), Dimension::new(l.dimension.clone())))
                .or_default()
                .insert(l.image.clone().into(), v);
        }
    }
    out
}
