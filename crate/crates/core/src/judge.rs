//! The judge abstraction and a seeded Thurstone simulator.
//!
//! A judge compares two images (one outcome per dimension) or scores a
//! single image (one real per dimension). IO-backed judges live in the std
//! companion crate; this module only fixes the contract.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::calibration::ScoreSpan;
use crate::model::{DimensionSet, ImageId, Outcome};
use crate::rng::{keyed_rng, mix_key};

/// Why a parsed response was rejected.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("no <answer>...</answer> block")]
    MissingAnswer,
    #[error("answer is not valid JSON: {0}")]
    InvalidJson(String),
    #[error("answer lacks key `{0}`")]
    MissingKey(String),
    #[error("key `{key}` has unrecognised label `{value}`")]
    BadLabel { key: String, value: String },
    #[error("key `{key}` is not a number")]
    NonNumeric { key: String },
    #[error("key `{key}` value {value} outside [{low}, {high}]")]
    OutOfRange { key: String, value: f64, low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JudgeError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response ({reason})")]
    Malformed { reason: ParseError, raw: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("judge has no data for image {0}")]
    UnknownImage(ImageId),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    /// One outcome per configured dimension, first image's perspective.
    Pairwise(Vec<Outcome>),
    /// One score per configured dimension.
    Pointwise(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgeVerdict {
    pub answer: Verdict,
    pub raw_response: Option<String>,
}

impl JudgeVerdict {
    pub fn pairwise(outcomes: Vec<Outcome>) -> Self {
        Self { answer: Verdict::Pairwise(outcomes), raw_response: None }
    }

    pub fn pointwise(scores: Vec<f64>) -> Self {
        Self { answer: Verdict::Pointwise(scores), raw_response: None }
    }

    pub fn outcomes(&self) -> Option<&[Outcome]> {
        match &self.answer {
            Verdict::Pairwise(o) => Some(o),
            Verdict::Pointwise(_) => None,
        }
    }

    pub fn scores(&self) -> Option<&[f64]> {
        match &self.answer {
            Verdict::Pointwise(s) => Some(s),
            Verdict::Pairwise(_) => None,
        }
    }

    /// Swaps the roles of the two images in a pairwise verdict.
    pub fn mirrored(&self) -> Self {
        let answer = match &self.answer {
            Verdict::Pairwise(o) => Verdict::Pairwise(o.iter().map(|x| x.mirrored()).collect()),
            other => other.clone(),
        };
        Self { answer, raw_response: self.raw_response.clone() }
    }
}

pub trait Judge {
    fn dimensions(&self) -> &DimensionSet;

    fn compare(&mut self, a: &ImageId, b: &ImageId) -> Result<JudgeVerdict, JudgeError>;

    fn score(&mut self, image: &ImageId) -> Result<JudgeVerdict, JudgeError>;

    /// Concurrent request limit; `None` means unbounded.
    fn max_in_flight(&self) -> Option<usize> {
        None
    }
}

impl<J: Judge + ?Sized> Judge for &mut J {
    fn dimensions(&self) -> &DimensionSet {
        (**self).dimensions()
    }
    fn compare(&mut self, a: &ImageId, b: &ImageId) -> Result<JudgeVerdict, JudgeError> {
        (**self).compare(a, b)
    }
    fn score(&mut self, image: &ImageId) -> Result<JudgeVerdict, JudgeError> {
        (**self).score(image)
    }
    fn max_in_flight(&self) -> Option<usize> {
        (**self).max_in_flight()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticJudgeConfig {
    /// Per-image latent quality, one value per dimension.
    pub latent: BTreeMap<ImageId, Vec<f64>>,
    pub noise_std: f64,
    pub tie_band: f64,
    pub seed: u64,
    /// Clamp range for pointwise scores.
    pub span: ScoreSpan,
}

/// Thurstone judge: `u ~ N(Δlatent, 2σ²)` per dimension, with `|u| ≤ δ` read
/// as a tie. Noise is keyed on the canonical pair order, so presenting the
/// pair the other way round mirrors the verdict exactly.
#[derive(Debug, Clone)]
pub struct SyntheticJudge {
    dims: DimensionSet,
    config: SyntheticJudgeConfig,
}

impl SyntheticJudge {
    pub fn new(dims: DimensionSet, config: SyntheticJudgeConfig) -> crate::Result<Self> {
        if !(config.noise_std >= 0.0 && config.noise_std.is_finite()) {
            return Err(crate::Error::OutOfRange { what: "noise_std", value: config.noise_std });
        }
        if !(config.tie_band >= 0.0 && config.tie_band.is_finite()) {
            return Err(crate::Error::OutOfRange { what: "tie_band", value: config.tie_band });
        }
        if let Some((id, v)) = config.latent.iter().find(|(_, v)| v.len() != dims.len()) {
            return Err(crate::Error::Config(alloc::format!(
                "image {id} has {} latent values for {} dimensions",
                v.len(),
                dims.len()
            )));
        }
        Ok(Self { dims, config })
    }

    pub fn config(&self) -> &SyntheticJudgeConfig {
        &self.config
    }

    fn latent(&self, id: &ImageId) -> Result<&[f64], JudgeError> {
        self.config.latent.get(id).map(Vec::as_slice).ok_or_else(|| JudgeError::UnknownImage(id.clone()))
    }

    fn noise(&self, tag: &[u8], first: &ImageId, second: &[u8], dim: usize) -> f64 {
        let key = mix_key(&[
            &self.config.seed.to_le_bytes(),
            tag,
            first.as_str().as_bytes(),
            second,
            self.dims.as_slice()[dim].as_str().as_bytes(),
        ]);
        StandardNormal.sample(&mut keyed_rng(key, 0))
    }
}

impl Judge for SyntheticJudge {
    fn dimensions(&self) -> &DimensionSet {
        &self.dims
    }

    fn compare(&mut self, a: &ImageId, b: &ImageId) -> Result<JudgeVerdict, JudgeError> {
        if a == b {
            return Err(JudgeError::Protocol(alloc::format!("self comparison of {a}")));
        }
        let swapped = a > b;
        let (first, second) = if swapped { (b, a) } else { (a, b) };
        let (lf, ls) = (self.latent(first)?, self.latent(second)?);
        let scale = core::f64::consts::SQRT_2 * self.config.noise_std;
        let mut outcomes = Vec::with_capacity(self.dims.len());
        for d in 0..self.dims.len() {
            let z = if scale > 0.0 { self.noise(b"pair", first, second.as_str().as_bytes(), d) } else { 0.0 };
            let u = lf[d] - ls[d] + scale * z;
            let o = if u > self.config.tie_band {
                Outcome::AWins
            } else if u < -self.config.tie_band {
                Outcome::BWins
            } else {
                Outcome::Tie
            };
            outcomes.push(if swapped { o.mirrored() } else { o });
        }
        Ok(JudgeVerdict::pairwise(outcomes))
    }

    fn score(&mut self, image: &ImageId) -> Result<JudgeVerdict, JudgeError> {
        let latent = self.latent(image)?;
        let span = self.config.span;
        let mut scores = Vec::with_capacity(self.dims.len());
        for (d, &l) in latent.iter().enumerate() {
            let z = if self.config.noise_std > 0.0 { self.noise(b"point", image, b"", d) } else { 0.0 };
            let s = (l + self.config.noise_std * z).clamp(span.low, span.high);
            scores.push(libm::round(s * 100.0) / 100.0);
        }
        Ok(JudgeVerdict::pointwise(scores))
    }
}

/// Wraps a judge and counts the calls that reach it.
#[derive(Debug, Clone)]
pub struct CountingJudge<J> {
    pub inner: J,
    pub compare_calls: u64,
    pub score_calls: u64,
}

impl<J> CountingJudge<J> {
    pub fn new(inner: J) -> Self {
        Self { inner, compare_calls: 0, score_calls: 0 }
    }

    pub fn total_calls(&self) -> u64 {
        self.compare_calls + self.score_calls
    }
}

impl<J: Judge> Judge for CountingJudge<J> {
    fn dimensions(&self) -> &DimensionSet {
        self.inner.dimensions()
    }

    fn compare(&mut self, a: &ImageId, b: &ImageId) -> Result<JudgeVerdict, JudgeError> {
        self.compare_calls += 1;
        self.inner.compare(a, b)
    }

    fn score(&mut self, image: &ImageId) -> Result<JudgeVerdict, JudgeError> {
        self.score_calls += 1;
        self.inner.score(image)
    }

    fn max_in_flight(&self) -> Option<usize> {
        self.inner.max_in_flight()
    }
}
