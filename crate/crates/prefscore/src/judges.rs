//! IO-backed judges: transcript replay and recording, presentation-order
//! swapping, and a remote chat-completions endpoint.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use base64::Engine as _;
use prefscore_core::calibration::ScoreSpan;
use prefscore_core::judge::{Judge, JudgeError, JudgeVerdict, ParseError, Verdict};
use prefscore_core::{mix_key, DimensionSet, ImageId};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::formats::{read_jsonl, Corpus, FormatError, OutcomeLabel};
use crate::prompt::{parse_response, render_prompt, render_template, PromptMode, Strictness};

/// One judge call as stored in a transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub mode: PromptMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    /// Dimension name → `"A"`/`"B"`/`"TIE"` or a score.
    pub verdict: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

fn verdict_map(v: &JudgeVerdict, dims: &DimensionSet) -> Map<String, Value> {
    let mut m = Map::new();
    match &v.answer {
        Verdict::Pairwise(os) => {
            for (d, o) in dims.iter().zip(os) {
                m.insert(d.to_string(), serde_json::to_value(OutcomeLabel::from(*o)).unwrap());
            }
        }
        Verdict::Pointwise(ss) => {
            for (d, s) in dims.iter().zip(ss) {
                m.insert(d.to_string(), json!(s));
            }
        }
    }
    m
}

fn verdict_from_map(mode: PromptMode, map: &Map<String, Value>, dims: &DimensionSet) -> Result<Verdict, JudgeError> {
    let bad = |reason: ParseError| JudgeError::Malformed { reason, raw: Value::Object(map.clone()).to_string() };
    let get = |d: &str| map.get(d).ok_or_else(|| bad(ParseError::MissingKey(d.to_string())));
    match mode {
        PromptMode::Pairwise => dims
            .iter()
            .map(|d| {
                let v = get(d.as_str())?;
                serde_json::from_value::<OutcomeLabel>(v.clone())
                    .map(Into::into)
                    .map_err(|_| bad(ParseError::BadLabel { key: d.to_string(), value: v.to_string() }))
            })
            .collect::<Result<_, _>>()
            .map(Verdict::Pairwise),
        PromptMode::Pointwise => dims
            .iter()
            .map(|d| get(d.as_str())?.as_f64().ok_or_else(|| bad(ParseError::NonNumeric { key: d.to_string() })))
            .collect::<Result<_, _>>()
            .map(Verdict::Pointwise),
    }
}

impl TranscriptLine {
    pub fn pairwise(a: &ImageId, b: &ImageId, v: &JudgeVerdict, dims: &DimensionSet) -> Self {
        Self {
            mode: PromptMode::Pairwise,
            a: Some(a.to_string()),
            b: Some(b.to_string()),
            image: None,
            verdict: verdict_map(v, dims),
            raw: v.raw_response.clone(),
        }
    }

    pub fn pointwise(image: &ImageId, v: &JudgeVerdict, dims: &DimensionSet) -> Self {
        Self {
            mode: PromptMode::Pointwise,
            a: None,
            b: None,
            image: Some(image.to_string()),
            verdict: verdict_map(v, dims),
            raw: v.raw_response.clone(),
        }
    }
}

/// Answers from a recorded transcript. A pair recorded as `(a, b)` also
/// answers `(b, a)` with the mirrored verdict.
#[derive(Debug, Clone)]
pub struct ReplayJudge {
    dims: DimensionSet,
    pairs: BTreeMap<(String, String), JudgeVerdict>,
    points: BTreeMap<String, JudgeVerdict>,
}

impl ReplayJudge {
    pub fn from_lines(dims: DimensionSet, lines: Vec<TranscriptLine>) -> Result<Self, JudgeError> {
        let mut pairs = BTreeMap::new();
        let mut points = BTreeMap::new();
        for line in lines {
            let answer = verdict_from_map(line.mode, &line.verdict, &dims)?;
            let verdict = JudgeVerdict { answer, raw_response: line.raw };
            match (line.mode, line.a, line.b, line.image) {
                (PromptMode::Pairwise, Some(a), Some(b), _) => {
                    pairs.entry((a, b)).or_insert(verdict);
                }
                (PromptMode::Pointwise, _, _, Some(image)) => {
                    points.entry(image).or_insert(verdict);
                }
                _ => return Err(JudgeError::Protocol("transcript line lacks its image ids".into())),
            }
        }
        Ok(Self { dims, pairs, points })
    }

    pub fn open(dims: DimensionSet, path: &Path) -> Result<Self, ReplayError> {
        let lines = read_jsonl(path)?;
        Ok(Self::from_lines(dims, lines)?)
    }

    pub fn len(&self) -> usize {
        self.pairs.len() + self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
}

impl Judge for ReplayJudge {
    fn dimensions(&self) -> &DimensionSet {
        &self.dims
    }

    fn compare(&mut self, a: &ImageId, b: &ImageId) -> Result<JudgeVerdict, JudgeError> {
        let key = (a.to_string(), b.to_string());
        if let Some(v) = self.pairs.get(&key) {
            return Ok(v.clone());
        }
        let flipped = (key.1, key.0);
        self.pairs
            .get(&flipped)
            .map(JudgeVerdict::mirrored)
            .ok_or_else(|| JudgeError::Protocol(format!("no recorded verdict for ({a}, {b})")))
    }

    fn score(&mut self, image: &ImageId) -> Result<JudgeVerdict, JudgeError> {
        self.points
            .get(image.as_str())
            .cloned()
            .ok_or_else(|| JudgeError::Protocol(format!("no recorded score for {image}")))
    }
}

/// Forwards to `inner` and appends every successful call to `sink` as a
/// transcript line.
pub struct RecordingJudge<J, W> {
    pub inner: J,
    sink: W,
}

impl<J: Judge, W: Write> RecordingJudge<J, W> {
    pub fn new(inner: J, sink: W) -> Self {
        Self { inner, sink }
    }

    pub fn into_parts(self) -> (J, W) {
        (self.inner, self.sink)
    }

    fn log(&mut self, line: &TranscriptLine) -> Result<(), JudgeError> {
        let text = serde_json::to_string(line).expect("transcript lines serialise");
        writeln!(self.sink, "{text}")
            .and_then(|_| self.sink.flush())
            .map_err(|e| JudgeError::Transport(format!("transcript write failed: {e}")))
    }
}

impl<J: Judge, W: Write> Judge for RecordingJudge<J, W> {
    fn dimensions(&self) -> &DimensionSet {
        self.inner.dimensions()
    }

    fn compare(&mut self, a: &ImageId, b: &ImageId) -> Result<JudgeVerdict, JudgeError> {
        let v = self.inner.compare(a, b)?;
        self.log(&TranscriptLine::pairwise(a, b, &v, self.inner.dimensions()))?;
        Ok(v)
    }

    fn score(&mut self, image: &ImageId) -> Result<JudgeVerdict, JudgeError> {
        let v = self.inner.score(image)?;
        self.log(&TranscriptLine::pointwise(image, &v, self.inner.dimensions()))?;
        Ok(v)
    }

    fn max_in_flight(&self) -> Option<usize> {
        self.inner.max_in_flight()
    }
}

/// Presents each pair in a seeded random order and mirrors the verdict back,
/// so a judge with a position bias sees both layouts equally often.
pub struct SwapJudge<J> {
    pub inner: J,
    seed: u64,
}

impl<J> SwapJudge<J> {
    pub fn new(inner: J, seed: u64) -> Self {
        Self { inner, seed }
    }

    pub fn swaps(&self, a: &ImageId, b: &ImageId) -> bool {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        mix_key(&[&self.seed.to_le_bytes(), b"swap", lo.as_str().as_bytes(), hi.as_str().as_bytes()]) & 1 == 1
    }
}

impl<J: Judge> Judge for SwapJudge<J> {
    fn dimensions(&self) -> &DimensionSet {
        self.inner.dimensions()
    }

    fn compare(&mut self, a: &ImageId, b: &ImageId) -> Result<JudgeVerdict, JudgeError> {
        if self.swaps(a, b) {
            Ok(self.inner.compare(b, a)?.mirrored())
        } else {
            self.inner.compare(a, b)
        }
    }

    fn score(&mut self, image: &ImageId) -> Result<JudgeVerdict, JudgeError> {
        self.inner.score(image)
    }

    fn max_in_flight(&self) -> Option<usize> {
        self.inner.max_in_flight()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token, if any.
    pub token_env: Option<String>,
    pub timeout: Duration,
    /// Retries after the first attempt on transient failures.
    pub retries: u32,
    pub backoff: Duration,
    pub cache_dir: Option<PathBuf>,
    pub max_in_flight: usize,
    pub span: ScoreSpan,
    /// Replaces the built-in prompt wording; see [`render_template`].
    pub templates: Option<(String, String)>,
    pub strictness: Strictness,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            token_env: None,
            timeout: Duration::from_secs(120),
            retries: 3,
            backoff: Duration::from_millis(500),
            cache_dir: None,
            max_in_flight: 4,
            span: ScoreSpan::FIVE_POINT,
            templates: None,
            strictness: Strictness::Strict,
        }
    }
}

/// Judge backed by a chat-completions style HTTP endpoint. Responses are
/// cached on disk by prompt hash and image ids when a cache dir is set.
pub struct RemoteJudge {
    dims: DimensionSet,
    config: RemoteConfig,
    corpus: Corpus,
    agent: ureq::Agent,
    /// Requests that actually reached the network.
    pub requests: u64,
}

enum Attempt {
    Done(String),
    Transient(String),
    Fatal(String),
}

impl RemoteJudge {
    pub fn new(dims: DimensionSet, corpus: Corpus, config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self { dims, config, corpus, agent, requests: 0 }
    }

    fn prompt(&self, mode: PromptMode) -> String {
        match (&self.config.templates, mode) {
            (Some((point, _)), PromptMode::Pointwise) => render_template(point, mode, &self.dims, self.config.span),
            (Some((_, pair)), PromptMode::Pairwise) => render_template(pair, mode, &self.dims, self.config.span),
            (None, _) => render_prompt(mode, &self.dims, self.config.span),
        }
    }

    fn image_url(&self, id: &ImageId) -> Result<String, JudgeError> {
        let entry = self.corpus.get(id.as_str()).ok_or_else(|| JudgeError::UnknownImage(id.clone()))?;
        let p = &entry.path;
        if p.is_empty() {
            return Err(JudgeError::Transport(format!("corpus entry {id} has no image path")));
        }
        if p.starts_with("http://") || p.starts_with("https://") || p.starts_with("data:") {
            return Ok(p.clone());
        }
        let bytes = std::fs::read(p).map_err(|e| JudgeError::Transport(format!("reading {p}: {e}")))?;
        let mime = match Path::new(p).extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("png") => "image/png",
            Some("webp") => "image/webp",
            Some("gif") => "image/gif",
            _ => "image/jpeg",
        };
        Ok(format!("data:{mime};base64,{}", base64::engine::general_purpose::STANDARD.encode(bytes)))
    }

    fn cache_path(&self, prompt: &str, ids: &[&ImageId]) -> Option<PathBuf> {
        let dir = self.config.cache_dir.as_ref()?;
        let mut h = Sha256::new();
        h.update(self.config.model.as_bytes());
        h.update([0]);
        h.update(prompt.as_bytes());
        for id in ids {
            h.update([0]);
            h.update(id.as_str().as_bytes());
        }
        Some(dir.join(format!("{}.txt", hex::encode(h.finalize()))))
    }

    fn attempt(&mut self, body: &Value) -> Attempt {
        self.requests += 1;
        let mut req = self.agent.post(&self.config.endpoint).header("content-type", "application/json");
        if let Some(var) = &self.config.token_env {
            if let Ok(token) = std::env::var(var) {
                req = req.header("authorization", &format!("Bearer {token}"));
            }
        }
        let mut resp = match req.send(body.to_string()) {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(e.to_string()),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Transient(e.to_string()),
        };
        if status == 429 || status >= 500 {
            return Attempt::Transient(format!("HTTP {status}: {text}"));
        }
        if status >= 400 {
            return Attempt::Fatal(format!("HTTP {status}: {text}"));
        }
        let parsed: Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => return Attempt::Fatal(format!("response is not JSON: {e}")),
        };
        match parsed.pointer("/choices/0/message/content").and_then(Value::as_str) {
            Some(content) => Attempt::Done(content.to_string()),
            None => Attempt::Fatal(format!("response lacks choices[0].message.content: {text}")),
        }
    }

    fn query(&mut self, mode: PromptMode, ids: &[&ImageId]) -> Result<JudgeVerdict, JudgeError> {
        let prompt = self.prompt(mode);
        let cache = self.cache_path(&prompt, ids);
        let raw = match cache.as_ref().and_then(|p| std::fs::read_to_string(p).ok()) {
            Some(hit) => hit,
            None => {
                let mut content = vec![json!({"type": "text", "text": prompt})];
                for id in ids {
                    content.push(json!({"type": "image_url", "image_url": {"url": self.image_url(id)?}}));
                }
                let body = json!({
                    "model": self.config.model,
                    "messages": [{"role": "user", "content": content}],
                });
                let mut delay = self.config.backoff;
                let mut tries = 0;
                let raw = loop {
                    match self.attempt(&body) {
                        Attempt::Done(raw) => break raw,
                        Attempt::Fatal(e) => return Err(JudgeError::Transport(e)),
                        Attempt::Transient(e) if tries >= self.config.retries => {
                            return Err(JudgeError::Transport(format!("giving up after {} attempts: {e}", tries + 1)))
                        }
                        Attempt::Transient(_) => {
                            std::thread::sleep(delay);
                            delay *= 2;
                            tries += 1;
                        }
                    }
                };
                if let Some(p) = &cache {
                    if let Some(dir) = p.parent() {
                        let _ = std::fs::create_dir_all(dir);
                    }
                    let _ = std::fs::write(p, &raw);
                }
                raw
            }
        };
        let answer = parse_response(&raw, mode, &self.dims, self.config.span, self.config.strictness)
            .map_err(|reason| JudgeError::Malformed { reason, raw: raw.clone() })?;
        Ok(JudgeVerdict { answer, raw_response: Some(raw) })
    }
}

impl Judge for RemoteJudge {
    fn dimensions(&self) -> &DimensionSet {
        &self.dims
    }

    fn compare(&mut self, a: &ImageId, b: &ImageId) -> Result<JudgeVerdict, JudgeError> {
        self.query(PromptMode::Pairwise, &[a, b])
    }

    fn score(&mut self, image: &ImageId) -> Result<JudgeVerdict, JudgeError> {
        self.query(PromptMode::Pointwise, &[image])
    }

    fn max_in_flight(&self) -> Option<usize> {
        Some(self.config.max_in_flight)
    }
}
