//! Campaign state machine. Every mutation is an [`Event`] appended to a JSONL
//! log before it is applied, so a restarted server replays the log and ends
//! up in the same state.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use prefscore_core::ImageId;
use serde::{Deserialize, Serialize};

use super::config::CampaignConfig;
use super::queue::{annotator_seed, build_queue, category_pairs, shows_swapped, QueueEntry};
use crate::formats::{JudgmentLine, OutcomeLabel, RatingLine};

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> i64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> i64 {
        crate::manifest::now_ms()
    }
}

/// Settable clock for tests; clones share the same time.
#[derive(Debug, Clone, Default)]
pub struct ManualClock(Arc<AtomicI64>);

impl ManualClock {
    pub fn new(start_ms: i64) -> Self {
        Self(Arc::new(AtomicI64::new(start_ms)))
    }

    pub fn set(&self, ms: i64) {
        self.0.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: i64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> i64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionStarted { session: String, annotator: String, category: String, at_ms: i64 },
    TaskIssued { session: String, task: usize, at_ms: i64 },
    SubmissionAccepted {
        session: String,
        task: usize,
        at_ms: i64,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        scores: BTreeMap<String, i32>,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        outcomes: BTreeMap<String, OutcomeLabel>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown annotator {0}")]
    UnknownAnnotator(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown campaign {0}")]
    UnknownCampaign(String),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("guidelines must stay open for another {retry_after_ms} ms")]
    Guidelines { retry_after_ms: i64 },
    #[error("pairwise tasks are locked: {reason}")]
    Locked { reason: String, retry_after_ms: Option<i64> },
    #[error("submitted {retry_after_ms} ms before the minimum viewing time")]
    TooEarly { retry_after_ms: i64 },
    #[error("task {0} was already answered")]
    Duplicate(String),
    #[error("invalid submission: {0}")]
    Invalid(String),
    #[error("campaign config: {0}")]
    Config(String),
    #[error("event log {path}: {message}")]
    Log { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Pointwise,
    Pairwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub kind: TaskKind,
    /// One image for pointwise tasks; left then right for pairwise ones.
    pub images: Vec<String>,
    pub image_urls: Vec<String>,
    pub dimensions: Vec<String>,
    pub min_view_ms: i64,
    pub issued_at_ms: i64,
    pub position: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextTask {
    Task(TaskView),
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub task_id: String,
    #[serde(default)]
    pub scores: BTreeMap<String, i32>,
    #[serde(default)]
    pub outcomes: BTreeMap<String, OutcomeLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub annotator: String,
    pub category: String,
    pub started_at_ms: i64,
    pub guidelines_until_ms: i64,
    pub pointwise_tasks: usize,
    pub pairwise_tasks: usize,
    pub answered: usize,
}

/// One accepted answer, as presented to the annotator.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecord {
    pub annotator: String,
    pub category: String,
    pub kind: TaskKind,
    /// Image index (pointwise) or pair index (pairwise) within the category.
    pub item: usize,
    pub images: Vec<ImageId>,
    pub is_repeat: bool,
    pub issued_at_ms: i64,
    pub submitted_at_ms: i64,
    pub scores: BTreeMap<String, i32>,
    pub outcomes: BTreeMap<String, OutcomeLabel>,
}

struct Category {
    images: Vec<ImageId>,
    pairs: Vec<(ImageId, ImageId)>,
    annotators: Vec<String>,
}

struct Session {
    annotator: String,
    category: String,
    started_at_ms: i64,
    pointwise: Vec<QueueEntry>,
    pairwise: Vec<QueueEntry>,
    side_seed: u64,
    /// Tasks are strictly sequential: the next task is `answered`.
    answered: usize,
    open: Option<(usize, i64)>,
}

impl Session {
    fn total(&self) -> usize {
        self.pointwise.len() + self.pairwise.len()
    }

    fn pointwise_done(&self) -> bool {
        self.answered >= self.pointwise.len()
    }
}

pub fn session_id(annotator: &str, category: &str) -> String {
    format!("s-{annotator}-{category}")
}

fn task_id(index: usize) -> String {
    format!("t{index}")
}

fn parse_task_id(id: &str) -> Option<usize> {
    id.strip_prefix('t')?.parse().ok()
}

pub struct Campaign {
    config: CampaignConfig,
    categories: BTreeMap<String, Category>,
    sessions: BTreeMap<String, Session>,
    records: Vec<TaskRecord>,
    clock: Box<dyn Clock>,
    log: Option<(PathBuf, File)>,
}

impl Campaign {
    /// Builds the campaign and replays `log_path` when it already exists.
    pub fn open(config: CampaignConfig, log_path: Option<&Path>, clock: Box<dyn Clock>) -> Result<Self, ServiceError> {
        config.validate().map_err(ServiceError::Config)?;
        let mut categories = BTreeMap::new();
        for (name, c) in &config.categories {
            let images: Vec<ImageId> = c.images.iter().map(ImageId::new).collect();
            let pair_seed = annotator_seed(config.seed, "", name, b"pairs");
            let pairs =
                category_pairs(&images, config.budget_for(c), config.max_diameter, pair_seed, config.sampler_attempts)
                    .map_err(|e| ServiceError::Config(format!("category {name}: {e}")))?;
            categories.insert(name.clone(), Category { images, pairs, annotators: c.annotators.clone() });
        }
        let mut campaign = Self { config, categories, sessions: BTreeMap::new(), records: Vec::new(), clock, log: None };
        if let Some(path) = log_path {
            let log_err = |message: String| ServiceError::Log { path: path.to_path_buf(), message };
            if path.exists() {
                let file = File::open(path).map_err(|e| log_err(e.to_string()))?;
                for (i, line) in BufReader::new(file).lines().enumerate() {
                    let line = line.map_err(|e| log_err(e.to_string()))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let event: Event =
                        serde_json::from_str(&line).map_err(|e| log_err(format!("line {}: {e}", i + 1)))?;
                    campaign.apply(event).map_err(|e| log_err(format!("line {}: {e}", i + 1)))?;
                }
            }
            let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| log_err(e.to_string()))?;
            campaign.log = Some((path.to_path_buf(), file));
        }
        Ok(campaign)
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.config
    }

    pub fn records(&self) -> &[TaskRecord] {
        &self.records
    }

    /// The category's sampled pair set.
    pub fn pairs(&self, category: &str) -> Option<&[(ImageId, ImageId)]> {
        self.categories.get(category).map(|c| c.pairs.as_slice())
    }

    /// `(category, annotator)` for every registered annotator.
    pub fn roster(&self) -> Vec<(String, String)> {
        self.categories
            .iter()
            .flat_map(|(name, c)| c.annotators.iter().map(move |a| (name.clone(), a.clone())))
            .collect()
    }

    fn record(&mut self, event: Event) -> Result<(), ServiceError> {
        if let Some((path, file)) = &mut self.log {
            let mut line = serde_json::to_string(&event).expect("event serialises");
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| ServiceError::Log { path: path.clone(), message: e.to_string() })?;
        }
        self.apply(event)
    }

    fn apply(&mut self, event: Event) -> Result<(), ServiceError> {
        match event {
            Event::SessionStarted { session, annotator, category, at_ms } => {
                let cat = self.categories.get(&category).ok_or_else(|| ServiceError::Config(category.clone()))?;
                let n_pairs = cat.pairs.len();
                let n_images = cat.images.len();
                let c = &self.config;
                let pointwise = build_queue(
                    n_images,
                    c.repeats_pointwise,
                    c.min_gap_pointwise,
                    annotator_seed(c.seed, &annotator, &category, b"pointwise"),
                )
                .map_err(ServiceError::Config)?;
                let pairwise = build_queue(
                    n_pairs,
                    c.repeats_pairwise,
                    c.min_gap_pairwise,
                    annotator_seed(c.seed, &annotator, &category, b"pairwise"),
                )
                .map_err(ServiceError::Config)?;
                let side_seed = annotator_seed(c.seed, &annotator, &category, b"sides");
                self.sessions.insert(
                    session,
                    Session { annotator, category, started_at_ms: at_ms, pointwise, pairwise, side_seed, answered: 0, open: None },
                );
            }
            Event::TaskIssued { session, task, at_ms } => {
                let s = self.sessions.get_mut(&session).ok_or(ServiceError::UnknownSession(session))?;
                if task != s.answered {
                    return Err(ServiceError::UnknownTask(task_id(task)));
                }
                s.open = Some((task, at_ms));
            }
            Event::SubmissionAccepted { session, task, at_ms, scores, outcomes } => {
                let s = self.sessions.get_mut(&session).ok_or_else(|| ServiceError::UnknownSession(session.clone()))?;
                let issued_at_ms = match s.open {
                    Some((t, at)) if t == task => at,
                    _ => return Err(ServiceError::UnknownTask(task_id(task))),
                };
                s.open = None;
                s.answered += 1;
                let (kind, entry, images) = presented(&self.categories[&s.category], s, task);
                self.records.push(TaskRecord {
                    annotator: s.annotator.clone(),
                    category: s.category.clone(),
                    kind,
                    item: entry.item,
                    images,
                    is_repeat: entry.is_repeat,
                    issued_at_ms,
                    submitted_at_ms: at_ms,
                    scores,
                    outcomes,
                });
            }
        }
        Ok(())
    }

    fn view(&self, id: &str, s: &Session) -> SessionView {
        SessionView {
            session_id: id.to_string(),
            annotator: s.annotator.clone(),
            category: s.category.clone(),
            started_at_ms: s.started_at_ms,
            guidelines_until_ms: s.started_at_ms + self.config.guidelines_min_ms,
            pointwise_tasks: s.pointwise.len(),
            pairwise_tasks: s.pairwise.len(),
            answered: s.answered,
        }
    }

    /// Starts a session, or returns the existing one for the same annotator
    /// and category. `category` may be omitted when the annotator belongs to
    /// exactly one.
    pub fn start_session(&mut self, annotator: &str, category: Option<&str>) -> Result<SessionView, ServiceError> {
        let member: Vec<&String> =
            self.categories.iter().filter(|(_, c)| c.annotators.iter().any(|a| a == annotator)).map(|(n, _)| n).collect();
        let category = match (category, member.as_slice()) {
            (Some(c), _) if member.iter().any(|m| *m == c) => c.to_string(),
            (None, [only]) => (*only).clone(),
            (None, [_, _, ..]) => return Err(ServiceError::Invalid("annotator has several categories; name one".into())),
            _ => return Err(ServiceError::UnknownAnnotator(annotator.to_string())),
        };
        let id = session_id(annotator, &category);
        if !self.sessions.contains_key(&id) {
            let at_ms = self.clock.now_ms();
            self.record(Event::SessionStarted { session: id.clone(), annotator: annotator.into(), category, at_ms })?;
        }
        Ok(self.view(&id, &self.sessions[&id]))
    }

    pub fn session(&self, id: &str) -> Result<SessionView, ServiceError> {
        let s = self.sessions.get(id).ok_or_else(|| ServiceError::UnknownSession(id.into()))?;
        Ok(self.view(id, s))
    }

    fn pairwise_gate(&self, category: &str, now: i64) -> Result<(), ServiceError> {
        let cat = &self.categories[category];
        let pending: Vec<&String> = cat
            .annotators
            .iter()
            .filter(|a| self.sessions.get(&session_id(a, category)).is_none_or(|s| !s.pointwise_done()))
            .collect();
        if !pending.is_empty() {
            let names: Vec<&str> = pending.iter().map(|s| s.as_str()).collect();
            return Err(ServiceError::Locked {
                reason: format!("pointwise phase still open for {}", names.join(", ")),
                retry_after_ms: None,
            });
        }
        if let Some(at) = self.config.pairwise_unlock_at_ms {
            if now < at {
                return Err(ServiceError::Locked { reason: "unlock time not reached".into(), retry_after_ms: Some(at - now) });
            }
        }
        Ok(())
    }

    /// The open task, or the next one once the gates allow it.
    pub fn next_task(&mut self, id: &str) -> Result<NextTask, ServiceError> {
        let now = self.clock.now_ms();
        let s = self.sessions.get(id).ok_or_else(|| ServiceError::UnknownSession(id.into()))?;
        let until = s.started_at_ms + self.config.guidelines_min_ms;
        if now < until {
            return Err(ServiceError::Guidelines { retry_after_ms: until - now });
        }
        if s.answered >= s.total() {
            return Ok(NextTask::Complete);
        }
        let task = s.answered;
        if s.open.is_none() {
            if task >= s.pointwise.len() {
                let category = s.category.clone();
                self.pairwise_gate(&category, now)?;
            }
            self.record(Event::TaskIssued { session: id.to_string(), task, at_ms: now })?;
        }
        let s = &self.sessions[id];
        let issued_at_ms = s.open.expect("task just issued").1;
        let (kind, _, images) = presented(&self.categories[&s.category], s, task);
        let min_view_ms = match kind {
            TaskKind::Pointwise => self.config.pointwise_min_view_ms,
            TaskKind::Pairwise => self.config.pairwise_min_view_ms,
        };
        let images: Vec<String> = images.into_iter().map(|i| i.as_str().to_string()).collect();
        Ok(NextTask::Task(TaskView {
            task_id: task_id(task),
            kind,
            image_urls: images.iter().map(|i| format!("/images/{i}")).collect(),
            images,
            dimensions: self.config.dimensions.clone(),
            min_view_ms,
            issued_at_ms,
            position: task,
            total: s.total(),
        }))
    }

    pub fn submit(&mut self, id: &str, sub: Submission) -> Result<(), ServiceError> {
        let now = self.clock.now_ms();
        let s = self.sessions.get(id).ok_or_else(|| ServiceError::UnknownSession(id.into()))?;
        let task = parse_task_id(&sub.task_id).ok_or_else(|| ServiceError::UnknownTask(sub.task_id.clone()))?;
        if task < s.answered {
            return Err(ServiceError::Duplicate(sub.task_id));
        }
        let issued_at = match s.open {
            Some((t, at)) if t == task => at,
            _ => return Err(ServiceError::UnknownTask(sub.task_id)),
        };
        let kind = if task < s.pointwise.len() { TaskKind::Pointwise } else { TaskKind::Pairwise };
        let min_view = match kind {
            TaskKind::Pointwise => self.config.pointwise_min_view_ms,
            TaskKind::Pairwise => self.config.pairwise_min_view_ms,
        };
        if now - issued_at < min_view {
            return Err(ServiceError::TooEarly { retry_after_ms: min_view - (now - issued_at) });
        }
        self.check_answer(kind, &sub)?;
        self.record(Event::SubmissionAccepted {
            session: id.to_string(),
            task,
            at_ms: now,
            scores: sub.scores,
            outcomes: sub.outcomes,
        })
    }

    fn check_answer(&self, kind: TaskKind, sub: &Submission) -> Result<(), ServiceError> {
        let dims = &self.config.dimensions;
        let same_keys = |keys: Vec<&String>| keys.len() == dims.len() && keys.iter().all(|k| dims.contains(k));
        match kind {
            TaskKind::Pointwise => {
                if !sub.outcomes.is_empty() || !same_keys(sub.scores.keys().collect()) {
                    return Err(ServiceError::Invalid(format!("pointwise tasks need one score for each of {}", dims.join(", "))));
                }
                if let Some((d, v)) = sub.scores.iter().find(|(_, v)| !(1..=5).contains(*v)) {
                    return Err(ServiceError::Invalid(format!("{d} score {v} outside 1..=5")));
                }
            }
            TaskKind::Pairwise => {
                if !sub.scores.is_empty() || !same_keys(sub.outcomes.keys().collect()) {
                    return Err(ServiceError::Invalid(format!("pairwise tasks need one outcome for each of {}", dims.join(", "))));
                }
            }
        }
        Ok(())
    }

    pub fn export_ratings(&self) -> Vec<RatingLine> {
        self.records
            .iter()
            .filter(|r| r.kind == TaskKind::Pointwise)
            .flat_map(|r| {
                r.scores.iter().map(|(d, &score)| RatingLine {
                    rater: r.annotator.clone(),
                    image: r.images[0].as_str().to_string(),
                    dimension: d.clone(),
                    score,
                    ts: r.submitted_at_ms,
                    repeat: r.is_repeat,
                })
            })
            .collect()
    }

    /// Judgments in presentation order (`a` on the left).
    pub fn export_judgments(&self) -> Vec<JudgmentLine> {
        self.records
            .iter()
            .filter(|r| r.kind == TaskKind::Pairwise)
            .flat_map(|r| {
                r.outcomes.iter().map(|(d, &outcome)| JudgmentLine {
                    rater: r.annotator.clone(),
                    a: r.images[0].as_str().to_string(),
                    b: r.images[1].as_str().to_string(),
                    dimension: d.clone(),
                    outcome,
                    ts: r.submitted_at_ms,
                    repeat: r.is_repeat,
                })
            })
            .collect()
    }
}

fn presented(cat: &Category, s: &Session, task: usize) -> (TaskKind, QueueEntry, Vec<ImageId>) {
    if task < s.pointwise.len() {
        let e = s.pointwise[task];
        (TaskKind::Pointwise, e, vec![cat.images[e.item].clone()])
    } else {
        let e = s.pairwise[task - s.pointwise.len()];
        let (a, b) = &cat.pairs[e.item];
        let images = if shows_swapped(s.side_seed, a, b) { vec![b.clone(), a.clone()] } else { vec![a.clone(), b.clone()] };
        (TaskKind::Pairwise, e, images)
    }
}
