//! The `prefscore` command. Settings come from flags, then the `--config`
//! file, then built-in defaults.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use prefscore_core::bridge::{inference_cost, pseudo_label_corpus};
use prefscore_core::fusion::FusionMethod;
use prefscore_core::judge::{CountingJudge, Judge, JudgeError, SyntheticJudge, SyntheticJudgeConfig, Verdict};
use prefscore_core::reward::{candidate_rewards, gap_threshold_sweep, grpo_advantages, GroupSample};
use prefscore_core::sim::CampaignSpec;
use prefscore_core::stats::{budget_subsample_study, BudgetConfig};
use prefscore_core::{DimensionSet, GroupKey, ImageId};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ToolConfig;
use crate::diagnose::{budget_csv, cross_method_groups, group_protocol, tier_map, TierLine};
use crate::formats::{
    anchor_lines, group_scores, read_anchors, read_json, read_jsonl, write_json, write_jsonl, Corpus, Dataset,
    FormatError, JudgmentLine, PseudoLine, RatingLine, ScoreLine,
};
use crate::judges::{RecordingJudge, RemoteConfig, RemoteJudge, ReplayError, ReplayJudge, SwapJudge};
use crate::manifest::RunManifest;
use crate::pipeline::{calibrate_bridge, calibrate_global, fuse_dataset, method_name, PipelineError};
use crate::prompt::{parse_response, PromptMode, Strictness};
use crate::service::CampaignConfig;
use crate::studies::{
    evaluate_against_ratings, gap_ablation, pair_weight_study, pool_seed_study, simulate_categories, RewardStudy,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Flagged(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Remote(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Flagged(_) => 3,
            CliError::Io(_) => 4,
            CliError::Remote(_) => 5,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io { .. } => CliError::Io(e.to_string()),
            FormatError::Parse { .. } => CliError::Validation(e.to_string()),
        }
    }
}

impl From<prefscore_core::Error> for CliError {
    fn from(e: prefscore_core::Error) -> Self {
        match e {
            prefscore_core::Error::Judge(j) => CliError::Remote(j.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Core(c) => c.into(),
            PipelineError::Validation(m) => CliError::Validation(m),
        }
    }
}

impl From<ReplayError> for CliError {
    fn from(e: ReplayError) -> Self {
        match e {
            ReplayError::Format(f) => f.into(),
            ReplayError::Judge(j) => CliError::Validation(j.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "prefscore", version, about = "Fused preference scores, diagnostics, pseudo-labels and rewards")]
pub struct Cli {
    /// Print reports as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// JSON config file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Latent qualities and calibrated scores from pairwise judgments.
    Fuse {
        #[arg(value_enum)]
        method: FuseMethod,
        #[command(flatten)]
        args: FuseArgs,
    },
    /// Map a latent table to scores.
    Calibrate(CalibrateArgs),
    #[command(subcommand)]
    Diagnose(Diagnose),
    #[command(subcommand)]
    Bridge(Bridge),
    #[command(subcommand)]
    Reward(Reward),
    /// Write a synthetic campaign.
    Simulate(SimulateArgs),
    #[command(subcommand)]
    Study(Study),
    /// Run the annotation service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FuseMethod {
    Elo,
    Dbt,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub judgments: PathBuf,
    /// Ratings to pick anchors from when `--anchors` lacks a group.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    #[arg(long)]
    pub anchors: Option<PathBuf>,
    /// Image id → category map.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Skip the anchor regulariser (the sigmoid still uses the anchors).
    #[arg(long)]
    pub unanchored: bool,
    #[arg(long)]
    pub anchor_gap: Option<f64>,
    #[arg(long)]
    pub passes: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CalibrationMode {
    GlobalSigmoid,
    Bridge,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Score lines carrying `q`.
    #[arg(long)]
    pub latent: PathBuf,
    #[arg(long)]
    pub anchors: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "global-sigmoid")]
    pub mode: CalibrationMode,
    #[arg(long)]
    pub steepness: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    #[arg(long)]
    pub judgments: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Diagnose {
    /// Agreement, split-half, consensus accuracy, stability and consistency per group.
    Protocol {
        #[command(flatten)]
        data: DataArgs,
        /// JSONL of {image, tier} for triplet separation.
        #[arg(long)]
        tiers: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare two score tables.
    Crossmethod {
        #[arg(long)]
        scores_a: PathBuf,
        #[arg(long)]
        scores_b: PathBuf,
        /// Score difference below which a pair counts as a tie.
        #[arg(long = "tie-eps", alias = "tie-epsilon")]
        tie_eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Elo on pair subsamples against Elo on every pair.
    Budget {
        #[command(flatten)]
        data: DataArgs,
        /// `a..b[:step]` or a comma list.
        #[arg(long, default_value = "0.1..0.8")]
        fractions: String,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 20)]
        max_retries: usize,
        /// CSV curve.
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-rater-out stability per group and protocol.
    Stability {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum JudgeKind {
    Synthetic,
    Replay,
    Remote,
}

#[derive(Debug, Subcommand)]
pub enum Bridge {
    /// Pool, reference comparisons and calibration over a corpus.
    Run(Box<BridgeArgs>),
}

#[derive(Debug, Args)]
pub struct BridgeArgs {
    /// Image id → {category, path}.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub judge: JudgeKind,
    #[arg(long)]
    pub pool_size: Option<usize>,
    #[arg(long)]
    pub refs: Option<usize>,
    #[arg(long)]
    pub pool_seed: Option<u64>,
    /// Present each pair in a seeded random order.
    #[arg(long)]
    pub swap_ab: bool,
    /// Append every judge call to this transcript.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Transcript for `--judge replay`.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Planted latents for `--judge synthetic` (score lines with `q`).
    #[arg(long)]
    pub latent: Option<PathBuf>,
    #[arg(long, default_value_t = 0.4)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.05)]
    pub tie_band: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable with the bearer token.
    #[arg(long)]
    pub token_env: Option<String>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    /// Prompt template files with `{criteria}`, `{schema}`, `{low}`, `{high}`, `{count}`.
    #[arg(long)]
    pub template_pointwise: Option<PathBuf>,
    #[arg(long)]
    pub template_pairwise: Option<PathBuf>,
    /// Pseudo-label JSONL.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Reward {
    /// Rewards and advantages for a transcript of sampled responses.
    Eval {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        pseudo: PathBuf,
        #[arg(long)]
        tau_w: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean rank reward across gap thresholds, as CSV.
    Sweep {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        pseudo: PathBuf,
        #[arg(long, default_value = "0.1..1.0")]
        tau_w: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub images: usize,
    #[arg(long, default_value_t = 5)]
    pub raters: usize,
    /// Comma-separated category names.
    #[arg(long, default_value = "synthetic")]
    pub categories: String,
    /// Pairs per category; 0 judges every pair.
    #[arg(long, default_value_t = 612)]
    pub budget: usize,
    #[arg(long, default_value_t = 0.5)]
    pub rating_noise: f64,
    #[arg(long, default_value_t = 0.4)]
    pub judgment_noise: f64,
    #[arg(long, default_value_t = 0.3)]
    pub offset_spread: f64,
    #[arg(long, default_value_t = 0.3)]
    pub scale_spread: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Study {
    /// Anchored Elo vs anchored Davidson BT across anchor gaps.
    Gap {
        #[command(flatten)]
        sim: SimulateArgs,
        #[arg(long, default_value = "350,400,450,500,700,900,1200")]
        gaps: String,
        /// One sigmoid per group instead of the pooled fit.
        #[arg(long)]
        per_group: bool,
    },
    /// Reward/accuracy rank correlation with and without pair weighting.
    PairWeight {
        #[arg(long, default_value_t = 256)]
        images: usize,
        #[arg(long, default_value = "0.25,0.5,1.0")]
        tau_w: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bridge pseudo-label quality across ranking-pool seeds.
    PoolSeed {
        #[arg(long, default_value_t = 300)]
        corpus_size: usize,
        #[arg(long, default_value = "11,42")]
        pool_seeds: String,
        #[arg(long, default_value_t = 0.4)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score table against the mean and median of pointwise ratings.
    Targets {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Campaign config JSON.
    #[arg(long)]
    pub campaign: PathBuf,
    /// Append-only event log; replayed on start.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long)]
    pub image_dir: Option<PathBuf>,
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

/// Parses `a..b[:step]` (step 0.1 by default) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Validation(format!("cannot read `{text}` as a list or range"));
    if let Some((lo, rest)) = text.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((h, s)) => (h, s.trim().parse::<f64>().map_err(|_| bad())?),
            None => (rest, 0.1),
        };
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        if !(step > 0.0) || hi < lo {
            return Err(bad());
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9).collect());
    }
    text.split(',').map(|s| s.trim().parse::<f64>().map_err(|_| bad())).collect()
}

fn parse_u64s(text: &str) -> Result<Vec<u64>, CliError> {
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| CliError::Validation(format!("bad integer list `{text}`"))))
        .collect()
}

struct Ctx {
    json: bool,
    config: ToolConfig,
}

impl Ctx {
    fn report<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) {
        let body = if self.json { serde_json::to_string_pretty(value).expect("reports serialise") } else { text() };
        // a closed pipe (`| head`) is not an error worth reporting
        let _ = writeln!(std::io::stdout().lock(), "{body}");
    }
}

fn load_config(path: Option<&Path>) -> CliResult<ToolConfig> {
    let config = match path {
        Some(p) => read_json::<ToolConfig>(p)?,
        None => ToolConfig::default(),
    };
    config.dimension_set().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(config)
}

fn inputs(paths: &[&Option<PathBuf>]) -> Vec<PathBuf> {
    paths.iter().filter_map(|p| (*p).clone()).collect()
}

fn manifest<C: Serialize>(command: &str, config: &C, inputs: &[PathBuf], seeds: Vec<u64>) -> CliResult<RunManifest> {
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    Ok(RunManifest::begin(command, config, &refs, seeds)?)
}

fn load_data(d: &DataArgs) -> CliResult<Dataset> {
    if d.ratings.is_none() && d.judgments.is_none() {
        return Err(CliError::Validation("give --ratings and/or --judgments".into()));
    }
    Ok(Dataset::load(d.judgments.as_deref(), d.ratings.as_deref(), d.corpus.as_deref())?)
}

pub fn run(cli: Cli) -> CliResult {
    let ctx = Ctx { json: cli.json, config: load_config(cli.config.as_deref())? };
    match cli.command {
        Command::Fuse { method, args } => fuse(&ctx, method, args),
        Command::Calibrate(args) => calibrate(&ctx, args),
        Command::Diagnose(d) => diagnose(&ctx, d),
        Command::Bridge(Bridge::Run(args)) => bridge(&ctx, *args),
        Command::Reward(r) => reward(&ctx, r),
        Command::Simulate(args) => simulate(&ctx, &args),
        Command::Study(s) => study(&ctx, s),
        Command::Serve(args) => serve(args),
    }
}

fn fuse(ctx: &Ctx, method: FuseMethod, args: FuseArgs) -> CliResult {
    let mut config = ctx.config.clone();
    if let Some(g) = args.anchor_gap {
        config.elo.anchor_gap = g;
    }
    if let Some(p) = args.passes {
        config.elo.passes = p;
    }
    if let Some(s) = args.seed {
        config.elo.shuffle_seed = s;
    }
    let method = match (method, args.unanchored) {
        (FuseMethod::Elo, false) => FusionMethod::AnchoredElo,
        (FuseMethod::Elo, true) => FusionMethod::Elo,
        (FuseMethod::Dbt, false) => FusionMethod::AnchoredDbt,
        (FuseMethod::Dbt, true) => FusionMethod::Dbt,
    };
    let ins = inputs(&[&Some(args.judgments.clone()), &args.ratings, &args.anchors, &args.corpus]);
    let m = manifest(&format!("fuse {}", method_name(method)), &config, &ins, vec![config.elo.shuffle_seed])?;
    let ds = Dataset::load(Some(&args.judgments), args.ratings.as_deref(), args.corpus.as_deref())?;
    let explicit = args.anchors.as_deref().map(read_anchors).transpose()?;
    if explicit.is_none() && ds.ratings.is_empty() {
        return Err(CliError::Validation("fusion needs --anchors or --ratings to calibrate".into()));
    }
    let (report, lines) = fuse_dataset(&ds, explicit.as_ref(), method, &config)?;
    write_jsonl(&args.out, &lines)?;
    m.finish(&args.out)?;
    ctx.report(&report, || {
        let mut s = format!(
            "{}: {} groups, sigmoid slope {:.6} offset {:.6}",
            report.method,
            report.groups.len(),
            report.slope,
            report.offset
        );
        for g in &report.groups {
            s.push_str(&format!(
                "\n  {}/{}: {} images, {} judgments, {} anchors{}",
                g.category,
                g.dimension,
                g.images,
                g.judgments,
                g.anchors,
                g.tie_propensity.map(|v| format!(", nu {v:.4}")).unwrap_or_default()
            ));
        }
        for w in &report.warnings {
            s.push_str(&format!("\n  warning: {w}"));
        }
        s
    });
    if !report.converged {
        return Err(CliError::Flagged("optimiser hit its iteration cap in at least one group".into()));
    }
    Ok(())
}

fn latent_tables(lines: &[ScoreLine]) -> CliResult<BTreeMap<GroupKey, BTreeMap<ImageId, f64>>> {
    let mut out: BTreeMap<GroupKey, BTreeMap<ImageId, f64>> = BTreeMap::new();
    for l in lines {
        let q = l.latent.ok_or_else(|| CliError::Validation(format!("line for {} has no q", l.image)))?;
        out.entry(GroupKey::new(l.category.clone(), l.dimension.clone())).or_default().insert(l.image.clone().into(), q);
    }
    Ok(out)
}

fn calibrate(ctx: &Ctx, args: CalibrateArgs) -> CliResult {
    let mut config = ctx.config.clone();
    if let Some(s) = args.steepness {
        config.bridge.steepness = s;
    }
    let ins = inputs(&[&Some(args.latent.clone()), &args.anchors]);
    let m = manifest("calibrate", &config, &ins, vec![])?;
    let latents = latent_tables(&read_jsonl::<ScoreLine>(&args.latent)?)?;
    let (report, lines) = match args.mode {
        CalibrationMode::GlobalSigmoid => {
            let path = args
                .anchors
                .as_deref()
                .ok_or_else(|| CliError::Validation("global-sigmoid calibration needs --anchors".into()))?;
            calibrate_global(&latents, &read_anchors(path)?, &config)?
        }
        CalibrationMode::Bridge => calibrate_bridge(&latents, &config)?,
    };
    write_jsonl(&args.out, &lines)?;
    m.finish(&args.out)?;
    ctx.report(&report, || format!("{} calibration of {} groups", report.mode, latents.len()));
    Ok(())
}

fn diagnose(ctx: &Ctx, d: Diagnose) -> CliResult {
    let elo = ctx.config.elo();
    match d {
        Diagnose::Protocol { data, tiers, out } => {
            let m = manifest("diagnose protocol", &ctx.config, &inputs(&[&data.ratings, &data.judgments, &data.corpus, &tiers]), vec![])?;
            let ds = load_data(&data)?;
            let tiers = tiers.as_deref().map(read_jsonl::<TierLine>).transpose()?.map(|t| tier_map(&t));
            let mut groups = Vec::new();
            for (key, g) in ds.groups() {
                groups.push(group_protocol(&key, &g, &elo, tiers.as_ref())?);
            }
            write_json(&out, &groups)?;
            m.finish(&out)?;
            ctx.report(&groups, || {
                let mut s = String::from("group                      W(point)  W(pair)  PRA(point)  PRA(pair)");
                for g in &groups {
                    s.push_str(&format!(
                        "\n{:<26} {:>8.4} {:>8.4} {:>11.4} {:>10.4}",
                        format!("{}/{}", g.category, g.dimension),
                        g.pointwise.kendalls_w,
                        g.pairwise.kendalls_w,
                        g.pointwise.consensus_pra,
                        g.pairwise.consensus_pra
                    ));
                }
                s
            });
            Ok(())
        }
        Diagnose::Crossmethod { scores_a, scores_b, tie_eps, out } => {
            if !(tie_eps >= 0.0) {
                return Err(CliError::Validation("--tie-eps must be non-negative".into()));
            }
            let a = group_scores(&read_jsonl::<ScoreLine>(&scores_a)?);
            let b = group_scores(&read_jsonl::<ScoreLine>(&scores_b)?);
            let rows = cross_method_groups(&a, &b, tie_eps)?;
            if let Some(out) = &out {
                let m = manifest("diagnose crossmethod", &json!({ "tie_eps": tie_eps }), &[scores_a.clone(), scores_b.clone()], vec![])?;
                write_json(out, &rows)?;
                m.finish(out)?;
            }
            ctx.report(&rows, || {
                let mut s = String::from("group                        SRCC     PLCC      MAE     RMSE  Decision  KS p");
                for r in &rows {
                    s.push_str(&format!(
                        "\n{:<26} {:>7.4} {:>8.4} {:>8.4} {:>8.4} {:>8.2}% {:>6.3}",
                        format!("{}/{}", r.category, r.dimension),
                        r.srcc,
                        r.plcc,
                        r.mae,
                        r.rmse,
                        100.0 * r.decision_agreement,
                        r.ks_p_value
                    ));
                }
                s
            });
            Ok(())
        }
        Diagnose::Budget { data, fractions, seeds, max_retries, out } => {
            let fractions = parse_grid(&fractions)?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let m = manifest(
                "diagnose budget",
                &json!({ "elo": ctx.config.elo, "fractions": fractions, "max_retries": max_retries }),
                &inputs(&[&data.judgments, &data.corpus]),
                seeds.clone(),
            )?;
            let ds = load_data(&data)?;
            let groups: Vec<_> = ds
                .groups()
                .into_values()
                .map(|g| g.judgments.into_iter().filter(|j| !j.is_repeat).collect::<Vec<_>>())
                .filter(|js| !js.is_empty())
                .collect();
            let curve = budget_subsample_study(&groups, &fractions, &seeds, &BudgetConfig { elo, max_retries })?;
            std::fs::write(&out, budget_csv(&curve)).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
            m.finish(&out)?;
            let rows: Vec<_> = curve
                .iter()
                .map(|p| json!({ "fraction": p.fraction, "mean_srcc": p.mean_srcc, "mean_plcc": p.mean_plcc, "flagged": p.flagged, "draws": p.draws }))
                .collect();
            ctx.report(&rows, || budget_csv(&curve));
            let flagged: usize = curve.iter().map(|p| p.flagged).sum();
            if flagged > 0 {
                return Err(CliError::Flagged(format!("{flagged} subsamples stayed disconnected and were left out")));
            }
            Ok(())
        }
        Diagnose::Stability { data, out } => {
            let m = manifest("diagnose stability", &ctx.config, &inputs(&[&data.ratings, &data.judgments, &data.corpus]), vec![])?;
            let ds = load_data(&data)?;
            let mut rows = Vec::new();
            for (key, g) in ds.groups() {
                let p = group_protocol(&key, &g, &elo, None)?;
                rows.push(json!({
                    "category": p.category,
                    "dimension": p.dimension,
                    "raters": p.raters,
                    "pointwise": { "loo_srcc": p.pointwise.loo_srcc, "loo_top_overlap": p.pointwise.loo_top_overlap },
                    "pairwise": { "loo_srcc": p.pairwise.loo_srcc, "loo_top_overlap": p.pairwise.loo_top_overlap },
                }));
            }
            write_json(&out, &rows)?;
            m.finish(&out)?;
            ctx.report(&rows, || serde_json::to_string_pretty(&rows).expect("rows serialise"));
            Ok(())
        }
    }
}

fn judge_failure(e: prefscore_core::Error) -> CliError {
    match e {
        prefscore_core::Error::Judge(JudgeError::Protocol(m)) => CliError::Validation(m),
        other => other.into(),
    }
}

fn run_bridge<J: Judge>(
    judge: J,
    args: &BridgeArgs,
    corpus: &[ImageId],
    config: &ToolConfig,
) -> CliResult<(prefscore_core::bridge::BridgeOutput, u64)> {
    let bridge_cfg = config.bridge();
    let mut counted = CountingJudge::new(judge);
    let out = match &args.record {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let mut rec = RecordingJudge::new(&mut counted, BufWriter::new(file));
            let out = pseudo_label_corpus(corpus, &mut rec, &bridge_cfg).map_err(judge_failure)?;
            let (_, mut w) = rec.into_parts();
            std::io::Write::flush(&mut w).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            out
        }
        None => pseudo_label_corpus(corpus, &mut counted, &bridge_cfg).map_err(judge_failure)?,
    };
    Ok((out, counted.total_calls()))
}

fn bridge(ctx: &Ctx, args: BridgeArgs) -> CliResult {
    let mut config = ctx.config.clone();
    if let Some(n) = args.pool_size {
        config.bridge.pool_size = n;
    }
    if let Some(k) = args.refs {
        config.bridge.refs_per_image = k;
    }
    if let Some(s) = args.pool_seed {
        config.bridge.pool_seed = s;
    }
    if args.swap_ab {
        config.bridge.swap_ab = true;
    }
    let dims = config.dimension_set()?;
    let corpus_map: Corpus = read_json(&args.corpus)?;
    let corpus: Vec<ImageId> = corpus_map.keys().map(ImageId::new).collect();
    let ins = inputs(&[&Some(args.corpus.clone()), &args.transcript, &args.latent, &args.template_pointwise, &args.template_pairwise]);
    let settings = json!({
        "config": config,
        "judge": format!("{:?}", args.judge),
        "noise": args.noise,
        "tie_band": args.tie_band,
        "endpoint": args.endpoint,
        "model": args.model,
    });
    let m = manifest("bridge run", &settings, &ins, vec![config.bridge.pool_seed, args.seed])?;
    let swap_seed = config.bridge.pool_seed;
    let (out, calls) = match args.judge {
        JudgeKind::Synthetic => {
            let path = args.latent.as_deref().ok_or_else(|| CliError::Validation("--judge synthetic needs --latent".into()))?;
            let mut latent: BTreeMap<ImageId, Vec<f64>> = BTreeMap::new();
            let lines = read_jsonl::<ScoreLine>(path)?;
            for id in &corpus {
                let mut row = Vec::with_capacity(dims.len());
                for d in dims.iter() {
                    let q = lines
                        .iter()
                        .find(|l| l.image == id.as_str() && l.dimension == d.as_str())
                        .and_then(|l| l.latent.or(l.score))
                        .ok_or_else(|| CliError::Validation(format!("no latent for {id}/{d}")))?;
                    row.push(q);
                }
                latent.insert(id.clone(), row);
            }
            let judge = SyntheticJudge::new(
                dims.clone(),
                SyntheticJudgeConfig { latent, noise_std: args.noise, tie_band: args.tie_band, seed: args.seed, span: config.span() },
            )?;
            if config.bridge.swap_ab {
                run_bridge(SwapJudge::new(judge, swap_seed), &args, &corpus, &config)?
            } else {
                run_bridge(judge, &args, &corpus, &config)?
            }
        }
        JudgeKind::Replay => {
            let path = args.transcript.as_deref().ok_or_else(|| CliError::Validation("--judge replay needs --transcript".into()))?;
            let judge = ReplayJudge::open(dims.clone(), path)?;
            run_bridge(judge, &args, &corpus, &config)?
        }
        JudgeKind::Remote => {
            let (Some(endpoint), Some(model)) = (&args.endpoint, &args.model) else {
                return Err(CliError::Validation("--judge remote needs --endpoint and --model".into()));
            };
            let mut rc = RemoteConfig::new(endpoint.clone(), model.clone());
            rc.token_env = args.token_env.clone();
            rc.cache_dir = args.cache_dir.clone();
            rc.timeout = Duration::from_secs(args.timeout_secs);
            rc.retries = args.retries;
            rc.span = config.span();
            rc.strictness = Strictness::Lenient;
            if let (Some(p), Some(q)) = (&args.template_pointwise, &args.template_pairwise) {
                let read = |f: &Path| std::fs::read_to_string(f).map_err(|e| CliError::Io(format!("{}: {e}", f.display())));
                rc.templates = Some((read(p)?, read(q)?));
            }
            let judge = RemoteJudge::new(dims.clone(), corpus_map.clone(), rc);
            if config.bridge.swap_ab {
                run_bridge(SwapJudge::new(judge, swap_seed), &args, &corpus, &config)?
            } else {
                run_bridge(judge, &args, &corpus, &config)?
            }
        }
    };
    let lines: Vec<PseudoLine> = out
        .scores
        .iter()
        .flat_map(|(id, s)| {
            dims.iter().zip(s).map(|(d, &score)| PseudoLine { image: id.to_string(), dimension: d.to_string(), score })
        })
        .collect();
    write_jsonl(&args.out, &lines)?;
    m.finish(&args.out)?;
    let expected = inference_cost(config.bridge.pool_size as u64, config.bridge.refs_per_image as u64, corpus.len() as u64)?;
    let report = json!({
        "images": corpus.len(),
        "pool_size": config.bridge.pool_size,
        "refs_per_image": config.bridge.refs_per_image,
        "judge_calls": calls,
        "expected_calls": expected,
        "prior_only": out.prior_only.len(),
        "pool_fingerprint": format!("{:016x}", out.pool.fingerprint()),
    });
    ctx.report(&report, || {
        format!(
            "{} pseudo-labels, {calls} judge calls (expected {expected}), {} images fell back to the prior",
            corpus.len(),
            out.prior_only.len()
        )
    });
    if !out.prior_only.is_empty() {
        return Err(CliError::Flagged(format!("{} images had no usable reference outcome", out.prior_only.len())));
    }
    Ok(())
}

/// One image's sampled responses. Either raw model text (parsed strictly)
/// or already-parsed scores, `null` marking a parse failure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleLine {
    pub image: String,
    /// Images sharing a batch are each other's ranking partners.
    #[serde(default)]
    pub batch: u64,
    #[serde(default)]
    pub responses: Option<Vec<String>>,
    #[serde(default)]
    pub scores: Option<Vec<Option<Vec<f64>>>>,
}

fn sample_batches(path: &Path, dims: &DimensionSet, config: &ToolConfig) -> CliResult<BTreeMap<u64, Vec<GroupSample>>> {
    let mut out: BTreeMap<u64, Vec<GroupSample>> = BTreeMap::new();
    for line in read_jsonl::<SampleLine>(path)? {
        let candidates = match (line.responses, line.scores) {
            (Some(rs), None) => rs
                .iter()
                .map(|r| match parse_response(r, PromptMode::Pointwise, dims, config.span(), Strictness::Strict) {
                    Ok(Verdict::Pointwise(s)) => Some(s),
                    _ => None,
                })
                .collect(),
            (None, Some(s)) => s,
            _ => {
                return Err(CliError::Validation(format!("sample for {} needs exactly one of responses/scores", line.image)))
            }
        };
        out.entry(line.batch).or_default().push(GroupSample { image: line.image.into(), candidates });
    }
    Ok(out)
}

fn pseudo_table(path: &Path, dims: &DimensionSet) -> CliResult<BTreeMap<ImageId, Vec<f64>>> {
    let mut by_image: BTreeMap<ImageId, BTreeMap<String, f64>> = BTreeMap::new();
    for l in read_jsonl::<PseudoLine>(path)? {
        by_image.entry(l.image.into()).or_default().insert(l.dimension, l.score);
    }
    by_image
        .into_iter()
        .map(|(id, m)| {
            let row = dims
                .iter()
                .map(|d| m.get(d.as_str()).copied().ok_or_else(|| CliError::Validation(format!("no pseudo-label for {id}/{d}"))))
                .collect::<CliResult<Vec<f64>>>()?;
            Ok((id, row))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct CandidateLine {
    image: String,
    batch: u64,
    rank: Vec<f64>,
    format: Vec<f64>,
    range: Vec<f64>,
    total: Vec<f64>,
    advantage: Vec<f64>,
}

fn reward(ctx: &Ctx, r: Reward) -> CliResult {
    let dims = ctx.config.dimension_set()?;
    match r {
        Reward::Eval { samples, pseudo, tau_w, out } => {
            let mut config = ctx.config.clone();
            if let Some(t) = tau_w {
                config.reward.gap_threshold = t;
            }
            let m = manifest("reward eval", &config, &[samples.clone(), pseudo.clone()], vec![])?;
            let batches = sample_batches(&samples, &dims, &config)?;
            let table = pseudo_table(&pseudo, &dims)?;
            let mut lines = Vec::new();
            for (batch, group) in &batches {
                let rewards = candidate_rewards(group, &table, &config.reward())?;
                for (s, row) in group.iter().zip(rewards) {
                    let total: Vec<f64> = row.iter().map(|c| c.total).collect();
                    lines.push(CandidateLine {
                        image: s.image.to_string(),
                        batch: *batch,
                        rank: row.iter().map(|c| c.rank).collect(),
                        format: row.iter().map(|c| c.format).collect(),
                        range: row.iter().map(|c| c.range).collect(),
                        advantage: grpo_advantages(&total)?,
                        total,
                    });
                }
            }
            write_jsonl(&out, &lines)?;
            m.finish(&out)?;
            let all: Vec<f64> = lines.iter().flat_map(|l| l.total.iter().copied()).collect();
            let parsed = lines.iter().flat_map(|l| &l.format).filter(|f| **f > 0.0).count();
            let report = json!({
                "images": lines.len(),
                "candidates": all.len(),
                "parsed": parsed,
                "mean_total": all.iter().sum::<f64>() / all.len().max(1) as f64,
            });
            ctx.report(&report, || {
                format!("{} images, {parsed}/{} candidates parsed, mean reward {:.6}", lines.len(), all.len(), report["mean_total"])
            });
            Ok(())
        }
        Reward::Sweep { samples, pseudo, tau_w, out } => {
            let thresholds = parse_grid(&tau_w)?;
            let m = manifest("reward sweep", &json!({ "config": ctx.config, "tau_w": thresholds }), &[samples.clone(), pseudo.clone()], vec![])?;
            let batches = sample_batches(&samples, &dims, &ctx.config)?;
            let table = pseudo_table(&pseudo, &dims)?;
            let mut sums = vec![(0.0, 0usize); thresholds.len()];
            for group in batches.values() {
                let parsed = group.iter().flat_map(|g| &g.candidates).filter(|c| c.is_some()).count();
                if parsed == 0 {
                    continue;
                }
                for (i, (_, mean)) in gap_threshold_sweep(group, &table, &thresholds, &ctx.config.reward())?.into_iter().enumerate() {
                    sums[i].0 += mean * parsed as f64;
                    sums[i].1 += parsed;
                }
            }
            let mut csv = String::from("tau_w,mean_rank_reward\n");
            for (t, (s, n)) in thresholds.iter().zip(&sums) {
                csv.push_str(&format!("{t},{:.6}\n", s / (*n).max(1) as f64));
            }
            std::fs::write(&out, &csv).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
            m.finish(&out)?;
            ctx.report(&json!({ "csv": csv }), || csv.trim_end().to_string());
            Ok(())
        }
    }
}

fn sim_spec(ctx: &Ctx, a: &SimulateArgs) -> CliResult<(CampaignSpec, Vec<String>)> {
    let categories: Vec<String> = a.categories.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if categories.is_empty() {
        return Err(CliError::Validation("no categories given".into()));
    }
    let spec = CampaignSpec {
        images: a.images,
        raters: a.raters,
        dimensions: ctx.config.dimension_set()?,
        pair_budget: (a.budget > 0).then_some(a.budget),
        rating_noise: a.rating_noise,
        judgment_noise: a.judgment_noise,
        offset_spread: a.offset_spread,
        scale_spread: a.scale_spread,
        anchors_per_level: ctx.config.anchors_per_level,
        seed: a.seed,
        ..Default::default()
    };
    Ok((spec, categories))
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn simulate(ctx: &Ctx, a: &SimulateArgs) -> CliResult {
    let (spec, categories) = sim_spec(ctx, a)?;
    let settings = json!({
        "images": a.images, "raters": a.raters, "categories": categories, "budget": a.budget,
        "rating_noise": a.rating_noise, "judgment_noise": a.judgment_noise,
        "offset_spread": a.offset_spread, "scale_spread": a.scale_spread, "config": ctx.config,
    });
    let m = manifest("simulate", &settings, &[], vec![a.seed])?;
    let sim = simulate_categories(&spec, &categories)?;
    create_dir(&a.out_dir)?;
    let dir = &a.out_dir;
    let ratings: Vec<RatingLine> = sim.dataset.ratings.iter().map(RatingLine::from).collect();
    let judgments: Vec<JudgmentLine> = sim.dataset.judgments.iter().map(JudgmentLine::from).collect();
    let planted: Vec<ScoreLine> = sim
        .planted
        .iter()
        .flat_map(|(k, t)| {
            t.iter().map(|(id, &q)| ScoreLine {
                category: k.category.clone(),
                dimension: k.dimension.to_string(),
                image: id.to_string(),
                latent: Some(q),
                score: None,
            })
        })
        .collect();
    write_jsonl(&dir.join("ratings.jsonl"), &ratings)?;
    write_jsonl(&dir.join("judgments.jsonl"), &judgments)?;
    write_jsonl(&dir.join("anchors.jsonl"), &anchor_lines(&sim.anchors))?;
    write_jsonl(&dir.join("planted.jsonl"), &planted)?;
    write_json(&dir.join("corpus.json"), sim.dataset.corpus.as_ref().expect("simulated corpus"))?;
    m.finish(&dir.join("campaign"))?;
    let report = json!({
        "out_dir": dir.display().to_string(),
        "categories": categories.len(),
        "ratings": ratings.len(),
        "judgments": judgments.len(),
        "groups": sim.planted.len(),
    });
    ctx.report(&report, || {
        format!("wrote {} ratings and {} judgments over {} groups to {}", ratings.len(), judgments.len(), sim.planted.len(), dir.display())
    });
    Ok(())
}

fn study(ctx: &Ctx, s: Study) -> CliResult {
    match s {
        Study::Gap { sim, gaps, per_group } => {
            let gaps = parse_grid(&gaps)?;
            let (spec, categories) = sim_spec(ctx, &sim)?;
            let campaign = simulate_categories(&spec, &categories)?;
            let rows = gap_ablation(&campaign, &gaps, per_group, &ctx.config)?;
            create_dir(&sim.out_dir)?;
            let out = sim.out_dir.join("gap_ablation.json");
            let m = manifest("study gap", &json!({ "config": ctx.config, "gaps": gaps, "per_group": per_group }), &[], vec![sim.seed])?;
            write_json(&out, &rows)?;
            m.finish(&out)?;
            ctx.report(&rows, || {
                let mut t = String::from("config                          SRCC     PLCC      MAE  Decision  KS pass");
                for r in &rows {
                    t.push_str(&format!(
                        "\n{:<28} {:>7.4} {:>8.4} {:>8.4} {:>8.2}%  {}/{}",
                        r.label,
                        r.srcc,
                        r.plcc,
                        r.mae,
                        100.0 * r.decision_agreement,
                        r.ks_pass,
                        r.groups
                    ));
                }
                t
            });
            Ok(())
        }
        Study::PairWeight { images, tau_w, seed, out } => {
            let thresholds = parse_grid(&tau_w)?;
            let study = RewardStudy { images, dimensions: ctx.config.dimensions.len(), seed, ..Default::default() };
            let m = manifest("study pair-weight", &json!({ "config": ctx.config, "images": images, "tau_w": thresholds }), &[], vec![seed])?;
            let rows = pair_weight_study(&study, &thresholds, &ctx.config.reward())?;
            write_json(&out, &rows)?;
            m.finish(&out)?;
            ctx.report(&rows, || {
                rows.iter()
                    .map(|r| format!("{:<22} reward/accuracy SRCC {:.4}, mean reward {:.4}", r.variant, r.reward_accuracy_srcc, r.mean_reward))
                    .collect::<Vec<_>>()
                    .join("\n")
            });
            Ok(())
        }
        Study::PoolSeed { corpus_size, pool_seeds, noise, seed, out } => {
            let seeds = parse_u64s(&pool_seeds)?;
            let m = manifest("study pool-seed", &json!({ "config": ctx.config, "corpus_size": corpus_size, "noise": noise }), &[], {
                let mut s = seeds.clone();
                s.push(seed);
                s
            })?;
            let rows = pool_seed_study(corpus_size, noise, &seeds, seed, &ctx.config)?;
            write_json(&out, &rows)?;
            m.finish(&out)?;
            ctx.report(&rows, || {
                rows.iter()
                    .map(|r| format!("pool seed {:<6} SRCC {:.4}  PLCC {:.4}  ({} judge calls)", r.pool_seed, r.srcc, r.plcc, r.judge_calls))
                    .collect::<Vec<_>>()
                    .join("\n")
            });
            Ok(())
        }
        Study::Targets { scores, ratings, out } => {
            let m = manifest("study targets", &json!({}), &[scores.clone(), ratings.clone()], vec![])?;
            let table = group_scores(&read_jsonl::<ScoreLine>(&scores)?);
            let ds = Dataset::load(None, Some(&ratings), None)?;
            let rows = evaluate_against_ratings(&table, &ds.ratings)?;
            write_json(&out, &rows)?;
            m.finish(&out)?;
            ctx.report(&rows, || {
                let mut t = String::from("target  dimension        SRCC     PLCC      MAE     RMSE  pred mean  target mean");
                for r in &rows {
                    t.push_str(&format!(
                        "\n{:<7} {:<14} {:>7.4} {:>8.4} {:>8.4} {:>8.4} {:>10.3} {:>12.3}",
                        r.target, r.dimension, r.srcc, r.plcc, r.mae, r.rmse, r.predicted_mean, r.target_mean
                    ));
                }
                t
            });
            Ok(())
        }
    }
}

fn serve(args: ServeArgs) -> CliResult {
    let mut config: CampaignConfig = read_json(&args.campaign)?;
    if args.image_dir.is_some() {
        config.image_dir = args.image_dir;
    }
    if args.ui_dir.is_some() {
        config.ui_dir = args.ui_dir;
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    eprintln!("serving campaign {} on http://{}", config.id, args.addr);
    runtime.block_on(crate::service::serve(config, &args.log, args.addr)).map_err(CliError::Validation)
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
