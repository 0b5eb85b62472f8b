//! The `sif` command: dataset generation, batch scoring, trace validation,
//! the HIoU metric and the HTTP scoring service.
//!
//! Exit codes: 0 on success, 2 when an input fails validation (including
//! usage errors and config conflicts), 1 on any runtime failure.

pub mod config;
pub mod service;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use sif_core::datagen::synthetic::generate_fixture;
use sif_core::datagen::{generate_dataset, Completer, DatagenConfig, HttpCompleter, MockCompleter};
use sif_core::geometry::{giou, hiou, piou, BoxSet};
use sif_core::rewards::{JudgeHistory, LimitedJudge};
use sif_core::scaffold::ScaffoldConfig;
use sif_core::scoring::{ScoreRequest, Scorer, ScoringConfig};
use sif_core::trace::parse_trace;
use thiserror::Error;

use config::{FileConfig, JudgeFlags};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "sif",
    version,
    about = "Grounded reasoning rewards and scaffolded dataset generation"
)]
pub struct Cli {
    /// TOML config file; flags and environment variables take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log more (repeat for trace-level output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build scaffolded chain-of-thought records from a source JSONL file.
    Datagen(DatagenArgs),
    /// Score rollout groups from a JSONL file.
    Score(ScoreArgs),
    /// Check a trace file against the reasoning grammar.
    Validate {
        /// File holding one complete trace.
        file: PathBuf,
    },
    /// Print the HIoU between two box-set JSON files.
    Hiou {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Also print the global and paired components.
        #[arg(long)]
        components: bool,
    },
    /// Run the HTTP scoring service.
    Serve(ServeArgs),
    /// Write the synthetic source fixture (images, depth maps, source.jsonl).
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct JudgeArgs {
    /// Score answers with token-overlap F1 instead of a remote judge.
    #[arg(long, conflicts_with = "judge_endpoint")]
    pub mock_judge: bool,
    /// Chat-completions URL of the judge model.
    #[arg(long)]
    pub judge_endpoint: Option<String>,
    #[arg(long)]
    pub judge_api_key: Option<String>,
    #[arg(long)]
    pub judge_model: Option<String>,
    /// Maximum judge calls in flight.
    #[arg(long)]
    pub judge_concurrency: Option<usize>,
}

impl JudgeArgs {
    fn flags(&self) -> JudgeFlags {
        JudgeFlags {
            mock: self.mock_judge,
            endpoint: self.judge_endpoint.clone(),
            api_key: self.judge_api_key.clone(),
            model: self.judge_model.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoringArgs {
    /// Completions required per rollout group.
    #[arg(long)]
    pub group_size: Option<usize>,
    /// Stability constant added to the group standard deviation.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Relative depth error accepted by the depth reward.
    #[arg(long)]
    pub depth_threshold: Option<f64>,
    /// JSONL file holding the per-sample judge history (replayed on start).
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Rollout groups, one score request per line.
    #[arg(long)]
    pub rollouts: PathBuf,
    /// Output file for score responses; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub judge: JudgeArgs,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Address to bind, e.g. 127.0.0.1:8080.
    #[arg(long)]
    pub listen: Option<String>,
    #[command(flatten)]
    pub judge: JudgeArgs,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(Debug, Args)]
pub struct DatagenArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overlay directory; defaults to `<out stem>_overlays` beside `--out`.
    #[arg(long)]
    pub overlay_dir: Option<PathBuf>,
    /// Run report path; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Expansion steps.
    #[arg(long, default_value_t = 5)]
    pub steps: usize,
    #[arg(long, default_value_t = 2)]
    pub max_distractors: usize,
    #[arg(long, default_value_t = 0.2)]
    pub area_tolerance: f64,
    #[arg(long, default_value_t = 3)]
    pub max_attempts: usize,
    /// Worker threads; 0 picks one per core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Stitch traces from the scaffold instead of calling a model.
    #[arg(long, conflicts_with = "completer_endpoint")]
    pub mock_completer: bool,
    /// Vision-chat completions URL.
    #[arg(long)]
    pub completer_endpoint: Option<String>,
    #[arg(long)]
    pub completer_model: Option<String>,
}

fn scoring_config(args: &ScoringArgs, file: &FileConfig) -> Result<ScoringConfig, CliError> {
    let mut cfg = file.scoring;
    if let Some(n) = args.group_size {
        cfg.group_size = n;
    }
    if let Some(d) = args.delta {
        cfg.delta = d;
    }
    if let Some(t) = args.depth_threshold {
        cfg.tolerance.threshold = t;
    }
    cfg.validate().map_err(CliError::Invalid)?;
    Ok(cfg)
}

fn build_scorer(
    judge: &JudgeArgs,
    scoring: &ScoringArgs,
    file: &FileConfig,
) -> Result<Scorer, CliError> {
    let cfg = scoring_config(scoring, file)?;
    let inner = config::build_judge(&judge.flags(), &file.judge)?;
    let limit = judge
        .judge_concurrency
        .or(file.judge.concurrency)
        .unwrap_or(16);
    if limit == 0 {
        return Err(CliError::Invalid(
            "judge concurrency must be at least 1".into(),
        ));
    }
    let history_path = scoring
        .history
        .clone()
        .or_else(|| file.service.history.clone());
    let history = match history_path {
        Some(p) => JudgeHistory::open(&p).map_err(|e| CliError::Runtime(e.to_string()))?,
        None => JudgeHistory::in_memory(),
    };
    Ok(Scorer::new(
        Arc::new(LimitedJudge::new(inner, limit)),
        Arc::new(history),
        cfg,
    ))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Datagen(args) => cmd_datagen(&args, &file),
        Command::Score(args) => cmd_score(&args, &file),
        Command::Validate { file: path } => cmd_validate(&path),
        Command::Hiou {
            pred,
            gt,
            components,
        } => cmd_hiou(&pred, &gt, components),
        Command::Serve(args) => cmd_serve(&args, &file),
        Command::Fixture { out, count, seed } => {
            let src = generate_fixture(&out, count, seed)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            println!("{}", src.display());
            Ok(())
        }
    }
}

fn cmd_datagen(args: &DatagenArgs, file: &FileConfig) -> Result<(), CliError> {
    let scaffold = ScaffoldConfig {
        steps: args.steps,
        area_tolerance: args.area_tolerance,
        max_distractors: args.max_distractors,
        seed: args.seed,
        ..ScaffoldConfig::default()
    };
    scaffold
        .validate()
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let mut cfg = DatagenConfig {
        scaffold,
        overlay_dir: args.overlay_dir.clone(),
        max_attempts: args.max_attempts,
        workers: args.workers,
        ..DatagenConfig::default()
    };
    if let Some(t) = config::completer_template(&file.completer)? {
        cfg.cot_template = t;
    }
    let remote = if args.mock_completer {
        None
    } else {
        config::completer_config(
            args.completer_endpoint.clone(),
            args.completer_model.clone(),
            &file.completer,
        )?
    };
    let completer: Box<dyn Completer> = match remote {
        Some(c) => Box::new(HttpCompleter::new(c)),
        None if args.mock_completer => Box::new(MockCompleter),
        None => {
            return Err(CliError::Invalid(
                "no completer configured: pass --mock-completer or --completer-endpoint".into(),
            ))
        }
    };
    let report = generate_dataset(&args.input, &args.out, &cfg, completer.as_ref())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let report_path = args.report.clone().unwrap_or_else(|| {
        let mut name = args.out.clone().into_os_string();
        name.push(".report.json");
        PathBuf::from(name)
    });
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&report_path, text + "\n").map_err(|e| io_err(&report_path, e))?;
    eprintln!(
        "processed {} emitted {} rejected {} (report: {})",
        report.processed,
        report.emitted,
        report.rejected,
        report_path.display()
    );
    if report.emitted == 0 {
        return Err(CliError::Runtime("no records emitted".into()));
    }
    Ok(())
}

fn cmd_score(args: &ScoreArgs, file: &FileConfig) -> Result<(), CliError> {
    let scorer = build_scorer(&args.judge, &args.scoring, file)?;
    let input = File::open(&args.rollouts).map_err(|e| io_err(&args.rollouts, e))?;
    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?)),
        None => Box::new(std::io::stdout().lock()),
    };
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| io_err(&args.rollouts, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = format!("{} line {}", args.rollouts.display(), i + 1);
        let req: ScoreRequest = serde_json::from_str(&line)
            .map_err(|e| CliError::Invalid(format!("{at}: invalid request: {e}")))?;
        let resp = scorer.score(&req).map_err(|e| {
            let msg = format!("{at}: {e}");
            match e.status() {
                400 | 409 | 422 => CliError::Invalid(msg),
                _ => CliError::Runtime(msg),
            }
        })?;
        let mut text = serde_json::to_string(&resp).expect("response serializes");
        text.push('\n');
        out.write_all(text.as_bytes())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    out.flush().map_err(|e| CliError::Runtime(e.to_string()))
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn cmd_validate(path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    match parse_trace(&text) {
        Ok(t) => {
            println!(
                "{}: ok ({} steps, {} regions)",
                path.display(),
                t.steps().len(),
                t.regions().count()
            );
            Ok(())
        }
        Err(e) => {
            let (line, col) = line_col(&text, e.offset);
            Err(CliError::Invalid(format!(
                "{}:{line}:{col}: byte offset {}: {:?}: {}",
                path.display(),
                e.offset,
                e.kind,
                e.message
            )))
        }
    }
}

fn read_boxes(path: &Path) -> Result<BoxSet, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn cmd_hiou(pred: &Path, gt: &Path, components: bool) -> Result<(), CliError> {
    let (p, g) = (read_boxes(pred)?, read_boxes(gt)?);
    let invalid = |e: sif_core::geometry::GeometryError| CliError::Invalid(e.to_string());
    println!("{:?}", hiou(&p, &g).map_err(invalid)?);
    if components {
        println!("giou {:?}", giou(&p, &g).map_err(invalid)?);
        println!("piou {:?}", piou(&p, &g).map_err(invalid)?);
    }
    Ok(())
}

fn cmd_serve(args: &ServeArgs, file: &FileConfig) -> Result<(), CliError> {
    let scorer = build_scorer(&args.judge, &args.scoring, file)?;
    let listen = args
        .listen
        .clone()
        .or_else(|| file.service.listen.clone())
        .unwrap_or_else(|| "127.0.0.1:8080".into());
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&listen)
            .await
            .map_err(|e| CliError::Runtime(format!("bind {listen}: {e}")))?;
        let addr = listener
            .local_addr()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        tracing::info!(%addr, "scoring service listening");
        eprintln!("listening on http://{addr}");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        service::serve(listener, scorer, shutdown)
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))
    })
}
