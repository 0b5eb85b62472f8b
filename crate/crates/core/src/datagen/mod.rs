//! Dataset generation: annotated source records in, focus-scaffolded
//! chain-of-thought records out.
//!
//! Each record goes through depth loading, scaffold construction, overlay
//! rendering and completion independently. Records are processed on a
//! bounded worker pool in batches; results are written back in input order
//! by a single writer, so output bytes do not depend on scheduling.

pub mod completer;
pub mod overlay;
pub mod synthetic;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::{load_depth_map, DepthError};
use crate::geometry::BoxSet;
use crate::prompts;
use crate::scaffold::{build_scaffold, FocusTrajectory, ScaffoldConfig, ScaffoldError};

pub use completer::{
    complete_cot, Completer, CompletionError, CotRequest, HttpCompleter, HttpCompleterConfig,
    MockCompleter,
};
pub use overlay::render_overlays;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error(transparent)]
    Depth(#[from] DepthError),
    #[error(transparent)]
    Scaffold(#[from] ScaffoldError),
    #[error(transparent)]
    Completion(#[from] CompletionError),
    #[error("invalid datagen config: {0}")]
    Config(String),
}

impl DatagenError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DatagenError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One annotated input: question, image, ground-truth boxes, answer and
/// the reference depth map. Paths are resolved against the directory of
/// the source file.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceRecord {
    pub id: String,
    pub image_path: PathBuf,
    pub question: String,
    pub answer: String,
    pub gt_boxes: BoxSet,
    pub depth_path: PathBuf,
    /// 1-based line number in the source file.
    pub line: usize,
}

#[derive(Deserialize)]
struct RawSource {
    id: String,
    image_path: String,
    question: String,
    answer: String,
    gt_boxes: BoxSet,
    depth_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineReject {
    pub line: usize,
    pub reason: String,
}

/// Streams validated records from a JSONL file. Bad lines come out as
/// [`LineReject`]s and do not stop the stream.
pub struct SourceRecords {
    lines: Lines<BufReader<File>>,
    base: PathBuf,
    line: usize,
    seen_content: bool,
    ids: HashSet<String>,
    path: PathBuf,
}

pub fn load_source_records(path: impl AsRef<Path>) -> Result<SourceRecords, DatagenError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| DatagenError::io(path, e))?;
    Ok(SourceRecords {
        lines: BufReader::new(file).lines(),
        base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        line: 0,
        seen_content: false,
        ids: HashSet::new(),
        path: path.to_path_buf(),
    })
}

impl SourceRecords {
    fn parse(&mut self, text: &str) -> Result<SourceRecord, String> {
        let raw: RawSource = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if raw.id.is_empty() {
            return Err("id must not be empty".into());
        }
        if raw.gt_boxes.is_empty() {
            return Err("gt_boxes must not be empty".into());
        }
        let depth = raw
            .depth_path
            .filter(|p| !p.is_empty())
            .ok_or("depth_path is required")?;
        if !self.ids.insert(raw.id.clone()) {
            return Err(format!("duplicate id {:?}", raw.id));
        }
        Ok(SourceRecord {
            image_path: self.base.join(raw.image_path),
            depth_path: self.base.join(depth),
            id: raw.id,
            question: raw.question,
            answer: raw.answer,
            gt_boxes: raw.gt_boxes,
            line: self.line,
        })
    }
}

impl Iterator for SourceRecords {
    type Item = Result<SourceRecord, LineReject>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let Some(next) = self.lines.next() else {
                if !self.seen_content {
                    tracing::warn!(path = %self.path.display(), "source file holds no records");
                    self.seen_content = true;
                }
                return None;
            };
            self.line += 1;
            let text = match next {
                Ok(t) => t,
                Err(e) => {
                    return Some(Err(LineReject {
                        line: self.line,
                        reason: e.to_string(),
                    }))
                }
            };
            if text.trim().is_empty() {
                continue;
            }
            self.seen_content = true;
            let line = self.line;
            return Some(
                self.parse(&text)
                    .map_err(|reason| LineReject { line, reason }),
            );
        }
    }
}

/// One emitted training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SifRecord {
    pub id: String,
    pub question: String,
    pub image_path: String,
    pub depth_path: String,
    pub gt_boxes: BoxSet,
    pub answer: String,
    pub cot: String,
    pub scaffold: FocusTrajectory,
    pub overlays: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct DatagenConfig {
    pub scaffold: ScaffoldConfig,
    /// Where overlay frames go; defaults to `<output stem>_overlays` next to
    /// the output file.
    pub overlay_dir: Option<PathBuf>,
    /// Completion attempts per record before it is rejected.
    pub max_attempts: usize,
    /// Worker threads; 0 lets the pool pick.
    pub workers: usize,
    pub cot_template: String,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        DatagenConfig {
            scaffold: ScaffoldConfig::default(),
            overlay_dir: None,
            max_attempts: 3,
            workers: 0,
            cot_template: prompts::COT.to_owned(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub depth_ms: f64,
    pub scaffold_ms: f64,
    pub overlay_ms: f64,
    pub completion_ms: f64,
}

impl StageTimings {
    fn add(&mut self, o: &StageTimings) {
        self.depth_ms += o.depth_ms;
        self.scaffold_ms += o.scaffold_ms;
        self.overlay_ms += o.overlay_ms;
        self.completion_ms += o.completion_ms;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub line: usize,
    pub id: Option<String>,
    pub stage: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub processed: usize,
    pub emitted: usize,
    pub rejected: usize,
    pub rejects: Vec<Reject>,
    /// Summed over records, not wall-clock.
    pub timings: StageTimings,
}

const BATCH: usize = 64;

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

fn process(
    rec: &SourceRecord,
    cfg: &DatagenConfig,
    overlay_dir: &Path,
    completer: &dyn Completer,
    timings: &mut StageTimings,
) -> Result<SifRecord, (&'static str, String)> {
    let t = Instant::now();
    let depth = load_depth_map(&rec.depth_path).map_err(|e| ("depth", e.to_string()))?;
    timings.depth_ms += ms_since(t);

    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.scaffold.seed);
    rng.set_stream(rec.line as u64);
    let traj = build_scaffold(&rec.gt_boxes, &cfg.scaffold, &mut rng)
        .map_err(|e| ("scaffold", e.to_string()))?;
    timings.scaffold_ms += ms_since(t);

    let t = Instant::now();
    let overlays = render_overlays(&rec.image_path, &traj, overlay_dir, &rec.id)
        .map_err(|e| ("overlay", e.to_string()))?;
    timings.overlay_ms += ms_since(t);

    let t = Instant::now();
    let req = CotRequest::new(
        &rec.id,
        &rec.question,
        &rec.answer,
        &traj,
        &depth,
        overlays.clone(),
        rec.depth_path.clone(),
        &cfg.cot_template,
    );
    let cot = complete_cot(&req, &rec.gt_boxes, completer, cfg.max_attempts)
        .map_err(|e| ("completion", e.to_string()))?;
    timings.completion_ms += ms_since(t);

    let show = |p: &Path| p.display().to_string();
    Ok(SifRecord {
        id: rec.id.clone(),
        question: rec.question.clone(),
        image_path: show(&rec.image_path),
        depth_path: show(&rec.depth_path),
        gt_boxes: rec.gt_boxes.clone(),
        answer: rec.answer.clone(),
        cot,
        scaffold: traj,
        overlays: overlays.iter().map(|p| show(p)).collect(),
    })
}

pub fn default_overlay_dir(out_path: &Path) -> PathBuf {
    let stem = out_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sif".into());
    out_path.with_file_name(format!("{stem}_overlays"))
}

/// Runs the whole pipeline over `in_path`, writing one JSON line per
/// emitted record to `out_path`. Per-record failures are tallied in the
/// report; only I/O on the input or output files fails the call.
pub fn generate_dataset(
    in_path: &Path,
    out_path: &Path,
    cfg: &DatagenConfig,
    completer: &dyn Completer,
) -> Result<RunReport, DatagenError> {
    cfg.scaffold.validate()?;
    if cfg.max_attempts == 0 {
        return Err(DatagenError::Config("max_attempts must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| DatagenError::Config(e.to_string()))?;
    let overlay_dir = cfg
        .overlay_dir
        .clone()
        .unwrap_or_else(|| default_overlay_dir(out_path));
    let source = load_source_records(in_path)?;
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| DatagenError::io(parent, e))?;
    }
    let file = File::create(out_path).map_err(|e| DatagenError::io(out_path, e))?;
    let mut out = BufWriter::new(file);
    let mut report = RunReport::default();

    let mut write_batch = |batch: &mut Vec<Result<SourceRecord, LineReject>>,
                           report: &mut RunReport|
     -> Result<(), DatagenError> {
        let results: Vec<_> = pool.install(|| {
            batch
                .par_iter()
                .map(|item| match item {
                    Ok(rec) => {
                        let mut t = StageTimings::default();
                        let r = process(rec, cfg, &overlay_dir, completer, &mut t);
                        (r, t)
                    }
                    Err(rej) => (Err(("load", rej.reason.clone())), StageTimings::default()),
                })
                .collect()
        });
        for (item, (result, timings)) in batch.drain(..).zip(results) {
            report.processed += 1;
            report.timings.add(&timings);
            match result {
                Ok(rec) => {
                    let mut line = serde_json::to_string(&rec).expect("record serializes");
                    line.push('\n');
                    out.write_all(line.as_bytes())
                        .map_err(|e| DatagenError::io(out_path, e))?;
                    report.emitted += 1;
                }
                Err((stage, reason)) => {
                    let (line, id) = match &item {
                        Ok(r) => (r.line, Some(r.id.clone())),
                        Err(r) => (r.line, None),
                    };
                    tracing::warn!(line, id = id.as_deref().unwrap_or("-"), stage, %reason, "record rejected");
                    report.rejected += 1;
                    report.rejects.push(Reject {
                        line,
                        id,
                        stage: stage.to_owned(),
                        reason,
                    });
                }
            }
        }
        Ok(())
    };

    let mut batch = Vec::with_capacity(BATCH);
    for item in source {
        batch.push(item);
        if batch.len() == BATCH {
            write_batch(&mut batch, &mut report)?;
        }
    }
    write_batch(&mut batch, &mut report)?;
    out.flush().map_err(|e| DatagenError::io(out_path, e))?;
    Ok(report)
}
