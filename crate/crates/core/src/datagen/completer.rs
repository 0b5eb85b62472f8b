//! Chain-of-thought completion: a vision-chat client or an offline mock that
//! stitches a valid trace straight from the scaffold.

use std::io::Cursor;
use std::path::PathBuf;
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};
use thiserror::Error;

use crate::depth::{region_depth, DepthMap};
use crate::geometry::BoxSet;
use crate::netpbm::decode_ppm;
use crate::prompts;
use crate::scaffold::FocusTrajectory;
use crate::trace::{parse_trace, FocusStep, ReasoningTrace, Region, TraceError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompletionError {
    #[error("completion transport failed: {0}")]
    Transport(String),
    #[error("completion rejected: {0}")]
    Invalid(String),
}

/// One trajectory set with the reference depth of each of its boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaffoldStep {
    pub boxes: BoxSet,
    pub depths: Vec<f64>,
}

/// Everything a completer may use to write the reasoning for one record.
#[derive(Debug, Clone)]
pub struct CotRequest {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub prompt: String,
    pub steps: Vec<ScaffoldStep>,
    /// How many leading steps are distractors.
    pub distractor_count: usize,
    pub overlays: Vec<PathBuf>,
    pub depth_path: PathBuf,
}

impl CotRequest {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: &str,
        question: &str,
        answer: &str,
        traj: &FocusTrajectory,
        depth: &DepthMap,
        overlays: Vec<PathBuf>,
        depth_path: PathBuf,
        template: &str,
    ) -> Self {
        let steps: Vec<ScaffoldStep> = traj
            .sets
            .iter()
            .map(|set| ScaffoldStep {
                depths: set.iter().map(|b| region_depth(depth, b)).collect(),
                boxes: set.clone(),
            })
            .collect();
        let listing = steps
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let regions: Vec<String> = s
                    .boxes
                    .iter()
                    .zip(&s.depths)
                    .map(|(b, d)| {
                        let [x1, y1, x2, y2] = b.coords();
                        format!("[{x1:.3}, {y1:.3}, {x2:.3}, {y2:.3}] depth {d:.3}")
                    })
                    .collect();
                format!("Step {}: {}", k + 1, regions.join("; "))
            })
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = prompts::render(
            template,
            &[
                ("question", question),
                ("answer", answer),
                ("steps", &listing),
            ],
        );
        CotRequest {
            id: id.to_owned(),
            question: question.to_owned(),
            answer: answer.to_owned(),
            prompt,
            steps,
            distractor_count: traj.distractor_count,
            overlays,
            depth_path,
        }
    }
}

pub trait Completer: Send + Sync {
    fn complete(&self, req: &CotRequest) -> Result<String, CompletionError>;
}

/// Builds the trace directly: one step per set, reference depths on every
/// region, templated narration, and the known answer.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockCompleter;

impl MockCompleter {
    fn narration(req: &CotRequest, k: usize) -> String {
        let step = &req.steps[k];
        let mean = step.depths.iter().sum::<f64>() / step.depths.len() as f64;
        let last = req.steps.len() - 1;
        if k < req.distractor_count {
            format!("This region sits at depth {mean:.2} and shows nothing that answers the question, so the search moves on.")
        } else if k == last {
            format!(
                "The focus settles on {} region(s) at depth {mean:.2}, which hold what the question asks about.",
                step.boxes.len()
            )
        } else if step.boxes.is_full_image() {
            "Look at the whole scene to find where the question points.".to_owned()
        } else {
            format!(
                "Narrow down to {} region(s) around depth {mean:.2}.",
                step.boxes.len()
            )
        }
    }
}

impl Completer for MockCompleter {
    fn complete(&self, req: &CotRequest) -> Result<String, CompletionError> {
        let invalid = |e: TraceError| CompletionError::Invalid(e.to_string());
        let steps = req
            .steps
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let regions = s
                    .boxes
                    .iter()
                    .zip(&s.depths)
                    .map(|(&bbox, &depth)| Region { bbox, depth })
                    .collect();
                FocusStep::new(regions, Self::narration(req, k)).map_err(invalid)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let trace = ReasoningTrace::new(steps, req.answer.clone()).map_err(invalid)?;
        Ok(trace.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct HttpCompleterConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
}

/// Sends the prompt and the overlay frames (as PNG data URLs) to a
/// vision-chat endpoint.
pub struct HttpCompleter {
    cfg: HttpCompleterConfig,
    agent: ureq::Agent,
}

impl HttpCompleter {
    pub fn new(cfg: HttpCompleterConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .build()
            .into();
        HttpCompleter { cfg, agent }
    }
}

fn png_data_url(path: &PathBuf) -> Result<String, CompletionError> {
    let fail = |m: String| CompletionError::Transport(format!("{}: {m}", path.display()));
    let bytes = std::fs::read(path).map_err(|e| fail(e.to_string()))?;
    let img = decode_ppm(&bytes).map_err(|e| fail(e.to_string()))?;
    let rgb = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.pixels)
        .ok_or_else(|| fail("pixel buffer size mismatch".into()))?;
    let mut png = Cursor::new(Vec::new());
    rgb.write_to(&mut png, image::ImageFormat::Png)
        .map_err(|e| fail(e.to_string()))?;
    Ok(format!(
        "data:image/png;base64,{}",
        base64::engine::general_purpose::STANDARD.encode(png.into_inner())
    ))
}

impl Completer for HttpCompleter {
    fn complete(&self, req: &CotRequest) -> Result<String, CompletionError> {
        let mut content = vec![json!({"type": "text", "text": req.prompt})];
        for p in &req.overlays {
            content.push(json!({"type": "image_url", "image_url": {"url": png_data_url(p)?}}));
        }
        let body = json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": content}],
            "metadata": {"sample_id": req.id, "depth_map": req.depth_path.display().to_string()},
        });
        let mut call = self.agent.post(&self.cfg.endpoint);
        if let Some(key) = &self.cfg.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call
            .send_json(&body)
            .map_err(|e| CompletionError::Transport(e.to_string()))?;
        let reply: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| CompletionError::Transport(e.to_string()))?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| CompletionError::Invalid(format!("no message content in {reply}")))
    }
}

/// Box sets compare after the serializer's three-decimal rounding.
fn same_boxes(a: &BoxSet, b: &BoxSet) -> bool {
    let q = |v: f64| (v * 1000.0).round() as i64;
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.coords()
                .iter()
                .zip(y.coords())
                .all(|(u, v)| q(*u) == q(v))
        })
}

/// Requests a completion and accepts it only if it parses and its last step
/// names exactly the ground-truth boxes. Invalid replies are retried up to
/// `max_attempts` times; transport errors are returned immediately.
pub fn complete_cot(
    req: &CotRequest,
    gt: &BoxSet,
    completer: &dyn Completer,
    max_attempts: usize,
) -> Result<String, CompletionError> {
    let mut last = CompletionError::Invalid("no attempts made".into());
    for attempt in 1..=max_attempts.max(1) {
        let text = completer.complete(req)?;
        let verdict = parse_trace(&text)
            .map_err(|e| CompletionError::Invalid(e.to_string()))
            .and_then(|t| {
                let end = t.steps().last().expect("parsed trace has steps").boxes();
                if same_boxes(&end, gt) {
                    Ok(())
                } else {
                    Err(CompletionError::Invalid(
                        "final step does not match the ground-truth boxes".into(),
                    ))
                }
            });
        match verdict {
            Ok(()) => return Ok(text),
            Err(e) => {
                tracing::debug!(id = %req.id, attempt, error = %e, "completion rejected");
                last = e;
            }
        }
    }
    Err(last)
}
