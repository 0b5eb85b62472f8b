#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread::JoinHandle;

use sif_core::datagen::load_source_records;
use sif_core::depth::{load_depth_map, region_depth};
use sif_core::geometry::BBox;
use sif_core::rewards::{JudgeHistory, MockJudge};
use sif_core::scoring::{DepthMapRef, ScoreRequest, Scorer, ScoringConfig, WireGroundTruth};
use sif_core::trace::{FocusStep, ReasoningTrace, Region};

pub fn fixture_source() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/synthetic/source.jsonl")
}

fn shrink(b: &BBox, f: f64) -> BBox {
    let (cx, cy) = b.center();
    let (w, h) = (b.width() * f / 2.0, b.height() * f / 2.0);
    BBox::new(cx - w, cy - h, cx + w, cy + h).unwrap()
}

/// Eight completions of varying quality for each of the first `groups`
/// fixture records.
pub fn rollout_groups(groups: usize, iteration: u64) -> Vec<ScoreRequest> {
    load_source_records(fixture_source())
        .unwrap()
        .take(groups)
        .map(|r| {
            let r = r.unwrap();
            let depth = load_depth_map(&r.depth_path).unwrap();
            let trace = |boxes: Vec<BBox>, depth_scale: f64, answer: &str| {
                let full = FocusStep::new(
                    vec![Region {
                        bbox: BBox::UNIT,
                        depth: region_depth(&depth, &BBox::UNIT),
                    }],
                    "Scan the whole image.",
                )
                .unwrap();
                let regions = boxes
                    .iter()
                    .map(|b| Region {
                        bbox: *b,
                        depth: (region_depth(&depth, b) * depth_scale).min(1.0),
                    })
                    .collect();
                let focus = FocusStep::new(regions, "Focus on the marked objects.").unwrap();
                ReasoningTrace::new(vec![full, focus], answer)
                    .unwrap()
                    .to_string()
            };
            let gt: Vec<BBox> = r.gt_boxes.iter().copied().collect();
            let loose: Vec<BBox> = gt.iter().map(|b| shrink(b, 0.7)).collect();
            let completions = vec![
                trace(gt.clone(), 1.0, &r.answer),
                trace(gt.clone(), 1.0, "something else"),
                trace(loose.clone(), 1.0, &r.answer),
                trace(gt.clone(), 1.5, &r.answer),
                trace(vec![gt[0]], 1.0, &r.answer),
                format!("The answer is <answer>{}</answer>", r.answer),
                "no idea".to_owned(),
                trace(loose, 1.3, "maybe"),
            ];
            ScoreRequest {
                sample_id: r.id.clone(),
                iteration,
                question: r.question.clone(),
                ground_truth: WireGroundTruth {
                    answer: r.answer.clone(),
                    boxes: r.gt_boxes.iter().map(BBox::coords).collect(),
                    depth_map: DepthMapRef::Path(r.depth_path.display().to_string()),
                },
                completions,
                weights: None,
            }
        })
        .collect()
}

pub fn write_jsonl(path: &Path, reqs: &[ScoreRequest]) {
    let text: String = reqs
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect();
    std::fs::write(path, text).unwrap();
}

pub fn mock_scorer() -> Scorer {
    Scorer::new(
        Arc::new(MockJudge),
        Arc::new(JudgeHistory::in_memory()),
        ScoringConfig::default(),
    )
}

/// The scoring service on an ephemeral port, stopped on drop.
pub struct Server {
    pub base: String,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl Server {
    pub fn start(scorer: Scorer) -> Server {
        let (addr_tx, addr_rx) = std::sync::mpsc::channel::<SocketAddr>();
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                sif_cli::service::serve(listener, scorer, async {
                    let _ = stopped.await;
                })
                .await
                .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Server {
            base: format!("http://{addr}"),
            stop: Some(stop),
            thread: Some(thread),
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into()
}

/// POSTs raw JSON and returns the status and body text.
pub fn post(base: &str, path: &str, body: &str) -> (u16, String) {
    let mut resp = agent()
        .post(&format!("{base}{path}"))
        .header("content-type", "application/json")
        .send(body)
        .unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_to_string().unwrap())
}

pub fn get(base: &str, path: &str) -> (u16, String) {
    let mut resp = agent().get(&format!("{base}{path}")).call().unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_to_string().unwrap())
}
