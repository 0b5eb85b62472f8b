mod common;

use common::{get, mock_scorer, post, rollout_groups, Server};
use serde_json::Value;
use sif_core::scoring::ScoreResponse;

#[test]
fn health_and_history_routes() {
    let server = Server::start(mock_scorer());
    let (status, body) = get(&server.base, "/v1/health");
    assert_eq!(status, 200);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));

    assert_eq!(get(&server.base, "/v1/history/syn-000").0, 404);
    let req = &rollout_groups(1, 5)[0];
    let (status, _) = post(
        &server.base,
        "/v1/score",
        &serde_json::to_string(req).unwrap(),
    );
    assert_eq!(status, 200);
    let (status, body) = get(&server.base, "/v1/history/syn-000");
    assert_eq!(status, 200);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["iteration"], 5);
    assert_eq!(v["scores"].as_array().unwrap().len(), 8);
}

#[test]
fn score_errors_map_to_status_codes() {
    let server = Server::start(mock_scorer());
    let mut req = rollout_groups(1, 1).remove(0);
    let body = serde_json::to_string(&req).unwrap();

    assert_eq!(post(&server.base, "/v1/score", "{not json").0, 400);
    assert_eq!(
        post(
            &server.base,
            "/v1/score",
            &body.replace("\"iteration\"", "\"iter\"")
        )
        .0,
        400
    );

    let mut short = req.clone();
    short.completions.truncate(3);
    let (status, body_text) = post(
        &server.base,
        "/v1/score",
        &serde_json::to_string(&short).unwrap(),
    );
    assert_eq!(status, 400);
    let v: Value = serde_json::from_str(&body_text).unwrap();
    assert_eq!(v["status"], 400);

    let mut missing = req.clone();
    missing.ground_truth.depth_map = sif_core::scoring::DepthMapRef::Path("/nope.pgm".into());
    assert_eq!(
        post(
            &server.base,
            "/v1/score",
            &serde_json::to_string(&missing).unwrap()
        )
        .0,
        422
    );

    let (status, first) = post(&server.base, "/v1/score", &body);
    assert_eq!(status, 200);
    let resp: ScoreResponse = serde_json::from_str(&first).unwrap();
    assert_eq!(resp.rewards.len(), 8);
    assert_eq!(post(&server.base, "/v1/score", &body).0, 409);

    req.iteration = 2;
    req.completions = vec![req.completions[0].clone(); 8];
    let (status, same) = post(
        &server.base,
        "/v1/score",
        &serde_json::to_string(&req).unwrap(),
    );
    assert_eq!(status, 200);
    let resp: ScoreResponse = serde_json::from_str(&same).unwrap();
    assert_eq!(resp.advantages, vec![0.0; 8]);
}

#[test]
fn unreachable_judge_is_a_bad_gateway() {
    use std::sync::Arc;
    use std::time::Duration;

    use sif_core::rewards::{HttpJudge, HttpJudgeConfig, JudgeHistory};
    use sif_core::scoring::{Scorer, ScoringConfig};

    let mut cfg = HttpJudgeConfig::new("http://127.0.0.1:9/v1/chat/completions");
    cfg.max_attempts = 1;
    cfg.timeout = Duration::from_secs(2);
    let scorer = Scorer::new(
        Arc::new(HttpJudge::new(cfg)),
        Arc::new(JudgeHistory::in_memory()),
        ScoringConfig::default(),
    );
    let server = Server::start(scorer);
    let req = &rollout_groups(1, 1)[0];
    assert_eq!(
        post(
            &server.base,
            "/v1/score",
            &serde_json::to_string(req).unwrap()
        )
        .0,
        502
    );
    assert_eq!(
        get(&server.base, "/v1/history/syn-000").0,
        404,
        "failed groups leave no history"
    );
}

#[test]
fn concurrent_groups_for_distinct_samples() {
    let server = Server::start(mock_scorer());
    let reqs = rollout_groups(6, 1);
    let handles: Vec<_> = reqs
        .into_iter()
        .map(|r| {
            let base = server.base.clone();
            std::thread::spawn(move || {
                post(&base, "/v1/score", &serde_json::to_string(&r).unwrap()).0
            })
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), 200);
    }
}
