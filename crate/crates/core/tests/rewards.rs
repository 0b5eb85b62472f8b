#[path = "common/oracles.rs"]
mod oracles;

use std::sync::Arc;

use proptest::prelude::*;
use sif_core::depth::{depth_reward, region_depth, DepthMap, DepthTolerance};
use sif_core::geometry::{BBox, BoxSet};
use sif_core::rewards::{
    grounding_reward, group_advantages, progressive_answer_reward, progressive_from_mean,
    JudgeHistory, MockJudge,
};
use sif_core::scoring::{DepthMapRef, ScoreRequest, Scorer, ScoringConfig, WireGroundTruth};
use sif_core::trace::{FocusStep, ReasoningTrace, Region};

fn trace(sets: &[&[([f64; 4], f64)]], answer: &str) -> ReasoningTrace {
    let steps = sets
        .iter()
        .map(|regions| {
            let regions = regions
                .iter()
                .map(|&(b, depth)| Region {
                    bbox: BBox::new(b[0], b[1], b[2], b[3]).unwrap(),
                    depth,
                })
                .collect();
            FocusStep::new(regions, "look").unwrap()
        })
        .collect();
    ReasoningTrace::new(steps, answer).unwrap()
}

#[test]
fn grounding_reward_rewards_improvement() {
    // IoU against [0,0,0.5,1]: 0.15/0.5 = 0.3 for the first focus, 0.4/0.5 = 0.8 at the end.
    let gt = BoxSet::from_coords([[0.0, 0.0, 0.5, 1.0]]).unwrap();
    let t = trace(
        &[
            &[([0.0, 0.0, 1.0, 1.0], 0.5)],
            &[([0.0, 0.0, 0.15, 1.0], 0.5)],
            &[([0.0, 0.0, 0.4, 1.0], 0.5)],
        ],
        "a",
    );
    let g = grounding_reward(&t, &gt).unwrap();
    assert!((g.s_init - 0.3).abs() < 1e-12);
    assert!((g.s_end - 0.8).abs() < 1e-12);
    assert!((g.r_bbox - 1.3).abs() < 1e-12);

    let flat = trace(&[&[([0.0, 0.0, 1.0, 1.0], 0.5)]], "a");
    let g = grounding_reward(&flat, &gt).unwrap();
    assert_eq!(g.s_init, g.s_end);
    assert!((g.r_bbox - 0.5).abs() < 1e-12);
}

#[test]
fn progressive_answer_reward_uses_previous_group() {
    assert!((progressive_from_mean(0.9, Some(0.6)) - 1.2).abs() < 1e-12);
    assert_eq!(progressive_from_mean(0.9, None), 0.9);
    let h = JudgeHistory::in_memory();
    h.update("s", 1, vec![0.5, 0.7, 0.6]).unwrap();
    assert!((progressive_answer_reward(0.9, "s", &h) - 1.2).abs() < 1e-12);
    assert_eq!(progressive_answer_reward(0.9, "unseen", &h), 0.9);
}

#[test]
fn depth_threshold_boundary() {
    let map = DepthMap::constant(8, 8, 0.5).unwrap();
    let tol = DepthTolerance::default();
    let at = |d: f64| depth_reward(&trace(&[&[([0.0, 0.0, 1.0, 1.0], d)]], "a"), &map, &tol);
    assert_eq!(at(0.55), 1.0);
    assert_eq!(at(0.45), 1.0);
    assert_eq!(at(0.5 * (1.0 + 0.1 + 1e-6)), 0.0);
    assert_eq!(at(0.5 * (1.0 - 0.1 - 1e-6)), 0.0);
}

fn depth_maps() -> impl Strategy<Value = DepthMap> {
    (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f64..=1.0, w * h)
            .prop_map(move |v| DepthMap::new(w, h, v).unwrap())
    })
}

fn unit_box() -> impl Strategy<Value = BBox> {
    (0.0f64..0.99, 0.0f64..0.99, 0.001f64..1.0, 0.001f64..1.0)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, (x + w).min(1.0), (y + h).min(1.0)).unwrap())
}

proptest! {
    #[test]
    fn region_depth_matches_pixel_loop(map in depth_maps(), b in unit_box()) {
        let fast = region_depth(&map, &b);
        let slow = oracles::naive_region_depth(map.values(), map.width(), map.height(), b.coords());
        prop_assert!((fast - slow).abs() <= 1e-12, "{} vs {}", fast, slow);
    }

    #[test]
    fn looser_threshold_never_lowers_depth_reward(
        map in depth_maps(),
        b in unit_box(),
        asserted in 0.0f64..=1.0,
        t1 in 0.01f64..0.99,
        t2 in 0.01f64..0.99,
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let t = ReasoningTrace::new(
            vec![FocusStep::new(vec![Region { bbox: b, depth: asserted }], "x").unwrap()],
            "a",
        ).unwrap();
        let tight = depth_reward(&t, &map, &DepthTolerance { threshold: lo, ..DepthTolerance::default() });
        let loose = depth_reward(&t, &map, &DepthTolerance { threshold: hi, ..DepthTolerance::default() });
        prop_assert!(tight <= loose);
    }

    #[test]
    fn advantages_are_centered_and_shift_invariant(
        rewards in prop::collection::vec(-5.0f64..5.0, 8),
        c in -100.0f64..100.0,
    ) {
        let a = group_advantages(&rewards, 1e-8).unwrap();
        prop_assert!((a.iter().sum::<f64>() / 8.0).abs() <= 1e-9);
        let shifted: Vec<f64> = rewards.iter().map(|r| r + c).collect();
        let b = group_advantages(&shifted, 1e-8).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9, "{} vs {}", x, y);
        }
    }
}

#[test]
fn constant_group_has_zero_advantage() {
    assert_eq!(group_advantages(&[0.7; 8], 1e-8).unwrap(), vec![0.0; 8]);
    assert!(group_advantages(&[], 1e-8).is_err());
    assert!(group_advantages(&[1.0], 0.0).is_err());
}

fn request(iteration: u64, completions: Vec<String>) -> ScoreRequest {
    let map = DepthMap::constant(4, 4, 0.5).unwrap();
    ScoreRequest {
        sample_id: "s1".into(),
        iteration,
        question: "what is it?".into(),
        ground_truth: WireGroundTruth {
            answer: "a red cup".into(),
            boxes: vec![[0.0, 0.0, 0.5, 0.5]],
            depth_map: DepthMapRef::Inline {
                pgm_hex: hex_encode(&map.to_pgm_bytes()),
            },
        },
        completions,
        weights: None,
    }
}

fn hex_encode(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn scorer_scores_groups_and_guards_iterations() {
    let scorer = Scorer::new(
        Arc::new(MockJudge),
        Arc::new(JudgeHistory::in_memory()),
        ScoringConfig::default(),
    );
    let good = "<think><area>[{\"bbox\":[0,0,0.5,0.5],\"depth\":0.5}]</area><text>t</text></think><answer>a red cup</answer>";
    let completions: Vec<String> = (0..8)
        .map(|i| {
            if i % 2 == 0 {
                good.to_owned()
            } else {
                format!("answer {i}")
            }
        })
        .collect();
    let resp = scorer.score(&request(1, completions.clone())).unwrap();
    assert_eq!(resp.rewards.len(), 8);
    assert_eq!(resp.advantages.len(), 8);
    assert!(resp.advantages.iter().sum::<f64>().abs() <= 1e-9);
    assert_eq!(resp.rewards[0].r_format, 1.0);
    assert_eq!(resp.rewards[0].r_depth, 1.0);
    assert_eq!(resp.rewards[1].r_format, 0.0);
    assert!(resp.advantages[0] > resp.advantages[1]);
    assert_eq!(scorer.history("s1").unwrap().scores.len(), 8);

    let dup = scorer.score(&request(1, completions.clone())).unwrap_err();
    assert_eq!(dup.status(), 409);

    let same = scorer.score(&request(2, vec![good.to_owned(); 8])).unwrap();
    assert_eq!(same.advantages, vec![0.0; 8]);
    // The previous group averaged 0.5, this one scores 1.0 on every completion.
    assert!((same.rewards[0].r_ans - 1.5).abs() < 1e-12);

    let short = scorer
        .score(&request(3, vec![good.to_owned(); 3]))
        .unwrap_err();
    assert_eq!(short.status(), 400);
    let mut bad_depth = request(3, vec![good.to_owned(); 8]);
    bad_depth.ground_truth.depth_map = DepthMapRef::Path("/no/such/map.pgm".into());
    assert_eq!(scorer.score(&bad_depth).unwrap_err().status(), 422);
    assert_eq!(scorer.history("s1").unwrap().iteration, 2);
}
