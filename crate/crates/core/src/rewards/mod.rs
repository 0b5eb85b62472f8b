//! Task reward for a single completion and group-normalized advantages.
//!
//! The composite reward is a weighted sum of four parts:
//!
//! * format: 1 when the completion parses, else 0;
//! * answer: judge score plus its improvement over the previous group's
//!   mean for the same sample;
//! * grounding: final-step HIoU plus its improvement over the first step
//!   that is not the full image;
//! * depth: 1 when every asserted region depth matches the depth map.

pub mod history;
pub mod judge;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use history::{HistoryEntry, HistoryError, JudgeHistory};
pub use judge::{HttpJudge, HttpJudgeConfig, Judge, JudgeError, LimitedJudge, MockJudge};

use crate::depth::{depth_reward, DepthMap, DepthTolerance};
use crate::geometry::{hiou, BoxSet, GeometryError};
use crate::trace::{extract_answer, extract_boxsets, parse_trace, ReasoningTrace, TraceError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("group must contain at least one reward")]
    EmptyGroup,
    #[error("stability constant must be positive, got {0}")]
    InvalidDelta(f64),
    #[error("reward weights must be non-negative")]
    NegativeWeight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub w_format: f64,
    pub w_ans: f64,
    pub w_bbox: f64,
    pub w_depth: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            w_format: 1.0,
            w_ans: 1.0,
            w_bbox: 1.0,
            w_depth: 1.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), RewardError> {
        let all = [self.w_format, self.w_ans, self.w_bbox, self.w_depth];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(RewardError::NegativeWeight)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundingScore {
    pub r_bbox: f64,
    pub s_init: f64,
    pub s_end: f64,
}

/// Rewards the final grounding and how much it improved on the first
/// focused (non-full-image) step. When every step is the full image the
/// improvement term is zero.
pub fn grounding_reward(t: &ReasoningTrace, gt: &BoxSet) -> Result<GroundingScore, GeometryError> {
    let sets = extract_boxsets(t);
    let end = sets.last().expect("a parsed trace has at least one step");
    let init = sets.iter().find(|s| !s.is_full_image()).unwrap_or(end);
    let s_end = hiou(end, gt)?;
    let s_init = hiou(init, gt)?;
    Ok(GroundingScore {
        r_bbox: s_end + (s_end - s_init),
        s_init,
        s_end,
    })
}

/// `s_now + (s_now - prior_mean)`, or `s_now` when there is no prior group.
pub fn progressive_from_mean(s_now: f64, prior_mean: Option<f64>) -> f64 {
    match prior_mean {
        Some(mean) => s_now + (s_now - mean),
        None => s_now,
    }
}

pub fn progressive_answer_reward(s_now: f64, sample_id: &str, history: &JudgeHistory) -> f64 {
    progressive_from_mean(s_now, history.prior_mean(sample_id))
}

/// Group-normalized advantages `(r - mean) / (std + delta)` using the
/// population standard deviation.
pub fn group_advantages(rewards: &[f64], delta: f64) -> Result<Vec<f64>, RewardError> {
    if rewards.is_empty() {
        return Err(RewardError::EmptyGroup);
    }
    if delta.is_nan() || delta <= 0.0 {
        return Err(RewardError::InvalidDelta(delta));
    }
    // Deviations are taken from the first reward so that a constant group
    // yields exact zeros instead of rounding noise amplified by 1/delta.
    let n = rewards.len() as f64;
    let pivot = rewards[0];
    let dev: Vec<f64> = rewards.iter().map(|r| r - pivot).collect();
    let mean = dev.iter().sum::<f64>() / n;
    let var = dev.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + delta;
    Ok(dev.iter().map(|d| (d - mean) / denom).collect())
}

/// Reference data for one prompt.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub question: String,
    pub answer: String,
    pub boxes: BoxSet,
    pub depth: DepthMap,
}

/// Everything besides the completion and ground truth that scoring needs.
pub struct RewardContext<'a> {
    pub judge: &'a dyn Judge,
    /// Mean judge score of this sample's previous group, if any.
    pub prior_mean: Option<f64>,
    pub weights: RewardWeights,
    pub tolerance: DepthTolerance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_format: f64,
    pub r_ans: f64,
    pub r_bbox: f64,
    pub r_depth: f64,
    pub total: f64,
    /// Raw judge score feeding `r_ans`.
    pub judge_score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_init: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<TraceError>,
}

/// Scores one completion. Geometry and depth scoring cannot fail on a
/// parsed trace; only the judge can.
pub fn composite_reward(
    raw: &str,
    gt: &GroundTruth,
    ctx: &RewardContext<'_>,
) -> Result<RewardBreakdown, JudgeError> {
    let w = &ctx.weights;
    let breakdown = match parse_trace(raw) {
        Ok(trace) => {
            let judge_score = ctx
                .judge
                .score(&gt.question, trace.answer().trim(), &gt.answer)?;
            let r_ans = progressive_from_mean(judge_score, ctx.prior_mean);
            let grounding = grounding_reward(&trace, &gt.boxes)
                .expect("ground-truth boxes are validated before scoring");
            let r_depth = depth_reward(&trace, &gt.depth, &ctx.tolerance);
            RewardBreakdown {
                r_format: 1.0,
                r_ans,
                r_bbox: grounding.r_bbox,
                r_depth,
                total: w.w_format * 1.0
                    + w.w_ans * r_ans
                    + w.w_bbox * grounding.r_bbox
                    + w.w_depth * r_depth,
                judge_score,
                s_init: Some(grounding.s_init),
                s_end: Some(grounding.s_end),
                diagnostic: None,
            }
        }
        Err(diagnostic) => {
            let (judge_score, r_ans) = match extract_answer(raw) {
                Some(answer) => {
                    let s = ctx.judge.score(&gt.question, answer, &gt.answer)?;
                    (s, progressive_from_mean(s, ctx.prior_mean))
                }
                None => (0.0, 0.0),
            };
            RewardBreakdown {
                r_format: 0.0,
                r_ans,
                r_bbox: 0.0,
                r_depth: 0.0,
                total: w.w_format * 0.0 + w.w_ans * r_ans + w.w_bbox * 0.0 + w.w_depth * 0.0,
                judge_score,
                s_init: None,
                s_end: None,
                diagnostic: Some(diagnostic),
            }
        }
    };
    Ok(breakdown)
}
