//! Rollout-group scoring: the request/response wire schema shared by the
//! batch CLI and the HTTP service, and the single code path both use.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::{load_depth_map, DepthError, DepthMap, DepthTolerance};
use crate::geometry::{BoxSet, GeometryError};
use crate::rewards::{
    composite_reward, group_advantages, GroundTruth, HistoryEntry, HistoryError, Judge, JudgeError,
    JudgeHistory, RewardBreakdown, RewardContext, RewardWeights,
};

/// Depth map given either as a file path or inline as hex-encoded PGM bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DepthMapRef {
    Path(String),
    Inline { pgm_hex: String },
}

impl DepthMapRef {
    pub fn load(&self) -> Result<DepthMap, DepthError> {
        match self {
            DepthMapRef::Path(p) => load_depth_map(p),
            DepthMapRef::Inline { pgm_hex } => {
                let bytes = hex::decode(pgm_hex.trim()).map_err(|e| {
                    DepthError::Invalid(format!("inline depth map is not hex: {e}"))
                })?;
                DepthMap::from_pgm_bytes(&bytes)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireGroundTruth {
    pub answer: String,
    pub boxes: Vec<[f64; 4]>,
    pub depth_map: DepthMapRef,
}

/// One rollout group: every completion sampled for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    pub sample_id: String,
    pub iteration: u64,
    /// Passed to the judge; may be empty.
    #[serde(default)]
    pub question: String,
    pub ground_truth: WireGroundTruth,
    pub completions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<RewardWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub sample_id: String,
    pub iteration: u64,
    /// In completion order.
    pub rewards: Vec<RewardBreakdown>,
    pub advantages: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("invalid request: {0}")]
    Schema(String),
    #[error(transparent)]
    History(HistoryError),
    #[error("unreadable depth map: {0}")]
    Depth(#[from] DepthError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
}

impl ScoreError {
    /// HTTP status used by the service for this failure.
    pub fn status(&self) -> u16 {
        match self {
            ScoreError::Schema(_) => 400,
            ScoreError::History(HistoryError::NonMonotone { .. }) => 409,
            ScoreError::History(HistoryError::InvalidScore(_)) => 400,
            ScoreError::History(_) => 500,
            ScoreError::Depth(_) => 422,
            ScoreError::Judge(_) => 502,
        }
    }
}

impl From<HistoryError> for ScoreError {
    fn from(e: HistoryError) -> Self {
        ScoreError::History(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub weights: RewardWeights,
    pub tolerance: DepthTolerance,
    /// Required number of completions per request.
    pub group_size: usize,
    /// Stability constant in the advantage denominator.
    pub delta: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            weights: RewardWeights::default(),
            tolerance: DepthTolerance::default(),
            group_size: 8,
            delta: 1e-8,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.group_size == 0 {
            return Err("group size must be at least 1".into());
        }
        if self.delta.is_nan() || self.delta <= 0.0 {
            return Err(format!("delta must be positive, got {}", self.delta));
        }
        self.weights.validate().map_err(|e| e.to_string())?;
        self.tolerance.validate()
    }
}

/// Scores rollout groups against a judge and a shared history.
#[derive(Clone)]
pub struct Scorer {
    judge: Arc<dyn Judge>,
    history: Arc<JudgeHistory>,
    config: ScoringConfig,
}

impl Scorer {
    pub fn new(judge: Arc<dyn Judge>, history: Arc<JudgeHistory>, config: ScoringConfig) -> Self {
        Scorer {
            judge,
            history,
            config,
        }
    }

    pub fn config(&self) -> &ScoringConfig {
        &self.config
    }

    pub fn history(&self, sample_id: &str) -> Option<HistoryEntry> {
        self.history.read(sample_id)
    }

    /// Scores every completion, computes advantages, then records the
    /// group's judge scores. History is written once, after everything
    /// else succeeded, so a failed request leaves it untouched.
    pub fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse, ScoreError> {
        let weights = req.weights.unwrap_or(self.config.weights);
        let boxes = self.validate(req, &weights)?;
        self.history
            .check_iteration(&req.sample_id, req.iteration)?;

        let truth = GroundTruth {
            question: req.question.clone(),
            answer: req.ground_truth.answer.clone(),
            boxes,
            depth: req.ground_truth.depth_map.load()?,
        };
        let ctx = RewardContext {
            judge: self.judge.as_ref(),
            prior_mean: self.history.prior_mean(&req.sample_id),
            weights,
            tolerance: self.config.tolerance,
        };
        let rewards = req
            .completions
            .par_iter()
            .map(|c| composite_reward(c, &truth, &ctx))
            .collect::<Result<Vec<_>, _>>()?;

        let totals: Vec<f64> = rewards.iter().map(|r| r.total).collect();
        let advantages = group_advantages(&totals, self.config.delta)
            .map_err(|e| ScoreError::Schema(e.to_string()))?;

        let scores = rewards.iter().map(|r| r.judge_score).collect();
        self.history.update(&req.sample_id, req.iteration, scores)?;

        Ok(ScoreResponse {
            sample_id: req.sample_id.clone(),
            iteration: req.iteration,
            rewards,
            advantages,
        })
    }

    fn validate(&self, req: &ScoreRequest, weights: &RewardWeights) -> Result<BoxSet, ScoreError> {
        let schema = |m: String| ScoreError::Schema(m);
        if req.sample_id.trim().is_empty() {
            return Err(schema("sample_id must not be empty".into()));
        }
        if req.completions.len() != self.config.group_size {
            return Err(schema(format!(
                "expected {} completions, got {}",
                self.config.group_size,
                req.completions.len()
            )));
        }
        weights.validate().map_err(|e| schema(e.to_string()))?;
        if req.ground_truth.boxes.is_empty() {
            return Err(schema("ground_truth.boxes must not be empty".into()));
        }
        BoxSet::from_coords(req.ground_truth.boxes.iter().copied())
            .map_err(|e: GeometryError| schema(format!("ground_truth.boxes: {e}")))
    }
}
