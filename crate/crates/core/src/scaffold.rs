//! Reverse expansion of ground-truth boxes into a coarse-to-fine focus
//! trajectory.
//!
//! The forward pass grows every ground-truth box toward the image borders
//! over `K` steps, merging boxes that start to overlap, until only the full
//! image remains. Optional distractor boxes (same scale as the targets, no
//! overlap with them) are appended, and the whole sequence is reversed so
//! that a reader starts from the distractors, sees the full image, and
//! narrows down to the ground truth.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, BBox, BoxSet, GeometryError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScaffoldError {
    #[error("expansion divisor must be at least 1")]
    ZeroDivisor,
    #[error("invalid scaffold config: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaffoldConfig {
    /// Expansion-step budget.
    pub steps: usize,
    /// Relative area tolerance for distractors.
    pub area_tolerance: f64,
    /// Upper bound of the uniformly drawn distractor count.
    pub max_distractors: usize,
    /// Rejection-sampling attempts per distractor.
    pub attempt_budget: usize,
    pub seed: u64,
}

impl Default for ScaffoldConfig {
    fn default() -> Self {
        ScaffoldConfig {
            steps: 5,
            area_tolerance: 0.2,
            max_distractors: 2,
            attempt_budget: 1000,
            seed: 0,
        }
    }
}

impl ScaffoldConfig {
    pub fn validate(&self) -> Result<(), ScaffoldError> {
        if self.steps == 0 {
            return Err(ScaffoldError::Config("steps must be >= 1".into()));
        }
        if !(self.area_tolerance > 0.0 && self.area_tolerance < 1.0) {
            return Err(ScaffoldError::Config(
                "area_tolerance must lie in (0, 1)".into(),
            ));
        }
        if self.max_distractors > 2 {
            return Err(ScaffoldError::Config(
                "max_distractors must be 0, 1 or 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusTrajectory {
    pub sets: Vec<BoxSet>,
    /// Step at which the set first collapsed to a single box.
    pub early_stop_step: Option<usize>,
    pub distractor_count: usize,
    /// `false`: `sets[0]` is the ground truth and the expansion ends at the
    /// full image. `true`: distractors first, ground truth last.
    pub reversed: bool,
}

impl FocusTrajectory {
    /// Number of expansion steps actually run (`K` after any rewrite).
    pub fn expansion_steps(&self) -> usize {
        self.sets.len() - 1 - self.distractor_count
    }
}

/// Grows each box toward the borders: every margin shrinks by `1/divisor`
/// of itself, so a divisor of 1 yields the full image.
pub fn expand_step(prev: &BoxSet, divisor: usize) -> Result<BoxSet, ScaffoldError> {
    if divisor == 0 {
        return Err(ScaffoldError::ZeroDivisor);
    }
    prev.iter().map(|b| expand_box(b, divisor)).collect()
}

fn expand_box(b: &BBox, divisor: usize) -> Result<BBox, ScaffoldError> {
    if divisor == 1 {
        return Ok(BBox::UNIT);
    }
    let s = divisor as f64;
    let [x1, y1, x2, y2] = b.coords();
    Ok(BBox::new(
        (x1 - x1 / s).max(0.0),
        (y1 - y1 / s).max(0.0),
        (x2 + (1.0 - x2) / s).min(1.0),
        (y2 + (1.0 - y2) / s).min(1.0),
    )?)
}

/// Replaces overlapping pairs (positive-area intersection) by their
/// envelope until the set is pairwise disjoint. The lowest-index pair is
/// merged first and the envelope takes the lower index's position.
pub fn merge_overlaps(set: &BoxSet) -> BoxSet {
    let mut boxes = set.boxes().to_vec();
    'outer: loop {
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                if iou(&boxes[i], &boxes[j]) > 0.0 {
                    boxes[i] = boxes[i].envelope(&boxes[j]);
                    boxes.remove(j);
                    continue 'outer;
                }
            }
        }
        return BoxSet::new(boxes);
    }
}

/// Runs the expansion loop. The divisor at step `t` is `K - t + 1` with the
/// current `K`; the first time a step leaves a single box, `K` is rewritten
/// to `t + 2` (once).
pub fn build_forward_sequence(
    gt: &BoxSet,
    cfg: &ScaffoldConfig,
) -> Result<FocusTrajectory, ScaffoldError> {
    cfg.validate()?;
    if gt.is_empty() {
        return Err(GeometryError::EmptySet("ground-truth").into());
    }
    let mut sets = vec![gt.clone()];
    let mut budget = cfg.steps;
    let mut early_stop_step = None;
    let mut t = 1;
    while t <= budget {
        let divisor = budget - t + 1;
        let next = merge_overlaps(&expand_step(&sets[t - 1], divisor)?);
        let collapsed = next.len() == 1;
        sets.push(next);
        if collapsed && early_stop_step.is_none() {
            budget = t + 2;
            early_stop_step = Some(t);
        }
        t += 1;
    }
    Ok(FocusTrajectory {
        sets,
        early_stop_step,
        distractor_count: 0,
        reversed: false,
    })
}

/// Draws `0..=max_distractors` single-box distractor sets. Each distractor
/// has zero overlap with every ground-truth box and every earlier
/// distractor, and an area within `area_tolerance` (relative) of the mean
/// ground-truth box area. Runs out of attempts quietly, returning fewer.
pub fn sample_distractors<R: Rng + ?Sized>(
    gt: &BoxSet,
    cfg: &ScaffoldConfig,
    rng: &mut R,
) -> Vec<BoxSet> {
    let wanted = rng.random_range(0..=cfg.max_distractors);
    if wanted == 0 || gt.is_empty() {
        return Vec::new();
    }
    let mean_area = gt.iter().map(BBox::area).sum::<f64>() / gt.len() as f64;
    let mut placed: Vec<BBox> = Vec::with_capacity(wanted);
    for _ in 0..wanted {
        match draw_distractor(gt, &placed, mean_area, cfg, rng) {
            Some(b) => placed.push(b),
            None => break,
        }
    }
    placed.into_iter().map(BoxSet::single).collect()
}

fn draw_distractor<R: Rng + ?Sized>(
    gt: &BoxSet,
    placed: &[BBox],
    mean_area: f64,
    cfg: &ScaffoldConfig,
    rng: &mut R,
) -> Option<BBox> {
    let tol = cfg.area_tolerance;
    let log_aspect = 3f64.ln();
    for _ in 0..cfg.attempt_budget {
        let area = mean_area * (1.0 + tol * rng.random_range(-1.0..=1.0));
        let aspect = (log_aspect * rng.random_range(-1.0..=1.0)).exp();
        let w = (area * aspect).sqrt();
        let h = (area / aspect).sqrt();
        if w >= 1.0 || h >= 1.0 {
            continue;
        }
        let x1 = rng.random_range(0.0..=1.0 - w);
        let y1 = rng.random_range(0.0..=1.0 - h);
        let Ok(candidate) = BBox::new(x1, y1, (x1 + w).min(1.0), (y1 + h).min(1.0)) else {
            continue;
        };
        if (candidate.area() - mean_area).abs() / mean_area > tol {
            continue;
        }
        let clear = gt
            .iter()
            .chain(placed)
            .all(|other| iou(&candidate, other) == 0.0);
        if clear {
            return Some(candidate);
        }
    }
    None
}

/// Forward expansion plus distractors, reversed into reading order:
/// `[distractors.., full image, .., gt]`.
pub fn build_scaffold<R: Rng + ?Sized>(
    gt: &BoxSet,
    cfg: &ScaffoldConfig,
    rng: &mut R,
) -> Result<FocusTrajectory, ScaffoldError> {
    let mut traj = build_forward_sequence(gt, cfg)?;
    let distractors = sample_distractors(gt, cfg, rng);
    traj.distractor_count = distractors.len();
    traj.sets.extend(distractors);
    traj.sets.reverse();
    traj.reversed = true;
    Ok(traj)
}
