//! Optimal one-to-one box assignment (Kuhn-Munkres with potentials).

use serde::{Deserialize, Serialize};

use super::{iou, BoxSet, GeometryError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Sorted by prediction index. Always `min(|pred|, |gt|)` entries.
    pub pairs: Vec<MatchedPair>,
    pub total: f64,
}

/// Matches predicted boxes to ground-truth boxes so that the summed IoU is
/// maximal over every one-to-one assignment of size `min(|pred|, |gt|)`.
pub fn match_boxes(pred: &BoxSet, gt: &BoxSet) -> Result<MatchResult, GeometryError> {
    if pred.is_empty() {
        return Err(GeometryError::EmptySet("predicted"));
    }
    if gt.is_empty() {
        return Err(GeometryError::EmptySet("ground-truth"));
    }
    let weights: Vec<Vec<f64>> = pred
        .iter()
        .map(|p| gt.iter().map(|g| iou(p, g)).collect())
        .collect();
    let pairs: Vec<MatchedPair> = assign_max(&weights)
        .into_iter()
        .map(|(p, g)| MatchedPair {
            pred: p,
            gt: g,
            iou: weights[p][g],
        })
        .collect();
    let total = pairs.iter().map(|p| p.iou).sum();
    Ok(MatchResult { pairs, total })
}

/// Maximum-weight assignment on a rectangular weight matrix.
///
/// Returns `min(rows, cols)` `(row, col)` pairs sorted by row. The matrix is
/// padded to a square with zero-cost dummy entries and solved as a min-cost
/// problem on `max_weight - w`; among equal-cost alternatives the lowest
/// column index found first is kept, so the result is deterministic.
pub fn assign_max(weights: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    debug_assert!(
        weights.iter().all(|r| r.len() == cols),
        "ragged weight matrix"
    );

    let max_w = weights
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let n = rows.max(cols);
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            max_w - weights[i][j]
        } else {
            0.0
        }
    };

    // 1-based potentials; p[j] is the row assigned to column j (0 = none).
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter(|&j| p[j] != 0 && p[j] - 1 < rows && j - 1 < cols)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}
