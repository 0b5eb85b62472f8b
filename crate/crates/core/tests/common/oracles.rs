//! Slow, independent reference implementations used to check the library.
//! They work on plain coordinate arrays and share no code with the crate.

#![allow(dead_code)]

/// Half-open pixel-center span `[first, last)` covered by `[lo, hi)` on an
/// `n`-pixel axis.
fn covered(lo: f64, hi: f64, n: usize) -> (usize, usize) {
    let first = (lo * n as f64 - 0.5).ceil().max(0.0) as usize;
    let last = ((hi * n as f64 - 0.5).ceil().max(0.0) as usize).min(n);
    (first.min(last), last)
}

/// Column intervals of `boxes` on the row whose pixel centers sit at `row`.
fn row_intervals(boxes: &[[f64; 4]], row: usize, n: usize) -> Vec<(usize, usize)> {
    let cy = (row as f64 + 0.5) / n as f64;
    let mut spans: Vec<(usize, usize)> = boxes
        .iter()
        .filter(|b| b[1] <= cy && cy < b[3])
        .map(|b| covered(b[0], b[2], n))
        .filter(|(a, z)| a < z)
        .collect();
    spans.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for (a, z) in spans {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(z),
            _ => merged.push((a, z)),
        }
    }
    merged
}

fn span_len(s: &[(usize, usize)]) -> usize {
    s.iter().map(|(a, z)| z - a).sum()
}

fn span_overlap(a: &[(usize, usize)], b: &[(usize, usize)]) -> usize {
    let (mut i, mut j, mut total) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo < hi {
            total += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

/// IoU of the two union regions, counted pixel by pixel on an `n x n` grid.
pub fn raster_giou(pred: &[[f64; 4]], gt: &[[f64; 4]], n: usize) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for row in 0..n {
        let p = row_intervals(pred, row, n);
        let g = row_intervals(gt, row, n);
        let both = span_overlap(&p, &g);
        inter += both;
        union += span_len(&p) + span_len(&g) - both;
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn raster_iou(a: [f64; 4], b: [f64; 4], n: usize) -> f64 {
    raster_giou(&[a], &[b], n)
}

/// Best total weight over one-to-one matchings of size `min(rows, cols)`,
/// by trying every injective assignment.
pub fn brute_force_assignment(w: &[Vec<f64>]) -> f64 {
    let rows = w.len();
    let cols = w.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    if rows > cols {
        let t: Vec<Vec<f64>> = (0..cols)
            .map(|c| (0..rows).map(|r| w[r][c]).collect())
            .collect();
        return brute_force_assignment(&t);
    }
    fn go(w: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
        if row == w.len() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.max(w[row][c] + go(w, row + 1, used));
                used[c] = false;
            }
        }
        best
    }
    go(w, 0, &mut vec![false; cols])
}

/// Hierarchical IoU with every area measured on the raster.
pub fn raster_hiou(pred: &[[f64; 4]], gt: &[[f64; 4]], n: usize) -> f64 {
    if pred.is_empty() || gt.is_empty() {
        return 0.0;
    }
    let giou = raster_giou(pred, gt, n);
    let w: Vec<Vec<f64>> = pred
        .iter()
        .map(|p| gt.iter().map(|g| raster_iou(*p, *g, n)).collect())
        .collect();
    let piou = brute_force_assignment(&w) / pred.len().min(gt.len()) as f64;
    (giou + piou) / 2.0
}

/// Mean of the depth samples whose pixel centers fall inside the box,
/// falling back to the sample under the box center.
pub fn naive_region_depth(values: &[f64], width: usize, height: usize, b: [f64; 4]) -> f64 {
    let mut picked = Vec::new();
    for row in 0..height {
        for col in 0..width {
            let x = (col as f64 + 0.5) / width as f64;
            let y = (row as f64 + 0.5) / height as f64;
            if b[0] <= x && x < b[2] && b[1] <= y && y < b[3] {
                picked.push(values[row * width + col]);
            }
        }
    }
    if picked.is_empty() {
        let col = (((b[0] + b[2]) / 2.0 * width as f64) as usize).min(width - 1);
        let row = (((b[1] + b[3]) / 2.0 * height as f64) as usize).min(height - 1);
        return values[row * width + col];
    }
    picked.iter().sum::<f64>() / picked.len() as f64
}
