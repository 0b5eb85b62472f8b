//! Axis-aligned box geometry in normalized image coordinates and the
//! hierarchical IoU metric family.
//!
//! All coordinates are fractions of the image width/height with the origin
//! at the top-left corner. Region areas are computed exactly by coordinate
//! compression, so every metric here is deterministic to the last bit for a
//! given input order.

mod matching;

pub use matching::{assign_max, match_boxes, MatchResult, MatchedPair};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid box ({x1}, {y1}, {x2}, {y2}): {reason}")]
    InvalidBox {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        reason: &'static str,
    },
    #[error("{0} box set must not be empty")]
    EmptySet(&'static str),
}

/// A normalized rectangle `(x1, y1, x2, y2)` with `0 <= x1 < x2 <= 1` and
/// `0 <= y1 < y2 <= 1`.
///
/// Serialized as a bare 4-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    /// The whole image.
    pub const UNIT: BBox = BBox {
        x1: 0.0,
        y1: 0.0,
        x2: 1.0,
        y2: 1.0,
    };

    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        let invalid = |reason| GeometryError::InvalidBox {
            x1,
            y1,
            x2,
            y2,
            reason,
        };
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        if x1 < 0.0 || y1 < 0.0 || x2 > 1.0 || y2 > 1.0 {
            return Err(invalid("coordinate outside [0, 1]"));
        }
        if x1 >= x2 {
            return Err(invalid("x2 must exceed x1"));
        }
        if y1 >= y2 {
            return Err(invalid("y2 must exceed y1"));
        }
        Ok(BBox { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn is_unit(&self) -> bool {
        *self == Self::UNIT
    }

    /// Area of the overlap with `other`; zero when the boxes only touch.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Smallest box containing both `self` and `other`.
    pub fn envelope(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x1 && x < self.x2 && y >= self.y1 && y < self.y2
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(c: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.coords()
    }
}

/// Ordered collection of boxes. Duplicates are allowed; every metric in this
/// module is independent of the order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoxSet(Vec<BBox>);

impl BoxSet {
    pub fn new(boxes: Vec<BBox>) -> Self {
        BoxSet(boxes)
    }

    pub fn single(b: BBox) -> Self {
        BoxSet(vec![b])
    }

    pub fn unit() -> Self {
        BoxSet(vec![BBox::UNIT])
    }

    /// Validates raw coordinate quadruples.
    pub fn from_coords<I>(coords: I) -> Result<Self, GeometryError>
    where
        I: IntoIterator<Item = [f64; 4]>,
    {
        coords
            .into_iter()
            .map(BBox::try_from)
            .collect::<Result<Vec<_>, _>>()
            .map(BoxSet)
    }

    pub fn boxes(&self) -> &[BBox] {
        &self.0
    }

    pub fn into_boxes(self) -> Vec<BBox> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, BBox> {
        self.0.iter()
    }

    /// True when the set is exactly one full-image box.
    pub fn is_full_image(&self) -> bool {
        self.0.len() == 1 && self.0[0].is_unit()
    }

    pub fn push(&mut self, b: BBox) {
        self.0.push(b);
    }
}

impl FromIterator<BBox> for BoxSet {
    fn from_iter<T: IntoIterator<Item = BBox>>(iter: T) -> Self {
        BoxSet(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a BoxSet {
    type Item = &'a BBox;
    type IntoIter = std::slice::Iter<'a, BBox>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Exact area of the union of all boxes in `set`.
pub fn union_area(set: &BoxSet) -> Result<f64, GeometryError> {
    if set.is_empty() {
        return Err(GeometryError::EmptySet("box"));
    }
    Ok(region_areas(set.boxes(), &[]).union)
}

struct RegionAreas {
    /// Area covered by both regions.
    both: f64,
    /// Area covered by either region.
    union: f64,
}

/// Sweeps the x-slabs induced by every vertical edge; inside a slab the
/// covered y-extent of each region is a union of merged intervals.
fn region_areas(a: &[BBox], b: &[BBox]) -> RegionAreas {
    let mut xs: Vec<f64> = a.iter().chain(b).flat_map(|bx| [bx.x1, bx.x2]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();

    let mut both = 0.0;
    let mut union = 0.0;
    let mut ia = Vec::new();
    let mut ib = Vec::new();
    for w in xs.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = (lo + hi) / 2.0;
        slab_intervals(a, mid, &mut ia);
        slab_intervals(b, mid, &mut ib);
        if ia.is_empty() && ib.is_empty() {
            continue;
        }
        let width = hi - lo;
        let len_a = total_length(&ia);
        let len_b = total_length(&ib);
        let overlap = overlap_length(&ia, &ib);
        both += width * overlap;
        union += width * (len_a + len_b - overlap);
    }
    RegionAreas { both, union }
}

/// Merged, sorted y-intervals of the boxes spanning x = `mid`.
fn slab_intervals(boxes: &[BBox], mid: f64, out: &mut Vec<(f64, f64)>) {
    out.clear();
    out.extend(
        boxes
            .iter()
            .filter(|b| b.x1 < mid && mid < b.x2)
            .map(|b| (b.y1, b.y2)),
    );
    out.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(out.len());
    for &(lo, hi) in out.iter() {
        match merged.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    *out = merged;
}

fn total_length(intervals: &[(f64, f64)]) -> f64 {
    intervals.iter().map(|(lo, hi)| hi - lo).sum()
}

fn overlap_length(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
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

/// Global IoU: overlap of the two union regions over their combined region.
///
/// An empty prediction scores 0.
pub fn giou(pred: &BoxSet, gt: &BoxSet) -> Result<f64, GeometryError> {
    if gt.is_empty() {
        return Err(GeometryError::EmptySet("ground-truth"));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let areas = region_areas(pred.boxes(), gt.boxes());
    Ok((areas.both / areas.union).clamp(0.0, 1.0))
}

/// Pairwise IoU: mean IoU over the optimal one-to-one matching. The
/// denominator is the number of matched pairs, `min(|pred|, |gt|)`;
/// surplus predictions are only penalized through [`giou`].
pub fn piou(pred: &BoxSet, gt: &BoxSet) -> Result<f64, GeometryError> {
    let m = match_boxes(pred, gt)?;
    Ok((m.total / m.pairs.len() as f64).clamp(0.0, 1.0))
}

/// Hierarchical IoU, the mean of [`giou`] and [`piou`]. An empty prediction
/// scores 0.
pub fn hiou(pred: &BoxSet, gt: &BoxSet) -> Result<f64, GeometryError> {
    if gt.is_empty() {
        return Err(GeometryError::EmptySet("ground-truth"));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok((giou(pred, gt)? + piou(pred, gt)?) / 2.0)
}
