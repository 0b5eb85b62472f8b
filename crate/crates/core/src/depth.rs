//! Depth maps, per-region depth lookup and the depth-consistency reward.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;
use crate::netpbm::{decode_pgm16, encode_pgm16, Gray16, NetpbmError};
use crate::trace::ReasoningTrace;

#[derive(Debug, Error)]
pub enum DepthError {
    #[error("cannot read depth map {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed depth map: {0}")]
    Format(#[from] NetpbmError),
    #[error("invalid depth map: {0}")]
    Invalid(String),
}

/// Dense normalized depth grid, row-major from the top-left corner.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    /// Producer's near/far orientation, carried as metadata only.
    pub convention_note: String,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, DepthError> {
        if width == 0 || height == 0 {
            return Err(DepthError::Invalid("dimensions must be positive".into()));
        }
        if values.len() != width * height {
            return Err(DepthError::Invalid(format!(
                "{} values for a {width}x{height} grid",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(DepthError::Invalid(format!(
                "depth value {v} outside [0, 1]"
            )));
        }
        Ok(DepthMap {
            width,
            height,
            values,
            convention_note: String::new(),
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self, DepthError> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Decodes a 16-bit `P5` PGM; samples are scaled by 1/65535.
    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<Self, DepthError> {
        let raw = decode_pgm16(bytes)?;
        let values = raw
            .samples
            .iter()
            .map(|&s| f64::from(s) / 65535.0)
            .collect();
        let mut map = Self::new(raw.width, raw.height, values)?;
        map.convention_note = "16-bit PGM, value = raw / 65535".into();
        Ok(map)
    }

    /// Quantizes to 16 bits and encodes as `P5` PGM.
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        encode_pgm16(&Gray16 {
            width: self.width,
            height: self.height,
            samples: self
                .values
                .iter()
                .map(|v| (v * 65535.0).round() as u16)
                .collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

pub fn load_depth_map(path: impl AsRef<Path>) -> Result<DepthMap, DepthError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| DepthError::Io {
        path: path.display().to_string(),
        source,
    })?;
    DepthMap::from_pgm_bytes(&bytes)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthStatistic {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthTolerance {
    /// Maximum accepted relative error.
    pub threshold: f64,
    /// Lower clamp on the reference depth in the error denominator.
    pub gt_floor: f64,
    pub statistic: DepthStatistic,
}

impl Default for DepthTolerance {
    fn default() -> Self {
        DepthTolerance {
            threshold: 0.1,
            gt_floor: 1e-3,
            statistic: DepthStatistic::Mean,
        }
    }
}

impl DepthTolerance {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(format!(
                "depth threshold {} must lie in (0, 1)",
                self.threshold
            ));
        }
        if self.gt_floor.is_nan() || self.gt_floor <= 0.0 {
            return Err(format!("depth gt_floor {} must be positive", self.gt_floor));
        }
        Ok(())
    }
}

/// Reference depth of a box: the statistic over every pixel whose center
/// lies inside the box (half-open on the right/bottom edges), or the pixel
/// under the box center when no pixel center is covered.
pub fn region_depth(d: &DepthMap, b: &BBox) -> f64 {
    region_depth_with(d, b, DepthStatistic::Mean)
}

pub fn region_depth_with(d: &DepthMap, b: &BBox, stat: DepthStatistic) -> f64 {
    let inside = |i: usize, n: usize, lo: f64, hi: f64| {
        let c = (i as f64 + 0.5) / n as f64;
        c >= lo && c < hi
    };
    let cols: Vec<usize> = (0..d.width)
        .filter(|&c| inside(c, d.width, b.x1(), b.x2()))
        .collect();
    let rows: Vec<usize> = (0..d.height)
        .filter(|&r| inside(r, d.height, b.y1(), b.y2()))
        .collect();
    if cols.is_empty() || rows.is_empty() {
        let (cx, cy) = b.center();
        let col = ((cx * d.width as f64) as usize).min(d.width - 1);
        let row = ((cy * d.height as f64) as usize).min(d.height - 1);
        return d.at(col, row);
    }
    let covered = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (c, r)))
        .map(|(c, r)| d.at(c, r));
    match stat {
        DepthStatistic::Mean => shifted_mean(covered),
        DepthStatistic::Median => {
            let mut v: Vec<f64> = covered.collect();
            v.sort_by(f64::total_cmp);
            let mid = v.len() / 2;
            if v.len() % 2 == 1 {
                v[mid]
            } else {
                (v[mid - 1] + v[mid]) / 2.0
            }
        }
    }
}

/// Mean taken around the first sample, exact on constant input.
fn shifted_mean(mut values: impl Iterator<Item = f64>) -> f64 {
    let Some(pivot) = values.next() else {
        return 0.0;
    };
    let (mut n, mut acc) = (1usize, 0.0f64);
    for v in values {
        acc += v - pivot;
        n += 1;
    }
    pivot + acc / n as f64
}

/// Relative error of each asserted region depth, in emission order.
pub fn depth_errors(t: &ReasoningTrace, d: &DepthMap, tol: &DepthTolerance) -> Vec<f64> {
    t.regions()
        .map(|r| {
            let reference = region_depth_with(d, &r.bbox, tol.statistic);
            (r.depth - reference).abs() / reference.max(tol.gt_floor)
        })
        .collect()
}

/// Relative slack on the threshold so that decimal boundary values such as
/// |0.55 - 0.5| / 0.5 compare as equal to 0.1.
const BOUNDARY_SLACK: f64 = 1e-9;

/// 1.0 when every region's relative depth error is within the threshold,
/// otherwise 0.0.
pub fn depth_reward(t: &ReasoningTrace, d: &DepthMap, tol: &DepthTolerance) -> f64 {
    let limit = tol.threshold * (1.0 + BOUNDARY_SLACK);
    if depth_errors(t, d, tol).iter().all(|&e| e <= limit) {
        1.0
    } else {
        0.0
    }
}
