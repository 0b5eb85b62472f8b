//! Red box outlines drawn on copies of the source image, one frame per
//! trajectory set.

use std::path::{Path, PathBuf};

use crate::geometry::{BBox, BoxSet};
use crate::netpbm::{decode_ppm, encode_ppm, Rgb8};
use crate::scaffold::FocusTrajectory;

use super::DatagenError;

pub const OUTLINE_RGB: [u8; 3] = [255, 0, 0];
pub const OUTLINE_PX: usize = 3;

/// Pixel rectangle `[left, right] x [top, bottom]`, inclusive, at least
/// `OUTLINE_PX` wide and tall (clamped to the image).
fn pixel_rect(b: &BBox, width: usize, height: usize) -> (usize, usize, usize, usize) {
    fn span(lo: f64, hi: f64, n: usize) -> (usize, usize) {
        let max = n - 1;
        let a = ((lo * n as f64).round() as usize).min(max);
        let mut z = ((hi * n as f64).round() as usize)
            .saturating_sub(1)
            .clamp(a, max);
        if z - a + 1 < OUTLINE_PX {
            z = (a + OUTLINE_PX - 1).min(max);
        }
        let a = z.saturating_sub(OUTLINE_PX - 1).min(a);
        (a, z)
    }
    let (left, right) = span(b.x1(), b.x2(), width);
    let (top, bottom) = span(b.y1(), b.y2(), height);
    (left, right, top, bottom)
}

pub fn draw_outline(img: &mut Rgb8, b: &BBox) {
    let (left, right, top, bottom) = pixel_rect(b, img.width, img.height);
    for y in top..=bottom {
        for x in left..=right {
            let near_edge = x - left < OUTLINE_PX
                || right - x < OUTLINE_PX
                || y - top < OUTLINE_PX
                || bottom - y < OUTLINE_PX;
            if near_edge {
                img.set(x, y, OUTLINE_RGB);
            }
        }
    }
}

pub fn draw_set(base: &Rgb8, set: &BoxSet) -> Rgb8 {
    let mut frame = base.clone();
    for b in set {
        draw_outline(&mut frame, b);
    }
    frame
}

/// Replaces characters that are unsafe in file names.
pub fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes `<id>_step<k>.ppm` into `out_dir` for each set of `traj`, `k`
/// counting from 0 in trajectory order.
pub fn render_overlays(
    image_path: &Path,
    traj: &FocusTrajectory,
    out_dir: &Path,
    id: &str,
) -> Result<Vec<PathBuf>, DatagenError> {
    let bytes = std::fs::read(image_path).map_err(|e| DatagenError::Image {
        path: image_path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = decode_ppm(&bytes).map_err(|e| DatagenError::Image {
        path: image_path.to_path_buf(),
        message: e.to_string(),
    })?;
    std::fs::create_dir_all(out_dir).map_err(|e| DatagenError::io(out_dir, e))?;
    let stem = file_stem(id);
    traj.sets
        .iter()
        .enumerate()
        .map(|(k, set)| {
            let path = out_dir.join(format!("{stem}_step{k}.ppm"));
            std::fs::write(&path, encode_ppm(&draw_set(&base, set)))
                .map_err(|e| DatagenError::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
