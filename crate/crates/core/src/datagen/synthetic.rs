//! Small deterministic source dataset: colored rectangles on a gradient,
//! a matching depth map where each object is a flat plane nearer than the
//! background, and a counting or color question per image.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::depth::DepthMap;
use crate::geometry::BBox;
use crate::netpbm::{encode_ppm, Rgb8};

use super::DatagenError;

pub const WIDTH: usize = 64;
pub const HEIGHT: usize = 48;

const COLORS: [(&str, [u8; 3]); 4] = [
    ("blue", [40, 70, 200]),
    ("green", [40, 170, 60]),
    ("yellow", [230, 210, 40]),
    ("purple", [140, 50, 160]),
];

/// Millesimal coordinate, so boxes survive three-decimal serialization.
fn milli(rng: &mut ChaCha8Rng, lo: u32, hi: u32) -> f64 {
    f64::from(rng.random_range(lo..=hi)) / 1000.0
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let w = milli(rng, 120, 300);
    let h = milli(rng, 120, 300);
    let x1 = (milli(rng, 20, 960) * 1000.0)
        .min((0.98 - w) * 1000.0)
        .round()
        / 1000.0;
    let y1 = (milli(rng, 20, 960) * 1000.0)
        .min((0.98 - h) * 1000.0)
        .round()
        / 1000.0;
    let r = |v: f64| (v * 1000.0).round() / 1000.0;
    BBox::new(x1, y1, r(x1 + w), r(y1 + h)).expect("generated box is valid")
}

fn place_boxes(rng: &mut ChaCha8Rng, n: usize) -> Vec<BBox> {
    let mut out: Vec<BBox> = Vec::new();
    while out.len() < n {
        let b = random_box(rng);
        if out.iter().all(|o| o.intersection_area(&b) == 0.0) {
            out.push(b);
        }
    }
    out
}

fn paint(img: &mut Rgb8, b: &BBox, rgb: [u8; 3]) {
    for y in 0..img.height {
        for x in 0..img.width {
            let (cx, cy) = (
                (x as f64 + 0.5) / img.width as f64,
                (y as f64 + 0.5) / img.height as f64,
            );
            if b.contains_point(cx, cy) {
                img.set(x, y, rgb);
            }
        }
    }
}

/// Writes `n` records (images, depth maps, `source.jsonl`) under `dir` and
/// returns the path of the source file.
pub fn generate_fixture(dir: &Path, n: usize, seed: u64) -> Result<PathBuf, DatagenError> {
    let images = dir.join("images");
    let depths = dir.join("depth");
    for d in [&images, &depths] {
        std::fs::create_dir_all(d).map_err(|e| DatagenError::io(d, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = String::new();
    for i in 0..n {
        let id = format!("syn-{i:03}");
        let count = 1 + i % 3;
        let boxes = place_boxes(&mut rng, count);
        let (color_name, rgb) = COLORS[rng.random_range(0..COLORS.len())];

        let mut img = Rgb8::filled(WIDTH, HEIGHT, [0, 0, 0]);
        for y in 0..HEIGHT {
            for x in 0..WIDTH {
                let g = (90 + 100 * y / HEIGHT) as u8;
                img.set(x, y, [g, g, (g as usize + x) as u8]);
            }
        }
        let far = 0.6 + 0.3 * rng.random::<f64>();
        let mut depth: Vec<f64> = (0..WIDTH * HEIGHT)
            .map(|k| far - 0.2 * (k / WIDTH) as f64 / HEIGHT as f64)
            .collect();
        for b in &boxes {
            paint(&mut img, b, rgb);
            let plane = 0.15 + 0.3 * rng.random::<f64>();
            for (k, v) in depth.iter_mut().enumerate() {
                let (x, y) = (k % WIDTH, k / WIDTH);
                if b.contains_point(
                    (x as f64 + 0.5) / WIDTH as f64,
                    (y as f64 + 0.5) / HEIGHT as f64,
                ) {
                    *v = plane;
                }
            }
        }
        let depth =
            DepthMap::new(WIDTH, HEIGHT, depth).map_err(|e| DatagenError::Config(e.to_string()))?;

        let img_rel = format!("images/{id}.ppm");
        let depth_rel = format!("depth/{id}.pgm");
        let img_path = dir.join(&img_rel);
        let depth_path = dir.join(&depth_rel);
        std::fs::write(&img_path, encode_ppm(&img)).map_err(|e| DatagenError::io(&img_path, e))?;
        std::fs::write(&depth_path, depth.to_pgm_bytes())
            .map_err(|e| DatagenError::io(&depth_path, e))?;

        let (question, answer) = if count == 1 {
            (
                "What color is the rectangle?".to_owned(),
                color_name.to_owned(),
            )
        } else {
            (
                format!("How many {color_name} rectangles are there?"),
                count.to_string(),
            )
        };
        let gt: Vec<[f64; 4]> = boxes.iter().map(BBox::coords).collect();
        let line = json!({
            "id": id,
            "image_path": img_rel,
            "question": question,
            "answer": answer,
            "gt_boxes": gt,
            "depth_path": depth_rel,
        });
        lines.push_str(&line.to_string());
        lines.push('\n');
    }
    let source = dir.join("source.jsonl");
    std::fs::write(&source, lines).map_err(|e| DatagenError::io(&source, e))?;
    Ok(source)
}
