//! Small synthetic color images: one random shape on a shaded background.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PatchDataset, Provenance};
use crate::error::{invalid, Result};

/// Disc, square, horizontal stripes, vertical stripes.
pub const SHAPE_CLASSES: usize = 4;

fn inside(class: usize, x: f64, y: f64, cx: f64, cy: f64, size: f64, period: f64) -> bool {
    let (dx, dy) = (x - cx, y - cy);
    match class {
        0 => dx * dx + dy * dy <= size * size,
        1 => dx.abs() <= size && dy.abs() <= size,
        2 => dx.abs() <= 1.4 * size && dy.abs() <= 1.4 * size && (dy / period).floor() as i64 % 2 == 0,
        _ => dx.abs() <= 1.4 * size && dy.abs() <= 1.4 * size && (dx / period).floor() as i64 % 2 == 0,
    }
}

/// Renders `count` labeled `size x size` RGB images (channel-planar, values
/// in `[0, 1]`), with balanced classes in a cyclic order.
pub fn render_color_images(count: usize, size: usize, seed: u64) -> Result<PatchDataset> {
    if size < 8 {
        return invalid("color images must be at least 8 pixels wide");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    let plane = size * size;
    let mut data = Array2::zeros((count, 3 * plane));
    let mut labels = Vec::with_capacity(count);
    for (i, mut row) in data.outer_iter_mut().enumerate() {
        let class = i % SHAPE_CLASSES;
        let bg: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
        let fg: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
        let grad: [f64; 2] = std::array::from_fn(|_| rng.random_range(-0.3..0.3));
        let size_px = rng.random_range(0.18 * s..0.32 * s);
        let cx = rng.random_range(0.35 * s..0.65 * s);
        let cy = rng.random_range(0.35 * s..0.65 * s);
        let period = rng.random_range(2.0..4.0);
        for y in 0..size {
            for x in 0..size {
                let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
                let on = inside(class, fx, fy, cx, cy, size_px, period);
                let shade = grad[0] * (fx / s - 0.5) + grad[1] * (fy / s - 0.5);
                for c in 0..3 {
                    let base = if on { fg[c] } else { bg[c] + shade };
                    let noise: f64 = rng.random_range(-0.05..0.05);
                    row[c * plane + y * size + x] = (base + noise).clamp(0.0, 1.0);
                }
            }
        }
        labels.push(class);
    }
    let mut ds = PatchDataset::new(data, size, 3)?.with_labels(labels)?;
    ds.provenance = Provenance::new("synthetic-shapes", "color", Some(seed))
        .with_param("count", count)
        .with_param("size", size);
    Ok(ds)
}
