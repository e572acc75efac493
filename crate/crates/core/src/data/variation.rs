//! Rotated, scaled and translated digit variations with optional random
//! backgrounds.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PatchDataset, Provenance};
use crate::error::{invalid, Result};
use crate::transform::{bilinear_operator, SparseTransform};

/// Pixels above this value count as digit foreground.
pub const FOREGROUND_THRESHOLD: f64 = 0.1;

const WIDTH: usize = 28;
const MIN_SCALE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariationKind {
    /// Uniform angle in `[0, 2π)`.
    Rotation,
    /// Uniform zoom factor in `[0.3, 1]` about the image center.
    Scale,
    /// Uniform integer shift that keeps every foreground pixel in frame.
    Translation,
}

impl VariationKind {
    pub fn name(self) -> &'static str {
        match self {
            VariationKind::Rotation => "rot",
            VariationKind::Scale => "scale",
            VariationKind::Translation => "trans",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rot" | "rotation" => Ok(VariationKind::Rotation),
            "scale" | "scaling" => Ok(VariationKind::Scale),
            "trans" | "translation" => Ok(VariationKind::Translation),
            other => invalid(format!("unknown variation '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Background {
    None,
    /// I.i.d. uniform `[0, 1]` noise added to background pixels, clamped.
    RandomUniform,
}

/// The random parameter drawn for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VariationSample {
    Rotation(f64),
    Scale(f64),
    Shift { dx: i64, dy: i64 },
}

fn rotate(img: &[f64], theta: f64) -> Vec<f64> {
    SparseTransform::rotation_2d(WIDTH, theta)
        .expect("valid rotation")
        .apply(img)
        .expect("digit geometry")
}

fn zoom(img: &[f64], factor: f64) -> Vec<f64> {
    let c = (WIDTH as f64 - 1.0) / 2.0;
    let op = bilinear_operator(WIDTH, WIDTH, |x, y| {
        (c + (x - c) / factor, c + (y - c) / factor)
    });
    let mut out = vec![0.0; WIDTH * WIDTH];
    op.apply_into(img, &mut out);
    out
}

/// Inclusive foreground bounding box `(x0, x1, y0, y1)`.
fn foreground_box(img: &[f64]) -> Option<(usize, usize, usize, usize)> {
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for (i, &v) in img.iter().enumerate() {
        if v > FOREGROUND_THRESHOLD {
            let (x, y) = (i % WIDTH, i / WIDTH);
            bbox = Some(match bbox {
                None => (x, x, y, y),
                Some((a, b, c, d)) => (a.min(x), b.max(x), c.min(y), d.max(y)),
            });
        }
    }
    bbox
}

fn shift(img: &[f64], dx: i64, dy: i64) -> Vec<f64> {
    let w = WIDTH as i64;
    let mut out = vec![0.0; WIDTH * WIDTH];
    for y in 0..w {
        for x in 0..w {
            let (sx, sy) = (x - dx, y - dy);
            if (0..w).contains(&sx) && (0..w).contains(&sy) {
                out[(y * w + x) as usize] = img[(sy * w + sx) as usize];
            }
        }
    }
    out
}

/// Applies a random variation to every image of a 28 x 28 single-channel
/// dataset and reports the drawn parameters.
pub fn synthesize_variation_with_params(
    base: &PatchDataset,
    kind: VariationKind,
    background: Background,
    seed: u64,
) -> Result<(PatchDataset, Vec<VariationSample>)> {
    if base.width != WIDTH || base.channels != 1 {
        return invalid(format!(
            "variations need 28x28 single-channel digits, got {}x{}x{}",
            base.width, base.width, base.channels
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Array2::zeros(base.patches.raw_dim());
    let mut params = Vec::with_capacity(base.len());
    for (i, row) in base.patches.outer_iter().enumerate() {
        let img = row.to_vec();
        let (mut img, p) = match kind {
            VariationKind::Rotation => {
                let theta = rng.random_range(0.0..2.0 * PI);
                (rotate(&img, theta), VariationSample::Rotation(theta))
            }
            VariationKind::Scale => {
                let f = rng.random_range(MIN_SCALE..=1.0);
                (zoom(&img, f), VariationSample::Scale(f))
            }
            VariationKind::Translation => {
                let (dx, dy) = match foreground_box(&img) {
                    Some((x0, x1, y0, y1)) => {
                        let last = (WIDTH - 1) as i64;
                        let dx = rng.random_range(-(x0 as i64)..=last - x1 as i64);
                        let dy = rng.random_range(-(y0 as i64)..=last - y1 as i64);
                        (dx, dy)
                    }
                    None => (0, 0),
                };
                (shift(&img, dx, dy), VariationSample::Shift { dx, dy })
            }
        };
        if background == Background::RandomUniform {
            for v in img.iter_mut() {
                let u: f64 = rng.random();
                if *v <= FOREGROUND_THRESHOLD {
                    *v = (*v + u).min(1.0);
                }
            }
        }
        out.row_mut(i).assign(&ArrayView1::from(&img[..]));
        params.push(p);
    }
    let mut provenance = Provenance::new(base.provenance.source.clone(), kind.name(), Some(seed))
        .with_param("count", base.len())
        .with_param(
            "background",
            match background {
                Background::None => "none",
                Background::RandomUniform => "random_uniform",
            },
        );
    provenance.params.extend(base.provenance.params.iter().cloned().map(|(k, v)| (format!("base.{k}"), v)));
    if let Some(s) = base.provenance.seed {
        provenance = provenance.with_param("base.seed", s);
    }
    let ds = PatchDataset {
        patches: out,
        labels: base.labels.clone(),
        width: WIDTH,
        channels: 1,
        range: base.range,
        provenance,
    };
    Ok((ds, params))
}

pub fn synthesize_variation(
    base: &PatchDataset,
    kind: VariationKind,
    background: Background,
    seed: u64,
) -> Result<PatchDataset> {
    Ok(synthesize_variation_with_params(base, kind, background, seed)?.0)
}
