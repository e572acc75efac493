//! Procedurally rendered handwritten-style digits.
//!
//! Each class is a fixed stroke skeleton in the unit square. Every sample
//! perturbs it with a random affine map (slant, stretch, tilt), a smooth
//! wobble field and a random pen width, then renders anti-aliased strokes
//! into a 20 x 20 box centered in a 28 x 28 frame with intensities in
//! `[0, 1]`.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PatchDataset, Provenance};

pub const DIGIT_WIDTH: usize = 28;
const BOX: f64 = 20.0;

type Stroke = Vec<(f64, f64)>;

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from_deg: f64, to_deg: f64) -> Stroke {
    let n = (((to_deg - from_deg).abs() / 12.0).ceil() as usize).max(2);
    (0..=n)
        .map(|i| {
            let a = (from_deg + (to_deg - from_deg) * i as f64 / n as f64) * PI / 180.0;
            (cx + rx * a.cos(), cy - ry * a.sin())
        })
        .collect()
}

fn chain(mut a: Stroke, b: Stroke) -> Stroke {
    a.extend(b);
    a
}

fn skeleton(digit: usize) -> Vec<Stroke> {
    match digit {
        0 => vec![arc(0.5, 0.5, 0.36, 0.48, 0.0, 360.0)],
        1 => vec![vec![(0.3, 0.22), (0.55, 0.02), (0.55, 0.98)]],
        2 => vec![chain(
            arc(0.5, 0.3, 0.33, 0.28, 160.0, -40.0),
            vec![(0.12, 0.98), (0.9, 0.98)],
        )],
        3 => vec![
            arc(0.48, 0.27, 0.3, 0.25, 150.0, -90.0),
            arc(0.48, 0.74, 0.34, 0.25, 90.0, -150.0),
        ],
        4 => vec![vec![(0.68, 0.98), (0.68, 0.02), (0.1, 0.68), (0.92, 0.68)]],
        5 => vec![chain(
            vec![(0.82, 0.02), (0.3, 0.02), (0.24, 0.45)],
            arc(0.5, 0.68, 0.33, 0.3, 140.0, -150.0),
        )],
        6 => vec![chain(
            vec![(0.74, 0.03), (0.46, 0.18), (0.26, 0.46), (0.2, 0.72)],
            arc(0.5, 0.72, 0.3, 0.26, 180.0, -180.0),
        )],
        7 => vec![vec![(0.1, 0.03), (0.9, 0.03), (0.42, 0.98)]],
        8 => vec![
            arc(0.5, 0.26, 0.27, 0.23, 90.0, 450.0),
            arc(0.5, 0.73, 0.33, 0.25, 90.0, 450.0),
        ],
        9 => vec![
            arc(0.5, 0.3, 0.3, 0.27, 0.0, 360.0),
            vec![(0.8, 0.3), (0.74, 0.98)],
        ],
        _ => unreachable!("digit class out of range"),
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// Renders one 28 x 28 sample of `digit` (row-major, `[0, 1]`).
pub fn render_digit<R: Rng + ?Sized>(digit: usize, rng: &mut R) -> Vec<f64> {
    assert!(digit < 10, "digit class out of range");
    let shear = rng.random_range(-0.3..0.3);
    let tilt: f64 = rng.random_range(-0.15..0.15);
    let sx = rng.random_range(0.75..1.15);
    let sy = rng.random_range(0.9..1.1);
    let amp = rng.random_range(0.0..0.05);
    let (f1, f2) = (rng.random_range(1.0..3.0), rng.random_range(1.0..3.0));
    let (p1, p2) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
    let pen = rng.random_range(1.3..2.6);
    let (sin, cos) = tilt.sin_cos();

    let strokes: Vec<Stroke> = skeleton(digit)
        .into_iter()
        .map(|s| {
            s.into_iter()
                .map(|(x, y)| {
                    let x = x + amp * (PI * f1 * y + p1).sin();
                    let y = y + amp * (PI * f2 * x + p2).sin();
                    let (x, y) = ((x - 0.5) * sx + shear * (y - 0.5), (y - 0.5) * sy);
                    (cos * x - sin * y, sin * x + cos * y)
                })
                .collect()
        })
        .collect();

    let pts = strokes.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let extent = (x1 - x0).max(y1 - y0).max(1e-6);
    let scale = (BOX - pen) / extent;
    let centre = (DIGIT_WIDTH as f64 - 1.0) / 2.0;
    let (mx, my) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let placed: Vec<Stroke> = strokes
        .into_iter()
        .map(|s| {
            s.into_iter()
                .map(|(x, y)| ((x - mx) * scale + centre, (y - my) * scale + centre))
                .collect()
        })
        .collect();

    let half = pen / 2.0;
    let mut img = vec![0.0; DIGIT_WIDTH * DIGIT_WIDTH];
    for (i, px) in img.iter_mut().enumerate() {
        let p = ((i % DIGIT_WIDTH) as f64, (i / DIGIT_WIDTH) as f64);
        let mut d = f64::MAX;
        for s in &placed {
            for w in s.windows(2) {
                d = d.min(segment_distance(p, w[0], w[1]));
            }
        }
        *px = (half + 0.5 - d).clamp(0.0, 1.0);
    }
    img
}

/// `count` labelled digits with balanced classes in shuffled order.
pub fn render_digits(count: usize, seed: u64) -> PatchDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..count).map(|i| i % 10).collect();
    labels.shuffle(&mut rng);
    let d = DIGIT_WIDTH * DIGIT_WIDTH;
    let mut m = Array2::zeros((count, d));
    for (i, &l) in labels.iter().enumerate() {
        let img = render_digit(l, &mut rng);
        m.row_mut(i).assign(&ndarray::ArrayView1::from(&img[..]));
    }
    let mut ds = PatchDataset::new(m, DIGIT_WIDTH, 1)
        .expect("digit geometry")
        .with_labels(labels)
        .expect("label count");
    ds.provenance = Provenance::new("synthetic-digits", "plain", Some(seed)).with_param("count", count);
    ds
}
