//! Shared helpers and independent oracles for the integration tests.
#![allow(dead_code)]

pub mod oracles;
pub mod suites;

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tifl::tiae::{OutputFamily, TiaeModel};
use tifl::tirbm::{TirbmModel, VisibleFamily};
use tifl::transform::{Family, TransformSpec};
use tifl::TransformSet;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: (usize, usize), a: f64) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.random_range(-a..a))
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, a: f64) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.random_range(-a..a))
}

pub fn binary_vec(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| if rng.random::<bool>() { 1.0 } else { 0.0 })
}

pub fn identity_set(width: usize) -> Arc<TransformSet> {
    Arc::new(TransformSet::identity(width, 1).unwrap())
}

/// A small transform set drawn from one of several families, with `D1` at
/// most 36.
pub fn small_set(rng: &mut ChaCha8Rng) -> Arc<TransformSet> {
    let family = match rng.random_range(0..4) {
        0 => Family::Shift {
            dim: 7,
            offsets: vec![-1, 0, 2],
        },
        1 => Family::Translation {
            input_width: 5,
            filter_width: 4,
            stride: 1,
        },
        2 => Family::Rotation {
            input_width: 5,
            filter_width: 5,
            angles: vec![0.0, 0.7, -1.9],
        },
        _ => Family::Scaling {
            input_width: 6,
            filter_width: 4,
            stride: 1,
        },
    };
    Arc::new(TransformSpec::new(vec![family]).build().unwrap())
}

pub fn random_tirbm(rng: &mut ChaCha8Rng, set: Arc<TransformSet>, k: usize, visible: VisibleFamily, a: f64) -> TirbmModel {
    let (d1, d2, s) = (set.input_dim(), set.filter_dim(), set.len());
    TirbmModel::from_parts(
        set,
        uniform(rng, (d2, k), a),
        uniform(rng, (k, s), a),
        uniform_vec(rng, d1, a),
        visible,
    )
    .unwrap()
}

pub fn random_tiae(rng: &mut ChaCha8Rng, set: Arc<TransformSet>, k: usize, output: OutputFamily, a: f64) -> TiaeModel {
    let (d1, d2, s) = (set.input_dim(), set.filter_dim(), set.len());
    TiaeModel::from_parts(set, uniform(rng, (d2, k), a), uniform(rng, (k, s), a), uniform_vec(rng, d1, a), output)
        .unwrap()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}

/// Central finite differences of `f` at `x` with step `h`.
pub fn fd_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}
