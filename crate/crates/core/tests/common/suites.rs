//! Criterion suites shared by the per-module tests and the acceptance run.
//! Each returns a short summary on success and a description of the first
//! failure otherwise.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tifl::classify::objective_and_gradient;
use tifl::tiae::OutputFamily;
use tifl::tiomp::Dictionary;
use tifl::tirbm::{HiddenState, TirbmModel, TrainConfig, VisibleFamily};
use tifl::transform::{Family, TransformParams, TransformSpec};
use tifl::{Geometry, SparseTransform};

use super::oracles::{self, ReferenceConfig, ReferenceRbm};
use super::*;

pub type SuiteResult = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- operators

/// A transform description plus a seed for the random probe vectors.
pub type OpCase = (Geometry, TransformParams, u64);

pub fn op_case() -> impl Strategy<Value = OpCase> {
    let shift = (1usize..12)
        .prop_flat_map(|d| (Just(d), -(d as i64 - 1)..=(d as i64 - 1)))
        .prop_map(|(d, offset)| (Geometry::line(d), TransformParams::Shift { offset }));
    let identity = (1usize..8).prop_map(|w| (Geometry::square(w, w, 1), TransformParams::Identity));
    let translation = (1usize..10)
        .prop_flat_map(|r| (Just(r), 1..=r))
        .prop_flat_map(|(r, w)| (Just(r), Just(w), 0..=r - w, 0..=r - w))
        .prop_map(|(r, w, dx, dy)| (Geometry::square(r, w, 1), TransformParams::Translation { dx, dy }));
    // arbitrary angles plus exact multiples of a quarter turn
    let angle = prop_oneof![-7.0f64..7.0, (-4i32..=4).prop_map(|k| k as f64 * PI / 2.0)];
    let rotation = (2usize..10)
        .prop_flat_map(move |r| (Just(r), 2..=r, angle.clone()))
        .prop_map(|(r, w, theta)| (Geometry::square(r, w, 1), TransformParams::Rotation { theta }));
    let scaling = (1usize..12)
        .prop_flat_map(|r| (Just(r), 1..=r, 1usize..4))
        .prop_flat_map(|(r, w, gs)| (Just(r), Just(w), Just(gs), 0..=(r - w) / gs))
        .prop_map(|(r, w, stride, level)| {
            (Geometry::square(r, w, 1), TransformParams::Scaling { level, stride })
        });
    (
        prop_oneof![shift, identity, translation, rotation, scaling],
        1usize..=3,
        any::<u64>(),
    )
        .prop_map(|((g, p), channels, seed)| (Geometry { channels, ..g }, p, seed))
}

fn fail(msg: String) -> TestCaseError {
    TestCaseError::fail(msg)
}

/// Library matrix equals the dense matrix built from the formulas, and the
/// sparse product equals the dense product.
pub fn check_dense_oracle((g, p, seed): OpCase) -> Result<(), TestCaseError> {
    let t = SparseTransform::from_params(g, p).map_err(|e| fail(e.to_string()))?;
    let want = oracles::dense_transform(g, p);
    let got = t.to_dense();
    if got.dim() != want.dim() {
        return Err(fail(format!("{p}: shape {:?} vs {:?}", got.dim(), want.dim())));
    }
    let d = max_abs_diff(got.as_slice().unwrap(), want.as_slice().unwrap());
    if d > 1e-12 {
        return Err(fail(format!("{p} on {g:?}: dense mismatch {d:e}")));
    }
    let mut r = rng(seed);
    let x = uniform_vec(&mut r, t.cols(), 1.0);
    let y = t.apply(x.as_slice().unwrap()).unwrap();
    let d = max_abs_diff(&y, want.dot(&x).as_slice().unwrap());
    if d > 1e-12 {
        return Err(fail(format!("{p} on {g:?}: product mismatch {d:e}")));
    }
    Ok(())
}

/// `⟨T x, h⟩ = ⟨x, Tᵀ h⟩`.
pub fn check_adjoint((g, p, seed): OpCase) -> Result<(), TestCaseError> {
    let t = SparseTransform::from_params(g, p).map_err(|e| fail(e.to_string()))?;
    let mut r = rng(seed);
    let x = uniform_vec(&mut r, t.cols(), 1.0).to_vec();
    let h = uniform_vec(&mut r, t.rows(), 1.0).to_vec();
    let lhs = dot(&t.apply(&x).unwrap(), &h);
    let rhs = dot(&x, &t.apply_adjoint(&h).unwrap());
    if (lhs - rhs).abs() > 1e-12 * (1.0 + lhs.abs()) {
        return Err(fail(format!("{p} on {g:?}: <Tx,h>={lhs} <x,T'h>={rhs}")));
    }
    Ok(())
}

/// Index ranges, ordering, selection exactness, bilinear tap counts,
/// weight ranges and partition of unity.
pub fn check_structure((g, p, _): OpCase) -> Result<(), TestCaseError> {
    let t = SparseTransform::from_params(g, p).map_err(|e| fail(e.to_string()))?;
    let block_rows = g.filter_dim() / g.channels;
    if g.filter_dim() > g.input_dim() {
        return Err(fail(format!("{p}: D2 > D1")));
    }
    let entries: Vec<(usize, usize, f64)> = t.entries().collect();
    for w in entries.windows(2) {
        if (w[0].0, w[0].1) >= (w[1].0, w[1].1) {
            return Err(fail(format!("{p}: entries unsorted or duplicated at {:?}", w[1])));
        }
    }
    let mut rows = vec![Vec::new(); t.rows()];
    for &(i, j, w) in &entries {
        if i >= t.rows() || j >= t.cols() {
            return Err(fail(format!("{p}: entry ({i},{j}) out of range")));
        }
        rows[i].push(w);
    }
    let selection = !matches!(p, TransformParams::Rotation { .. } | TransformParams::Scaling { .. });
    for (i, row) in rows.iter().enumerate() {
        if selection {
            if row.len() > 1 || row.iter().any(|&w| w != 1.0) {
                return Err(fail(format!("{p}: selection row {i} is {row:?}")));
            }
            continue;
        }
        if row.len() > 4 || row.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
            return Err(fail(format!("{p}: bilinear row {i} is {row:?}")));
        }
        let pix = i % block_rows;
        let (x, y) = (pix % g.filter_width, pix / g.filter_width);
        let (sx, sy) = oracles::source_point(g, p, x, y).unwrap();
        match oracles::tent_row(sx, sy, g.input_width) {
            Some(_) => {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(fail(format!("{p}: interior row {i} sums to {sum}")));
                }
            }
            None if !row.is_empty() => {
                return Err(fail(format!("{p}: row {i} samples outside the grid but is {row:?}")));
            }
            None => {}
        }
    }
    Ok(())
}

pub fn check_operator_case(case: OpCase) -> Result<(), TestCaseError> {
    check_dense_oracle(case)?;
    check_adjoint(case)?;
    check_structure(case)
}

/// Quarter turns of odd grids are exact permutations. Output `(x, y)` reads
/// input `(y, w - 1 - x)` for a quarter turn.
pub fn quarter_turn_permutations() -> Result<(), String> {
    for w in (3..=15).step_by(2) {
        let t = SparseTransform::rotation_2d(w, PI / 2.0).map_err(|e| e.to_string())?;
        let mut want = Array2::<f64>::zeros((w * w, w * w));
        for y in 0..w {
            for x in 0..w {
                want[[y * w + x, (w - 1 - x) * w + y]] = 1.0;
            }
        }
        ensure(t.to_dense() == want, || format!("quarter turn on {w}x{w} is not the index permutation"))?;
        for k in 0..4 {
            let d = SparseTransform::rotation_2d(w, k as f64 * PI / 2.0).unwrap().to_dense();
            let ones_per_row = d.rows().into_iter().all(|r| r.iter().filter(|&&v| v == 1.0).count() == 1);
            let ones_per_col = d.columns().into_iter().all(|c| c.iter().filter(|&&v| v == 1.0).count() == 1);
            let binary = d.iter().all(|&v| v == 0.0 || v == 1.0);
            ensure(binary && ones_per_row && ones_per_col, || format!("{k} quarter turns on {w}x{w}"))?;
        }
    }
    Ok(())
}

/// Smooth image supported on the disc of radius `w/2 - 2` about the center.
pub fn smooth_disc_image(rng: &mut ChaCha8Rng, w: usize) -> Vec<f64> {
    let c = (w as f64 - 1.0) / 2.0;
    let radius = w as f64 / 2.0 - 2.0;
    let sigma = 2.0;
    let blobs: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            let rho = rng.random_range(0.0..radius * 0.6);
            let phi = rng.random_range(0.0..2.0 * PI);
            (c + rho * phi.cos(), c + rho * phi.sin(), rng.random_range(0.3..1.0))
        })
        .collect();
    let mut img: Vec<f64> = (0..w * w)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let rho = ((x - c).powi(2) + (y - c).powi(2)).sqrt();
            if rho >= radius {
                return 0.0;
            }
            let window = (0.5 * PI * rho / radius).cos().powi(2);
            let v: f64 = blobs
                .iter()
                .map(|&(bx, by, a)| a * (-((x - bx).powi(2) + (y - by).powi(2)) / (2.0 * sigma * sigma)).exp())
                .sum();
            v * window
        })
        .collect();
    let max = img.iter().cloned().fold(0.0, f64::max);
    img.iter_mut().for_each(|v| *v /= max);
    img
}

/// Rotating by θ and back on smooth disc images; returns the worst RMS.
pub fn rotation_round_trip(trials: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let w = r.random_range(12..=28);
        let theta = r.random_range(-PI..PI);
        let img = smooth_disc_image(&mut r, w);
        let fwd = SparseTransform::rotation_2d(w, theta).unwrap();
        let back = SparseTransform::rotation_2d(w, -theta).unwrap();
        let out = back.apply(&fwd.apply(&img).unwrap()).unwrap();
        let mse = out.iter().zip(&img).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / img.len() as f64;
        worst = worst.max(mse.sqrt());
    }
    worst
}

pub fn operator_suite(cases: u32) -> SuiteResult {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&op_case(), check_operator_case)
        .map_err(|e| format!("operator property failed: {e}"))?;
    quarter_turn_permutations()?;
    let rms = rotation_round_trip(50, 11);
    ensure(rms <= 0.15, || format!("rotation round trip RMS {rms:.4} > 0.15"))?;
    Ok(format!("{cases} randomized cases, quarter turns exact, round-trip RMS {rms:.4}"))
}

// --------------------------------------------------------------- reductions

/// Plain-RBM CD-1 on the same random stream: hidden samples drawn per
/// (sample, unit) in row-major order, mean-field reconstruction.
fn plain_cd1(w: &Array2<f64>, b: &Array1<f64>, c: &Array1<f64>, v: &Array2<f64>, r: &mut ChaCha8Rng) -> Vec<f64> {
    let n = v.nrows() as f64;
    let ph = (v.dot(w) + b).mapv(sigmoid);
    let h = ph.mapv(|p| if r.random::<f64>() < p { 1.0 } else { 0.0 });
    let v1 = (h.dot(&w.t()) + c).mapv(sigmoid);
    let ph1 = (v1.dot(w) + b).mapv(sigmoid);
    let gw = (v.t().dot(&ph) - v1.t().dot(&ph1)) / n;
    let gb = (ph.sum_axis(Axis(0)) - ph1.sum_axis(Axis(0))) / n;
    let gc = (v.sum_axis(Axis(0)) - v1.sum_axis(Axis(0))) / n;
    gw.iter().chain(gb.iter()).chain(gc.iter()).copied().collect()
}

/// Largest deviation of the S = 1 identity TIRBM from the plain-RBM
/// conditionals and CD-1 gradient over `models` random models.
pub fn rbm_reduction(models: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..models {
        let width = r.random_range(2..=4);
        let d = width * width;
        let k = r.random_range(1..=5);
        let m = random_tirbm(&mut r, identity_set(width), k, VisibleFamily::Binary, 1.0);
        let b = m.hidden_bias.column(0).to_owned();
        let v = binary_vec(&mut r, d);

        let eq3 = (v.dot(&m.weights) + &b).mapv(sigmoid);
        let hc = m.hidden_conditional(v.view()).unwrap();
        worst = worst.max(max_abs_diff(hc.column(0).to_vec().as_slice(), eq3.as_slice().unwrap()));
        let pooled = m.pooled_activation(v.view()).unwrap();
        worst = worst.max(max_abs_diff(pooled.as_slice().unwrap(), eq3.as_slice().unwrap()));

        let hbits = binary_vec(&mut r, k);
        let state = HiddenState {
            active: hbits.iter().map(|&x| (x == 1.0).then_some(0)).collect(),
        };
        let eq4 = (m.weights.dot(&hbits) + &m.visible_bias).mapv(sigmoid);
        let vc = m.visible_conditional(&state).unwrap();
        worst = worst.max(max_abs_diff(vc.as_slice().unwrap(), eq4.as_slice().unwrap()));

        let n = r.random_range(1..=6);
        let batch = Array2::from_shape_fn((n, d), |_| if r.random::<bool>() { 1.0 } else { 0.0 });
        let s = r.random::<u64>();
        let got = m.cd_gradient(batch.view(), 1, &mut rng(s)).unwrap().gradient.flatten();
        let want = plain_cd1(&m.weights, &b, &m.visible_bias, &batch, &mut rng(s));
        worst = worst.max(max_abs_diff(&got, &want));
    }
    worst
}

/// Trains the S = 1 identity TIRBM and the reference plain RBM from the
/// same start and seed; returns the largest parameter difference.
pub fn reference_trainer_gap(seed: u64) -> f64 {
    let mut r = rng(seed);
    let width = 3;
    let data = Array2::from_shape_fn((37, width * width), |_| if r.random_bool(0.3) { 1.0 } else { 0.0 });
    let mut m = random_tirbm(&mut r, identity_set(width), 4, VisibleFamily::Binary, 0.1);
    let mut reference = ReferenceRbm {
        w: m.weights.clone(),
        b: m.hidden_bias.column(0).to_owned(),
        c: m.visible_bias.clone(),
    };
    let cfg = TrainConfig {
        learning_rate: 0.1,
        batch_size: 8,
        epochs: 6,
        sparsity_target: 0.1,
        sparsity_weight: 2.0,
        seed: seed + 1,
        ..TrainConfig::default()
    };
    m.train(data.view(), &cfg).unwrap();
    reference.train(
        &data,
        &ReferenceConfig {
            lr: cfg.learning_rate,
            batch: cfg.batch_size,
            epochs: cfg.epochs,
            target: cfg.sparsity_target,
            sparsity: cfg.sparsity_weight,
            seed: cfg.seed,
        },
    );
    let got: Vec<f64> = m.weights.iter().chain(m.hidden_bias.iter()).chain(m.visible_bias.iter()).copied().collect();
    let want: Vec<f64> = reference.w.iter().chain(reference.b.iter()).chain(reference.c.iter()).copied().collect();
    max_abs_diff(&got, &want)
}

/// S = 1 identity pursuit against brute-force best-atom selection for
/// γ = 1 and textbook OMP for larger γ, on `instances` random instances.
pub fn omp_reduction(instances: usize, seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    for inst in 0..instances {
        let width = 4;
        let k = r.random_range(2..=10);
        let d = Dictionary::from_weights(identity_set(width), uniform(&mut r, (width * width, k), 1.0)).unwrap();
        let v = uniform_vec(&mut r, width * width, 1.0);

        // γ = 1: argmax |w_jᵀv|, coefficient w_jᵀv / ‖w_j‖²
        let corr: Vec<f64> = (0..k).map(|j| d.weights.column(j).dot(&v)).collect();
        let best = (0..k).fold(0, |b, j| if corr[j].abs() > corr[b].abs() { j } else { b });
        let nw = d.weights.column(best).dot(&d.weights.column(best));
        let code = d.encode_omp(v.view(), 1).unwrap();
        let e = code.entries.first().ok_or(format!("instance {inst}: empty code"))?;
        ensure(e.filter == best && e.transform == 0, || format!("instance {inst}: picked {} not {best}", e.filter))?;
        let want = corr[best] / nw;
        ensure((e.coefficient - want).abs() < 1e-12, || format!("instance {inst}: coefficient {} vs {want}", e.coefficient))?;

        let gamma = r.random_range(1..=k.min(5));
        let (support, coef) = oracles::textbook_omp(&d.weights, v.as_slice().unwrap(), gamma);
        let code = d.encode_omp(v.view(), gamma).unwrap();
        let picked: Vec<usize> = code.entries.iter().map(|e| e.filter).collect();
        ensure(picked == support, || format!("instance {inst}: support {picked:?} vs {support:?}"))?;
        for (e, c) in code.entries.iter().zip(&coef) {
            ensure((e.coefficient - c).abs() < 1e-9, || format!("instance {inst}: coefficient {} vs {c}", e.coefficient))?;
        }
    }
    Ok(())
}

pub fn reduction_suite() -> SuiteResult {
    let cond = rbm_reduction(50, 21);
    ensure(cond <= 1e-12, || format!("plain-RBM formulas differ by {cond:e}"))?;
    let train = reference_trainer_gap(22);
    ensure(train <= 1e-12, || format!("reference trainer differs by {train:e}"))?;
    omp_reduction(100, 23)?;
    Ok(format!("RBM formulas max diff {cond:.1e}, trainer gap {train:.1e}, 100 OMP instances agree"))
}

// ---------------------------------------------------------------- gradients

pub const FD_STEP: f64 = 1e-5;

fn tirbm_parts(m: &TirbmModel) -> (Vec<Array2<f64>>, Vec<f64>) {
    let ts = oracles::dense_set(m.transforms());
    let theta = m.weights.iter().chain(m.hidden_bias.iter()).chain(m.visible_bias.iter()).copied().collect();
    (ts, theta)
}

fn unflatten(theta: &[f64], d2: usize, k: usize, s: usize) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let w = Array2::from_shape_vec((d2, k), theta[..d2 * k].to_vec()).unwrap();
    let b = Array2::from_shape_vec((k, s), theta[d2 * k..d2 * k + k * s].to_vec()).unwrap();
    let c = Array1::from(theta[d2 * k + k * s..].to_vec());
    (w, b, c)
}

/// Positive phase against `-∂/∂θ` of the batch-mean expected energy with
/// the hidden posteriors frozen; returns the worst relative error.
pub fn tirbm_positive_phase_fd(models: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for i in 0..models {
        let visible = if i % 2 == 0 { VisibleFamily::Binary } else { VisibleFamily::Gaussian };
        let set = small_set(&mut r);
        let m = random_tirbm(&mut r, set, 3, visible, 0.5);
        let (d2, k, s) = (m.weights.nrows(), m.num_filters(), m.num_transforms());
        let batch = uniform(&mut r, (4, m.input_dim()), 1.0);
        let (ts, theta) = tirbm_parts(&m);
        let post: Vec<Array2<f64>> = batch.outer_iter().map(|v| m.hidden_conditional(v).unwrap()).collect();
        let gaussian = visible == VisibleFamily::Gaussian;
        let fd = fd_gradient(&theta, FD_STEP, |x| {
            let (w, b, c) = unflatten(x, d2, k, s);
            let total: f64 = batch
                .outer_iter()
                .zip(&post)
                .map(|(v, h)| oracles::expected_energy(&ts, &w, &b, &c, gaussian, v, h))
                .sum();
            -total / batch.nrows() as f64
        });
        let got = m.positive_phase(batch.view()).unwrap().flatten();
        worst = worst.max(rel_err(&got, &fd));
    }
    worst
}

/// Sparsity gradient against finite differences of
/// `Σ_j (p - mean_n E[z_j | v_n])²` computed from the dense formulas.
pub fn tirbm_sparsity_fd(models: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    let target = 0.05;
    for _ in 0..models {
        let set = small_set(&mut r);
        let m = random_tirbm(&mut r, set, 3, VisibleFamily::Binary, 0.5);
        let (d2, k, s) = (m.weights.nrows(), m.num_filters(), m.num_transforms());
        let batch = uniform(&mut r, (5, m.input_dim()), 1.0);
        let (ts, theta) = tirbm_parts(&m);
        let fd = fd_gradient(&theta, FD_STEP, |x| {
            let (w, b, _) = unflatten(x, d2, k, s);
            let mut mean = vec![0.0; k];
            for v in batch.outer_iter() {
                let p = oracles::softmax_with_off(&oracles::logits(&ts, &w, &b, v));
                for j in 0..k {
                    mean[j] += p.row(j).sum() / batch.nrows() as f64;
                }
            }
            mean.iter().map(|q| (target - q).powi(2)).sum()
        });
        let got = m.sparsity_gradient(batch.view(), target).unwrap().flatten();
        worst = worst.max(rel_err(&got, &fd));
    }
    worst
}

/// Mean TIAE loss from the dense formulas.
pub fn tiae_loss_oracle(
    ts: &[Array2<f64>],
    w: &Array2<f64>,
    b: &Array2<f64>,
    c: &Array1<f64>,
    output: OutputFamily,
    batch: &Array2<f64>,
) -> f64 {
    let mut total = 0.0;
    for v in batch.outer_iter() {
        let f = oracles::softmax_with_off(&oracles::logits(ts, w, b, v));
        let o = oracles::decode_sum(ts, w, &f) + c;
        total += match output {
            OutputFamily::SigmoidCrossEntropy => o
                .iter()
                .zip(v)
                .map(|(&a, &x)| (1.0 + a.exp()).ln() - x * a)
                .sum::<f64>(),
            OutputFamily::LinearSquaredError => 0.5 * o.iter().zip(v).map(|(a, x)| (a - x).powi(2)).sum::<f64>(),
        };
    }
    total / batch.nrows() as f64
}

pub fn tiae_fd(models: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for i in 0..models {
        let output = if i % 2 == 0 { OutputFamily::SigmoidCrossEntropy } else { OutputFamily::LinearSquaredError };
        let set = small_set(&mut r);
        let m = random_tiae(&mut r, set, 3, output, 0.5);
        let (d2, k, s) = (m.weights.nrows(), m.num_filters(), m.num_transforms());
        let batch = match output {
            OutputFamily::SigmoidCrossEntropy => Array2::from_shape_fn((4, m.input_dim()), |_| r.random::<f64>()),
            OutputFamily::LinearSquaredError => uniform(&mut r, (4, m.input_dim()), 1.0),
        };
        let ts = oracles::dense_set(m.transforms());
        let theta: Vec<f64> =
            m.weights.iter().chain(m.hidden_bias.iter()).chain(m.visible_bias.iter()).copied().collect();
        let fd = fd_gradient(&theta, FD_STEP, |x| {
            let (w, b, c) = unflatten(x, d2, k, s);
            tiae_loss_oracle(&ts, &w, &b, &c, output, &batch)
        });
        let (_, g) = m.loss_and_gradient(batch.view()).unwrap();
        worst = worst.max(rel_err(&g.flatten(), &fd));
    }
    worst
}

/// `Σ_n ‖v_n - Σ coefficient · T_sᵀ w_j‖²` from dense transforms.
pub fn tiomp_objective_oracle(ts: &[Array2<f64>], w: &Array2<f64>, batch: &Array2<f64>, codes: &[Vec<(usize, usize, f64)>]) -> f64 {
    batch
        .outer_iter()
        .zip(codes)
        .map(|(v, code)| {
            let mut rec = Array1::<f64>::zeros(v.len());
            for &(j, s, x) in code {
                rec.scaled_add(x, &Array1::from(oracles::atom(ts, w, j, s)));
            }
            (&v - &rec).mapv(|e| e * e).sum()
        })
        .sum()
}

pub fn tiomp_fd(models: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..models {
        let set = small_set(&mut r);
        let k = 3;
        let d = Dictionary::from_weights(set.clone(), uniform(&mut r, (set.filter_dim(), k), 1.0)).unwrap();
        let batch = uniform(&mut r, (5, d.input_dim()), 1.0);
        let codes = d.encode_batch(batch.view(), 2).unwrap();
        let plain: Vec<Vec<(usize, usize, f64)>> = codes
            .iter()
            .map(|c| c.entries.iter().map(|e| (e.filter, e.transform, e.coefficient)).collect())
            .collect();
        let ts = oracles::dense_set(&set);
        let theta: Vec<f64> = d.weights.iter().copied().collect();
        let shape = d.weights.dim();
        let fd = fd_gradient(&theta, FD_STEP, |x| {
            let w = Array2::from_shape_vec(shape, x.to_vec()).unwrap();
            tiomp_objective_oracle(&ts, &w, &batch, &plain)
        });
        let got = d.objective_gradient(batch.view(), &codes).unwrap();
        worst = worst.max(rel_err(got.as_slice().unwrap(), &fd));
    }
    worst
}

pub fn softmax_fd(models: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..models {
        let (n, dim, classes) = (r.random_range(3..12), r.random_range(1..6), r.random_range(2..5));
        let x = uniform(&mut r, (n, dim), 2.0);
        let y: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
        let w = uniform(&mut r, (dim, classes), 1.0);
        let b = uniform_vec(&mut r, classes, 1.0);
        let reg = r.random_range(0.0..0.5);
        let theta: Vec<f64> = w.iter().chain(b.iter()).copied().collect();
        let fd = fd_gradient(&theta, FD_STEP, |t| {
            let wt = Array2::from_shape_vec((dim, classes), t[..dim * classes].to_vec()).unwrap();
            let bt = Array1::from(t[dim * classes..].to_vec());
            oracles::softmax_objective(x.view(), &y, &wt, &bt, reg)
        });
        let (_, gw, gb) = objective_and_gradient(x.view(), &y, &w, &b, reg);
        let got: Vec<f64> = gw.iter().chain(gb.iter()).copied().collect();
        worst = worst.max(rel_err(&got, &fd));
    }
    worst
}

/// Binary TIRBM with `D1 = 6`, `K = 2`, `S = 2` (shifts by 0 and 1).
pub fn tiny_tirbm(r: &mut ChaCha8Rng, scale: f64) -> TirbmModel {
    let set = Arc::new(
        TransformSpec::new(vec![Family::Shift {
            dim: 6,
            offsets: vec![0, 1],
        }])
        .build()
        .unwrap(),
    );
    random_tirbm(r, set, 2, VisibleFamily::Binary, scale)
}

/// Mean cosine between CD(50) on a replicated data batch and the exactly
/// enumerated log-likelihood gradient.
pub fn cd50_cosine(models: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut total = 0.0;
    for _ in 0..models {
        let m = tiny_tirbm(&mut r, 1.0);
        let data = Array2::from_shape_fn((6, 6), |_| if r.random::<bool>() { 1.0 } else { 0.0 });
        let exact = oracles::exact_ll_gradient(
            &oracles::dense_set(m.transforms()),
            &m.weights,
            &m.hidden_bias,
            &m.visible_bias,
            data.view(),
        );
        let reps = 400;
        let batch = Array2::from_shape_fn((data.nrows() * reps, 6), |(i, j)| data[[i % data.nrows(), j]]);
        let cd = m.cd_gradient(batch.view(), 50, &mut rng(r.random())).unwrap().gradient.flatten();
        total += cosine(&cd, &exact);
    }
    total / models as f64
}

pub fn gradient_suite() -> SuiteResult {
    let checks: [(&str, f64); 5] = [
        ("TIRBM positive phase", tirbm_positive_phase_fd(20, 31)),
        ("TIRBM sparsity", tirbm_sparsity_fd(20, 32)),
        ("TIAE", tiae_fd(20, 33)),
        ("TIOMP dictionary", tiomp_fd(20, 34)),
        ("softmax", softmax_fd(20, 35)),
    ];
    for (name, err) in checks {
        ensure(err < 1e-6, || format!("{name} gradient relative error {err:e}"))?;
    }
    let cos = cd50_cosine(20, 36);
    ensure(cos > 0.9, || format!("CD(50) mean cosine {cos:.4} <= 0.9"))?;
    let worst = checks.iter().map(|c| c.1).fold(0.0, f64::max);
    Ok(format!("20 models per gradient, worst rel. err {worst:.1e}; CD(50) mean cosine {cos:.4}"))
}
