//! Transformation-invariant sparse coding: greedy matching pursuit with at
//! most one transformation per filter, projected-gradient dictionary
//! learning, and the two-sided soft-threshold feature encoder.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, invalid, Error, Result};
use crate::math::transformed_batch;
use crate::metrics::EpochMetrics;
use crate::transform::TransformSet;

const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    /// `D2 x K`; every column has norm at most one.
    pub weights: Array2<f64>,
    transforms: Arc<TransformSet>,
}

/// One selected atom: filter `j` under transformation `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodeEntry {
    pub filter: usize,
    pub transform: usize,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    /// In selection order.
    pub entries: Vec<CodeEntry>,
    pub num_filters: usize,
    pub num_transforms: usize,
}

impl SparseCode {
    pub fn empty(num_filters: usize, num_transforms: usize) -> Self {
        SparseCode {
            entries: Vec::new(),
            num_filters,
            num_transforms,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks the support constraints: at most `gamma` entries and at most
    /// one per filter.
    pub fn satisfies(&self, gamma: usize) -> bool {
        let mut seen = vec![false; self.num_filters];
        self.entries.len() <= gamma
            && self.entries.iter().all(|e| {
                e.transform < self.num_transforms
                    && e.filter < self.num_filters
                    && !std::mem::replace(&mut seen[e.filter], true)
            })
    }

    /// Dense `K x S` coefficient matrix.
    pub fn to_matrix(&self) -> Array2<f64> {
        let mut h = Array2::zeros((self.num_filters, self.num_transforms));
        for e in &self.entries {
            h[[e.filter, e.transform]] = e.coefficient;
        }
        h
    }
}

/// Result of [`Dictionary::encode_omp_trace`]: the code and the residual norm
/// after every refit, starting with `‖v‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct OmpTrace {
    pub code: SparseCode,
    pub residual_norms: Vec<f64>,
    pub residual: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmpTrainConfig {
    pub gamma: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Multiplier on the `1 / (2 L)` step.
    pub step_scale: f64,
    pub seed: u64,
}

impl Default for OmpTrainConfig {
    fn default() -> Self {
        OmpTrainConfig {
            gamma: 1,
            epochs: 10,
            batch_size: 100,
            step_scale: 1.0,
            seed: 0,
        }
    }
}

impl OmpTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma == 0 {
            return invalid("gamma must be positive");
        }
        if self.batch_size == 0 {
            return invalid("batch size must be positive");
        }
        if !(self.step_scale > 0.0 && self.step_scale.is_finite()) {
            return invalid("step scale must be positive");
        }
        Ok(())
    }
}

impl Dictionary {
    /// Random unit-norm columns.
    pub fn init(transforms: Arc<TransformSet>, k: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return invalid("number of filters must be positive");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut weights = Array2::zeros((transforms.filter_dim(), k));
        weights.mapv_inplace(|_: f64| rng.random_range(-1.0..1.0));
        for mut col in weights.columns_mut() {
            let n = col.dot(&col).sqrt();
            if n > 0.0 {
                col /= n;
            }
        }
        Ok(Dictionary { weights, transforms })
    }

    /// Wraps `weights`, projecting columns onto the unit ball.
    pub fn from_weights(transforms: Arc<TransformSet>, weights: Array2<f64>) -> Result<Self> {
        check_len("dictionary rows (D2)", transforms.filter_dim(), weights.nrows())?;
        if weights.iter().any(|x| !x.is_finite()) {
            return invalid("dictionary entries must be finite");
        }
        let mut d = Dictionary { weights, transforms };
        d.project();
        Ok(d)
    }

    /// Restores stored weights verbatim; projecting again could move norms that round just above one.
    pub(crate) fn from_stored(transforms: Arc<TransformSet>, weights: Array2<f64>) -> Result<Self> {
        check_len("dictionary rows (D2)", transforms.filter_dim(), weights.nrows())?;
        if weights.iter().any(|x| !x.is_finite()) {
            return invalid("dictionary entries must be finite");
        }
        if weights.columns().into_iter().any(|c| c.dot(&c).sqrt() > 1.0 + 1e-9) {
            return invalid("dictionary columns must have norm at most one");
        }
        Ok(Dictionary { weights, transforms })
    }

    pub fn transforms(&self) -> &Arc<TransformSet> {
        &self.transforms
    }

    pub fn num_filters(&self) -> usize {
        self.weights.ncols()
    }

    pub fn num_transforms(&self) -> usize {
        self.transforms.len()
    }

    pub fn input_dim(&self) -> usize {
        self.transforms.input_dim()
    }

    fn project(&mut self) {
        for mut col in self.weights.columns_mut() {
            let n = col.dot(&col).sqrt();
            if n > 1.0 {
                col /= n;
            }
        }
    }

    /// Atom `T_sᵀ w_j` in input space.
    pub fn atom(&self, filter: usize, transform: usize) -> Vec<f64> {
        let t = self.transforms.get(transform).expect("transform index");
        let w = self.weights.column(filter).to_vec();
        let mut out = vec![0.0; self.input_dim()];
        t.adjoint_add_into(&w, 1.0, &mut out);
        out
    }

    /// Responses `w_jᵀ T_s v` as an `S x K` matrix.
    fn responses(&self, v: &[f64]) -> Array2<f64> {
        let s = self.num_transforms();
        let mut u = Array2::zeros((s, self.transforms.filter_dim()));
        for (t, mut row) in self.transforms.iter().zip(u.outer_iter_mut()) {
            t.apply_into(v, row.as_slice_mut().expect("contiguous"));
        }
        u.dot(&self.weights)
    }

    /// `Σ coefficient · T_sᵀ w_j`.
    pub fn reconstruct(&self, code: &SparseCode) -> Result<Array1<f64>> {
        check_len("code filters (K)", self.num_filters(), code.num_filters)?;
        check_len("code transforms (S)", self.num_transforms(), code.num_transforms)?;
        let mut out = vec![0.0; self.input_dim()];
        for e in &code.entries {
            let t = self.transforms.get(e.transform).expect("transform index");
            let w = self.weights.column(e.filter).to_vec();
            t.adjoint_add_into(&w, e.coefficient, &mut out);
        }
        Ok(Array1::from(out))
    }

    pub fn encode_omp(&self, v: ArrayView1<f64>, gamma: usize) -> Result<SparseCode> {
        Ok(self.encode_omp_trace(v, gamma)?.code)
    }

    /// Greedy pursuit: each step picks the unused filter and transformation
    /// with the largest absolute correlation to the residual (lowest
    /// `(j, s)` on ties) and refits all coefficients by least squares.
    pub fn encode_omp_trace(&self, v: ArrayView1<f64>, gamma: usize) -> Result<OmpTrace> {
        check_len("input vector", self.input_dim(), v.len())?;
        let (k, s) = (self.num_filters(), self.num_transforms());
        if gamma == 0 {
            return invalid("gamma must be positive");
        }
        if gamma > k {
            return invalid(format!("gamma {gamma} exceeds the number of filters {k}"));
        }
        let target = v.to_vec();
        let mut residual = target.clone();
        let mut norms = vec![norm(&residual)];
        let mut used = vec![false; k];
        let mut picks: Vec<(usize, usize)> = Vec::new();
        let mut atoms: Vec<Vec<f64>> = Vec::new();
        let mut coef: Vec<f64> = Vec::new();
        while picks.len() < gamma && *norms.last().expect("non-empty") >= RESIDUAL_TOL {
            let corr = self.responses(&residual);
            let mut best: Option<(usize, usize, f64)> = None;
            for j in (0..k).filter(|&j| !used[j]) {
                for t in 0..s {
                    let c = corr[[t, j]].abs();
                    if best.is_none_or(|(_, _, b)| c > b) {
                        best = Some((j, t, c));
                    }
                }
            }
            let Some((j, t, c)) = best else { break };
            if c == 0.0 {
                break;
            }
            used[j] = true;
            picks.push((j, t));
            atoms.push(self.atom(j, t));
            coef = least_squares(&atoms, &target)?;
            residual.clone_from(&target);
            for (a, &x) in atoms.iter().zip(&coef) {
                for (r, &ai) in residual.iter_mut().zip(a) {
                    *r -= x * ai;
                }
            }
            norms.push(norm(&residual));
        }
        let entries = picks
            .iter()
            .zip(&coef)
            .map(|(&(filter, transform), &coefficient)| CodeEntry {
                filter,
                transform,
                coefficient,
            })
            .collect();
        Ok(OmpTrace {
            code: SparseCode {
                entries,
                num_filters: k,
                num_transforms: s,
            },
            residual_norms: norms,
            residual,
        })
    }

    pub fn encode_batch(&self, batch: ArrayView2<f64>, gamma: usize) -> Result<Vec<SparseCode>> {
        batch.outer_iter().map(|v| self.encode_omp(v, gamma)).collect()
    }

    /// `Σ_n ‖v⁽ⁿ⁾ − reconstruct(h⁽ⁿ⁾)‖²`.
    pub fn objective(&self, batch: ArrayView2<f64>, codes: &[SparseCode]) -> Result<f64> {
        check_len("codes", batch.nrows(), codes.len())?;
        check_len("batch columns", self.input_dim(), batch.ncols())?;
        let mut total = 0.0;
        for (v, code) in batch.outer_iter().zip(codes) {
            let r = self.reconstruct(code)?;
            total += r.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(total)
    }

    /// Gradient of [`objective`](Self::objective) with respect to the
    /// dictionary, codes held fixed.
    pub fn objective_gradient(&self, batch: ArrayView2<f64>, codes: &[SparseCode]) -> Result<Array2<f64>> {
        check_len("codes", batch.nrows(), codes.len())?;
        check_len("batch columns", self.input_dim(), batch.ncols())?;
        let mut grad = Array2::zeros(self.weights.raw_dim());
        let mut buf = vec![0.0; self.transforms.filter_dim()];
        for (v, code) in batch.outer_iter().zip(codes) {
            if code.is_empty() {
                continue;
            }
            let mut e = self.reconstruct(code)?;
            e -= &v;
            let e = e.as_slice().expect("contiguous");
            for entry in &code.entries {
                let t = self.transforms.get(entry.transform).expect("transform index");
                t.apply_into(e, &mut buf);
                let mut col = grad.column_mut(entry.filter);
                col.scaled_add(2.0 * entry.coefficient, &ArrayView1::from(&buf[..]));
            }
        }
        Ok(grad)
    }

    /// Largest eigenvalue of the objective's quadratic form in the
    /// dictionary (half the gradient's Lipschitz constant), by power
    /// iteration from a fixed start.
    pub fn lipschitz_estimate(&self, codes: &[SparseCode]) -> Result<f64> {
        let shape = self.weights.raw_dim();
        let mut x = Array2::from_elem(shape, 1.0);
        let mut lambda = 0.0;
        for _ in 0..30 {
            let n = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            if n == 0.0 {
                return Ok(0.0);
            }
            x /= n;
            let probe = Dictionary {
                weights: x.clone(),
                transforms: self.transforms.clone(),
            };
            let zeros = Array2::zeros((codes.len(), self.input_dim()));
            // gradient at zero data is 2 * (quadratic form) applied to x
            let y = probe.objective_gradient(zeros.view(), codes)? / 2.0;
            lambda = (&y * &x).sum();
            x = y;
        }
        Ok(lambda)
    }

    /// One projected-gradient step with the codes held fixed.
    pub fn dictionary_update(&mut self, batch: ArrayView2<f64>, codes: &[SparseCode], step: f64) -> Result<()> {
        if !(step >= 0.0 && step.is_finite()) {
            return invalid("step must be finite and non-negative");
        }
        let grad = self.objective_gradient(batch, codes)?;
        self.weights.scaled_add(-step, &grad);
        self.project();
        Ok(())
    }

    /// Alternates pursuit over each shuffled minibatch with one dictionary
    /// step of size `step_scale / (2 L)`. Metrics report the mean squared
    /// residual per sample and the mean fraction of filters selected.
    pub fn train(&mut self, data: ArrayView2<f64>, cfg: &OmpTrainConfig) -> Result<Vec<EpochMetrics>> {
        self.train_with(data, cfg, |_| {})
    }

    pub fn train_with(
        &mut self,
        data: ArrayView2<f64>,
        cfg: &OmpTrainConfig,
        mut on_epoch: impl FnMut(&EpochMetrics),
    ) -> Result<Vec<EpochMetrics>> {
        cfg.validate()?;
        check_len("data columns", self.input_dim(), data.ncols())?;
        if cfg.gamma > self.num_filters() {
            return invalid("gamma exceeds the number of filters");
        }
        if data.nrows() == 0 && cfg.epochs > 0 {
            return invalid("empty training set");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..data.nrows()).collect();
        let mut history = Vec::with_capacity(cfg.epochs);
        let start = Instant::now();
        let k = self.num_filters() as f64;
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let (mut err, mut active) = (0.0, 0.0);
            for chunk in order.chunks(cfg.batch_size) {
                let batch = data.select(Axis(0), chunk);
                let codes = self.encode_batch(batch.view(), cfg.gamma)?;
                err += self.objective(batch.view(), &codes)?;
                active += codes.iter().map(|c| c.len() as f64 / k).sum::<f64>();
                let l = self.lipschitz_estimate(&codes)?;
                if l > 0.0 {
                    self.dictionary_update(batch.view(), &codes, cfg.step_scale / (2.0 * l))?;
                }
            }
            if self.weights.iter().any(|x| !x.is_finite()) {
                return Err(Error::TrainingDiverged {
                    epoch,
                    reason: "non-finite dictionary entry".into(),
                });
            }
            let n = data.nrows() as f64;
            let m = EpochMetrics {
                epoch,
                reconstruction_error: err / n,
                mean_pooled_activation: active / n,
                wall_seconds: start.elapsed().as_secs_f64(),
            };
            on_epoch(&m);
            history.push(m);
        }
        Ok(history)
    }

    /// Two-sided soft threshold maximized over transformations: entry `j`
    /// is `max_s max(w_jᵀT_s v − α, 0)`, entry `j + K` is
    /// `max_s max(−w_jᵀT_s v − α, 0)`.
    pub fn threshold_encode(&self, v: ArrayView1<f64>, alpha: f64) -> Result<Array1<f64>> {
        check_len("input vector", self.input_dim(), v.len())?;
        Ok(self
            .threshold_encode_batch(v.insert_axis(Axis(0)), alpha)?
            .row(0)
            .to_owned())
    }

    /// [`threshold_encode`](Self::threshold_encode) for every row (`N x 2K`).
    pub fn threshold_encode_batch(&self, batch: ArrayView2<f64>, alpha: f64) -> Result<Array2<f64>> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return invalid("alpha must be finite and non-negative");
        }
        check_len("batch columns", self.input_dim(), batch.ncols())?;
        let (k, s) = (self.num_filters(), self.num_transforms());
        let resp = transformed_batch(&self.transforms, batch).dot(&self.weights);
        let mut out = Array2::zeros((batch.nrows(), 2 * k));
        for (i, mut row) in out.outer_iter_mut().enumerate() {
            for t in 0..s {
                for j in 0..k {
                    let c = resp[[i * s + t, j]];
                    row[j] = f64::max(row[j], c - alpha);
                    row[j + k] = f64::max(row[j + k], -c - alpha);
                }
            }
        }
        Ok(out)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimum-norm least-squares coefficients of `target` on `atoms`.
fn least_squares(atoms: &[Vec<f64>], target: &[f64]) -> Result<Vec<f64>> {
    let d = target.len();
    let a = DMatrix::from_fn(d, atoms.len(), |i, j| atoms[j][i]);
    let b = DVector::from_column_slice(target);
    let x = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::DegenerateData(format!("least-squares refit failed: {e}")))?;
    Ok(x.iter().copied().collect())
}
