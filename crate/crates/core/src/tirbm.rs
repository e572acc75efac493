//! Transformation-invariant restricted Boltzmann machine.
//!
//! The hidden layer is a `K x S` binary matrix with at most one active unit
//! per row (probabilistic max pooling over the transform set). With a single
//! identity transform the model is an ordinary RBM.
//!
//! Random number consumption is part of the reproducibility contract:
//! training shuffles sample indices once per epoch with
//! [`SliceRandom::shuffle`], and hidden sampling draws one uniform `f64` per
//! `(sample, filter)` pair in sample-major order, selecting the first
//! transformation whose cumulative probability exceeds the draw (off if
//! none does).

use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, invalid, Error, Result};
use crate::math::{adjoint_batch, pooled_posteriors, pooled_softmax, sigmoid, transformed_batch};
use crate::metrics::EpochMetrics;
use crate::transform::TransformSet;

/// Distribution of the visible units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisibleFamily {
    /// `v ∈ {0,1}^D1`; also used for intensities in `[0, 1]`.
    Binary,
    /// Real-valued, unit variance. Inputs should be standardized.
    Gaussian,
}

impl VisibleFamily {
    pub fn tag(self) -> u32 {
        match self {
            VisibleFamily::Binary => 0,
            VisibleFamily::Gaussian => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(VisibleFamily::Binary),
            1 => Ok(VisibleFamily::Gaussian),
            t => Err(Error::Format(format!("unknown visible family tag {t}"))),
        }
    }
}

/// Hidden configuration: for each filter, the active transformation if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HiddenState {
    pub active: Vec<Option<usize>>,
}

impl HiddenState {
    pub fn off(k: usize) -> Self {
        HiddenState {
            active: vec![None; k],
        }
    }

    /// Parses a `K x S` 0/1 matrix, rejecting rows with more than one
    /// active unit.
    pub fn from_matrix(h: ArrayView2<f64>) -> Result<Self> {
        let mut active = Vec::with_capacity(h.nrows());
        for (j, row) in h.outer_iter().enumerate() {
            let mut on = None;
            for (s, &x) in row.iter().enumerate() {
                if x == 1.0 {
                    if on.is_some() {
                        return invalid(format!("hidden row {j} has more than one active unit"));
                    }
                    on = Some(s);
                } else if x != 0.0 {
                    return invalid(format!("hidden unit ({j},{s}) is not binary"));
                }
            }
            active.push(on);
        }
        Ok(HiddenState { active })
    }

    pub fn to_matrix(&self, s: usize) -> Array2<f64> {
        let mut m = Array2::zeros((self.active.len(), s));
        for (j, a) in self.active.iter().enumerate() {
            if let Some(t) = a {
                m[[j, *t]] = 1.0;
            }
        }
        m
    }

    /// Pooled units `z_j`.
    pub fn pooled(&self) -> Vec<bool> {
        self.active.iter().map(Option::is_some).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub cd_steps: usize,
    /// Target pooled activation `p`.
    pub sparsity_target: f64,
    /// Weight of the pooled-sparsity penalty; 0 disables it.
    pub sparsity_weight: f64,
    /// Half-width of the uniform weight initialization.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            batch_size: 100,
            epochs: 10,
            cd_steps: 1,
            sparsity_target: 0.05,
            sparsity_weight: 3.0,
            init_scale: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return invalid("batch size must be positive");
        }
        if self.cd_steps == 0 {
            return invalid("cd_steps must be at least 1");
        }
        if !(self.sparsity_target > 0.0 && self.sparsity_target < 1.0) {
            return invalid("sparsity target must lie in (0, 1)");
        }
        if !(self.sparsity_weight >= 0.0) {
            return invalid("sparsity weight must be non-negative");
        }
        if !(self.init_scale >= 0.0) {
            return invalid("init scale must be non-negative");
        }
        Ok(())
    }
}

/// Gradient (or update direction) for every model parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Array2<f64>,
    pub hidden_bias: Array2<f64>,
    pub visible_bias: Array1<f64>,
}

impl Gradient {
    pub fn zeros(d2: usize, k: usize, s: usize, d1: usize) -> Self {
        Gradient {
            weights: Array2::zeros((d2, k)),
            hidden_bias: Array2::zeros((k, s)),
            visible_bias: Array1::zeros(d1),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(self.hidden_bias.iter())
            .chain(self.visible_bias.iter())
            .fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    /// Flattened `[W, b, c]`, row-major.
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .chain(self.hidden_bias.iter())
            .chain(self.visible_bias.iter())
            .copied()
            .collect()
    }
}

/// Result of one contrastive-divergence evaluation.
#[derive(Debug, Clone)]
pub struct CdStep {
    /// Ascent direction on the log-likelihood.
    pub gradient: Gradient,
    /// Batch mean of `E[z_j | v]` per filter.
    pub mean_pooled: Array1<f64>,
    /// Mean squared error between the data and the first mean-field
    /// reconstruction.
    pub reconstruction_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TirbmModel {
    /// `D2 x K`; column `j` is filter `w_j`.
    pub weights: Array2<f64>,
    /// `K x S`.
    pub hidden_bias: Array2<f64>,
    /// `D1`.
    pub visible_bias: Array1<f64>,
    pub visible: VisibleFamily,
    transforms: Arc<TransformSet>,
}

impl TirbmModel {
    pub fn zeros(transforms: Arc<TransformSet>, k: usize, visible: VisibleFamily) -> Self {
        let (d1, d2, s) = (transforms.input_dim(), transforms.filter_dim(), transforms.len());
        TirbmModel {
            weights: Array2::zeros((d2, k)),
            hidden_bias: Array2::zeros((k, s)),
            visible_bias: Array1::zeros(d1),
            visible,
            transforms,
        }
    }

    /// `W ~ U(-a, a)` with `a = cfg.init_scale`, zero biases.
    pub fn init(
        transforms: Arc<TransformSet>,
        k: usize,
        visible: VisibleFamily,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        if k == 0 {
            return invalid("number of filters must be positive");
        }
        cfg.validate()?;
        let mut m = Self::zeros(transforms, k, visible);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let a = cfg.init_scale;
        m.weights.mapv_inplace(|_| rng.random_range(-1.0..1.0) * a);
        Ok(m)
    }

    /// Assembles a model from explicit parameters.
    pub fn from_parts(
        transforms: Arc<TransformSet>,
        weights: Array2<f64>,
        hidden_bias: Array2<f64>,
        visible_bias: Array1<f64>,
        visible: VisibleFamily,
    ) -> Result<Self> {
        let k = weights.ncols();
        check_len("weight rows (D2)", transforms.filter_dim(), weights.nrows())?;
        check_len("hidden bias rows (K)", k, hidden_bias.nrows())?;
        check_len("hidden bias columns (S)", transforms.len(), hidden_bias.ncols())?;
        check_len("visible bias (D1)", transforms.input_dim(), visible_bias.len())?;
        let m = TirbmModel {
            weights,
            hidden_bias,
            visible_bias,
            visible,
            transforms,
        };
        if !m.is_finite() {
            return invalid("model parameters must be finite");
        }
        Ok(m)
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
        self.visible_bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|x| x.is_finite())
            && self.hidden_bias.iter().all(|x| x.is_finite())
            && self.visible_bias.iter().all(|x| x.is_finite())
    }

    /// `w_jᵀ T_s v + b_{j,s}` as a `K x S` matrix.
    fn logits(&self, v: ArrayView1<f64>) -> Result<Array2<f64>> {
        check_len("visible vector", self.input_dim(), v.len())?;
        let tv = self.transforms.apply_all(&v.to_vec())?;
        let mut l = tv.dot(&self.weights).reversed_axes();
        l += &self.hidden_bias;
        Ok(l)
    }

    /// Energy `E(v, H)` of a joint configuration.
    pub fn energy(&self, v: ArrayView1<f64>, h: &HiddenState) -> Result<f64> {
        check_len("visible vector", self.input_dim(), v.len())?;
        self.check_hidden(h)?;
        if self.visible == VisibleFamily::Binary && v.iter().any(|&x| x != 0.0 && x != 1.0) {
            return invalid("binary visible units must be 0 or 1");
        }
        let mut e = -self.visible_bias.dot(&v);
        if self.visible == VisibleFamily::Gaussian {
            e += 0.5 * v.dot(&v);
        }
        let vs = v.to_vec();
        for (j, a) in h.active.iter().enumerate() {
            if let Some(s) = *a {
                let tv = self.transforms.get(s).expect("checked").apply(&vs)?;
                let resp: f64 = tv.iter().zip(self.weights.column(j)).map(|(a, b)| a * b).sum();
                e -= resp + self.hidden_bias[[j, s]];
            }
        }
        Ok(e)
    }

    fn check_hidden(&self, h: &HiddenState) -> Result<()> {
        check_len("hidden rows", self.num_filters(), h.active.len())?;
        let s = self.num_transforms();
        if let Some(j) = h.active.iter().position(|a| a.is_some_and(|t| t >= s)) {
            return invalid(format!("hidden row {j} selects a transform index >= {s}"));
        }
        Ok(())
    }

    /// `P(h_{j,s} = 1 | v)` as a `K x S` matrix.
    pub fn hidden_conditional(&self, v: ArrayView1<f64>) -> Result<Array2<f64>> {
        let mut l = self.logits(v)?;
        let mut buf = vec![0.0; self.num_transforms()];
        for mut row in l.outer_iter_mut() {
            let logits = row.to_vec();
            pooled_softmax(&logits, &mut buf);
            row.assign(&ArrayView1::from(&buf[..]));
        }
        Ok(l)
    }

    /// `E[z_j | v]` for each filter.
    pub fn pooled_activation(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        let l = self.logits(v)?;
        let mut buf = vec![0.0; self.num_transforms()];
        Ok(l.outer_iter()
            .map(|row| 1.0 - pooled_softmax(&row.to_vec(), &mut buf))
            .collect())
    }

    /// Pooled activations for every row of `batch` (`N x K`).
    pub fn pooled_activation_batch(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_len("batch columns", self.input_dim(), batch.ncols())?;
        let u = transformed_batch(&self.transforms, batch);
        let (_, off) = pooled_posteriors(&u, &self.weights, &self.hidden_bias);
        Ok(off.mapv(|o| 1.0 - o))
    }

    /// Binary family: `P(v_i = 1 | H)`. Gaussian family: `E[v | H]`.
    pub fn visible_conditional(&self, h: &HiddenState) -> Result<Array1<f64>> {
        self.check_hidden(h)?;
        let mut act = self.visible_bias.to_vec();
        for (j, a) in h.active.iter().enumerate() {
            if let Some(s) = *a {
                let w = self.weights.column(j).to_vec();
                self.transforms.get(s).expect("checked").adjoint_add_into(&w, 1.0, &mut act);
            }
        }
        Ok(match self.visible {
            VisibleFamily::Binary => act.into_iter().map(sigmoid).collect(),
            VisibleFamily::Gaussian => Array1::from(act),
        })
    }

    /// Draws `H ~ P(H | v)` row by row.
    pub fn sample_hidden<R: Rng + ?Sized>(
        &self,
        v: ArrayView1<f64>,
        rng: &mut R,
    ) -> Result<HiddenState> {
        let p = self.hidden_conditional(v)?;
        let active = p.outer_iter().map(|row| sample_row(row.iter().copied(), rng)).collect();
        Ok(HiddenState { active })
    }

    /// Mean-field reconstruction from batched hidden states (`(N*S) x K`).
    fn reconstruct(&self, hidden: &Array2<f64>) -> Array2<f64> {
        let coef = hidden.dot(&self.weights.t());
        let mut v = adjoint_batch(&self.transforms, &coef);
        v += &self.visible_bias;
        if self.visible == VisibleFamily::Binary {
            v.mapv_inplace(sigmoid);
        }
        v
    }

    fn sample_batch<R: Rng + ?Sized>(&self, probs: &Array2<f64>, rng: &mut R) -> Array2<f64> {
        let (k, s) = self.hidden_bias.dim();
        let n = probs.nrows() / s;
        let mut h = Array2::zeros(probs.raw_dim());
        for i in 0..n {
            for j in 0..k {
                let row = (0..s).map(|t| probs[[i * s + t, j]]);
                if let Some(t) = sample_row(row, rng) {
                    h[[i * s + t, j]] = 1.0;
                }
            }
        }
        h
    }

    /// Data term of the log-likelihood gradient: `E[-∂E/∂θ]` under
    /// `P(H | v)`, averaged over the batch.
    pub fn positive_phase(&self, batch: ArrayView2<f64>) -> Result<Gradient> {
        if batch.nrows() == 0 {
            return invalid("empty batch");
        }
        check_len("batch columns", self.input_dim(), batch.ncols())?;
        let n = batch.nrows() as f64;
        let u = transformed_batch(&self.transforms, batch);
        let (p, _) = pooled_posteriors(&u, &self.weights, &self.hidden_bias);
        Ok(Gradient {
            weights: u.t().dot(&p) / n,
            hidden_bias: self.sum_by_transform(&p) / n,
            visible_bias: batch.sum_axis(Axis(0)) / n,
        })
    }

    /// Contrastive-divergence estimate of the log-likelihood gradient.
    ///
    /// The chain samples hidden states and uses mean-field visible
    /// reconstructions; both phases use hidden expectations.
    pub fn cd_gradient<R: Rng + ?Sized>(
        &self,
        batch: ArrayView2<f64>,
        cd_steps: usize,
        rng: &mut R,
    ) -> Result<CdStep> {
        Ok(self.cd_internal(batch, cd_steps, rng, None)?.0)
    }

    /// Shared CD pass; when `sparsity_target` is given also returns the
    /// sparsity gradient computed from the positive phase.
    fn cd_internal<R: Rng + ?Sized>(
        &self,
        batch: ArrayView2<f64>,
        cd_steps: usize,
        rng: &mut R,
        sparsity_target: Option<f64>,
    ) -> Result<(CdStep, Option<Gradient>)> {
        if batch.nrows() == 0 {
            return invalid("empty batch");
        }
        if cd_steps == 0 {
            return invalid("cd_steps must be at least 1");
        }
        check_len("batch columns", self.input_dim(), batch.ncols())?;
        let n = batch.nrows() as f64;

        let u_pos = transformed_batch(&self.transforms, batch);
        let (p_pos, off_pos) = pooled_posteriors(&u_pos, &self.weights, &self.hidden_bias);
        let mean_pooled = off_pos.mean_axis(Axis(0)).expect("non-empty").mapv(|o| 1.0 - o);

        let sparsity = sparsity_target
            .map(|p| self.sparsity_from_posteriors(&u_pos, &p_pos, &off_pos, p));

        let mut probs = p_pos.clone();
        let mut recon = batch.to_owned();
        let mut first_error = None;
        for _ in 0..cd_steps {
            let h = self.sample_batch(&probs, rng);
            recon = self.reconstruct(&h);
            if first_error.is_none() {
                let d = &recon - &batch;
                first_error = Some(d.mapv(|x| x * x).mean().unwrap_or(0.0));
            }
            let u = transformed_batch(&self.transforms, recon.view());
            probs = pooled_posteriors(&u, &self.weights, &self.hidden_bias).0;
        }
        let u_neg = transformed_batch(&self.transforms, recon.view());

        let mut gw = u_pos.t().dot(&p_pos);
        gw -= &u_neg.t().dot(&probs);
        gw /= n;
        let gb = (&self.sum_by_transform(&p_pos) - &self.sum_by_transform(&probs)) / n;
        let gc = (&batch.sum_axis(Axis(0)) - &recon.sum_axis(Axis(0))) / n;

        Ok((
            CdStep {
                gradient: Gradient {
                    weights: gw,
                    hidden_bias: gb,
                    visible_bias: gc,
                },
                mean_pooled,
                reconstruction_error: first_error.unwrap_or(0.0),
            },
            sparsity,
        ))
    }

    /// Sums `(N*S) x K` rows over the batch into a `K x S` matrix.
    fn sum_by_transform(&self, probs: &Array2<f64>) -> Array2<f64> {
        let (k, s) = self.hidden_bias.dim();
        let mut out = Array2::zeros((k, s));
        for (r, row) in probs.outer_iter().enumerate() {
            let mut col = out.column_mut(r % s);
            col += &row;
        }
        out
    }

    /// Gradient of `Σ_j (p - mean_n E[z_j | v_n])²` with respect to `W` and
    /// `b` (the visible-bias part is zero).
    pub fn sparsity_gradient(&self, batch: ArrayView2<f64>, target: f64) -> Result<Gradient> {
        if batch.nrows() == 0 {
            return invalid("empty batch");
        }
        if !(target > 0.0 && target < 1.0) {
            return invalid("sparsity target must lie in (0, 1)");
        }
        check_len("batch columns", self.input_dim(), batch.ncols())?;
        let u = transformed_batch(&self.transforms, batch);
        let (p, off) = pooled_posteriors(&u, &self.weights, &self.hidden_bias);
        Ok(self.sparsity_from_posteriors(&u, &p, &off, target))
    }

    fn sparsity_from_posteriors(
        &self,
        u: &Array2<f64>,
        probs: &Array2<f64>,
        off: &Array2<f64>,
        target: f64,
    ) -> Gradient {
        let (k, s) = self.hidden_bias.dim();
        let n = off.nrows();
        let mean = off.mean_axis(Axis(0)).expect("non-empty").mapv(|o| 1.0 - o);
        // dL/dq_j = -2 (p - q_j); dq_j/da_{n,j,s} = P_s * P_off / N
        let scale: Array1<f64> = mean.mapv(|q| -2.0 * (target - q) / n as f64);
        let mut g = Array2::zeros((n * s, k));
        for i in 0..n {
            for t in 0..s {
                for j in 0..k {
                    g[[i * s + t, j]] = scale[j] * probs[[i * s + t, j]] * off[[i, j]];
                }
            }
        }
        Gradient {
            weights: u.t().dot(&g),
            hidden_bias: self.sum_by_transform(&g),
            visible_bias: Array1::zeros(self.input_dim()),
        }
    }

    /// Applies `θ ← θ + rate · direction`.
    pub fn apply_update(&mut self, direction: &Gradient, rate: f64) {
        self.weights.scaled_add(rate, &direction.weights);
        self.hidden_bias.scaled_add(rate, &direction.hidden_bias);
        self.visible_bias.scaled_add(rate, &direction.visible_bias);
    }

    /// Minibatch SGD with contrastive divergence and the pooled-sparsity
    /// penalty. Deterministic given `cfg.seed`.
    pub fn train(&mut self, data: ArrayView2<f64>, cfg: &TrainConfig) -> Result<Vec<EpochMetrics>> {
        self.train_with(data, cfg, |_| {})
    }

    /// [`train`](Self::train) with a callback invoked after every epoch.
    pub fn train_with(
        &mut self,
        data: ArrayView2<f64>,
        cfg: &TrainConfig,
        mut on_epoch: impl FnMut(&EpochMetrics),
    ) -> Result<Vec<EpochMetrics>> {
        cfg.validate()?;
        check_len("data columns", self.input_dim(), data.ncols())?;
        if data.nrows() == 0 && cfg.epochs > 0 {
            return invalid("empty training set");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..data.nrows()).collect();
        let mut history = Vec::with_capacity(cfg.epochs);
        let start = Instant::now();
        let sparse = cfg.sparsity_weight > 0.0;
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let (mut err, mut pooled, mut seen) = (0.0, 0.0, 0usize);
            for chunk in order.chunks(cfg.batch_size) {
                let batch = data.select(Axis(0), chunk);
                let target = sparse.then_some(cfg.sparsity_target);
                let (step, sp) = self.cd_internal(batch.view(), cfg.cd_steps, &mut rng, target)?;
                self.apply_update(&step.gradient, cfg.learning_rate);
                if let Some(sp) = sp {
                    self.apply_update(&sp, -cfg.learning_rate * cfg.sparsity_weight);
                }
                err += step.reconstruction_error * chunk.len() as f64;
                pooled += step.mean_pooled.mean().unwrap_or(0.0) * chunk.len() as f64;
                seen += chunk.len();
            }
            if !self.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    reason: "non-finite parameter".into(),
                });
            }
            let m = EpochMetrics {
                epoch,
                reconstruction_error: err / seen as f64,
                mean_pooled_activation: pooled / seen as f64,
                wall_seconds: start.elapsed().as_secs_f64(),
            };
            on_epoch(&m);
            history.push(m);
        }
        Ok(history)
    }
}

/// Categorical draw over `{s = 0..S, off}`; returns `None` for off.
fn sample_row<R: Rng + ?Sized>(probs: impl Iterator<Item = f64>, rng: &mut R) -> Option<usize> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (t, p) in probs.enumerate() {
        acc += p;
        if u < acc {
            return Some(t);
        }
    }
    None
}
