//! Transformation-invariant autoencoder.
//!
//! The encoder is the pooled softmax over transformations (identical to the
//! TIRBM hidden posterior); the decoder reconstructs through the transposed
//! transformed filters with the same tied weights.

use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, invalid, Error, Result};
use crate::math::{adjoint_batch, pooled_posteriors, sigmoid, transformed_batch};
use crate::metrics::EpochMetrics;
use crate::tirbm::{Gradient, TrainConfig};
use crate::transform::TransformSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFamily {
    /// Sigmoid decoder with cross-entropy loss, for data in `[0, 1]`.
    SigmoidCrossEntropy,
    /// Linear decoder with squared error, for standardized data.
    LinearSquaredError,
}

impl OutputFamily {
    pub fn tag(self) -> u32 {
        match self {
            OutputFamily::SigmoidCrossEntropy => 0,
            OutputFamily::LinearSquaredError => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(OutputFamily::SigmoidCrossEntropy),
            1 => Ok(OutputFamily::LinearSquaredError),
            t => Err(Error::Format(format!("unknown output family tag {t}"))),
        }
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TiaeModel {
    /// `D2 x K`, shared by encoder and decoder.
    pub weights: Array2<f64>,
    /// `K x S`.
    pub hidden_bias: Array2<f64>,
    /// `D1`.
    pub visible_bias: Array1<f64>,
    pub output: OutputFamily,
    transforms: Arc<TransformSet>,
}

impl TiaeModel {
    pub fn zeros(transforms: Arc<TransformSet>, k: usize, output: OutputFamily) -> Self {
        let (d1, d2, s) = (transforms.input_dim(), transforms.filter_dim(), transforms.len());
        TiaeModel {
            weights: Array2::zeros((d2, k)),
            hidden_bias: Array2::zeros((k, s)),
            visible_bias: Array1::zeros(d1),
            output,
            transforms,
        }
    }

    pub fn init(
        transforms: Arc<TransformSet>,
        k: usize,
        output: OutputFamily,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        if k == 0 {
            return invalid("number of filters must be positive");
        }
        cfg.validate()?;
        let mut m = Self::zeros(transforms, k, output);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let a = cfg.init_scale;
        m.weights.mapv_inplace(|_| rng.random_range(-1.0..1.0) * a);
        Ok(m)
    }

    pub fn from_parts(
        transforms: Arc<TransformSet>,
        weights: Array2<f64>,
        hidden_bias: Array2<f64>,
        visible_bias: Array1<f64>,
        output: OutputFamily,
    ) -> Result<Self> {
        check_len("weight rows (D2)", transforms.filter_dim(), weights.nrows())?;
        check_len("hidden bias rows (K)", weights.ncols(), hidden_bias.nrows())?;
        check_len("hidden bias columns (S)", transforms.len(), hidden_bias.ncols())?;
        check_len("visible bias (D1)", transforms.input_dim(), visible_bias.len())?;
        let m = TiaeModel {
            weights,
            hidden_bias,
            visible_bias,
            output,
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

    /// Encoder output `f_{j,s}(v)` as a `K x S` matrix.
    pub fn encode(&self, v: ArrayView1<f64>) -> Result<Array2<f64>> {
        check_len("visible vector", self.input_dim(), v.len())?;
        let batch = v.insert_axis(Axis(0));
        let u = transformed_batch(&self.transforms, batch);
        let (p, _) = pooled_posteriors(&u, &self.weights, &self.hidden_bias);
        Ok(p.reversed_axes())
    }

    /// Row sums of the encoder output for every row of `batch` (`N x K`).
    pub fn pooled_batch(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_len("batch columns", self.input_dim(), batch.ncols())?;
        let u = transformed_batch(&self.transforms, batch);
        let (_, off) = pooled_posteriors(&u, &self.weights, &self.hidden_bias);
        Ok(off.mapv(|o| 1.0 - o))
    }

    /// Decoder pre-activation `Σ_{j,s} (T_sᵀ w_j) f_{j,s} + c`.
    fn decode_linear(&self, f: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_len("code rows (K)", self.num_filters(), f.nrows())?;
        check_len("code columns (S)", self.num_transforms(), f.ncols())?;
        let mut out = self.visible_bias.to_vec();
        for (s, t) in self.transforms.iter().enumerate() {
            let coef = self.weights.dot(&f.column(s));
            t.adjoint_add_into(coef.as_slice().expect("contiguous"), 1.0, &mut out);
        }
        Ok(out)
    }

    /// Reconstruction `v̂` from a `K x S` code.
    pub fn decode(&self, f: ArrayView2<f64>) -> Result<Array1<f64>> {
        if f.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return invalid("code entries must lie in [0, 1]");
        }
        let o = self.decode_linear(f)?;
        Ok(match self.output {
            OutputFamily::SigmoidCrossEntropy => o.into_iter().map(sigmoid).collect(),
            OutputFamily::LinearSquaredError => Array1::from(o),
        })
    }

    fn sample_loss(&self, pre: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
        match self.output {
            OutputFamily::SigmoidCrossEntropy => {
                pre.iter().zip(v).map(|(&o, &x)| softplus(o) - x * o).sum()
            }
            OutputFamily::LinearSquaredError => {
                0.5 * pre.iter().zip(v).map(|(&o, &x)| (o - x) * (o - x)).sum::<f64>()
            }
        }
    }

    /// Mean per-sample reconstruction loss and its gradient.
    pub fn loss_and_gradient(&self, batch: ArrayView2<f64>) -> Result<(f64, Gradient)> {
        let (loss, grad, _) = self.forward_backward(batch)?;
        Ok((loss, grad))
    }

    /// Mean per-sample reconstruction loss.
    pub fn loss(&self, batch: ArrayView2<f64>) -> Result<f64> {
        check_len("batch columns", self.input_dim(), batch.ncols())?;
        if batch.nrows() == 0 {
            return invalid("empty batch");
        }
        let u = transformed_batch(&self.transforms, batch);
        let (p, _) = pooled_posteriors(&u, &self.weights, &self.hidden_bias);
        let pre = self.pre_activation(&p);
        let total: f64 = pre
            .outer_iter()
            .zip(batch.outer_iter())
            .map(|(o, v)| self.sample_loss(o, v))
            .sum();
        Ok(total / batch.nrows() as f64)
    }

    fn pre_activation(&self, probs: &Array2<f64>) -> Array2<f64> {
        let coef = probs.dot(&self.weights.t());
        let mut pre = adjoint_batch(&self.transforms, &coef);
        pre += &self.visible_bias;
        pre
    }

    fn forward_backward(&self, batch: ArrayView2<f64>) -> Result<(f64, Gradient, f64)> {
        check_len("batch columns", self.input_dim(), batch.ncols())?;
        if batch.nrows() == 0 {
            return invalid("empty batch");
        }
        let (k, s) = self.hidden_bias.dim();
        let n = batch.nrows();
        let u = transformed_batch(&self.transforms, batch);
        let (p, off) = pooled_posteriors(&u, &self.weights, &self.hidden_bias);
        let pre = self.pre_activation(&p);

        let mut loss = 0.0;
        let mut delta = Array2::zeros((n, self.input_dim()));
        for ((o, v), mut d) in pre.outer_iter().zip(batch.outer_iter()).zip(delta.outer_iter_mut()) {
            loss += self.sample_loss(o, v);
            for ((di, &oi), &vi) in d.iter_mut().zip(o).zip(v) {
                let out = match self.output {
                    OutputFamily::SigmoidCrossEntropy => sigmoid(oi),
                    OutputFamily::LinearSquaredError => oi,
                };
                *di = out - vi;
            }
        }

        let t_delta = transformed_batch(&self.transforms, delta.view());
        // decoder occurrence of W
        let mut gw = t_delta.t().dot(&p);
        // back through the pooled softmax
        let g_f = t_delta.dot(&self.weights);
        let mut g_a = Array2::zeros((n * s, k));
        for i in 0..n {
            for j in 0..k {
                let inner: f64 = (0..s).map(|t| p[[i * s + t, j]] * g_f[[i * s + t, j]]).sum();
                for t in 0..s {
                    let r = i * s + t;
                    g_a[[r, j]] = p[[r, j]] * (g_f[[r, j]] - inner);
                }
            }
        }
        gw += &u.t().dot(&g_a);
        let mut gb = Array2::zeros((k, s));
        for (r, row) in g_a.outer_iter().enumerate() {
            let mut col = gb.column_mut(r % s);
            col += &row;
        }
        let gc = delta.sum_axis(Axis(0));
        let nf = n as f64;
        let pooled = off.mapv(|o| 1.0 - o).mean().unwrap_or(0.0);
        Ok((
            loss / nf,
            Gradient {
                weights: gw / nf,
                hidden_bias: gb / nf,
                visible_bias: gc / nf,
            },
            pooled,
        ))
    }

    /// Minibatch SGD on the reconstruction loss; deterministic given
    /// `cfg.seed`. Sparsity and CD settings in `cfg` are ignored.
    pub fn train(&mut self, data: ArrayView2<f64>, cfg: &TrainConfig) -> Result<Vec<EpochMetrics>> {
        self.train_with(data, cfg, |_| {})
    }

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
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let (mut loss, mut pooled) = (0.0, 0.0);
            for chunk in order.chunks(cfg.batch_size) {
                let batch = data.select(Axis(0), chunk);
                let (l, g, p) = self.forward_backward(batch.view())?;
                if !l.is_finite() {
                    return Err(Error::TrainingDiverged {
                        epoch,
                        reason: "non-finite loss".into(),
                    });
                }
                self.weights.scaled_add(-cfg.learning_rate, &g.weights);
                self.hidden_bias.scaled_add(-cfg.learning_rate, &g.hidden_bias);
                self.visible_bias.scaled_add(-cfg.learning_rate, &g.visible_bias);
                loss += l * chunk.len() as f64;
                pooled += p * chunk.len() as f64;
            }
            if !self.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    reason: "non-finite parameter".into(),
                });
            }
            let n = data.nrows() as f64;
            let m = EpochMetrics {
                epoch,
                reconstruction_error: loss / n,
                mean_pooled_activation: pooled / n,
                wall_seconds: start.elapsed().as_secs_f64(),
            };
            on_epoch(&m);
            history.push(m);
        }
        Ok(history)
    }
}
