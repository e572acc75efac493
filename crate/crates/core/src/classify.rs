//! Multinomial softmax classifier with L2 regularization, stratified
//! cross-validation and confusion-matrix evaluation.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier {
    /// `dim x classes`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub reg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub max_iter: usize,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
    /// Defaults to `max(label) + 1`.
    pub classes: Option<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iter: 2000,
            tolerance: 1e-4,
            classes: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub iterations: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    pub converged: bool,
}

/// Mean cross-entropy plus `reg/2 ‖W‖²` and its gradient.
pub fn objective_and_gradient(
    features: ArrayView2<f64>,
    labels: &[usize],
    weights: &Array2<f64>,
    bias: &Array1<f64>,
    reg: f64,
) -> (f64, Array2<f64>, Array1<f64>) {
    let n = features.nrows() as f64;
    let mut scores = features.dot(weights);
    scores += bias;
    let mut loss = 0.0;
    for (mut row, &y) in scores.outer_iter_mut().zip(labels) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|s| (s - m).exp());
        let z = row.sum();
        loss -= (row[y] / z).ln();
        row /= z;
        row[y] -= 1.0;
    }
    scores /= n;
    let mut gw = features.t().dot(&scores);
    gw.scaled_add(reg, weights);
    let gb = scores.sum_axis(Axis(0));
    let obj = loss / n + 0.5 * reg * weights.iter().map(|w| w * w).sum::<f64>();
    (obj, gw, gb)
}

fn norm2(w: &Array2<f64>, b: &Array1<f64>) -> f64 {
    w.iter().chain(b.iter()).map(|x| x * x).sum()
}

fn check_inputs(features: ArrayView2<f64>, labels: &[usize], classes: usize) -> Result<()> {
    check_len("label count", features.nrows(), labels.len())?;
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return invalid(format!("label {bad} outside 0..{classes}"));
    }
    Ok(())
}

impl SoftmaxClassifier {
    /// Full-batch accelerated gradient descent with backtracking line
    /// search and a fixed iteration budget.
    pub fn fit(
        features: ArrayView2<f64>,
        labels: &[usize],
        reg: f64,
        cfg: &FitConfig,
    ) -> Result<(Self, FitReport)> {
        if !(reg >= 0.0 && reg.is_finite()) {
            return invalid("regularization must be finite and non-negative");
        }
        let classes = cfg
            .classes
            .unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        check_inputs(features, labels, classes)?;
        let first = labels.first().copied();
        if classes < 2 || labels.iter().all(|&l| Some(l) == first) {
            return invalid("need at least two distinct classes");
        }
        if features.nrows() < classes {
            return invalid(format!("{} samples for {classes} classes", features.nrows()));
        }

        let dim = features.ncols();
        let mut w = Array2::zeros((dim, classes));
        let mut b = Array1::zeros(classes);
        let (mut yw, mut yb) = (w.clone(), b.clone());
        let mut momentum = 1.0f64;
        let mut step = 1.0f64;
        let (mut obj, _, _) = objective_and_gradient(features, labels, &w, &b, reg);
        let mut report = FitReport {
            iterations: 0,
            objective: obj,
            gradient_norm: f64::INFINITY,
            converged: false,
        };
        for it in 0..cfg.max_iter {
            let (fy, gw, gb) = objective_and_gradient(features, labels, &yw, &yb, reg);
            let g2 = norm2(&gw, &gb);
            // backtracking on the extrapolated point
            let (nw, nb, fnew) = loop {
                let nw = &yw - &(&gw * step);
                let nb = &yb - &(&gb * step);
                let (f, _, _) = objective_and_gradient(features, labels, &nw, &nb, reg);
                if f <= fy - 0.5 * step * g2 || step < 1e-12 {
                    break (nw, nb, f);
                }
                step *= 0.5;
            };
            if fnew > obj {
                // adaptive restart
                momentum = 1.0;
                yw = w.clone();
                yb = b.clone();
                report.iterations = it + 1;
                continue;
            }
            let next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
            let beta = (momentum - 1.0) / next;
            yw = &nw + &((&nw - &w) * beta);
            yb = &nb + &((&nb - &b) * beta);
            momentum = next;
            w = nw;
            b = nb;
            obj = fnew;
            step *= 1.5;
            report.iterations = it + 1;

            let (_, cw, cb) = objective_and_gradient(features, labels, &w, &b, reg);
            report.gradient_norm = norm2(&cw, &cb).sqrt();
            if report.gradient_norm < cfg.tolerance {
                report.converged = true;
                break;
            }
        }
        report.objective = obj;
        if report.gradient_norm.is_infinite() {
            let (_, cw, cb) = objective_and_gradient(features, labels, &w, &b, reg);
            report.gradient_norm = norm2(&cw, &cb).sqrt();
        }
        Ok((SoftmaxClassifier { weights: w, bias: b, reg }, report))
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    /// Class scores `N x classes`.
    pub fn scores(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_len("feature dimension", self.weights.nrows(), features.ncols())?;
        let mut s = features.dot(&self.weights);
        s += &self.bias;
        Ok(s)
    }

    /// Argmax predictions; ties go to the lowest class index.
    pub fn predict(&self, features: ArrayView2<f64>) -> Result<Vec<usize>> {
        let s = self.scores(features)?;
        Ok(s.outer_iter()
            .map(|row| {
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Rows are true classes, columns predictions.
    pub confusion: Array2<usize>,
}

impl Evaluation {
    pub fn error(&self) -> f64 {
        1.0 - self.accuracy
    }

    pub fn from_predictions(predictions: &[usize], labels: &[usize], classes: usize) -> Result<Self> {
        check_len("prediction count", labels.len(), predictions.len())?;
        let mut confusion = Array2::zeros((classes, classes));
        for (&p, &y) in predictions.iter().zip(labels) {
            if p >= classes || y >= classes {
                return invalid(format!("class index outside 0..{classes}"));
            }
            confusion[[y, p]] += 1;
        }
        let correct: usize = (0..classes).map(|c| confusion[[c, c]]).sum();
        let accuracy = if labels.is_empty() {
            0.0
        } else {
            correct as f64 / labels.len() as f64
        };
        Ok(Evaluation {
            accuracy,
            confusion,
        })
    }

    /// Plain-text dump: one row per true class.
    pub fn confusion_text(&self) -> String {
        let mut s = String::new();
        for row in self.confusion.outer_iter() {
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            s.push_str(&cells.join(" "));
            s.push('\n');
        }
        s
    }
}

pub fn evaluate(c: &SoftmaxClassifier, features: ArrayView2<f64>, labels: &[usize]) -> Result<Evaluation> {
    check_len("label count", features.nrows(), labels.len())?;
    let classes = c.classes().max(labels.iter().max().map_or(0, |m| m + 1));
    Evaluation::from_predictions(&c.predict(features)?, labels, classes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub best_reg: f64,
    /// `(reg, mean validation accuracy)` in ascending `reg` order.
    pub mean_accuracy: Vec<(f64, f64)>,
    /// Per-reg, per-fold validation accuracy.
    pub fold_accuracy: Vec<Vec<f64>>,
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return invalid("need at least two folds");
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assign = vec![0; labels.len()];
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < folds {
            return invalid(format!("class {c} has {} samples for {folds} folds", idx.len()));
        }
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            assign[i] = k % folds;
        }
    }
    Ok(assign)
}

/// Picks the regularization with the best mean validation accuracy; ties
/// go to the smaller value.
pub fn cross_validate(
    features: ArrayView2<f64>,
    labels: &[usize],
    grid: &[f64],
    folds: usize,
    seed: u64,
    cfg: &FitConfig,
) -> Result<CvReport> {
    if grid.is_empty() {
        return invalid("regularization grid is empty");
    }
    check_len("label count", features.nrows(), labels.len())?;
    let mut regs = grid.to_vec();
    regs.sort_by(f64::total_cmp);
    regs.dedup();
    let assign = stratified_folds(labels, folds, seed)?;
    let classes = cfg
        .classes
        .unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let cfg = FitConfig {
        classes: Some(classes),
        ..*cfg
    };
    let mut fold_accuracy = Vec::with_capacity(regs.len());
    for &reg in &regs {
        let mut accs = Vec::with_capacity(folds);
        for f in 0..folds {
            let train: Vec<usize> = (0..labels.len()).filter(|&i| assign[i] != f).collect();
            let valid: Vec<usize> = (0..labels.len()).filter(|&i| assign[i] == f).collect();
            let xt = features.select(Axis(0), &train);
            let yt: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let xv = features.select(Axis(0), &valid);
            let yv: Vec<usize> = valid.iter().map(|&i| labels[i]).collect();
            let (c, _) = SoftmaxClassifier::fit(xt.view(), &yt, reg, &cfg)?;
            accs.push(evaluate(&c, xv.view(), &yv)?.accuracy);
        }
        fold_accuracy.push(accs);
    }
    let mean_accuracy: Vec<(f64, f64)> = regs
        .iter()
        .zip(&fold_accuracy)
        .map(|(&r, a)| (r, a.iter().sum::<f64>() / a.len() as f64))
        .collect();
    let mut best = mean_accuracy[0];
    for &(r, a) in &mean_accuracy[1..] {
        if a > best.1 {
            best = (r, a);
        }
    }
    Ok(CvReport {
        best_reg: best.0,
        mean_accuracy,
        fold_accuracy,
    })
}
