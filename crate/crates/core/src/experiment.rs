//! End-to-end experiment runners: digit variations (RBM against TIRBM on a
//! single whole-image patch) and the dense color-image pipeline.

use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};

use crate::checkpoint::{Checkpoint, Model};
use crate::classify::{cross_validate, evaluate, CvReport, Evaluation, FitConfig, SoftmaxClassifier};
use crate::data::{
    fit_apply_preprocessing, render_color_images, render_digits, sample_patches, synthesize_variation,
    Background, PreprocessConfig, PreprocessKind, VariationKind,
};
use crate::error::{invalid, Result};
use crate::features::{Encoder, FeatureExtractor, Pooling};
use crate::metrics::EpochMetrics;
use crate::tiomp::{Dictionary, OmpTrainConfig};
use crate::tirbm::{TirbmModel, TrainConfig, VisibleFamily};
use crate::transform::TransformSpec;

pub const RESULTS_HEADER: &str = "dataset,model,K,S,reg,accuracy,error";

pub const DEFAULT_REG_GRID: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];
pub const DEFAULT_ALPHA_GRID: [f64; 3] = [0.1, 0.25, 0.5];

/// One row of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub dataset: String,
    pub model: String,
    pub k: usize,
    pub s: usize,
    pub reg: f64,
    pub accuracy: f64,
}

impl ResultRow {
    pub fn error(&self) -> f64 {
        1.0 - self.accuracy
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.dataset,
            self.model,
            self.k,
            self.s,
            self.reg,
            self.accuracy,
            self.error()
        )
    }
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Cross-validates the regularization on the training features, refits on
/// the whole training split and scores the test split.
pub fn fit_and_score(
    train: ArrayView2<f64>,
    train_labels: &[usize],
    test: ArrayView2<f64>,
    test_labels: &[usize],
    grid: &[f64],
    folds: usize,
    seed: u64,
    fit: &FitConfig,
) -> Result<(CvReport, SoftmaxClassifier, Evaluation)> {
    let cv = cross_validate(train, train_labels, grid, folds, seed, fit)?;
    let (clf, _) = SoftmaxClassifier::fit(train, train_labels, cv.best_reg, fit)?;
    let eval = evaluate(&clf, test, test_labels)?;
    Ok((cv, clf, eval))
}

/// Named transform preset matching a digit variation.
pub fn variation_preset(kind: VariationKind) -> &'static str {
    match kind {
        VariationKind::Rotation => "rot16",
        VariationKind::Scale => "scale28-20",
        VariationKind::Translation => "trans28-24",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationConfig {
    pub kind: VariationKind,
    pub background: Background,
    pub train_size: usize,
    pub test_size: usize,
    pub k: usize,
    /// Shared by both models.
    pub train: TrainConfig,
    pub digit_seed: u64,
    pub variation_seed: u64,
    pub reg_grid: Vec<f64>,
    pub folds: usize,
    pub cv_seed: u64,
    pub fit: FitConfig,
}

impl VariationConfig {
    /// Desk-scale defaults: 2,000 / 1,000 split, K = 100, 100 epochs of
    /// CD-1 at rate 0.1 with sparsity weight 15 toward p = 0.05.
    pub fn new(kind: VariationKind) -> Self {
        VariationConfig {
            kind,
            background: Background::None,
            train_size: 2000,
            test_size: 1000,
            k: 100,
            train: TrainConfig {
                learning_rate: 0.1,
                epochs: 100,
                sparsity_weight: 15.0,
                seed: 7,
                ..TrainConfig::default()
            },
            digit_seed: 1,
            variation_seed: 2,
            reg_grid: DEFAULT_REG_GRID.to_vec(),
            folds: 5,
            cv_seed: 3,
            fit: FitConfig::default(),
        }
    }

    /// Inverse of [`VariationConfig::dataset_name`], e.g. `mnist-rot-small`
    /// or `mnist-trans-bgrand-small`.
    pub fn from_dataset_name(name: &str) -> Result<Self> {
        let Some(body) = name.strip_prefix("mnist-").and_then(|n| n.strip_suffix("-small")) else {
            return invalid(format!("unknown experiment '{name}'"));
        };
        let (kind, background) = match body.strip_suffix("-bgrand") {
            Some(k) => (k, Background::RandomUniform),
            None => (body, Background::None),
        };
        let mut cfg = VariationConfig::new(VariationKind::parse(kind)?);
        cfg.background = background;
        Ok(cfg)
    }

    pub fn dataset_name(&self) -> String {
        let bg = match self.background {
            Background::None => "",
            Background::RandomUniform => "-bgrand",
        };
        format!("mnist-{}{bg}-small", self.kind.name())
    }
}

#[derive(Debug, Clone)]
pub struct ModelOutcome {
    pub row: ResultRow,
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochMetrics>,
    /// Mean pooled activation over the training split after training.
    pub mean_pooled: f64,
    pub cv: CvReport,
    pub evaluation: Evaluation,
    pub train_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct VariationReport {
    pub dataset: String,
    /// Plain RBM first, then the TIRBM.
    pub models: Vec<ModelOutcome>,
}

/// Generates the digit variation, trains the plain RBM (`identity28`) and
/// the TIRBM with the matching preset under the same settings, and scores
/// both with the softmax head.
pub fn run_variation(cfg: &VariationConfig) -> Result<VariationReport> {
    run_variation_with(cfg, |_, _| {})
}

/// [`run_variation`] reporting every epoch as `(model name, metrics)`.
pub fn run_variation_with(
    cfg: &VariationConfig,
    mut on_epoch: impl FnMut(&str, &EpochMetrics),
) -> Result<VariationReport> {
    if cfg.train_size == 0 || cfg.test_size == 0 {
        return invalid("train and test splits must be non-empty");
    }
    let total = cfg.train_size + cfg.test_size;
    let base = render_digits(total, cfg.digit_seed);
    let ds = synthesize_variation(&base, cfg.kind, cfg.background, cfg.variation_seed)?;
    let train = ds.slice(0, cfg.train_size)?;
    let test = ds.slice(cfg.train_size, total)?;
    let ytr = train.labels.clone().expect("digits are labeled");
    let yte = test.labels.clone().expect("digits are labeled");
    let dataset = cfg.dataset_name();
    let mut models = Vec::with_capacity(2);
    for (name, preset) in [("rbm", "identity28"), ("tirbm", variation_preset(cfg.kind))] {
        let set = Arc::new(TransformSpec::preset(preset)?.build()?);
        let s = set.len();
        let mut m = TirbmModel::init(set, cfg.k, VisibleFamily::Binary, &cfg.train)?;
        let start = Instant::now();
        let history = m.train_with(train.patches.view(), &cfg.train, |e| on_epoch(name, e))?;
        let train_seconds = start.elapsed().as_secs_f64();
        let ftr = m.pooled_activation_batch(train.patches.view())?;
        let fte = m.pooled_activation_batch(test.patches.view())?;
        let mean_pooled = ftr.mean().unwrap_or(0.0);
        let (cv, clf, evaluation) = fit_and_score(
            ftr.view(),
            &ytr,
            fte.view(),
            &yte,
            &cfg.reg_grid,
            cfg.folds,
            cfg.cv_seed,
            &cfg.fit,
        )?;
        models.push(ModelOutcome {
            row: ResultRow {
                dataset: dataset.clone(),
                model: name.into(),
                k: cfg.k,
                s,
                reg: clf.reg,
                accuracy: evaluation.accuracy,
            },
            checkpoint: Checkpoint::new(Model::Tirbm(m)),
            history,
            mean_pooled,
            cv,
            evaluation,
            train_seconds,
        });
    }
    Ok(VariationReport { dataset, models })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorPipelineConfig {
    pub images: usize,
    pub image_size: usize,
    pub patches: usize,
    pub patch_width: usize,
    pub preset: String,
    pub k: usize,
    pub stride: usize,
    pub train: TrainConfig,
    pub omp: OmpTrainConfig,
    /// Threshold grid for the TIOMP encoder, cross-validated jointly with
    /// the regularization.
    pub alpha_grid: Vec<f64>,
    pub preprocess: PreprocessKind,
    pub test_fraction: f64,
    pub reg_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for ColorPipelineConfig {
    fn default() -> Self {
        ColorPipelineConfig {
            images: 500,
            image_size: 32,
            patches: 10_000,
            patch_width: 8,
            preset: "cifar-combined".into(),
            k: 32,
            stride: 1,
            train: TrainConfig {
                learning_rate: 0.005,
                epochs: 5,
                ..TrainConfig::default()
            },
            omp: OmpTrainConfig {
                gamma: 1,
                epochs: 3,
                ..OmpTrainConfig::default()
            },
            alpha_grid: DEFAULT_ALPHA_GRID.to_vec(),
            preprocess: PreprocessKind::ZcaWhiten,
            test_fraction: 0.2,
            reg_grid: DEFAULT_REG_GRID.to_vec(),
            folds: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ColorModelOutcome {
    pub row: ResultRow,
    /// Image-level features for every image, `N x 4 * dim`.
    pub features: Array2<f64>,
    pub checkpoint: Checkpoint,
    /// Selected threshold (TIOMP only).
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ColorPipelineReport {
    pub labels: Vec<usize>,
    /// TIRBM pooled features, then TIOMP thresholded features.
    pub models: Vec<ColorModelOutcome>,
    pub seconds: f64,
}

/// Synthetic color images → random patches → whitening → TIRBM (gaussian)
/// and TIOMP-1 → dense extraction with quadrant pooling → softmax head.
pub fn run_color_pipeline(cfg: &ColorPipelineConfig) -> Result<ColorPipelineReport> {
    if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
        return invalid("test fraction must lie in (0, 1)");
    }
    let start = Instant::now();
    let ds = render_color_images(cfg.images, cfg.image_size, cfg.seed)?;
    let labels = ds.labels.clone().expect("labeled images");
    let n_test = ((cfg.images as f64) * cfg.test_fraction).round() as usize;
    let n_train = cfg.images - n_test;
    if n_train == 0 || n_test == 0 {
        return invalid("not enough images for a train/test split");
    }
    let images = ds.images();
    let patches = sample_patches(&images[..n_train], cfg.patches, cfg.patch_width, cfg.seed.wrapping_add(1))?;
    let (prep, white) = fit_apply_preprocessing(&patches, cfg.preprocess, PreprocessConfig::default())?;
    let set = Arc::new(TransformSpec::preset(&cfg.preset)?.with_channels(3).build()?);
    if set.input_dim() != white.dim() {
        return invalid(format!(
            "preset '{}' expects {}-dimensional patches, got {}",
            cfg.preset,
            set.input_dim(),
            white.dim()
        ));
    }

    let mut rbm = TirbmModel::init(set.clone(), cfg.k, VisibleFamily::Gaussian, &cfg.train)?;
    rbm.train(white.patches.view(), &cfg.train)?;
    let mut dict = Dictionary::init(set.clone(), cfg.k, cfg.seed)?;
    dict.train(white.patches.view(), &cfg.omp)?;

    let mut alpha_grid = cfg.alpha_grid.clone();
    alpha_grid.sort_by(f64::total_cmp);
    alpha_grid.dedup();
    if alpha_grid.is_empty() {
        return invalid("threshold grid is empty");
    }
    let mut candidates = vec![("tirbm", Encoder::Tirbm(rbm.clone()), Model::Tirbm(rbm), None)];
    for &alpha in &alpha_grid {
        let encoder = Encoder::Threshold {
            dictionary: dict.clone(),
            alpha,
        };
        candidates.push(("tiomp-1/t", encoder, Model::Dictionary(dict.clone()), Some(alpha)));
    }
    let mut models: Vec<(f64, ColorModelOutcome)> = Vec::with_capacity(2);
    for (name, encoder, model, alpha) in candidates {
        let fx = FeatureExtractor::new(
            encoder,
            cfg.patch_width,
            3,
            cfg.stride,
            Pooling::QuadrantAverage,
            prep.clone(),
        )?;
        let features = fx.extract_images(&images)?;
        let ftr = features.slice(ndarray::s![..n_train, ..]);
        let fte = features.slice(ndarray::s![n_train.., ..]);
        let (cv, clf, eval) = fit_and_score(
            ftr,
            &labels[..n_train],
            fte,
            &labels[n_train..],
            &cfg.reg_grid,
            cfg.folds,
            cfg.seed,
            &FitConfig::default(),
        )?;
        let cv_score = cv
            .mean_accuracy
            .iter()
            .find(|(r, _)| *r == cv.best_reg)
            .map_or(0.0, |&(_, a)| a);
        let outcome = ColorModelOutcome {
            row: ResultRow {
                dataset: "color-shapes-smoke".into(),
                model: name.into(),
                k: cfg.k,
                s: set.len(),
                reg: clf.reg,
                accuracy: eval.accuracy,
            },
            features,
            checkpoint: Checkpoint::new(model).with_preprocessing(prep.clone()),
            alpha,
        };
        // thresholds are visited in ascending order; ties keep the smaller
        match models.last_mut() {
            Some((best, prev)) if prev.row.model == name => {
                if cv_score > *best {
                    *best = cv_score;
                    *prev = outcome;
                }
            }
            _ => models.push((cv_score, outcome)),
        }
    }
    let models = models.into_iter().map(|(_, m)| m).collect();
    Ok(ColorPipelineReport {
        labels,
        models,
        seconds: start.elapsed().as_secs_f64(),
    })
}
