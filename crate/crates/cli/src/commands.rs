//! Subcommand option tables and implementations.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use ndarray::Array2;
use tifl::checkpoint::{Checkpoint, Model};
use tifl::classify::{cross_validate, evaluate, FitConfig, SoftmaxClassifier};
use tifl::data::{
    fit_apply_preprocessing, load_idx, read_dataset, render_digits, sample_patches, synthesize_variation,
    write_dataset, Background, PatchDataset, PreprocessConfig, PreprocessKind, VariationKind,
};
use tifl::experiment::{
    fit_and_score, results_csv, run_color_pipeline, run_variation_with, ColorPipelineConfig, ResultRow,
    VariationConfig,
};
use tifl::features::{read_features, write_features, Encoder, FeatureExtractor, Pooling};
use tifl::metrics::{append_metrics, EpochMetrics};
use tifl::tiae::{OutputFamily, TiaeModel};
use tifl::tiomp::{Dictionary, OmpTrainConfig};
use tifl::tirbm::{TirbmModel, TrainConfig, VisibleFamily};
use tifl::viz::export_filter_grid;
use tifl::TransformSpec;

use crate::config::{maybe, opt, req, usage, Key, RunConfig};

pub struct Subcommand {
    pub name: &'static str,
    pub about: &'static str,
    pub keys: &'static [Key],
    pub run: fn(&mut RunConfig) -> Result<()>,
}

pub const SUBCOMMANDS: [Subcommand; 6] = [
    Subcommand {
        name: "synth",
        about: "Generate a rotated, scaled or translated digit dataset",
        keys: &SYNTH_KEYS,
        run: synth,
    },
    Subcommand {
        name: "train",
        about: "Train a TIRBM, TI-autoencoder or TIOMP dictionary and write a checkpoint",
        keys: &TRAIN_KEYS,
        run: train,
    },
    Subcommand {
        name: "extract",
        about: "Encode a dataset with a trained checkpoint into a feature file",
        keys: &EXTRACT_KEYS,
        run: extract,
    },
    Subcommand {
        name: "classify",
        about: "Cross-validate and fit the softmax classifier on feature files",
        keys: &CLASSIFY_KEYS,
        run: classify,
    },
    Subcommand {
        name: "eval",
        about: "Run a scripted experiment end to end and write the results CSV",
        keys: &EVAL_KEYS,
        run: eval,
    },
    Subcommand {
        name: "viz",
        about: "Render the filters of a checkpoint as a PGM grid",
        keys: &VIZ_KEYS,
        run: viz,
    },
];

const SYNTH_KEYS: [Key; 8] = [
    req("kind", "rot, scale, trans, or none for plain digits"),
    opt("background", "none", "none or random_uniform"),
    maybe("count", "number of digits (default 3000; all of them with --images)"),
    opt("seed", "0", "seed of the variation draws"),
    opt("digit-seed", "1", "seed of the synthetic digits"),
    maybe("images", "IDX image file to use instead of synthetic digits"),
    maybe("labels", "IDX label file matching --images"),
    req("out", "output dataset"),
];

const TRAIN_KEYS: [Key; 22] = [
    req("model", "tirbm, tiae or tiomp"),
    opt("transforms", "identity28", "transform preset, e.g. rot16, scale28-20, cifar-combined"),
    maybe("data", "training dataset (default: synthetic digits)"),
    opt("count", "1000", "number of synthetic digits when --data is absent"),
    opt("digit-seed", "1", "seed of the synthetic digits"),
    opt("patches", "10000", "patches to sample when images are larger than the receptive field"),
    opt("preprocess", "none", "none, standardize or zca"),
    opt("k", "100", "number of filters"),
    opt("seed", "0", "training seed"),
    opt("epochs", "10", "passes over the data"),
    opt("lr", "0.05", "learning rate (tirbm, tiae)"),
    opt("batch", "100", "minibatch size"),
    opt("cd-steps", "1", "Gibbs steps per update (tirbm)"),
    opt("sparsity-target", "0.05", "target pooled activation (tirbm)"),
    opt("sparsity-weight", "3", "weight of the sparsity penalty, 0 disables it (tirbm)"),
    opt("init-scale", "0.01", "half-width of the uniform weight initialization"),
    opt("visible", "binary", "binary or gaussian (tirbm)"),
    opt("output", "sigmoid", "sigmoid or linear decoder (tiae)"),
    opt("gamma", "1", "matching-pursuit support size (tiomp)"),
    opt("step-scale", "1", "multiplier on the dictionary step (tiomp)"),
    opt("out", "model.tifl", "output checkpoint"),
    maybe("metrics", "per-epoch metrics CSV (appended)"),
];

const EXTRACT_KEYS: [Key; 6] = [
    req("checkpoint", "trained checkpoint"),
    req("data", "dataset to encode"),
    req("out", "output feature file"),
    opt("stride", "1", "window stride for dense extraction"),
    opt("pooling", "quadrant", "quadrant or global, for images larger than the receptive field"),
    opt("alpha", "0.25", "threshold of the two-sided encoder (tiomp)"),
];

const CLASSIFY_KEYS: [Key; 14] = [
    req("train-features", "training feature file"),
    req("train-data", "dataset holding the training labels"),
    maybe("test-features", "test feature file"),
    maybe("test-data", "dataset holding the test labels"),
    opt("reg-grid", "1e-4,1e-3,1e-2,1e-1,1", "regularization values to cross-validate"),
    opt("folds", "5", "cross-validation folds"),
    opt("seed", "0", "fold assignment seed"),
    opt("max-iter", "2000", "optimizer iteration budget"),
    opt("dataset", "custom", "dataset column of the results row"),
    opt("model", "features", "model column of the results row"),
    maybe("k", "K column of the results row (default: feature dimension)"),
    opt("s", "1", "S column of the results row"),
    maybe("out", "results CSV"),
    maybe("confusion", "confusion-matrix dump"),
];

const EVAL_KEYS: [Key; 13] = [
    req("experiment", "mnist-{rot,scale,trans}[-bgrand]-small or color-smoke"),
    opt("out", "results.csv", "results CSV"),
    maybe("train-size", "training examples"),
    maybe("test-size", "test examples"),
    maybe("k", "number of filters"),
    maybe("epochs", "training epochs"),
    maybe("lr", "learning rate"),
    maybe("sparsity-weight", "weight of the sparsity penalty"),
    maybe("sparsity-target", "target pooled activation"),
    maybe("seed", "training seed"),
    maybe("folds", "cross-validation folds"),
    maybe("checkpoints", "directory for the trained checkpoints"),
    maybe("confusion", "directory for confusion-matrix dumps"),
];

const VIZ_KEYS: [Key; 3] = [
    req("checkpoint", "trained checkpoint"),
    req("out", "output PGM"),
    maybe("transform", "show the filters mapped back through this transformation"),
];

fn log_config(cfg: &RunConfig) {
    eprint!("{}", cfg.render());
}

fn parse_or_usage<T>(r: tifl::Result<T>) -> Result<T> {
    r.or_else(|e| usage(e.to_string()))
}

fn synth(cfg: &mut RunConfig) -> Result<()> {
    let kind = cfg.str("kind")?.to_string();
    let kind = match kind.as_str() {
        "none" => None,
        k => Some(parse_or_usage(VariationKind::parse(k))?),
    };
    let background = match cfg.str("background")? {
        "none" => Background::None,
        "random_uniform" | "random-uniform" => Background::RandomUniform,
        other => return usage(format!("unknown background '{other}'")),
    };
    let base = match cfg.opt_str("images").map(PathBuf::from) {
        Some(images) => {
            let labels = cfg.opt_str("labels").map(PathBuf::from);
            let ds = load_idx(&images, labels.as_deref())
                .with_context(|| format!("reading {}", images.display()))?;
            let count = cfg.opt::<usize>("count")?.unwrap_or(ds.len()).min(ds.len());
            cfg.default_to("count", count);
            ds.slice(0, count)?
        }
        None => {
            cfg.default_to("count", 3000);
            render_digits(cfg.get("count")?, cfg.get("digit-seed")?)
        }
    };
    log_config(cfg);
    let ds = match kind {
        Some(k) => synthesize_variation(&base, k, background, cfg.get("seed")?)?,
        None => base,
    };
    let out = PathBuf::from(cfg.str("out")?);
    write_dataset(&out, &ds).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("wrote {} examples to {}", ds.len(), out.display());
    Ok(())
}

fn train_config(cfg: &RunConfig) -> Result<TrainConfig> {
    Ok(TrainConfig {
        learning_rate: cfg.get("lr")?,
        batch_size: cfg.get("batch")?,
        epochs: cfg.get("epochs")?,
        cd_steps: cfg.get("cd-steps")?,
        sparsity_target: cfg.get("sparsity-target")?,
        sparsity_weight: cfg.get("sparsity-weight")?,
        init_scale: cfg.get("init-scale")?,
        seed: cfg.get("seed")?,
    })
}

/// Training rows for a receptive field of width `r`: the dataset itself
/// when it already has that width, random windows when it is larger.
fn training_patches(cfg: &RunConfig, ds: &PatchDataset, r: usize) -> Result<PatchDataset> {
    if ds.width == r {
        Ok(ds.clone())
    } else if ds.width > r {
        let seed = cfg.get::<u64>("seed")?.wrapping_add(1);
        Ok(sample_patches(&ds.images(), cfg.get("patches")?, r, seed)?)
    } else {
        usage(format!("{}x{} images are smaller than the {r}x{r} receptive field", ds.width, ds.width))
    }
}

fn print_epoch(e: &EpochMetrics) {
    eprintln!(
        "epoch {:>4}  error {:.6}  pooled {:.4}  {:.1}s",
        e.epoch, e.reconstruction_error, e.mean_pooled_activation, e.wall_seconds
    );
}

fn train(cfg: &mut RunConfig) -> Result<()> {
    log_config(cfg);
    let ds = match cfg.opt_str("data") {
        Some(p) => read_dataset(Path::new(p)).with_context(|| format!("reading {p}"))?,
        None => render_digits(cfg.get("count")?, cfg.get("digit-seed")?),
    };
    let spec = parse_or_usage(TransformSpec::preset(cfg.str("transforms")?))?.with_channels(ds.channels);
    let set = Arc::new(parse_or_usage(spec.build())?);
    let patches = training_patches(cfg, &ds, set.geometry().input_width)?;
    let kind = parse_or_usage(PreprocessKind::parse(cfg.str("preprocess")?))?;
    let (prep, patches) = fit_apply_preprocessing(&patches, kind, PreprocessConfig::default())?;
    let data = patches.patches.view();
    let k: usize = cfg.get("k")?;
    let tc = train_config(cfg)?;
    let mut history = Vec::new();
    let mut log = |e: &EpochMetrics| {
        print_epoch(e);
        history.push(*e);
    };
    let model = match cfg.str("model")? {
        "tirbm" | "rbm" => {
            let visible = match cfg.str("visible")? {
                "binary" => VisibleFamily::Binary,
                "gaussian" => VisibleFamily::Gaussian,
                other => return usage(format!("unknown visible family '{other}'")),
            };
            let mut m = TirbmModel::init(set, k, visible, &tc)?;
            m.train_with(data, &tc, &mut log)?;
            Model::Tirbm(m)
        }
        "tiae" => {
            let output = match cfg.str("output")? {
                "sigmoid" => OutputFamily::SigmoidCrossEntropy,
                "linear" => OutputFamily::LinearSquaredError,
                other => return usage(format!("unknown output family '{other}'")),
            };
            let mut m = TiaeModel::init(set, k, output, &tc)?;
            m.train_with(data, &tc, &mut log)?;
            Model::Tiae(m)
        }
        "tiomp" => {
            let oc = OmpTrainConfig {
                gamma: cfg.get("gamma")?,
                epochs: tc.epochs,
                batch_size: tc.batch_size,
                step_scale: cfg.get("step-scale")?,
                seed: tc.seed,
            };
            let mut d = Dictionary::init(set, k, tc.seed)?;
            d.train_with(data, &oc, &mut log)?;
            Model::Dictionary(d)
        }
        other => return usage(format!("unknown model '{other}'")),
    };
    let mut ckpt = Checkpoint::new(model);
    if kind != PreprocessKind::None {
        ckpt = ckpt.with_preprocessing(prep);
    }
    let out = PathBuf::from(cfg.str("out")?);
    ckpt.save(&out).with_context(|| format!("writing {}", out.display()))?;
    if let Some(m) = cfg.opt_str("metrics") {
        append_metrics(Path::new(m), &history).with_context(|| format!("writing {m}"))?;
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn encoder_for(model: Model, alpha: f64) -> Encoder {
    match model {
        Model::Tirbm(m) => Encoder::Tirbm(m),
        Model::Tiae(m) => Encoder::Tiae(m),
        Model::Dictionary(dictionary) => Encoder::Threshold { dictionary, alpha },
    }
}

fn extract(cfg: &mut RunConfig) -> Result<()> {
    log_config(cfg);
    let path = cfg.str("checkpoint")?;
    let ckpt = Checkpoint::load(Path::new(path)).with_context(|| format!("reading {path}"))?;
    let data = cfg.str("data")?;
    let ds = read_dataset(Path::new(data)).with_context(|| format!("reading {data}"))?;
    let geometry = ckpt.model.transforms().geometry();
    let r = geometry.input_width;
    if geometry.channels != ds.channels {
        return usage(format!("checkpoint expects {} channels, data has {}", geometry.channels, ds.channels));
    }
    let prep = ckpt
        .preprocessing
        .clone()
        .unwrap_or_else(|| tifl::data::Preprocessing::identity(ckpt.model.transforms().input_dim()));
    let encoder = encoder_for(ckpt.model, cfg.get("alpha")?);
    let features = if ds.width == r {
        encoder.encode_batch(prep.apply(ds.patches.view())?.view())?
    } else {
        let pooling = match cfg.str("pooling")? {
            "quadrant" => Pooling::QuadrantAverage,
            "global" => Pooling::GlobalAverage,
            other => return usage(format!("unknown pooling '{other}'")),
        };
        let fx = FeatureExtractor::new(encoder, r, ds.channels, cfg.get("stride")?, pooling, prep)?;
        fx.extract_images(&ds.images())?
    };
    let out = cfg.str("out")?;
    write_features(Path::new(out), features.view()).with_context(|| format!("writing {out}"))?;
    eprintln!("wrote {} x {} features to {out}", features.nrows(), features.ncols());
    Ok(())
}

fn labeled(features: &str, data: &str) -> Result<(Array2<f64>, Vec<usize>)> {
    let f = read_features(Path::new(features)).with_context(|| format!("reading {features}"))?;
    let ds = read_dataset(Path::new(data)).with_context(|| format!("reading {data}"))?;
    let Some(labels) = ds.labels else {
        return usage(format!("{data} has no labels"));
    };
    if labels.len() != f.nrows() {
        return usage(format!("{features} has {} rows but {data} has {} labels", f.nrows(), labels.len()));
    }
    Ok((f.mapv(f64::from), labels))
}

fn classify(cfg: &mut RunConfig) -> Result<()> {
    let (ftr, ytr) = labeled(cfg.str("train-features")?, cfg.str("train-data")?)?;
    cfg.default_to("k", ftr.ncols());
    log_config(cfg);
    let grid: Vec<f64> = cfg.list("reg-grid")?;
    let folds: usize = cfg.get("folds")?;
    let seed: u64 = cfg.get("seed")?;
    let fit = FitConfig {
        max_iter: cfg.get("max-iter")?,
        ..FitConfig::default()
    };
    let test = match (cfg.opt_str("test-features"), cfg.opt_str("test-data")) {
        (Some(f), Some(d)) => Some(labeled(f, d)?),
        (None, None) => None,
        _ => return usage("--test-features and --test-data go together"),
    };
    let (clf, evaluation) = match &test {
        Some((fte, yte)) => {
            let (cv, clf, ev) = fit_and_score(ftr.view(), &ytr, fte.view(), yte, &grid, folds, seed, &fit)?;
            for (reg, acc) in &cv.mean_accuracy {
                eprintln!("cv reg {reg:e}  accuracy {acc:.4}");
            }
            (clf, ev)
        }
        None => {
            let cv = cross_validate(ftr.view(), &ytr, &grid, folds, seed, &fit)?;
            for (reg, acc) in &cv.mean_accuracy {
                eprintln!("cv reg {reg:e}  accuracy {acc:.4}");
            }
            let (clf, _) = SoftmaxClassifier::fit(ftr.view(), &ytr, cv.best_reg, &fit)?;
            let ev = evaluate(&clf, ftr.view(), &ytr)?;
            eprintln!("no test split given; accuracy below is on the training split");
            (clf, ev)
        }
    };
    let row = ResultRow {
        dataset: cfg.str("dataset")?.to_string(),
        model: cfg.str("model")?.to_string(),
        k: cfg.get("k")?,
        s: cfg.get("s")?,
        reg: clf.reg,
        accuracy: evaluation.accuracy,
    };
    let csv = results_csv(std::slice::from_ref(&row));
    print!("{csv}");
    if let Some(out) = cfg.opt_str("out") {
        fs::write(out, &csv).with_context(|| format!("writing {out}"))?;
    }
    if let Some(out) = cfg.opt_str("confusion") {
        fs::write(out, evaluation.confusion_text()).with_context(|| format!("writing {out}"))?;
    }
    Ok(())
}

fn eval(cfg: &mut RunConfig) -> Result<()> {
    let name = cfg.str("experiment")?.to_string();
    let (rows, outputs) = if name == "color-smoke" {
        let mut c = ColorPipelineConfig::default();
        let test = (c.images as f64 * c.test_fraction).round() as usize;
        cfg.default_to("train-size", c.images - test);
        cfg.default_to("test-size", test);
        cfg.default_to("k", c.k);
        cfg.default_to("epochs", c.train.epochs);
        cfg.default_to("lr", c.train.learning_rate);
        cfg.default_to("sparsity-weight", c.train.sparsity_weight);
        cfg.default_to("sparsity-target", c.train.sparsity_target);
        cfg.default_to("seed", c.seed);
        cfg.default_to("folds", c.folds);
        log_config(cfg);
        let (ntr, nte): (usize, usize) = (cfg.get("train-size")?, cfg.get("test-size")?);
        c.images = ntr + nte;
        c.test_fraction = nte as f64 / c.images.max(1) as f64;
        c.k = cfg.get("k")?;
        c.train.epochs = cfg.get("epochs")?;
        c.omp.epochs = c.omp.epochs.min(c.train.epochs);
        c.train.learning_rate = cfg.get("lr")?;
        c.train.sparsity_weight = cfg.get("sparsity-weight")?;
        c.train.sparsity_target = cfg.get("sparsity-target")?;
        c.seed = cfg.get("seed")?;
        c.train.seed = c.seed;
        c.omp.seed = c.seed;
        c.folds = cfg.get("folds")?;
        let report = run_color_pipeline(&c)?;
        eprintln!("color pipeline finished in {:.1}s", report.seconds);
        let mut outputs = Vec::new();
        for m in &report.models {
            if let Some(a) = m.alpha {
                eprintln!("{}: threshold {a}", m.row.model);
            }
            outputs.push((m.row.model.clone(), m.checkpoint.clone(), None));
        }
        (report.models.iter().map(|m| m.row.clone()).collect::<Vec<_>>(), outputs)
    } else {
        let mut c = parse_or_usage(VariationConfig::from_dataset_name(&name))?;
        cfg.default_to("train-size", c.train_size);
        cfg.default_to("test-size", c.test_size);
        cfg.default_to("k", c.k);
        cfg.default_to("epochs", c.train.epochs);
        cfg.default_to("lr", c.train.learning_rate);
        cfg.default_to("sparsity-weight", c.train.sparsity_weight);
        cfg.default_to("sparsity-target", c.train.sparsity_target);
        cfg.default_to("seed", c.train.seed);
        cfg.default_to("folds", c.folds);
        log_config(cfg);
        c.train_size = cfg.get("train-size")?;
        c.test_size = cfg.get("test-size")?;
        c.k = cfg.get("k")?;
        c.train.epochs = cfg.get("epochs")?;
        c.train.learning_rate = cfg.get("lr")?;
        c.train.sparsity_weight = cfg.get("sparsity-weight")?;
        c.train.sparsity_target = cfg.get("sparsity-target")?;
        c.train.seed = cfg.get("seed")?;
        c.folds = cfg.get("folds")?;
        let report = run_variation_with(&c, |model, e| {
            if e.epoch % 10 == 9 || e.epoch + 1 == c.train.epochs {
                eprint!("{model}: ");
                print_epoch(e);
            }
        })?;
        let mut outputs = Vec::new();
        for m in &report.models {
            eprintln!(
                "{}: mean pooled activation {:.4}, trained in {:.1}s",
                m.row.model, m.mean_pooled, m.train_seconds
            );
            outputs.push((m.row.model.clone(), m.checkpoint.clone(), Some(m.evaluation.confusion_text())));
        }
        (report.models.iter().map(|m| m.row.clone()).collect(), outputs)
    };
    let csv = results_csv(&rows);
    print!("{csv}");
    let out = cfg.str("out")?;
    fs::write(out, &csv).with_context(|| format!("writing {out}"))?;
    for (model, ckpt, confusion) in outputs {
        let file = model.replace('/', "-");
        if let Some(dir) = cfg.opt_str("checkpoints") {
            fs::create_dir_all(dir).with_context(|| format!("creating {dir}"))?;
            let p = Path::new(dir).join(format!("{name}-{file}.tifl"));
            ckpt.save(&p).with_context(|| format!("writing {}", p.display()))?;
        }
        if let (Some(dir), Some(text)) = (cfg.opt_str("confusion"), confusion) {
            fs::create_dir_all(dir).with_context(|| format!("creating {dir}"))?;
            let p = Path::new(dir).join(format!("{name}-{file}.txt"));
            fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        }
    }
    Ok(())
}

fn viz(cfg: &mut RunConfig) -> Result<()> {
    log_config(cfg);
    let path = cfg.str("checkpoint")?;
    let ckpt = Checkpoint::load(Path::new(path)).with_context(|| format!("reading {path}"))?;
    let transform: Option<usize> = cfg.opt("transform")?;
    if let Some(s) = transform {
        let n = ckpt.model.transforms().len();
        if s >= n {
            return usage(format!("transform {s} out of range (checkpoint has {n})"));
        }
    }
    let out = cfg.str("out")?;
    export_filter_grid(&ckpt, Path::new(out), transform).with_context(|| format!("writing {out}"))?;
    eprintln!("wrote {out}");
    Ok(())
}
