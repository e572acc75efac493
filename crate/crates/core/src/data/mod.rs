//! Datasets: IDX ingestion, procedural digits, digit variations, synthetic
//! color images, patch sampling and preprocessing.

mod color;
mod digits;
mod idx;
mod io;
mod patches;
mod preprocess;
mod variation;

use ndarray::{Array2, ArrayView1};

use crate::error::{check_len, invalid, Result};

pub use color::{render_color_images, SHAPE_CLASSES};
pub use digits::{render_digit, render_digits, DIGIT_WIDTH};
pub use idx::{encode_idx_images, encode_idx_labels, load_idx, parse_idx_images, parse_idx_labels};
pub use io::{read_dataset, write_dataset, DATASET_MAGIC};
pub use patches::sample_patches;
pub use preprocess::{fit_apply_preprocessing, PreprocessConfig, PreprocessKind, Preprocessing};
pub use variation::{
    synthesize_variation, synthesize_variation_with_params, Background, VariationKind,
    VariationSample, FOREGROUND_THRESHOLD,
};

/// Nominal value range of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueRange {
    UnitInterval,
    Standardized,
}

impl ValueRange {
    pub fn tag(self) -> u32 {
        match self {
            ValueRange::UnitInterval => 0,
            ValueRange::Standardized => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(ValueRange::UnitInterval),
            1 => Some(ValueRange::Standardized),
            _ => None,
        }
    }
}

/// Where a dataset came from; written as a `key=value` sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    pub source: String,
    pub kind: String,
    pub seed: Option<u64>,
    pub params: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(source: impl Into<String>, kind: impl Into<String>, seed: Option<u64>) -> Self {
        Provenance {
            source: source.into(),
            kind: kind.into(),
            seed,
            params: Vec::new(),
        }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.params.push((key.into(), value.to_string()));
        self
    }

    pub fn to_sidecar(&self) -> String {
        let mut s = format!("source={}\nkind={}\n", self.source, self.kind);
        if let Some(seed) = self.seed {
            s.push_str(&format!("seed={seed}\n"));
        }
        for (k, v) in &self.params {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    pub fn from_sidecar(text: &str) -> Self {
        let mut p = Provenance::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            if let Some((k, v)) = line.split_once('=') {
                match k {
                    "source" => p.source = v.to_string(),
                    "kind" => p.kind = v.to_string(),
                    "seed" => p.seed = v.parse().ok(),
                    _ => p.params.push((k.to_string(), v.to_string())),
                }
            }
        }
        p
    }
}

/// `N x D1` matrix of square patches (channel-planar, row-major) with
/// optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchDataset {
    pub patches: Array2<f64>,
    pub labels: Option<Vec<usize>>,
    /// Side length `r` of each patch.
    pub width: usize,
    pub channels: usize,
    pub range: ValueRange,
    pub provenance: Provenance,
}

impl PatchDataset {
    pub fn new(patches: Array2<f64>, width: usize, channels: usize) -> Result<Self> {
        check_len("patch dimension", width * width * channels, patches.ncols())?;
        Ok(PatchDataset {
            patches,
            labels: None,
            width,
            channels,
            range: ValueRange::UnitInterval,
            provenance: Provenance::default(),
        })
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        check_len("label count", self.patches.nrows(), labels.len())?;
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.patches.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.patches.ncols()
    }

    /// Rows `range`, keeping metadata.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.len() {
            return invalid(format!("slice {start}..{end} out of range for {} rows", self.len()));
        }
        Ok(PatchDataset {
            patches: self.patches.slice(ndarray::s![start..end, ..]).to_owned(),
            labels: self.labels.as_ref().map(|l| l[start..end].to_vec()),
            width: self.width,
            channels: self.channels,
            range: self.range,
            provenance: self.provenance.clone(),
        })
    }

    pub fn images(&self) -> Vec<Image> {
        (0..self.len()).map(|i| self.image(i)).collect()
    }

    /// Views each row as an image.
    pub fn image(&self, i: usize) -> Image {
        Image::from_planar(self.width, self.width, self.channels, self.patches.row(i))
    }
}

/// Channel-planar image: `data[(c * height + y) * width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_len("image buffer", height * width * channels, data.len())?;
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    fn from_planar(height: usize, width: usize, channels: usize, v: ArrayView1<f64>) -> Self {
        Image {
            height,
            width,
            channels,
            data: v.to_vec(),
        }
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Copies the `r x r` window with top-left corner `(y, x)` into `out`
    /// (channel-planar).
    pub fn window_into(&self, y: usize, x: usize, r: usize, out: &mut [f64]) {
        for c in 0..self.channels {
            for dy in 0..r {
                let src = (c * self.height + y + dy) * self.width + x;
                let dst = (c * r + dy) * r;
                out[dst..dst + r].copy_from_slice(&self.data[src..src + r]);
            }
        }
    }

    pub fn window(&self, y: usize, x: usize, r: usize) -> Vec<f64> {
        let mut out = vec![0.0; r * r * self.channels];
        self.window_into(y, x, r, &mut out);
        out
    }
}
