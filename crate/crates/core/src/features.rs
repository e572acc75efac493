//! Patch encoders and image-level spatial pooling.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};

use crate::binio::{ByteReader, ByteWriter};
use crate::data::{Image, Preprocessing};
use crate::error::{check_len, invalid, Error, Result};
use crate::tiae::TiaeModel;
use crate::tiomp::Dictionary;
use crate::tirbm::TirbmModel;

pub const FEATURE_MAGIC: &[u8; 4] = b"TIFV";
pub const FEATURE_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub enum Encoder {
    /// Pooled activation `E[z_j | v]`, `K` outputs.
    Tirbm(TirbmModel),
    /// Row sums of the softmax encoder, `K` outputs.
    Tiae(TiaeModel),
    /// Two-sided soft threshold, `2K` outputs.
    Threshold { dictionary: Dictionary, alpha: f64 },
}

impl Encoder {
    pub fn input_dim(&self) -> usize {
        match self {
            Encoder::Tirbm(m) => m.input_dim(),
            Encoder::Tiae(m) => m.input_dim(),
            Encoder::Threshold { dictionary, .. } => dictionary.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Encoder::Tirbm(m) => m.num_filters(),
            Encoder::Tiae(m) => m.num_filters(),
            Encoder::Threshold { dictionary, .. } => 2 * dictionary.num_filters(),
        }
    }

    /// Encodes every row of `batch`.
    pub fn encode_batch(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            Encoder::Tirbm(m) => m.pooled_activation_batch(batch),
            Encoder::Tiae(m) => m.pooled_batch(batch),
            Encoder::Threshold { dictionary, alpha } => dictionary.threshold_encode_batch(batch, *alpha),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    QuadrantAverage,
    GlobalAverage,
}

impl Pooling {
    pub fn regions(self) -> usize {
        match self {
            Pooling::QuadrantAverage => 4,
            Pooling::GlobalAverage => 1,
        }
    }
}

/// Dense `height x width x dim` map of patch features.
pub type FeatureMap = Array3<f64>;

#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub encoder: Encoder,
    pub patch_width: usize,
    pub channels: usize,
    pub stride: usize,
    pub pooling: Pooling,
    /// Applied to every window before encoding.
    pub preprocessing: Preprocessing,
}

impl FeatureExtractor {
    pub fn new(
        encoder: Encoder,
        patch_width: usize,
        channels: usize,
        stride: usize,
        pooling: Pooling,
        preprocessing: Preprocessing,
    ) -> Result<Self> {
        if patch_width == 0 || channels == 0 || stride == 0 {
            return invalid("patch width, channels and stride must be positive");
        }
        let d = patch_width * patch_width * channels;
        check_len("encoder input dimension", d, encoder.input_dim())?;
        check_len("preprocessing dimension", d, preprocessing.dim)?;
        Ok(FeatureExtractor {
            encoder,
            patch_width,
            channels,
            stride,
            pooling,
            preprocessing,
        })
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_width * self.patch_width * self.channels
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn image_feature_dim(&self) -> usize {
        self.pooling.regions() * self.feature_dim()
    }

    /// Encodes one already preprocessed patch.
    pub fn patch_feature(&self, patch: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_len("patch", self.patch_dim(), patch.len())?;
        Ok(self.encoder.encode_batch(patch.insert_axis(Axis(0)))?.row(0).to_owned())
    }

    /// Encodes every `r x r` window at the configured stride.
    pub fn dense_extract(&self, image: &Image) -> Result<FeatureMap> {
        let r = self.patch_width;
        if image.channels != self.channels {
            return invalid(format!("image has {} channels, expected {}", image.channels, self.channels));
        }
        if image.height < r || image.width < r {
            return invalid(format!(
                "image {}x{} is smaller than the {r}x{r} patch",
                image.height, image.width
            ));
        }
        let rows = (image.height - r) / self.stride + 1;
        let cols = (image.width - r) / self.stride + 1;
        let mut windows = Array2::zeros((rows * cols, self.patch_dim()));
        for (i, mut w) in windows.outer_iter_mut().enumerate() {
            let buf = w.as_slice_mut().expect("contiguous");
            image.window_into((i / cols) * self.stride, (i % cols) * self.stride, r, buf);
            self.preprocessing.apply_in_place(buf)?;
        }
        let enc = self.encoder.encode_batch(windows.view())?;
        let dim = enc.ncols();
        Ok(enc.into_shape_with_order((rows, cols, dim)).expect("row-major window order"))
    }

    /// Pooled feature vector for one image.
    pub fn image_features(&self, image: &Image) -> Result<Array1<f64>> {
        let map = self.dense_extract(image)?;
        match self.pooling {
            Pooling::QuadrantAverage => quadrant_pool(&map),
            Pooling::GlobalAverage => global_pool(&map),
        }
    }

    /// Stacks [`image_features`](Self::image_features) for every image.
    pub fn extract_images(&self, images: &[Image]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((images.len(), self.image_feature_dim()));
        for (img, mut row) in images.iter().zip(out.outer_iter_mut()) {
            row.assign(&self.image_features(img)?);
        }
        Ok(out)
    }
}

fn region_mean(map: &FeatureMap, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Array1<f64> {
    let block = map.slice(ndarray::s![rows, cols, ..]);
    let n = (block.shape()[0] * block.shape()[1]) as f64;
    block.sum_axis(Axis(0)).sum_axis(Axis(0)) / n
}

/// Averages over the four spatial quadrants and concatenates them
/// top-left, top-right, bottom-left, bottom-right. With odd sizes the
/// middle row and column go to the bottom and right quadrants.
pub fn quadrant_pool(map: &FeatureMap) -> Result<Array1<f64>> {
    let (h, w, dim) = map.dim();
    if h < 2 || w < 2 {
        return invalid(format!("quadrant pooling needs at least a 2x2 map, got {h}x{w}"));
    }
    let (mh, mw) = (h / 2, w / 2);
    let mut out = Array1::zeros(4 * dim);
    let quads = [(0..mh, 0..mw), (0..mh, mw..w), (mh..h, 0..mw), (mh..h, mw..w)];
    for (q, (rows, cols)) in quads.into_iter().enumerate() {
        out.slice_mut(ndarray::s![q * dim..(q + 1) * dim])
            .assign(&region_mean(map, rows, cols));
    }
    Ok(out)
}

pub fn global_pool(map: &FeatureMap) -> Result<Array1<f64>> {
    let (h, w, _) = map.dim();
    if h == 0 || w == 0 {
        return invalid("cannot pool an empty map");
    }
    Ok(region_mean(map, 0..h, 0..w))
}

/// Serializes a feature matrix as `TIFV`: magic, version, N, dim, then
/// `f32` values row-major, all little-endian.
pub fn encode_features(features: ArrayView2<f64>) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(FEATURE_MAGIC);
    w.u32(FEATURE_VERSION);
    w.u64(features.nrows() as u64);
    w.u64(features.ncols() as u64);
    for &x in features.iter() {
        w.f32(x as f32);
    }
    w.buf
}

pub fn decode_features(bytes: &[u8]) -> Result<Array2<f32>> {
    let mut r = ByteReader::new(bytes);
    r.magic(FEATURE_MAGIC)?;
    let version = r.u32("version")?;
    if version != FEATURE_VERSION {
        return Err(Error::Format(format!("unsupported feature file version {version}")));
    }
    let n = r.u64("count")? as usize;
    let dim = r.u64("dimension")? as usize;
    let total = n
        .checked_mul(dim)
        .ok_or_else(|| Error::Format("feature count overflows".into()))?;
    let raw = r.take(
        total.checked_mul(4).ok_or_else(|| Error::Format("feature count overflows".into()))?,
        "feature values",
    )?;
    r.finish("feature values")?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();
    Ok(Array2::from_shape_vec((n, dim), values).expect("length checked"))
}

pub fn write_features(path: &Path, features: ArrayView2<f64>) -> Result<()> {
    fs::write(path, encode_features(features))?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<Array2<f32>> {
    decode_features(&fs::read(path)?)
}
