use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{PatchDataset, Provenance};
use crate::error::{invalid, Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated(format!("{what} header")))
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let found = read_be_u32(bytes, 0, what)?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

/// Parses an IDX image file into `(rows, cols, N x rows*cols)` with pixels
/// scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Array2<f64>)> {
    check_magic(bytes, IMAGE_MAGIC, "image file")?;
    let n = read_be_u32(bytes, 4, "image file")? as usize;
    let rows = read_be_u32(bytes, 8, "image file")? as usize;
    let cols = read_be_u32(bytes, 12, "image file")? as usize;
    let len = n * rows * cols;
    let payload = &bytes[16..];
    if payload.len() < len {
        return Err(Error::Truncated(format!(
            "image payload has {} bytes, header declares {len}",
            payload.len()
        )));
    }
    let data = payload[..len].iter().map(|&b| f64::from(b) / 255.0).collect();
    let m = Array2::from_shape_vec((n, rows * cols), data).expect("length checked");
    Ok((rows, cols, m))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, LABEL_MAGIC, "label file")?;
    let n = read_be_u32(bytes, 4, "label file")? as usize;
    let payload = &bytes[8..];
    if payload.len() < n {
        return Err(Error::Truncated(format!(
            "label payload has {} bytes, header declares {n}",
            payload.len()
        )));
    }
    Ok(payload[..n].iter().map(|&b| b as usize).collect())
}

/// Loads square single-channel IDX images, optionally with labels.
pub fn load_idx(images: &Path, labels: Option<&Path>) -> Result<PatchDataset> {
    let (rows, cols, m) = parse_idx_images(&fs::read(images)?)?;
    if rows != cols {
        return invalid(format!("only square images are supported, got {rows}x{cols}"));
    }
    let n = m.nrows();
    let mut ds = PatchDataset::new(m, rows, 1)?;
    ds.provenance = Provenance::new(images.display().to_string(), "idx", None);
    if let Some(path) = labels {
        let l = parse_idx_labels(&fs::read(path)?)?;
        if l.len() != n {
            return Err(Error::CountMismatch(format!("{} labels for {n} images", l.len())));
        }
        ds = ds.with_labels(l)?;
    }
    Ok(ds)
}

pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols).max(1);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
