//! Dataset container: magic `TIFD`, version, then `N`, `D`, width, channels,
//! range tag and a label flag as little-endian `u32`, followed by `N x D`
//! `f64` values row-major and, if present, `N` `u32` labels. A plain-text
//! `key=value` provenance sidecar is written next to it.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{PatchDataset, Provenance, ValueRange};
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"TIFD";
const VERSION: u32 = 1;

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".provenance");
    PathBuf::from(s)
}

pub(crate) fn encode_dataset(ds: &PatchDataset) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(DATASET_MAGIC);
    for v in [
        VERSION,
        ds.len() as u32,
        ds.dim() as u32,
        ds.width as u32,
        ds.channels as u32,
        ds.range.tag(),
        ds.labels.is_some() as u32,
    ] {
        w.u32(v);
    }
    w.f64s(ds.patches.iter());
    if let Some(labels) = &ds.labels {
        for &l in labels {
            w.u32(l as u32);
        }
    }
    w.buf
}

pub(crate) fn decode_dataset(bytes: &[u8]) -> Result<PatchDataset> {
    let mut r = ByteReader::new(bytes);
    r.magic(DATASET_MAGIC)?;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let n = r.u32("count")? as usize;
    let d = r.u32("dim")? as usize;
    let width = r.u32("width")? as usize;
    let channels = r.u32("channels")? as usize;
    let range = ValueRange::from_tag(r.u32("range")?)
        .ok_or_else(|| Error::Format("unknown value range tag".into()))?;
    let has_labels = r.u32("label flag")? != 0;
    if width * width * channels != d {
        return Err(Error::Format(format!("dim {d} does not match {width}x{width}x{channels}")));
    }
    let values = r.f64_vec(n * d, "patches")?;
    let labels = if has_labels {
        Some((0..n).map(|_| r.u32("labels").map(|l| l as usize)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    r.finish("dataset")?;
    Ok(PatchDataset {
        patches: Array2::from_shape_vec((n, d), values).expect("length checked"),
        labels,
        width,
        channels,
        range,
        provenance: Provenance::default(),
    })
}

pub fn write_dataset(path: &Path, ds: &PatchDataset) -> Result<()> {
    fs::write(path, encode_dataset(ds))?;
    fs::write(sidecar(path), ds.provenance.to_sidecar())?;
    Ok(())
}

/// Reads a dataset; the provenance sidecar is optional.
pub fn read_dataset(path: &Path) -> Result<PatchDataset> {
    let mut ds = decode_dataset(&fs::read(path)?)?;
    if let Ok(text) = fs::read_to_string(sidecar(path)) {
        ds.provenance = Provenance::from_sidecar(&text);
    }
    Ok(ds)
}
