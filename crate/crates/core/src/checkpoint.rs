//! `TIFL` model checkpoints.
//!
//! Layout (little-endian): magic `TIFL`, version, model kind, `D1`, `D2`,
//! `K`, `S`, family tag (all `u32`); the transform manifest (layout, `r`,
//! `w`, channels, `S`, then one kind tag and parameter record per
//! transform); `W`, `b`, `c` as `f64` row-major (`W` only for
//! dictionaries); finally an optional preprocessing block. Transform
//! matrices are regenerated from the manifest, never stored.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2};

use crate::binio::{ByteReader, ByteWriter};
use crate::data::{PreprocessConfig, PreprocessKind, Preprocessing};
use crate::error::{Error, Result};
use crate::tiae::{OutputFamily, TiaeModel};
use crate::tiomp::Dictionary;
use crate::tirbm::{TirbmModel, VisibleFamily};
use crate::transform::{Geometry, Layout, SparseTransform, TransformParams, TransformSet};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TIFL";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Tirbm,
    Tiae,
    Dictionary,
}

impl ModelKind {
    pub fn tag(self) -> u32 {
        match self {
            ModelKind::Tirbm => 0,
            ModelKind::Tiae => 1,
            ModelKind::Dictionary => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(ModelKind::Tirbm),
            1 => Ok(ModelKind::Tiae),
            2 => Ok(ModelKind::Dictionary),
            t => Err(Error::Format(format!("unknown model kind tag {t}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Tirbm => "tirbm",
            ModelKind::Tiae => "tiae",
            ModelKind::Dictionary => "tiomp",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Tirbm(TirbmModel),
    Tiae(TiaeModel),
    Dictionary(Dictionary),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Tirbm(_) => ModelKind::Tirbm,
            Model::Tiae(_) => ModelKind::Tiae,
            Model::Dictionary(_) => ModelKind::Dictionary,
        }
    }

    pub fn transforms(&self) -> &Arc<TransformSet> {
        match self {
            Model::Tirbm(m) => m.transforms(),
            Model::Tiae(m) => m.transforms(),
            Model::Dictionary(d) => d.transforms(),
        }
    }

    /// Filters as columns of a `D2 x K` matrix.
    pub fn weights(&self) -> &Array2<f64> {
        match self {
            Model::Tirbm(m) => &m.weights,
            Model::Tiae(m) => &m.weights,
            Model::Dictionary(d) => &d.weights,
        }
    }

    fn family_tag(&self) -> u32 {
        match self {
            Model::Tirbm(m) => m.visible.tag(),
            Model::Tiae(m) => m.output.tag(),
            Model::Dictionary(_) => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub preprocessing: Option<Preprocessing>,
}

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        Checkpoint {
            model,
            preprocessing: None,
        }
    }

    pub fn with_preprocessing(mut self, p: Preprocessing) -> Self {
        self.preprocessing = Some(p);
        self
    }

    pub fn encode(&self) -> Vec<u8> {
        let set = self.model.transforms();
        let w = self.model.weights();
        let mut out = ByteWriter::new();
        out.bytes(CHECKPOINT_MAGIC);
        out.u32(CHECKPOINT_VERSION);
        out.u32(self.model.kind().tag());
        out.u32(set.input_dim() as u32);
        out.u32(set.filter_dim() as u32);
        out.u32(w.ncols() as u32);
        out.u32(set.len() as u32);
        out.u32(self.model.family_tag());
        write_manifest(&mut out, set);
        out.f64s(w.iter());
        match &self.model {
            Model::Tirbm(m) => {
                out.f64s(m.hidden_bias.iter());
                out.f64s(m.visible_bias.iter());
            }
            Model::Tiae(m) => {
                out.f64s(m.hidden_bias.iter());
                out.f64s(m.visible_bias.iter());
            }
            Model::Dictionary(_) => {}
        }
        match &self.preprocessing {
            None => out.u32(0),
            Some(p) => {
                out.u32(1);
                write_preprocessing(&mut out, p);
            }
        }
        out.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let kind = ModelKind::from_tag(r.u32("model kind")?)?;
        let d1 = r.u32("D1")? as usize;
        let d2 = r.u32("D2")? as usize;
        let k = r.u32("K")? as usize;
        let s = r.u32("S")? as usize;
        let family = r.u32("family tag")?;
        let set = Arc::new(read_manifest(&mut r)?);
        for (what, header, actual) in [
            ("D1", d1, set.input_dim()),
            ("D2", d2, set.filter_dim()),
            ("S", s, set.len()),
        ] {
            if header != actual {
                return Err(Error::CountMismatch(format!(
                    "header {what} = {header} but transform manifest gives {actual}"
                )));
            }
        }
        let weights = matrix(&mut r, d2, k, "W")?;
        let model = match kind {
            ModelKind::Tirbm => {
                let b = matrix(&mut r, k, s, "b")?;
                let c = Array1::from(r.f64_vec(d1, "c")?);
                let fam = VisibleFamily::from_tag(family)?;
                Model::Tirbm(TirbmModel::from_parts(set, weights, b, c, fam).map_err(as_format)?)
            }
            ModelKind::Tiae => {
                let b = matrix(&mut r, k, s, "b")?;
                let c = Array1::from(r.f64_vec(d1, "c")?);
                let fam = OutputFamily::from_tag(family)?;
                Model::Tiae(TiaeModel::from_parts(set, weights, b, c, fam).map_err(as_format)?)
            }
            ModelKind::Dictionary => {
                Model::Dictionary(Dictionary::from_stored(set, weights).map_err(as_format)?)
            }
        };
        let preprocessing = match r.u32("preprocessing flag")? {
            0 => None,
            1 => Some(read_preprocessing(&mut r)?),
            f => return Err(Error::Format(format!("bad preprocessing flag {f}"))),
        };
        r.finish("checkpoint")?;
        Ok(Checkpoint { model, preprocessing })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

fn as_format(e: Error) -> Error {
    match e {
        Error::InvalidParameter(m) => Error::Format(m),
        e @ Error::DimensionMismatch { .. } => Error::Format(e.to_string()),
        other => other,
    }
}

fn matrix(r: &mut ByteReader, rows: usize, cols: usize, what: &str) -> Result<Array2<f64>> {
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format(format!("{what} too large")))?;
    let v = r.f64_vec(n, what)?;
    Ok(Array2::from_shape_vec((rows, cols), v).expect("length checked"))
}

fn write_manifest(out: &mut ByteWriter, set: &TransformSet) {
    let g = set.geometry();
    out.u32(match g.layout {
        Layout::Line => 0,
        Layout::Square => 1,
    });
    out.u32(g.input_width as u32);
    out.u32(g.filter_width as u32);
    out.u32(g.channels as u32);
    out.u32(set.len() as u32);
    for p in set.params() {
        out.u32(p.kind().tag());
        match p {
            TransformParams::Identity => {}
            TransformParams::Shift { offset } => out.i64(offset),
            TransformParams::Translation { dx, dy } => {
                out.u32(dx as u32);
                out.u32(dy as u32);
            }
            TransformParams::Rotation { theta } => out.f64(theta),
            TransformParams::Scaling { level, stride } => {
                out.u32(level as u32);
                out.u32(stride as u32);
            }
        }
    }
}

fn read_manifest(r: &mut ByteReader) -> Result<TransformSet> {
    let layout = match r.u32("layout")? {
        0 => Layout::Line,
        1 => Layout::Square,
        t => return Err(Error::Format(format!("unknown layout tag {t}"))),
    };
    let geometry = Geometry {
        layout,
        input_width: r.u32("r")? as usize,
        filter_width: r.u32("w")? as usize,
        channels: r.u32("channels")? as usize,
    };
    let s = r.u32("transform count")? as usize;
    let mut transforms = Vec::with_capacity(s.min(1 << 16));
    for _ in 0..s {
        let params = match r.u32("transform kind")? {
            0 => TransformParams::Identity,
            1 => TransformParams::Shift {
                offset: r.i64("shift offset")?,
            },
            2 => TransformParams::Translation {
                dx: r.u32("dx")? as usize,
                dy: r.u32("dy")? as usize,
            },
            3 => TransformParams::Rotation {
                theta: r.f64("angle")?,
            },
            4 => TransformParams::Scaling {
                level: r.u32("level")? as usize,
                stride: r.u32("stride")? as usize,
            },
            t => return Err(Error::Format(format!("unknown transform kind tag {t}"))),
        };
        transforms.push(SparseTransform::from_params(geometry, params).map_err(as_format)?);
    }
    TransformSet::new(transforms).map_err(as_format)
}

fn write_preprocessing(out: &mut ByteWriter, p: &Preprocessing) {
    out.u32(p.kind.tag());
    out.f64(p.config.standardize_eps);
    out.f64(p.config.zca_floor);
    out.u32(p.dim as u32);
    if let (Some(mean), Some(w)) = (&p.mean, &p.whitening) {
        out.u32(1);
        out.f64s(mean.iter());
        out.f64s(w.iter());
    } else {
        out.u32(0);
    }
}

fn read_preprocessing(r: &mut ByteReader) -> Result<Preprocessing> {
    let tag = r.u32("preprocessing kind")?;
    let kind = PreprocessKind::from_tag(tag)
        .ok_or_else(|| Error::Format(format!("unknown preprocessing tag {tag}")))?;
    let config = PreprocessConfig {
        standardize_eps: r.f64("standardize eps")?,
        zca_floor: r.f64("zca floor")?,
    };
    let dim = r.u32("preprocessing dimension")? as usize;
    let fitted = r.u32("whitening flag")?;
    let (mean, whitening) = match fitted {
        0 => (None, None),
        1 => (
            Some(Array1::from(r.f64_vec(dim, "whitening mean")?)),
            Some(matrix(r, dim, dim, "whitening matrix")?),
        ),
        f => return Err(Error::Format(format!("bad whitening flag {f}"))),
    };
    if (kind == PreprocessKind::ZcaWhiten) != (fitted == 1) {
        return Err(Error::Format("whitening state does not match preprocessing kind".into()));
    }
    Ok(Preprocessing {
        kind,
        config,
        dim,
        mean,
        whitening,
    })
}
