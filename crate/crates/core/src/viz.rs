//! Filter banks rendered as tiled grayscale PGM images.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::checkpoint::Checkpoint;
use crate::error::{invalid, Error, Result};
use crate::transform::{Layout, TransformSet};

/// Value used for a tile whose filter is constant.
pub const FLAT_TILE_VALUE: u8 = 128;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major.
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Binary PGM (`P5`, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Truncated("PGM header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        if fields[0] != "P5" {
            return Err(Error::Format(format!("expected P5 PGM, found '{}'", fields[0])));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad PGM header field '{s}'")))
        };
        let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval != 255 {
            return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
        }
        let n = width * height;
        let raster = bytes
            .get(pos..)
            .filter(|r| r.len() >= n)
            .ok_or_else(|| Error::Truncated("PGM raster".into()))?;
        if raster.len() > n {
            return Err(Error::Format("trailing bytes after PGM raster".into()));
        }
        Ok(GrayImage {
            width,
            height,
            pixels: raster.to_vec(),
        })
    }
}

/// Min–max maps a tile onto `0..=255`; a constant tile becomes
/// [`FLAT_TILE_VALUE`].
pub fn normalize_tile(values: &[f64]) -> Vec<u8> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![FLAT_TILE_VALUE; values.len()];
    }
    values
        .iter()
        .map(|&v| (255.0 * (v - lo) / (hi - lo)).round() as u8)
        .collect()
}

/// Columns of the tile grid for `k` tiles.
pub fn grid_columns(k: usize) -> usize {
    let mut c = (k as f64).sqrt() as usize;
    while c * c < k {
        c += 1;
    }
    while c > 1 && (c - 1) * (c - 1) >= k {
        c -= 1;
    }
    c.max(1)
}

/// Tiles each column of `tiles` (`tile_h * tile_w` values, row-major) in
/// row-major order with 1-pixel black separators and border.
pub fn tile_grid(tiles: &Array2<f64>, tile_h: usize, tile_w: usize) -> Result<GrayImage> {
    let k = tiles.ncols();
    if k == 0 {
        return invalid("no filters to render");
    }
    if tiles.nrows() != tile_h * tile_w {
        return invalid(format!(
            "tile of {} values cannot be shown as {tile_h}x{tile_w}",
            tiles.nrows()
        ));
    }
    let cols = grid_columns(k);
    let rows = k.div_ceil(cols);
    let width = cols * tile_w + cols + 1;
    let height = rows * tile_h + rows + 1;
    let mut pixels = vec![0u8; width * height];
    for j in 0..k {
        let tile = normalize_tile(&tiles.column(j).to_vec());
        let (x0, y0) = (1 + (j % cols) * (tile_w + 1), 1 + (j / cols) * (tile_h + 1));
        for ty in 0..tile_h {
            let dst = (y0 + ty) * width + x0;
            pixels[dst..dst + tile_w].copy_from_slice(&tile[ty * tile_w..(ty + 1) * tile_w]);
        }
    }
    Ok(GrayImage { width, height, pixels })
}

/// Renders the filter bank of `weights` (`D2 x K`). With `transform`, each
/// filter is first mapped back through `T_sᵀ` into input space.
/// Multi-channel filters are shown as their channel average.
pub fn filter_grid(set: &TransformSet, weights: &Array2<f64>, transform: Option<usize>) -> Result<GrayImage> {
    let g = set.geometry();
    let (width, tiles) = match transform {
        None => (g.filter_width, weights.clone()),
        Some(s) => {
            let t = set
                .get(s)
                .ok_or_else(|| Error::InvalidParameter(format!("transform index {s} out of range ({})", set.len())))?;
            let mut out = Array2::zeros((set.input_dim(), weights.ncols()));
            for (j, w) in weights.columns().into_iter().enumerate() {
                out.column_mut(j).assign(&ndarray::Array1::from(t.apply_adjoint(&w.to_vec())?));
            }
            (g.input_width, out)
        }
    };
    let (th, tw) = match g.layout {
        Layout::Line => (1, width),
        Layout::Square => (width, width),
    };
    let area = th * tw;
    let c = g.channels;
    let mut mono = Array2::zeros((area, tiles.ncols()));
    for ch in 0..c {
        mono += &tiles.slice(ndarray::s![ch * area..(ch + 1) * area, ..]);
    }
    mono /= c as f64;
    tile_grid(&mono, th, tw)
}

/// Writes the filter grid of a checkpoint as a PGM file.
pub fn export_filter_grid(checkpoint: &Checkpoint, path: &Path, transform: Option<usize>) -> Result<()> {
    let model = &checkpoint.model;
    let img = filter_grid(model.transforms(), model.weights(), transform)?;
    fs::write(path, img.to_pgm())?;
    Ok(())
}
