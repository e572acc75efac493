//! Patch preprocessing: per-patch standardization and ZCA whitening.
//!
//! Statistics are fitted on training data only; [`Preprocessing::apply`] is
//! a pure function of the fitted state.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{PatchDataset, ValueRange};
use crate::error::{check_len, invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreprocessKind {
    None,
    PerPatchStandardize,
    ZcaWhiten,
}

impl PreprocessKind {
    pub fn tag(self) -> u32 {
        match self {
            PreprocessKind::None => 0,
            PreprocessKind::PerPatchStandardize => 1,
            PreprocessKind::ZcaWhiten => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(PreprocessKind::None),
            1 => Some(PreprocessKind::PerPatchStandardize),
            2 => Some(PreprocessKind::ZcaWhiten),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PreprocessKind::None),
            "standardize" | "per_patch_standardize" => Ok(PreprocessKind::PerPatchStandardize),
            "zca" | "zca_whiten" => Ok(PreprocessKind::ZcaWhiten),
            other => invalid(format!("unknown preprocessing '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    /// Added to the per-patch variance before dividing.
    pub standardize_eps: f64,
    /// Eigenvalue floor of the whitening transform.
    pub zca_floor: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            standardize_eps: 10.0,
            zca_floor: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessing {
    pub kind: PreprocessKind,
    pub config: PreprocessConfig,
    pub dim: usize,
    /// ZCA only.
    pub mean: Option<Array1<f64>>,
    /// ZCA only; symmetric `D x D`.
    pub whitening: Option<Array2<f64>>,
}

impl Preprocessing {
    pub fn identity(dim: usize) -> Self {
        Preprocessing {
            kind: PreprocessKind::None,
            config: PreprocessConfig::default(),
            dim,
            mean: None,
            whitening: None,
        }
    }

    pub fn fit(data: ArrayView2<f64>, kind: PreprocessKind, config: PreprocessConfig) -> Result<Self> {
        let dim = data.ncols();
        let mut p = Preprocessing {
            kind,
            config,
            ..Preprocessing::identity(dim)
        };
        if kind != PreprocessKind::ZcaWhiten {
            return Ok(p);
        }
        let n = data.nrows();
        if n < 2 {
            return invalid("ZCA whitening needs at least two samples");
        }
        let mean = data.mean_axis(Axis(0)).expect("non-empty");
        let centered = &data - &mean;
        let cov = centered.t().dot(&centered) / n as f64;
        let eig = SymmetricEigen::new(DMatrix::from_fn(dim, dim, |i, j| cov[[i, j]]));
        let u = eig.eigenvectors;
        let scale: Vec<f64> = eig
            .eigenvalues
            .iter()
            .map(|&l| 1.0 / l.max(config.zca_floor).sqrt())
            .collect();
        let mut w = Array2::zeros((dim, dim));
        for i in 0..dim {
            for j in i..dim {
                let v: f64 = (0..dim).map(|k| u[(i, k)] * scale[k] * u[(j, k)]).sum();
                w[[i, j]] = v;
                w[[j, i]] = v;
            }
        }
        p.mean = Some(mean);
        p.whitening = Some(w);
        Ok(p)
    }

    /// Transforms one patch in place.
    pub fn apply_in_place(&self, x: &mut [f64]) -> Result<()> {
        check_len("preprocessing input", self.dim, x.len())?;
        match self.kind {
            PreprocessKind::None => {}
            PreprocessKind::PerPatchStandardize => {
                let n = x.len() as f64;
                let mean = x.iter().sum::<f64>() / n;
                let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let denom = (var + self.config.standardize_eps).sqrt();
                for v in x.iter_mut() {
                    *v = (*v - mean) / denom;
                }
            }
            PreprocessKind::ZcaWhiten => {
                let (mean, w) = self.zca_state();
                let centered: Array1<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
                let y = w.dot(&centered);
                x.copy_from_slice(y.as_slice().expect("contiguous"));
            }
        }
        Ok(())
    }

    pub fn apply(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_len("preprocessing input", self.dim, data.ncols())?;
        match self.kind {
            PreprocessKind::None => Ok(data.to_owned()),
            PreprocessKind::PerPatchStandardize => {
                let mut out = data.to_owned();
                for mut row in out.outer_iter_mut() {
                    self.apply_in_place(row.as_slice_mut().expect("standard layout"))?;
                }
                Ok(out)
            }
            PreprocessKind::ZcaWhiten => {
                let (mean, w) = self.zca_state();
                Ok((&data - mean).dot(w))
            }
        }
    }

    fn zca_state(&self) -> (&Array1<f64>, &Array2<f64>) {
        (
            self.mean.as_ref().expect("fitted ZCA has a mean"),
            self.whitening.as_ref().expect("fitted ZCA has a matrix"),
        )
    }
}

/// Fits preprocessing statistics on `data` and returns the transformed
/// dataset alongside them.
pub fn fit_apply_preprocessing(
    data: &PatchDataset,
    kind: PreprocessKind,
    config: PreprocessConfig,
) -> Result<(Preprocessing, PatchDataset)> {
    let p = Preprocessing::fit(data.patches.view(), kind, config)?;
    let mut out = data.clone();
    out.patches = p.apply(data.patches.view())?;
    if kind != PreprocessKind::None {
        out.range = ValueRange::Standardized;
    }
    Ok((p, out))
}
