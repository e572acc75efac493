//! Sparse linear transformation operators.
//!
//! A [`SparseTransform`] maps a `D1`-dimensional input patch onto the
//! `D2`-dimensional filter space (`D2 <= D1`). Each output coordinate is a
//! linear combination of input coordinates: shifts and translations are pure
//! selections, rotations and scalings use bilinear interpolation weights.
//!
//! Matrices are stored row-compressed with column indices sorted inside each
//! row, which is the same ordering as a coordinate list sorted by row then
//! column. Multi-channel inputs use a channel-planar layout and the spatial
//! block is replicated once per channel (block diagonal).

use std::f64::consts::PI;
use std::fmt;

use ndarray::Array2;

use crate::error::{check_len, invalid, Result};

/// Offsets closer than this to an integer are snapped onto the grid, so that
/// quarter-turn rotations and unit scalings produce exact selections.
const SNAP_TOLERANCE: f64 = 1e-9;

/// Spatial arrangement of a patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layout {
    /// One-dimensional signal of `width` samples.
    Line,
    /// Square image of `width x width` pixels, row-major.
    Square,
}

impl Layout {
    pub fn area(self, width: usize) -> usize {
        match self {
            Layout::Line => width,
            Layout::Square => width * width,
        }
    }
}

/// Shape information shared by every member of a transform set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Geometry {
    pub layout: Layout,
    /// Receptive field width `r`.
    pub input_width: usize,
    /// Filter width `w`.
    pub filter_width: usize,
    pub channels: usize,
}

impl Geometry {
    pub fn square(input_width: usize, filter_width: usize, channels: usize) -> Self {
        Geometry {
            layout: Layout::Square,
            input_width,
            filter_width,
            channels,
        }
    }

    pub fn line(width: usize) -> Self {
        Geometry {
            layout: Layout::Line,
            input_width: width,
            filter_width: width,
            channels: 1,
        }
    }

    /// Visible dimension `D1` (all channels).
    pub fn input_dim(&self) -> usize {
        self.layout.area(self.input_width) * self.channels
    }

    /// Filter dimension `D2` (all channels).
    pub fn filter_dim(&self) -> usize {
        self.layout.area(self.filter_width) * self.channels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformKind {
    Identity,
    Shift1d,
    Translation2d,
    Rotation2d,
    Scaling2d,
}

impl TransformKind {
    pub fn tag(self) -> u32 {
        match self {
            TransformKind::Identity => 0,
            TransformKind::Shift1d => 1,
            TransformKind::Translation2d => 2,
            TransformKind::Rotation2d => 3,
            TransformKind::Scaling2d => 4,
        }
    }
}

/// Kind-specific parameters; together with a [`Geometry`] they determine the
/// matrix bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformParams {
    Identity,
    Shift { offset: i64 },
    Translation { dx: usize, dy: usize },
    Rotation { theta: f64 },
    Scaling { level: usize, stride: usize },
}

impl TransformParams {
    pub fn kind(&self) -> TransformKind {
        match self {
            TransformParams::Identity => TransformKind::Identity,
            TransformParams::Shift { .. } => TransformKind::Shift1d,
            TransformParams::Translation { .. } => TransformKind::Translation2d,
            TransformParams::Rotation { .. } => TransformKind::Rotation2d,
            TransformParams::Scaling { .. } => TransformKind::Scaling2d,
        }
    }
}

impl fmt::Display for TransformParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformParams::Identity => write!(f, "identity"),
            TransformParams::Shift { offset } => write!(f, "shift({offset})"),
            TransformParams::Translation { dx, dy } => write!(f, "translate({dx},{dy})"),
            TransformParams::Rotation { theta } => write!(f, "rotate({theta:.6})"),
            TransformParams::Scaling { level, stride } => write!(f, "scale(l={level},gs={stride})"),
        }
    }
}

/// Row-compressed sparse matrix over a single spatial block.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SparseRows {
    pub rows: usize,
    pub cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub weights: Vec<f64>,
}

impl SparseRows {
    fn from_row_lists(cols: usize, lists: Vec<Vec<(usize, f64)>>) -> Self {
        let rows = lists.len();
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut weights = Vec::new();
        row_ptr.push(0);
        for mut list in lists {
            list.sort_by_key(|&(c, _)| c);
            for (c, w) in list {
                if w != 0.0 {
                    col_idx.push(c as u32);
                    weights.push(w);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseRows {
            rows,
            cols,
            row_ptr,
            col_idx,
            weights,
        }
    }

    #[inline]
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.rows) {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut acc = 0.0;
            for k in a..b {
                acc += self.weights[k] * x[self.col_idx[k] as usize];
            }
            *o = acc;
        }
    }

    /// `out += scale * Tᵀ h`
    #[inline]
    pub fn adjoint_add_into(&self, h: &[f64], scale: f64, out: &mut [f64]) {
        for (i, &hi) in h.iter().enumerate().take(self.rows) {
            if hi == 0.0 {
                continue;
            }
            let s = scale * hi;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.col_idx[k] as usize] += self.weights[k] * s;
            }
        }
    }
}

/// Bilinear taps for sampling a `width x width` grid at `(sx, sy)` (column,
/// row). Returns `None` when the point lies outside `[0, width-1]²`.
pub(crate) fn bilinear_taps(sx: f64, sy: f64, width: usize) -> Option<Vec<(usize, f64)>> {
    let snap = |v: f64| {
        let r = v.round();
        if (v - r).abs() < SNAP_TOLERANCE {
            r
        } else {
            v
        }
    };
    let (sx, sy) = (snap(sx), snap(sy));
    let max = (width - 1) as f64;
    if !(0.0..=max).contains(&sx) || !(0.0..=max).contains(&sy) {
        return None;
    }
    let x0 = (sx.floor() as usize).min(width.saturating_sub(2));
    let y0 = (sy.floor() as usize).min(width.saturating_sub(2));
    let fx = sx - x0 as f64;
    let fy = sy - y0 as f64;
    let mut taps = Vec::with_capacity(4);
    let mut push = |x: usize, y: usize, w: f64| {
        if w > 0.0 {
            taps.push((y * width + x, w));
        }
    };
    if width == 1 {
        push(0, 0, 1.0);
        return Some(taps);
    }
    push(x0, y0, (1.0 - fx) * (1.0 - fy));
    push(x0 + 1, y0, fx * (1.0 - fy));
    push(x0, y0 + 1, (1.0 - fx) * fy);
    push(x0 + 1, y0 + 1, fx * fy);
    Some(taps)
}

/// Builds a bilinear resampling operator from an `input_width²` grid to an
/// `output_width²` grid; `source(x, y)` gives the input coordinates sampled
/// by output pixel `(x, y)`.
pub(crate) fn bilinear_operator(
    input_width: usize,
    output_width: usize,
    source: impl Fn(f64, f64) -> (f64, f64),
) -> SparseRows {
    let mut lists = Vec::with_capacity(output_width * output_width);
    for y in 0..output_width {
        for x in 0..output_width {
            let (sx, sy) = source(x as f64, y as f64);
            lists.push(bilinear_taps(sx, sy, input_width).unwrap_or_default());
        }
    }
    SparseRows::from_row_lists(input_width * input_width, lists)
}

/// A precomputed sparse transformation matrix `T` of shape `D2 x D1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTransform {
    geometry: Geometry,
    params: TransformParams,
    block: SparseRows,
}

impl SparseTransform {
    /// `dim x dim` shift: `T_ij = 1` iff `i = j + s`.
    pub fn shift_1d(dim: usize, offset: i64) -> Result<Self> {
        if dim == 0 {
            return invalid("shift dimension must be at least 1");
        }
        if offset.unsigned_abs() >= dim as u64 {
            return invalid(format!("shift offset {offset} out of range for dim {dim}"));
        }
        let lists = (0..dim as i64)
            .map(|i| {
                let j = i - offset;
                if (0..dim as i64).contains(&j) {
                    vec![(j as usize, 1.0)]
                } else {
                    Vec::new()
                }
            })
            .collect();
        Ok(SparseTransform {
            geometry: Geometry::line(dim),
            params: TransformParams::Shift { offset },
            block: SparseRows::from_row_lists(dim, lists),
        })
    }

    /// Identity on a square `width x width` grid.
    pub fn identity(width: usize) -> Result<Self> {
        if width == 0 {
            return invalid("identity width must be at least 1");
        }
        let n = width * width;
        let lists = (0..n).map(|i| vec![(i, 1.0)]).collect();
        Ok(SparseTransform {
            geometry: Geometry::square(width, width, 1),
            params: TransformParams::Identity,
            block: SparseRows::from_row_lists(n, lists),
        })
    }

    /// Extracts the `w x w` window at column offset `dx`, row offset `dy`
    /// from an `r x r` grid.
    pub fn translation_2d(r: usize, w: usize, dx: usize, dy: usize) -> Result<Self> {
        if w == 0 || w > r {
            return invalid(format!("filter width {w} must be in 1..={r}"));
        }
        if dx + w > r || dy + w > r {
            return invalid(format!(
                "window at ({dx},{dy}) of width {w} exceeds the {r}x{r} grid"
            ));
        }
        let mut lists = Vec::with_capacity(w * w);
        for y in 0..w {
            for x in 0..w {
                lists.push(vec![((y + dy) * r + x + dx, 1.0)]);
            }
        }
        Ok(SparseTransform {
            geometry: Geometry::square(r, w, 1),
            params: TransformParams::Translation { dx, dy },
            block: SparseRows::from_row_lists(r * r, lists),
        })
    }

    /// Square rotation by `theta` about the grid center `((w-1)/2, (w-1)/2)`.
    pub fn rotation_2d(w: usize, theta: f64) -> Result<Self> {
        Self::rotation_2d_cropped(w, w, theta)
    }

    /// Rotation of an `r x r` input sampled onto the concentric `w x w`
    /// output grid. Output pixel `p` reads the input at
    /// `R(-theta) (p - c_w) + c_r`; sources outside the input give empty rows.
    pub fn rotation_2d_cropped(r: usize, w: usize, theta: f64) -> Result<Self> {
        if w < 2 || w > r {
            return invalid(format!("rotation needs 2 <= w <= r, got w={w}, r={r}"));
        }
        if !theta.is_finite() {
            return invalid("rotation angle must be finite");
        }
        let cw = (w as f64 - 1.0) / 2.0;
        let cr = (r as f64 - 1.0) / 2.0;
        let (sin, cos) = theta.sin_cos();
        let block = bilinear_operator(r, w, |x, y| {
            let (px, py) = (x - cw, y - cw);
            (cos * px + sin * py + cr, -sin * px + cos * py + cr)
        });
        Ok(SparseTransform {
            geometry: Geometry::square(r, w, 1),
            params: TransformParams::Rotation { theta },
            block,
        })
    }

    /// Resamples the centered `(r - l*gs)²` region of an `r x r` input onto a
    /// `w x w` output (pixel-center aligned bilinear interpolation).
    pub fn scaling_2d(r: usize, w: usize, level: usize, stride: usize) -> Result<Self> {
        if w == 0 || w > r {
            return invalid(format!("filter width {w} must be in 1..={r}"));
        }
        if stride == 0 {
            return invalid("scaling stride must be positive");
        }
        let max_level = (r - w) / stride;
        if level > max_level {
            return invalid(format!("scale level {level} exceeds maximum {max_level}"));
        }
        let region = (r - level * stride) as f64;
        let offset = (level * stride) as f64 / 2.0;
        let ratio = region / w as f64;
        let block = bilinear_operator(r, w, |x, y| {
            (
                offset + (x + 0.5) * ratio - 0.5,
                offset + (y + 0.5) * ratio - 0.5,
            )
        });
        Ok(SparseTransform {
            geometry: Geometry::square(r, w, 1),
            params: TransformParams::Scaling { level, stride },
            block,
        })
    }

    /// Regenerates a transform from its serialized description.
    pub fn from_params(geometry: Geometry, params: TransformParams) -> Result<Self> {
        let (r, w) = (geometry.input_width, geometry.filter_width);
        let t = match (geometry.layout, params) {
            (Layout::Line, TransformParams::Shift { offset }) if r == w => {
                Self::shift_1d(r, offset)?
            }
            (Layout::Square, TransformParams::Identity) if r == w => Self::identity(r)?,
            (Layout::Square, TransformParams::Translation { dx, dy }) => {
                Self::translation_2d(r, w, dx, dy)?
            }
            (Layout::Square, TransformParams::Rotation { theta }) => {
                Self::rotation_2d_cropped(r, w, theta)?
            }
            (Layout::Square, TransformParams::Scaling { level, stride }) => {
                Self::scaling_2d(r, w, level, stride)?
            }
            _ => return invalid(format!("{params} is not defined for geometry {geometry:?}")),
        };
        t.with_channels(geometry.channels)
    }

    /// Replicates the spatial block once per channel.
    pub fn with_channels(mut self, channels: usize) -> Result<Self> {
        if channels == 0 {
            return invalid("channel count must be positive");
        }
        self.geometry.channels = channels;
        Ok(self)
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn params(&self) -> TransformParams {
        self.params
    }

    pub fn kind(&self) -> TransformKind {
        self.params.kind()
    }

    pub fn channels(&self) -> usize {
        self.geometry.channels
    }

    /// Output dimension `D2` including channels.
    pub fn rows(&self) -> usize {
        self.block.rows * self.geometry.channels
    }

    /// Input dimension `D1` including channels.
    pub fn cols(&self) -> usize {
        self.block.cols * self.geometry.channels
    }

    pub fn nnz(&self) -> usize {
        self.block.weights.len() * self.geometry.channels
    }

    /// All `(row, col, weight)` entries of the full (channel-replicated)
    /// matrix, sorted by row then column.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let (br, bc) = (self.block.rows, self.block.cols);
        (0..self.geometry.channels).flat_map(move |ch| {
            (0..br).flat_map(move |i| {
                (self.block.row_ptr[i]..self.block.row_ptr[i + 1]).map(move |k| {
                    (
                        ch * br + i,
                        ch * bc + self.block.col_idx[k] as usize,
                        self.block.weights[k],
                    )
                })
            })
        })
    }

    /// `y = T x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("transform input", self.cols(), x.len())?;
        let mut out = vec![0.0; self.rows()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    /// `Tᵀ h`.
    pub fn apply_adjoint(&self, h: &[f64]) -> Result<Vec<f64>> {
        check_len("transform adjoint input", self.rows(), h.len())?;
        let mut out = vec![0.0; self.cols()];
        self.adjoint_add_into(h, 1.0, &mut out);
        Ok(out)
    }

    /// Unchecked `out = T x`; slice lengths must equal `cols()` / `rows()`.
    #[inline]
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let (br, bc) = (self.block.rows, self.block.cols);
        for ch in 0..self.geometry.channels {
            self.block
                .apply_into(&x[ch * bc..(ch + 1) * bc], &mut out[ch * br..(ch + 1) * br]);
        }
    }

    /// Unchecked `out += scale * Tᵀ h`.
    #[inline]
    pub fn adjoint_add_into(&self, h: &[f64], scale: f64, out: &mut [f64]) {
        let (br, bc) = (self.block.rows, self.block.cols);
        for ch in 0..self.geometry.channels {
            self.block.adjoint_add_into(
                &h[ch * br..(ch + 1) * br],
                scale,
                &mut out[ch * bc..(ch + 1) * bc],
            );
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.rows(), self.cols()));
        for (i, j, w) in self.entries() {
            m[[i, j]] = w;
        }
        m
    }
}

/// Ordered set of transforms `T_1..T_S` sharing one geometry. Hidden-bias
/// column `s` of a model refers to `transforms[s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSet {
    geometry: Geometry,
    transforms: Vec<SparseTransform>,
}

impl TransformSet {
    pub fn new(transforms: Vec<SparseTransform>) -> Result<Self> {
        let first = match transforms.first() {
            Some(t) => t.geometry(),
            None => return invalid("a transform set needs at least one member"),
        };
        for t in &transforms {
            let g = t.geometry();
            if g != first || t.rows() != transforms[0].rows() || t.cols() != transforms[0].cols() {
                return invalid(format!(
                    "inconsistent geometry in transform set: {g:?} vs {first:?}"
                ));
            }
        }
        Ok(TransformSet {
            geometry: first,
            transforms,
        })
    }

    /// Single identity member on a `width x width` grid (plain RBM).
    pub fn identity(width: usize, channels: usize) -> Result<Self> {
        Self::new(vec![SparseTransform::identity(width)?.with_channels(channels)?])
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    /// Number of transforms `S`.
    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    /// `D1`.
    pub fn input_dim(&self) -> usize {
        self.transforms[0].cols()
    }

    /// `D2`.
    pub fn filter_dim(&self) -> usize {
        self.transforms[0].rows()
    }

    pub fn get(&self, s: usize) -> Option<&SparseTransform> {
        self.transforms.get(s)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SparseTransform> {
        self.transforms.iter()
    }

    pub fn params(&self) -> Vec<TransformParams> {
        self.transforms.iter().map(|t| t.params()).collect()
    }

    /// Writes `T_s x` into row `s` of `out` (`S x D2`, contiguous).
    pub(crate) fn apply_all_into(&self, x: &[f64], out: &mut [f64]) {
        let d2 = self.filter_dim();
        for (s, t) in self.transforms.iter().enumerate() {
            t.apply_into(x, &mut out[s * d2..(s + 1) * d2]);
        }
    }

    /// Matrix whose row `s` is `T_s x`.
    pub fn apply_all(&self, x: &[f64]) -> Result<Array2<f64>> {
        check_len("transform set input", self.input_dim(), x.len())?;
        let mut out = Array2::zeros((self.len(), self.filter_dim()));
        self.apply_all_into(x, out.as_slice_mut().expect("standard layout"));
        Ok(out)
    }
}

impl<'a> IntoIterator for &'a TransformSet {
    type Item = &'a SparseTransform;
    type IntoIter = std::slice::Iter<'a, SparseTransform>;

    fn into_iter(self) -> Self::IntoIter {
        self.transforms.iter()
    }
}

/// One transformation family of a [`TransformSpec`].
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Identity (`r == w`) or centered selection (`r > w`).
    Identity { input_width: usize, filter_width: usize },
    Shift { dim: usize, offsets: Vec<i64> },
    /// All window offsets `0, gs, 2gs, ..` up to `r - w` in both axes, row
    /// offset outer.
    Translation {
        input_width: usize,
        filter_width: usize,
        stride: usize,
    },
    Rotation {
        input_width: usize,
        filter_width: usize,
        angles: Vec<f64>,
    },
    /// Crop levels `l = 0..=floor((r - w) / gs)`.
    Scaling {
        input_width: usize,
        filter_width: usize,
        stride: usize,
    },
}

impl Family {
    fn geometry(&self, channels: usize) -> Geometry {
        match *self {
            Family::Shift { dim, .. } => Geometry {
                channels,
                ..Geometry::line(dim)
            },
            Family::Identity {
                input_width,
                filter_width,
            }
            | Family::Translation {
                input_width,
                filter_width,
                ..
            }
            | Family::Rotation {
                input_width,
                filter_width,
                ..
            }
            | Family::Scaling {
                input_width,
                filter_width,
                ..
            } => Geometry::square(input_width, filter_width, channels),
        }
    }

    fn build(&self, out: &mut Vec<SparseTransform>) -> Result<()> {
        match self {
            Family::Identity {
                input_width: r,
                filter_width: w,
            } => {
                if r == w {
                    out.push(SparseTransform::identity(*r)?);
                } else if r > w && (r - w) % 2 == 0 {
                    let off = (r - w) / 2;
                    out.push(SparseTransform::translation_2d(*r, *w, off, off)?);
                } else {
                    return invalid(format!("no centered selection from {r} to {w}"));
                }
            }
            Family::Shift { dim, offsets } => {
                for &o in offsets {
                    out.push(SparseTransform::shift_1d(*dim, o)?);
                }
            }
            Family::Translation {
                input_width: r,
                filter_width: w,
                stride,
            } => {
                if *stride == 0 || w > r {
                    return invalid("translation needs a positive stride and w <= r");
                }
                let offsets: Vec<usize> = (0..=(r - w)).step_by(*stride).collect();
                for &dy in &offsets {
                    for &dx in &offsets {
                        out.push(SparseTransform::translation_2d(*r, *w, dx, dy)?);
                    }
                }
            }
            Family::Rotation {
                input_width: r,
                filter_width: w,
                angles,
            } => {
                if angles.is_empty() {
                    return invalid("rotation family needs at least one angle");
                }
                for &a in angles {
                    out.push(SparseTransform::rotation_2d_cropped(*r, *w, a)?);
                }
            }
            Family::Scaling {
                input_width: r,
                filter_width: w,
                stride,
            } => {
                if *stride == 0 || w > r {
                    return invalid("scaling needs a positive stride and w <= r");
                }
                for level in 0..=(r - w) / stride {
                    out.push(SparseTransform::scaling_2d(*r, *w, level, *stride)?);
                }
            }
        }
        Ok(())
    }
}

/// `count` angles `k * 2π / count`, `k = 0..count`.
pub fn full_turn_angles(count: usize) -> Vec<f64> {
    (0..count).map(|k| k as f64 * 2.0 * PI / count as f64).collect()
}

/// Declarative description of a transform set.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    pub channels: usize,
    pub families: Vec<Family>,
}

impl TransformSpec {
    pub fn new(families: Vec<Family>) -> Self {
        TransformSpec {
            channels: 1,
            families,
        }
    }

    pub fn with_channels(mut self, channels: usize) -> Self {
        self.channels = channels;
        self
    }

    /// Named configuration. Several names joined by `+` concatenate their
    /// families in order.
    ///
    /// * `identity<N>`: single identity on `N x N`.
    /// * `rot16`: 16 rotations in steps of π/8 on 28 x 28.
    /// * `scale28-20` (or `scale28→20`): 5 crop levels, 28 → 20, gs = 2.
    /// * `trans28-24` (or `trans28→24`): 9 windows of 24 x 24 in 28 x 28, gs = 2.
    /// * `cifar-rot`: 5 small rotations on 6 x 6.
    /// * `cifar-scale`, `cifar-trans`: r = 8, w = 6, gs = 2.
    /// * `cifar-combined`: translations, scalings and small cropped rotations
    ///   on r = 8, w = 6.
    pub fn preset(name: &str) -> Result<Self> {
        let mut families = Vec::new();
        for part in name.split('+') {
            families.extend(Self::single_preset(part.trim())?);
        }
        Ok(TransformSpec::new(families))
    }

    fn single_preset(name: &str) -> Result<Vec<Family>> {
        let name = name.replace('→', "-");
        let small_turns = |r: usize, w: usize, zero: bool| {
            let mut angles = vec![-PI / 6.0, -PI / 12.0];
            if zero {
                angles.push(0.0);
            }
            angles.extend([PI / 12.0, PI / 6.0]);
            Family::Rotation {
                input_width: r,
                filter_width: w,
                angles,
            }
        };
        let fams = match name.as_str() {
            "rot16" => vec![Family::Rotation {
                input_width: 28,
                filter_width: 28,
                angles: full_turn_angles(16),
            }],
            "scale28-20" => vec![Family::Scaling {
                input_width: 28,
                filter_width: 20,
                stride: 2,
            }],
            "trans28-24" => vec![Family::Translation {
                input_width: 28,
                filter_width: 24,
                stride: 2,
            }],
            "cifar-rot" => vec![small_turns(6, 6, true)],
            "cifar-scale" => vec![Family::Scaling {
                input_width: 8,
                filter_width: 6,
                stride: 2,
            }],
            "cifar-trans" => vec![Family::Translation {
                input_width: 8,
                filter_width: 6,
                stride: 2,
            }],
            "cifar-combined" => vec![
                Family::Translation {
                    input_width: 8,
                    filter_width: 6,
                    stride: 2,
                },
                Family::Scaling {
                    input_width: 8,
                    filter_width: 6,
                    stride: 2,
                },
                small_turns(8, 6, false),
            ],
            other => match other.strip_prefix("identity").map(str::parse::<usize>) {
                Some(Ok(n)) if n > 0 => vec![Family::Identity {
                    input_width: n,
                    filter_width: n,
                }],
                _ => return invalid(format!("unknown transform preset '{other}'")),
            },
        };
        Ok(fams)
    }

    pub fn geometry(&self) -> Result<Geometry> {
        let mut geometry: Option<Geometry> = None;
        for f in &self.families {
            let g = f.geometry(self.channels);
            match geometry {
                None => geometry = Some(g),
                Some(prev) if prev != g => {
                    return invalid(format!(
                        "inconsistent geometry across families: {prev:?} vs {g:?}"
                    ))
                }
                _ => {}
            }
        }
        geometry.ok_or_else(|| crate::Error::InvalidParameter("empty transform spec".into()))
    }

    /// Builds the ordered set; families are concatenated in declaration
    /// order.
    pub fn build(&self) -> Result<TransformSet> {
        self.geometry()?;
        let mut transforms = Vec::new();
        for f in &self.families {
            f.build(&mut transforms)?;
        }
        let transforms = transforms
            .into_iter()
            .map(|t| t.with_channels(self.channels))
            .collect::<Result<Vec<_>>>()?;
        TransformSet::new(transforms)
    }
}
