//! Independent reference implementations, written from the formulas rather
//! than from the library code paths.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tifl::transform::TransformParams;
use tifl::{Geometry, TransformSet};

use super::{dot, sigmoid};

/// Sub-pixel positions this close to a grid line count as on it.
const SNAP: f64 = 1e-9;

fn snap(v: f64) -> f64 {
    if (v - v.round()).abs() < SNAP {
        v.round()
    } else {
        v
    }
}

/// Bilinear sampling as a tent kernel: input pixel `(a, b)` gets weight
/// `max(0, 1 - |sx - a|) * max(0, 1 - |sy - b|)`. `None` outside the grid.
pub fn tent_row(sx: f64, sy: f64, width: usize) -> Option<Vec<f64>> {
    let (sx, sy) = (snap(sx), snap(sy));
    let max = (width - 1) as f64;
    if sx < 0.0 || sy < 0.0 || sx > max || sy > max {
        return None;
    }
    let mut row = vec![0.0; width * width];
    for b in 0..width {
        for a in 0..width {
            let wx = (1.0 - (sx - a as f64).abs()).max(0.0);
            let wy = (1.0 - (sy - b as f64).abs()).max(0.0);
            row[b * width + a] = wx * wy;
        }
    }
    Some(row)
}

/// Source point sampled by output pixel `(x, y)`; `None` for selections.
pub fn source_point(geometry: Geometry, params: TransformParams, x: usize, y: usize) -> Option<(f64, f64)> {
    let (r, w) = (geometry.input_width as f64, geometry.filter_width as f64);
    let (x, y) = (x as f64, y as f64);
    match params {
        TransformParams::Rotation { theta } => {
            let (cw, cr) = ((w - 1.0) / 2.0, (r - 1.0) / 2.0);
            // R(-θ) applied to the offset from the output center
            let (px, py) = (x - cw, y - cw);
            let (c, s) = ((-theta).cos(), (-theta).sin());
            Some((c * px - s * py + cr, s * px + c * py + cr))
        }
        TransformParams::Scaling { level, stride } => {
            let region = r - (level * stride) as f64;
            // pixel i spans [i - 1/2, i + 1/2]; the region starts at lo
            let lo = (level * stride) as f64 / 2.0 - 0.5;
            Some((lo + (x + 0.5) * region / w, lo + (y + 0.5) * region / w))
        }
        _ => None,
    }
}

/// Dense single-channel block of a transform built from its parameters.
fn dense_block(geometry: Geometry, params: TransformParams) -> Array2<f64> {
    let (r, w) = (geometry.input_width, geometry.filter_width);
    match params {
        TransformParams::Shift { offset } => {
            Array2::from_shape_fn((r, r), |(i, j)| if i as i64 == j as i64 + offset { 1.0 } else { 0.0 })
        }
        TransformParams::Identity => Array2::eye(r * r),
        TransformParams::Translation { dx, dy } => {
            let mut m = Array2::zeros((w * w, r * r));
            for y in 0..w {
                for x in 0..w {
                    m[[y * w + x, (y + dy) * r + x + dx]] = 1.0;
                }
            }
            m
        }
        TransformParams::Rotation { .. } | TransformParams::Scaling { .. } => {
            let mut m = Array2::zeros((w * w, r * r));
            for y in 0..w {
                for x in 0..w {
                    let (sx, sy) = source_point(geometry, params, x, y).expect("resampling transform");
                    if let Some(row) = tent_row(sx, sy, r) {
                        m.row_mut(y * w + x).assign(&Array1::from(row));
                    }
                }
            }
            m
        }
    }
}

/// Dense `D2 x D1` matrix, block diagonal over channels.
pub fn dense_transform(geometry: Geometry, params: TransformParams) -> Array2<f64> {
    let block = dense_block(geometry, params);
    let (br, bc) = block.dim();
    let c = geometry.channels;
    let mut m = Array2::zeros((br * c, bc * c));
    for ch in 0..c {
        m.slice_mut(s![ch * br..(ch + 1) * br, ch * bc..(ch + 1) * bc]).assign(&block);
    }
    m
}

pub fn dense_set(set: &TransformSet) -> Vec<Array2<f64>> {
    set.iter().map(|t| dense_transform(t.geometry(), t.params())).collect()
}

/// Hidden logits `w_jᵀ T_s v + b_{j,s}` (`K x S`).
pub fn logits(ts: &[Array2<f64>], w: &Array2<f64>, b: &Array2<f64>, v: ArrayView1<f64>) -> Array2<f64> {
    let (k, s) = b.dim();
    Array2::from_shape_fn((k, s), |(j, t)| dot(&ts[t].dot(&v).to_vec(), &w.column(j).to_vec()) + b[[j, t]])
}

/// Softmax with an off state at logit 0, computed without shifting.
pub fn softmax_with_off(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.mapv(f64::exp);
    for mut row in p.rows_mut() {
        let z = 1.0 + row.sum();
        row /= z;
    }
    p
}

/// `Σ_{j,s} f_{j,s} T_sᵀ w_j`.
pub fn decode_sum(ts: &[Array2<f64>], w: &Array2<f64>, f: &Array2<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(ts[0].ncols());
    for (t, m) in ts.iter().enumerate() {
        for j in 0..w.ncols() {
            out.scaled_add(f[[j, t]], &m.t().dot(&w.column(j)));
        }
    }
    out
}

/// TIRBM energy with a soft (expected) hidden matrix `h` (`K x S`).
pub fn expected_energy(
    ts: &[Array2<f64>],
    w: &Array2<f64>,
    b: &Array2<f64>,
    c: &Array1<f64>,
    gaussian: bool,
    v: ArrayView1<f64>,
    h: &Array2<f64>,
) -> f64 {
    let l = logits(ts, w, b, v);
    let mut e = -(&l * h).sum() - dot(&c.to_vec(), &v.to_vec());
    if gaussian {
        e += 0.5 * dot(&v.to_vec(), &v.to_vec());
    }
    e
}

/// Every hidden configuration of `K` rows with `S + 1` states each; `None`
/// is off.
pub fn hidden_configs(k: usize, s: usize) -> Vec<Vec<Option<usize>>> {
    let mut out = vec![Vec::new()];
    for _ in 0..k {
        let mut next = Vec::new();
        for prefix in &out {
            for state in std::iter::once(None).chain((0..s).map(Some)) {
                let mut p = prefix.clone();
                p.push(state);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

pub fn binary_vectors(d: usize) -> Vec<Array1<f64>> {
    (0..1usize << d)
        .map(|m| Array1::from_shape_fn(d, |i| ((m >> i) & 1) as f64))
        .collect()
}

pub fn config_matrix(h: &[Option<usize>], s: usize) -> Array2<f64> {
    let mut m = Array2::zeros((h.len(), s));
    for (j, a) in h.iter().enumerate() {
        if let Some(t) = a {
            m[[j, *t]] = 1.0;
        }
    }
    m
}

/// Exact log-likelihood gradient (ascent direction) of a binary TIRBM for a
/// data batch, by enumerating every visible and hidden configuration.
/// Returns `[W, b, c]` flattened row-major.
pub fn exact_ll_gradient(
    ts: &[Array2<f64>],
    w: &Array2<f64>,
    b: &Array2<f64>,
    c: &Array1<f64>,
    data: ArrayView2<f64>,
) -> Vec<f64> {
    let (k, s) = b.dim();
    let configs = hidden_configs(k, s);
    let stats = |v: ArrayView1<f64>, h: &Array2<f64>| -> Vec<f64> {
        let mut gw = Array2::zeros(w.raw_dim());
        for t in 0..s {
            let tv = ts[t].dot(&v);
            for j in 0..k {
                gw.column_mut(j).scaled_add(h[[j, t]], &tv);
            }
        }
        gw.iter().chain(h.iter()).chain(v.iter()).copied().collect()
    };
    let expectation = |vs: &[Array1<f64>]| -> Vec<f64> {
        let mut acc: Vec<f64> = Vec::new();
        let mut z = 0.0;
        for v in vs {
            for h in &configs {
                let hm = config_matrix(h, s);
                let p = (-expected_energy(ts, w, b, c, false, v.view(), &hm)).exp();
                let st = stats(v.view(), &hm);
                if acc.is_empty() {
                    acc = vec![0.0; st.len()];
                }
                for (a, x) in acc.iter_mut().zip(st) {
                    *a += p * x;
                }
                z += p;
            }
        }
        acc.into_iter().map(|a| a / z).collect()
    };
    let mut data_term = Vec::new();
    for v in data.outer_iter() {
        let e = expectation(&[v.to_owned()]);
        if data_term.is_empty() {
            data_term = vec![0.0; e.len()];
        }
        for (a, x) in data_term.iter_mut().zip(e) {
            *a += x / data.nrows() as f64;
        }
    }
    let model_term = expectation(&binary_vectors(c.len()));
    data_term.iter().zip(model_term).map(|(a, b)| a - b).collect()
}

/// Plain binary RBM trained by CD-1 with mean-field reconstructions and the
/// L2 sparsity penalty on `sigmoid(vW + b)`, following the same sampling
/// contract as the library: one shuffle per epoch, then one uniform draw
/// per (sample, hidden unit) in row-major order, unit on iff `u < p`.
pub struct ReferenceRbm {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub c: Array1<f64>,
}

pub struct ReferenceConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub target: f64,
    pub sparsity: f64,
    pub seed: u64,
}

impl ReferenceRbm {
    fn hidden(&self, v: &Array2<f64>) -> Array2<f64> {
        (v.dot(&self.w) + &self.b).mapv(sigmoid)
    }

    pub fn train(&mut self, data: &Array2<f64>, cfg: &ReferenceConfig) {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..data.nrows()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch) {
                let v = data.select(ndarray::Axis(0), chunk);
                let n = chunk.len() as f64;
                let ph = self.hidden(&v);
                let h = ph.mapv(|p| if rng.random::<f64>() < p { 1.0 } else { 0.0 });
                let v1 = (h.dot(&self.w.t()) + &self.c).mapv(sigmoid);
                let ph1 = self.hidden(&v1);
                let gw = (v.t().dot(&ph) - v1.t().dot(&ph1)) / n;
                let gb = (ph.sum_axis(ndarray::Axis(0)) - ph1.sum_axis(ndarray::Axis(0))) / n;
                let gc = (v.sum_axis(ndarray::Axis(0)) - v1.sum_axis(ndarray::Axis(0))) / n;
                // d/dθ Σ_j (p - q̄_j)² with q̄_j the batch mean of ph
                let qbar = ph.mean_axis(ndarray::Axis(0)).unwrap();
                let dq = ph.mapv(|q| q * (1.0 - q));
                let coef = qbar.mapv(|q| -2.0 * (cfg.target - q));
                let sw = v.t().dot(&dq) / n * &coef;
                let sb = dq.sum_axis(ndarray::Axis(0)) / n * &coef;

                self.w.scaled_add(cfg.lr, &gw);
                self.b.scaled_add(cfg.lr, &gb);
                self.c.scaled_add(cfg.lr, &gc);
                if cfg.sparsity > 0.0 {
                    self.w.scaled_add(-cfg.lr * cfg.sparsity, &sw);
                    self.b.scaled_add(-cfg.lr * cfg.sparsity, &sb);
                }
            }
        }
    }
}

/// Textbook OMP over the columns of `atoms` using modified Gram-Schmidt.
/// Returns the selected columns in order and their coefficients.
pub fn textbook_omp(atoms: &Array2<f64>, v: &[f64], gamma: usize) -> (Vec<usize>, Vec<f64>) {
    let (d, k) = atoms.dim();
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut rmat: Vec<Vec<f64>> = Vec::new();
    let mut support = Vec::new();
    let mut residual = v.to_vec();
    while support.len() < gamma && dot(&residual, &residual).sqrt() >= 1e-10 {
        let mut best = (usize::MAX, 0.0f64);
        for j in (0..k).filter(|j| !support.contains(j)) {
            let c = dot(&atoms.column(j).to_vec(), &residual).abs();
            if best.0 == usize::MAX || c > best.1 {
                best = (j, c);
            }
        }
        if best.0 == usize::MAX || best.1 == 0.0 {
            break;
        }
        let mut u = atoms.column(best.0).to_vec();
        let mut col = Vec::new();
        for qi in &q {
            let p = dot(qi, &u);
            col.push(p);
            for (a, b) in u.iter_mut().zip(qi) {
                *a -= p * b;
            }
        }
        let nu = dot(&u, &u).sqrt();
        col.push(nu);
        u.iter_mut().for_each(|a| *a /= nu);
        q.push(u);
        rmat.push(col);
        support.push(best.0);
        residual = v.to_vec();
        for qi in &q {
            let p = dot(qi, v);
            for (a, b) in residual.iter_mut().zip(qi) {
                *a -= p * b;
            }
        }
    }
    // back-substitution R x = Qᵀ v (R stored by columns)
    let m = support.len();
    let qtv: Vec<f64> = q.iter().map(|qi| dot(qi, v)).collect();
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let mut acc = qtv[i];
        for j in i + 1..m {
            acc -= rmat[j][i] * x[j];
        }
        x[i] = acc / rmat[i][i];
    }
    let _ = d;
    (support, x)
}

/// Solves the normal equations `(AᵀA) x = Aᵀ v` by Gaussian elimination
/// with partial pivoting.
pub fn normal_equations(atoms: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let m = atoms.len();
    let mut a = vec![vec![0.0; m + 1]; m];
    for i in 0..m {
        for j in 0..m {
            a[i][j] = dot(&atoms[i], &atoms[j]);
        }
        a[i][m] = dot(&atoms[i], v);
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, piv);
        for row in 0..m {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..=m {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    (0..m).map(|i| a[i][m] / a[i][i]).collect()
}

/// Atom `T_sᵀ w_j` from dense transforms.
pub fn atom(ts: &[Array2<f64>], w: &Array2<f64>, j: usize, s: usize) -> Vec<f64> {
    ts[s].t().dot(&w.column(j)).to_vec()
}

/// Step-by-step greedy pursuit with one pick per filter, lowest `(j, s)`
/// on ties, and a least-squares refit after each pick.
pub fn greedy_pursuit(ts: &[Array2<f64>], w: &Array2<f64>, v: &[f64], gamma: usize) -> Vec<(usize, usize, f64)> {
    let k = w.ncols();
    let mut picks: Vec<(usize, usize)> = Vec::new();
    let mut coef = Vec::new();
    let mut residual = v.to_vec();
    while picks.len() < gamma && dot(&residual, &residual).sqrt() >= 1e-10 {
        let mut best: Option<(usize, usize, f64)> = None;
        for j in 0..k {
            if picks.iter().any(|p| p.0 == j) {
                continue;
            }
            for s in 0..ts.len() {
                let c = dot(&atom(ts, w, j, s), &residual).abs();
                if best.is_none() || c > best.unwrap().2 {
                    best = Some((j, s, c));
                }
            }
        }
        let Some((j, s, c)) = best else { break };
        if c == 0.0 {
            break;
        }
        picks.push((j, s));
        let atoms: Vec<Vec<f64>> = picks.iter().map(|&(j, s)| atom(ts, w, j, s)).collect();
        coef = normal_equations(&atoms, v);
        residual = v.to_vec();
        for (a, x) in atoms.iter().zip(&coef) {
            for (r, ai) in residual.iter_mut().zip(a) {
                *r -= x * ai;
            }
        }
    }
    picks.into_iter().zip(coef).map(|((j, s), x)| (j, s, x)).collect()
}

/// Smallest squared residual over every support of at most `gamma` atoms
/// with at most one transformation per filter.
pub fn best_support_error(ts: &[Array2<f64>], w: &Array2<f64>, v: &[f64], gamma: usize) -> f64 {
    let (k, s) = (w.ncols(), ts.len());
    let mut best = dot(v, v);
    // each filter is off or uses one transformation
    let total = (s + 1).pow(k as u32);
    for code in 0..total {
        let mut c = code;
        let mut atoms = Vec::new();
        for j in 0..k {
            let state = c % (s + 1);
            c /= s + 1;
            if state > 0 {
                atoms.push(atom(ts, w, j, state - 1));
            }
        }
        if atoms.is_empty() || atoms.len() > gamma {
            continue;
        }
        let x = normal_equations(&atoms, v);
        let mut r = v.to_vec();
        for (a, xi) in atoms.iter().zip(&x) {
            for (ri, ai) in r.iter_mut().zip(a) {
                *ri -= xi * ai;
            }
        }
        best = best.min(dot(&r, &r));
    }
    best
}

/// Two-sided threshold features by looping over every `(j, s)`.
pub fn threshold_features(ts: &[Array2<f64>], w: &Array2<f64>, v: &[f64], alpha: f64) -> Vec<f64> {
    let k = w.ncols();
    let mut out = vec![0.0; 2 * k];
    for j in 0..k {
        for t in ts {
            let tv = t.dot(&ArrayView1::from(v));
            let r = dot(&w.column(j).to_vec(), &tv.to_vec());
            out[j] = f64::max(out[j], r - alpha);
            out[j + k] = f64::max(out[j + k], -r - alpha);
        }
    }
    out
}

/// Quadrant averages by visiting every cell: rows `< h/2` are top, columns
/// `< w/2` are left.
pub fn quadrant_average(map: &Array3<f64>) -> Vec<f64> {
    let (h, w, d) = map.dim();
    let mut sums = vec![0.0; 4 * d];
    let mut counts = [0usize; 4];
    for y in 0..h {
        for x in 0..w {
            let q = 2 * usize::from(y >= h / 2) + usize::from(x >= w / 2);
            counts[q] += 1;
            for c in 0..d {
                sums[q * d + c] += map[[y, x, c]];
            }
        }
    }
    sums.iter().enumerate().map(|(i, s)| s / counts[i / d] as f64).collect()
}

/// Mean cross-entropy plus `reg/2 ‖W‖²` via log-sum-exp.
pub fn softmax_objective(x: ArrayView2<f64>, y: &[usize], w: &Array2<f64>, b: &Array1<f64>, reg: f64) -> f64 {
    let mut total = 0.0;
    for (row, &label) in x.outer_iter().zip(y) {
        let scores: Vec<f64> = (0..w.ncols()).map(|c| dot(&row.to_vec(), &w.column(c).to_vec()) + b[c]).collect();
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
        total += lse - scores[label];
    }
    total / x.nrows() as f64 + 0.5 * reg * w.iter().map(|a| a * a).sum::<f64>()
}
