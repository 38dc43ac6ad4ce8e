//! Dense-vector primitives and the bounded scalar minimizer.
//!
//! Logit and probability vectors are plain `f64` slices; the row-major
//! [`Matrix`] holds batches of them. Validation happens at the public
//! entry points, the `*_unchecked` helpers are for inner loops whose
//! inputs were already validated.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Clamp applied to probabilities before taking logarithms.
pub const PROB_EPS: f64 = 1e-12;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "matrix data has {} entries, expected {rows} x {cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(invalid(format!(
                    "row {i} has length {}, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size
        let cols = self.cols.max(1);
        let n = if self.cols == 0 { 0 } else { self.rows };
        self.data.chunks_exact(cols).take(n)
    }

    /// New matrix made of the selected rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// A supervision target for a single sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Label<'a> {
    /// Class index, treated as a one-hot vector.
    Hard(usize),
    /// Probability vector over classes.
    Soft(&'a [f64]),
}

pub(crate) fn check_logits(z: &[f64]) -> Result<()> {
    if z.len() < 2 {
        return Err(invalid(format!(
            "logit vector needs at least 2 classes, got {}",
            z.len()
        )));
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(invalid(format!("logit {i} is not finite ({})", z[i])));
    }
    Ok(())
}

fn check_probs(p: &[f64]) -> Result<()> {
    if p.len() < 2 {
        return Err(invalid(format!(
            "probability vector needs at least 2 classes, got {}",
            p.len()
        )));
    }
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(invalid("probability entries must lie in [0, 1]"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("probabilities sum to {sum}, expected 1")));
    }
    Ok(())
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    check_logits(z)?;
    let mut out = vec![0.0; z.len()];
    softmax_into(z, &mut out);
    Ok(out)
}

/// Softmax of `z` written to `out`. Inputs are assumed finite.
pub fn softmax_into(z: &[f64], out: &mut [f64]) {
    debug_assert_eq!(z.len(), out.len());
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Softmax of `z / temperature` written to `out`.
pub fn tempered_softmax_into(z: &[f64], temperature: f64, out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = ((v - max) / temperature).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Cross-entropy `-sum_c y_c ln p_c`, with `p` clamped at [`PROB_EPS`].
pub fn nll(p: &[f64], y: Label<'_>) -> Result<f64> {
    check_probs(p)?;
    match y {
        Label::Hard(c) if c >= p.len() => Err(invalid(format!(
            "class index {c} out of range for {} classes",
            p.len()
        ))),
        Label::Soft(t) if t.len() != p.len() => Err(invalid(format!(
            "soft label has {} entries, expected {}",
            t.len(),
            p.len()
        ))),
        Label::Soft(t) => {
            check_probs(t)?;
            Ok(nll_unchecked(p, y))
        }
        Label::Hard(_) => Ok(nll_unchecked(p, y)),
    }
}

pub(crate) fn nll_unchecked(p: &[f64], y: Label<'_>) -> f64 {
    match y {
        Label::Hard(c) => -p[c].max(PROB_EPS).ln(),
        Label::Soft(t) => t
            .iter()
            .zip(p)
            .filter(|(&w, _)| w != 0.0)
            .map(|(&w, &q)| -w * q.max(PROB_EPS).ln())
            .sum(),
    }
}

/// Brier score normalized by the class count: `(1/C) sum_c (p_c - 1[y = c])^2`.
pub fn brier(p: &[f64], y: usize) -> Result<f64> {
    check_probs(p)?;
    if y >= p.len() {
        return Err(invalid(format!(
            "class index {y} out of range for {} classes",
            p.len()
        )));
    }
    Ok(brier_unchecked(p, y))
}

pub(crate) fn brier_unchecked(p: &[f64], y: usize) -> f64 {
    let sq: f64 = p
        .iter()
        .enumerate()
        .map(|(c, &q)| {
            let target = if c == y { 1.0 } else { 0.0 };
            (q - target).powi(2)
        })
        .sum();
    sq / p.len() as f64
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

/// Number of points in the coarse scan of [`minimize_scalar`].
pub const GRID_POINTS: usize = 64;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Location and value of a minimum found by [`minimize_scalar`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
}

/// Minimizes `f` over `[lo, hi]`.
///
/// A 64-point scan (log-spaced when `lo > 0`, linear otherwise) picks the
/// best grid point; golden-section search then refines the bracket formed
/// by its two neighbours until it is narrower than `tol`. The better of
/// the refined point and the best grid point is returned, so optima on
/// the bracket boundary come back exactly.
pub fn minimize_scalar<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<Minimum>
where
    F: FnMut(f64) -> f64,
{
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(invalid(format!("invalid bracket [{lo}, {hi}]")));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    let mut eval = |x: f64| -> Result<f64> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Optimization { point: x })
        }
    };

    let last = GRID_POINTS - 1;
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|k| {
            if k == 0 {
                lo
            } else if k == last {
                hi
            } else {
                let t = k as f64 / last as f64;
                if lo > 0.0 {
                    lo * (hi / lo).powf(t)
                } else {
                    lo + (hi - lo) * t
                }
            }
        })
        .collect();

    let mut best_k = 0;
    let mut best_v = f64::INFINITY;
    for (k, &x) in grid.iter().enumerate() {
        let v = eval(x)?;
        if v < best_v {
            best_v = v;
            best_k = k;
        }
    }

    let mut a = grid[best_k.saturating_sub(1)];
    let mut b = grid[(best_k + 1).min(last)];
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d)?;
        }
    }
    let x = 0.5 * (a + b);
    let v = eval(x)?;
    if v < best_v {
        Ok(Minimum { x, value: v })
    } else {
        Ok(Minimum {
            x: grid[best_k],
            value: best_v,
        })
    }
}
