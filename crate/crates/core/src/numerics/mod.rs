//! Dense linear algebra, statistics and seeded randomness.
//!
//! Vectors are plain `&[f64]` slices; matrices are row-major [`Mat64`].
//! Everything here is dependency-free and deterministic.

mod cholesky;
mod pca;
mod rng;

pub use cholesky::{cholesky, cholesky_with_jitter, Cholesky, JITTER_MAX, JITTER_START};
pub use pca::{pca_project, Pca, POWER_ITERATIONS, POWER_TOLERANCE};
pub use rng::Rng;

use crate::error::{Error, Result};

/// Norm floor below which a vector is treated as zero.
pub const NORM_EPS: f64 = 1e-12;

/// Row-major dense matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat64 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat64 {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::dim(format!(
                "{rows}x{cols} matrix needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "matrix element ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

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
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dim(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
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

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact(0) panics, and a zero-width matrix still has rows.
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// Appends a row, checking width and finiteness.
    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if self.rows > 0 && row.len() != self.cols {
            return Err(Error::dim(format!(
                "pushed row has {} columns, expected {}",
                row.len(),
                self.cols
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pushed row".into()));
        }
        if self.rows == 0 {
            self.cols = row.len();
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    /// Largest absolute element, 0 for an empty matrix.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dim(format!(
            "vector lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub(crate) fn dot_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    Ok(dot_unchecked(a, b))
}

pub fn norm(a: &[f64]) -> f64 {
    dot_unchecked(a, a).sqrt()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    Ok(euclidean_unchecked(a, b))
}

pub(crate) fn euclidean_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
///
/// Returns exactly 0 when either norm is below [`NORM_EPS`].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    Ok(cosine_unchecked(a, b))
}

pub(crate) fn cosine_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na < NORM_EPS || nb < NORM_EPS {
        return 0.0;
    }
    (dot_unchecked(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

pub fn matvec(m: &Mat64, v: &[f64]) -> Result<Vec<f64>> {
    if m.cols != v.len() {
        return Err(Error::dim(format!(
            "matrix has {} columns, vector has {} elements",
            m.cols,
            v.len()
        )));
    }
    Ok(m.iter_rows().map(|r| dot_unchecked(r, v)).collect())
}

pub fn matmul(a: &Mat64, b: &Mat64) -> Result<Mat64> {
    if a.cols != b.rows {
        return Err(Error::dim(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Mat64::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            for (o, bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Column means of a matrix.
pub fn column_means(m: &Mat64) -> Vec<f64> {
    let mut mean = vec![0.0; m.cols];
    for r in m.iter_rows() {
        for (acc, v) in mean.iter_mut().zip(r) {
            *acc += v;
        }
    }
    let n = m.rows as f64;
    mean.iter_mut().for_each(|v| *v /= n);
    mean
}

/// Sample covariance (denominator `n - 1`) of the rows of `m`.
pub fn covariance(m: &Mat64) -> Result<(Vec<f64>, Mat64)> {
    if m.rows < 2 {
        return Err(Error::config(format!(
            "covariance needs at least 2 rows, got {}",
            m.rows
        )));
    }
    let mean = column_means(m);
    let d = m.cols;
    let mut cov = Mat64::zeros(d, d);
    let mut centered = vec![0.0; d];
    for r in m.iter_rows() {
        for (c, (v, mu)) in centered.iter_mut().zip(r.iter().zip(&mean)) {
            *c = v - mu;
        }
        for i in 0..d {
            let ci = centered[i];
            for j in i..d {
                cov.data[i * d + j] += ci * centered[j];
            }
        }
    }
    let denom = (m.rows - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov.data[i * d + j] / denom;
            cov.data[i * d + j] = v;
            cov.data[j * d + i] = v;
        }
    }
    Ok((mean, cov))
}
