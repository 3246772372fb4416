use super::Mat64;
use crate::error::{Error, Result};

/// First diagonal jitter tried by [`cholesky`].
pub const JITTER_START: f64 = 1e-8;
/// Largest jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-2;

/// Lower-triangular factor together with the jitter that made it succeed.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    pub factor: Mat64,
    pub jitter: f64,
}

/// Factors `cov + jitter·I` for jitter `1e-8, 1e-7, …, 1e-2`, returning the
/// first success.
pub fn cholesky(cov: &Mat64) -> Result<Cholesky> {
    check_square_symmetric(cov)?;
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        if let Some(factor) = factor_with(cov, jitter) {
            return Ok(Cholesky { factor, jitter });
        }
        jitter *= 10.0;
    }
    Err(Error::Decomposition(format!(
        "matrix is not positive semi-definite even with jitter {JITTER_MAX:e}"
    )))
}

/// Factors `cov + jitter·I` for one fixed jitter.
pub fn cholesky_with_jitter(cov: &Mat64, jitter: f64) -> Result<Mat64> {
    check_square_symmetric(cov)?;
    factor_with(cov, jitter)
        .ok_or_else(|| Error::Decomposition(format!("non-positive pivot with jitter {jitter:e}")))
}

fn check_square_symmetric(cov: &Mat64) -> Result<()> {
    let n = cov.rows();
    if n != cov.cols() {
        return Err(Error::dim(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            cov.cols()
        )));
    }
    let tol = 1e-10 * cov.max_abs().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (cov.get(i, j) - cov.get(j, i)).abs() > tol {
                return Err(Error::Decomposition(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

fn factor_with(cov: &Mat64, jitter: f64) -> Option<Mat64> {
    let n = cov.rows();
    let mut l = Mat64::zeros(n, n);
    for j in 0..n {
        let mut diag = cov.get(j, j) + jitter;
        for k in 0..j {
            diag -= l.get(j, k) * l.get(j, k);
        }
        if !diag.is_finite() || diag <= 0.0 {
            return None;
        }
        let ljj = diag.sqrt();
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let mut s = cov.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Some(l)
}
