//! Synthetic outlier class: samples from a full-covariance Gaussian fitted
//! to the training normals.

use crate::data::{DatasetTable, Split};
use crate::error::{Error, Result};
use crate::numerics::{cholesky, covariance, Mat64, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    pub mean: Vec<f64>,
    pub cov: Mat64,
    /// Lower Cholesky factor of `cov + jitter·I`.
    pub chol: Mat64,
    pub jitter: f64,
}

impl GaussianModel {
    pub fn new(mean: Vec<f64>, cov: Mat64) -> Result<Self> {
        if cov.rows() != mean.len() {
            return Err(Error::dim(format!(
                "mean has {} elements, covariance is {}x{}",
                mean.len(),
                cov.rows(),
                cov.cols()
            )));
        }
        let ch = cholesky(&cov)?;
        Ok(Self {
            mean,
            cov,
            chol: ch.factor,
            jitter: ch.jitter,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// One draw `mean + chol·z`, `z` standard normal.
    pub fn sample_one(&self, rng: &mut Rng) -> Vec<f64> {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let mut out = self.mean.clone();
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.chol.row(i);
            // Lower triangular.
            *o += row[..=i]
                .iter()
                .zip(&z[..=i])
                .map(|(l, z)| l * z)
                .sum::<f64>();
        }
        out
    }
}

/// Sample mean and unbiased covariance of the rows of `normals`.
pub fn fit_gaussian(normals: &DatasetTable) -> Result<GaussianModel> {
    if normals.len() < 2 {
        return Err(Error::config(format!(
            "gaussian fit needs at least 2 samples, got {}",
            normals.len()
        )));
    }
    if normals.dim() == 0 {
        return Err(Error::config("gaussian fit needs at least 1 dimension"));
    }
    let (mean, cov) = covariance(&normals.samples)?;
    GaussianModel::new(mean, cov)
}

/// `n` draws from `model`, optionally clamped element-wise to `clamp`.
/// The table is tagged [`Split::Outlier`] and inherits no labels.
pub fn sample_outliers(
    model: &GaussianModel,
    n: usize,
    rng: &mut Rng,
    clamp: Option<(f64, f64)>,
) -> Result<DatasetTable> {
    if n == 0 {
        return Err(Error::config("asked for zero outlier samples"));
    }
    if let Some((lo, hi)) = clamp {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::config(format!("empty clamp range [{lo}, {hi}]")));
        }
    }
    let d = model.dim();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let mut s = model.sample_one(rng);
        if let Some((lo, hi)) = clamp {
            s.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        }
        data.extend(s);
    }
    Ok(DatasetTable::new(Mat64::new(n, d, data)?, Split::Outlier))
}
