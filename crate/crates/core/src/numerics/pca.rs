//! Principal components by power iteration with deflation.

use super::{column_means, dot_unchecked, norm, Mat64};
use crate::error::{Error, Result};

pub const POWER_ITERATIONS: usize = 100;
pub const POWER_TOLERANCE: f64 = 1e-10;

/// Fitted principal axes of a data matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// One unit-norm principal direction per row.
    pub components: Mat64,
    /// Variance captured by each component (eigenvalues of the covariance).
    pub variances: Vec<f64>,
}

impl Pca {
    pub fn fit(data: &Mat64, k: usize) -> Result<Self> {
        let d = data.cols();
        if k > d {
            return Err(Error::dim(format!(
                "asked for {k} components of {d}-dim data"
            )));
        }
        if data.rows() < 2 {
            return Err(Error::config(format!(
                "pca needs at least 2 rows, got {}",
                data.rows()
            )));
        }
        let mean = column_means(data);
        let mut cov = Mat64::zeros(d, d);
        let mut centered = vec![0.0; d];
        for r in data.iter_rows() {
            for (c, (v, m)) in centered.iter_mut().zip(r.iter().zip(&mean)) {
                *c = v - m;
            }
            for i in 0..d {
                for j in 0..d {
                    cov.data_mut()[i * d + j] += centered[i] * centered[j];
                }
            }
        }
        let denom = (data.rows() - 1) as f64;
        cov.data_mut().iter_mut().for_each(|v| *v /= denom);

        let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut variances = Vec::with_capacity(k);
        for _ in 0..k {
            let v = leading_direction(&cov, &components);
            let cv = apply(&cov, &v);
            let lambda = dot_unchecked(&v, &cv);
            // Deflate.
            for i in 0..d {
                for j in 0..d {
                    cov.data_mut()[i * d + j] -= lambda * v[i] * v[j];
                }
            }
            variances.push(lambda);
            components.push(v);
        }
        Ok(Self {
            mean,
            components: Mat64::from_rows(&components).unwrap_or_else(|_| Mat64::zeros(0, d)),
            variances,
        })
    }

    /// Projects rows of `data` onto the fitted components.
    pub fn transform(&self, data: &Mat64) -> Result<Mat64> {
        if data.cols() != self.mean.len() {
            return Err(Error::dim(format!(
                "pca fitted on {} columns, got {}",
                self.mean.len(),
                data.cols()
            )));
        }
        let k = self.components.rows();
        let mut out = Mat64::zeros(data.rows(), k);
        let mut centered = vec![0.0; data.cols()];
        for (r, row) in data.iter_rows().enumerate() {
            for (c, (v, m)) in centered.iter_mut().zip(row.iter().zip(&self.mean)) {
                *c = v - m;
            }
            for j in 0..k {
                out.set(r, j, dot_unchecked(&centered, self.components.row(j)));
            }
        }
        Ok(out)
    }
}

/// Top-`k` principal directions of mean-centred `data` and the centred data
/// projected onto them.
pub fn pca_project(data: &Mat64, k: usize) -> Result<(Mat64, Mat64)> {
    let pca = Pca::fit(data, k)?;
    let projected = pca.transform(data)?;
    Ok((pca.components, projected))
}

fn apply(m: &Mat64, v: &[f64]) -> Vec<f64> {
    m.iter_rows().map(|r| dot_unchecked(r, v)).collect()
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let p = dot_unchecked(v, b);
        for (x, y) in v.iter_mut().zip(b) {
            *x -= p * y;
        }
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let n = norm(v);
    if n < 1e-300 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

/// Sign convention: the largest-magnitude coordinate is positive.
fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn leading_direction(cov: &Mat64, found: &[Vec<f64>]) -> Vec<f64> {
    let d = cov.cols();
    // Start from the covariance row with the largest norm after removing
    // already-found directions; fall back to a standard basis vector when no
    // variance is left.
    let mut start: Option<Vec<f64>> = None;
    let mut best = 0.0;
    for r in cov.iter_rows() {
        let mut cand = r.to_vec();
        orthogonalize(&mut cand, found);
        let n = norm(&cand);
        if n > best {
            best = n;
            start = Some(cand);
        }
    }
    if let Some(v) = start.as_mut() {
        if !normalize(v) {
            start = None;
        }
    }
    let mut v = match start {
        Some(v) => v,
        _ => {
            let mut fallback = None;
            for i in 0..d {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                orthogonalize(&mut e, found);
                if normalize(&mut e) {
                    fallback = Some(e);
                    break;
                }
            }
            let mut v = fallback.unwrap_or_else(|| vec![0.0; d]);
            canonical_sign(&mut v);
            return v;
        }
    };

    for _ in 0..POWER_ITERATIONS {
        let mut next = apply(cov, &v);
        orthogonalize(&mut next, found);
        if !normalize(&mut next) {
            break;
        }
        canonical_sign(&mut next);
        let delta = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        v = next;
        if delta < POWER_TOLERANCE {
            break;
        }
    }
    // Re-orthogonalise once more so the returned basis is orthonormal to
    // working precision.
    orthogonalize(&mut v, found);
    normalize(&mut v);
    canonical_sign(&mut v);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn total_variance(data: &Mat64) -> f64 {
        let mean = column_means(data);
        let n = data.rows() as f64;
        data.iter_rows()
            .map(|r| {
                r.iter()
                    .zip(&mean)
                    .map(|(v, m)| (v - m) * (v - m))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / (n - 1.0)
    }

    fn column_variance(m: &Mat64, c: usize) -> f64 {
        let n = m.rows() as f64;
        let mean = (0..m.rows()).map(|r| m.get(r, c)).sum::<f64>() / n;
        (0..m.rows())
            .map(|r| (m.get(r, c) - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0)
    }

    #[test]
    fn single_axis_variance() {
        let rows: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 2.0, -1.0]).collect();
        let data = Mat64::from_rows(&rows).unwrap();
        let (comp, _) = pca_project(&data, 1).unwrap();
        assert!((comp.get(0, 0).abs() - 1.0).abs() < 1e-9);
        assert!(comp.get(0, 1).abs() < 1e-9);
        assert!(comp.get(0, 2).abs() < 1e-9);
    }

    #[test]
    fn isotropic_cloud_conserves_variance() {
        let mut rng = Rng::new(17);
        let rows: Vec<[f64; 2]> = (0..500).map(|_| [rng.normal(), rng.normal()]).collect();
        let data = Mat64::from_rows(&rows).unwrap();
        let (comp, proj) = pca_project(&data, 2).unwrap();
        let projected_total = column_variance(&proj, 0) + column_variance(&proj, 1);
        assert!((projected_total - total_variance(&data)).abs() < 1e-6);
        let overlap = dot_unchecked(comp.row(0), comp.row(1));
        assert!(overlap.abs() < 1e-9);
    }

    #[test]
    fn duplicated_rows_project_identically() {
        let mut rng = Rng::new(2);
        let mut rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..4).map(|_| rng.normal()).collect())
            .collect();
        rows.push(rows[3].clone());
        let data = Mat64::from_rows(&rows).unwrap();
        let (_, proj) = pca_project(&data, 2).unwrap();
        assert_eq!(proj.row(3), proj.row(20));
    }

    #[test]
    fn too_many_components() {
        let data = Mat64::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert!(matches!(pca_project(&data, 3), Err(Error::Dimension(_))));
    }

    #[test]
    fn leading_component_of_known_covariance() {
        // Points stretched along (1, 1)/√2.
        let mut rng = Rng::new(8);
        let rows: Vec<[f64; 2]> = (0..2000)
            .map(|_| {
                let a = 3.0 * rng.normal();
                let b = 0.3 * rng.normal();
                [(a + b) / 2f64.sqrt(), (a - b) / 2f64.sqrt()]
            })
            .collect();
        let data = Mat64::from_rows(&rows).unwrap();
        let pca = Pca::fit(&data, 2).unwrap();
        let c = pca.components.row(0);
        assert!((c[0] - 1.0 / 2f64.sqrt()).abs() < 1e-2);
        assert!((c[1] - 1.0 / 2f64.sqrt()).abs() < 1e-2);
        assert!(pca.variances[0] > pca.variances[1]);
    }
}
