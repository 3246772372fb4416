//! Synthetic benchmark with familiar and novel anomalies.
//!
//! Training normals live in a `subspace_dim`-dimensional linear subspace of
//! the `dim`-dimensional input space, as a mixture of tight clusters (so a
//! single Gaussian is a poor fit and the Gaussian outlier class carries
//! signal). Every draw is multiplied by a random overall scale, so sample
//! norms carry no information. Test anomalies come in two kinds:
//!
//! * *familiar*: a normal draw displaced inside the subspace, at right
//!   angles to itself;
//! * *novel*: a normal draw plus energy in the orthogonal complement, i.e.
//!   along directions no training sample ever used.

use serde::{Deserialize, Serialize};

use crate::data::{DatasetTable, Label, Split};
use crate::error::{Error, Result};
use crate::numerics::{dot_unchecked, norm, Mat64, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubspaceBenchmark {
    pub dim: usize,
    pub subspace_dim: usize,
    pub clusters: usize,
    /// Distance of the data from the origin along the first subspace axis.
    pub offset: f64,
    /// Distance of cluster centres from the offset point.
    pub cluster_radius: f64,
    /// Per-coordinate standard deviation inside a cluster.
    pub cluster_spread: f64,
    /// Draws are scaled by a factor log-uniform in `[1/scale_range, scale_range]`.
    pub scale_range: f64,
    /// Length of the in-subspace displacement of familiar anomalies,
    /// applied before scaling.
    pub familiar_shift: f64,
    /// Norm of the out-of-subspace component of a novel anomaly, relative
    /// to the norm of its in-subspace part.
    pub novel_energy: f64,
    pub train_normals: usize,
    pub test_normals: usize,
    pub familiar_anomalies: usize,
    pub novel_anomalies: usize,
}

impl Default for SubspaceBenchmark {
    fn default() -> Self {
        Self {
            dim: 16,
            subspace_dim: 4,
            clusters: 4,
            offset: 0.0,
            cluster_radius: 2.0,
            cluster_spread: 0.1,
            scale_range: 3.0,
            familiar_shift: 3.0,
            novel_energy: 10.0,
            train_normals: 1000,
            test_normals: 200,
            familiar_anomalies: 100,
            novel_anomalies: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Normal,
    Familiar,
    Novel,
}

impl SampleKind {
    pub fn label(self) -> Label {
        match self {
            SampleKind::Normal => 0,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkData {
    pub train: DatasetTable,
    /// Normals first, then familiar anomalies, then novel anomalies.
    pub test: DatasetTable,
    pub kinds: Vec<SampleKind>,
    /// Orthonormal basis of the normal subspace, one vector per row.
    pub subspace: Mat64,
}

struct Geometry {
    basis: Vec<Vec<f64>>,
    centres: Vec<Vec<f64>>,
}

impl SubspaceBenchmark {
    fn validate(&self) -> Result<()> {
        if self.subspace_dim == 0 || self.subspace_dim >= self.dim {
            return Err(Error::config(format!(
                "subspace_dim must be in 1..{}, got {}",
                self.dim, self.subspace_dim
            )));
        }
        if !self.scale_range.is_finite() || self.scale_range < 1.0 {
            return Err(Error::config(format!(
                "scale_range must be at least 1, got {}",
                self.scale_range
            )));
        }
        if self.clusters == 0 || self.train_normals < 3 || self.test_normals == 0 {
            return Err(Error::config(
                "benchmark needs clusters, at least 3 train normals and some test normals",
            ));
        }
        Ok(())
    }

    fn geometry(&self, rng: &mut Rng) -> Geometry {
        let basis = random_orthonormal(self.dim, rng);
        let k = self.subspace_dim;
        let centres = (0..self.clusters)
            .map(|_| {
                let mut c = vec![0.0; k];
                c[0] = self.offset;
                let dir = random_unit(k, rng);
                for (ci, di) in c.iter_mut().zip(&dir) {
                    *ci += self.cluster_radius * di;
                }
                c
            })
            .collect();
        Geometry { basis, centres }
    }

    fn embed(&self, g: &Geometry, coords: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for (c, b) in coords.iter().zip(&g.basis) {
            for (xi, bi) in x.iter_mut().zip(b) {
                *xi += c * bi;
            }
        }
        x
    }

    fn normal_coords(&self, g: &Geometry, rng: &mut Rng) -> Vec<f64> {
        let centre = &g.centres[rng.below(g.centres.len())];
        centre
            .iter()
            .map(|c| c + self.cluster_spread * rng.normal())
            .collect()
    }

    fn scale(&self, coords: &mut [f64], rng: &mut Rng) {
        let r = self.scale_range.ln();
        let s = rng.uniform(-r, r).exp();
        coords.iter_mut().for_each(|c| *c *= s);
    }

    pub fn generate(&self, seed: u64) -> Result<BenchmarkData> {
        self.validate()?;
        let root = Rng::new(seed);
        let g = self.geometry(&mut root.derive(0));
        let mut rng = root.derive(1);

        let mut train = Mat64::zeros(0, self.dim);
        for _ in 0..self.train_normals {
            let mut c = self.normal_coords(&g, &mut rng);
            self.scale(&mut c, &mut rng);
            train.push_row(&self.embed(&g, &c))?;
        }

        let mut test = Mat64::zeros(0, self.dim);
        let mut kinds = Vec::new();
        for _ in 0..self.test_normals {
            let mut c = self.normal_coords(&g, &mut rng);
            self.scale(&mut c, &mut rng);
            test.push_row(&self.embed(&g, &c))?;
            kinds.push(SampleKind::Normal);
        }
        for _ in 0..self.familiar_anomalies {
            let mut c = self.normal_coords(&g, &mut rng);
            // Tangential, so the displacement cannot be undone by rescaling.
            let dir = tangent_unit(&c, &mut rng);
            for (ci, di) in c.iter_mut().zip(&dir) {
                *ci += self.familiar_shift * di;
            }
            self.scale(&mut c, &mut rng);
            test.push_row(&self.embed(&g, &c))?;
            kinds.push(SampleKind::Familiar);
        }
        for _ in 0..self.novel_anomalies {
            let mut c = self.normal_coords(&g, &mut rng);
            self.scale(&mut c, &mut rng);
            let mut x = self.embed(&g, &c);
            let length = self.novel_energy * norm(&x);
            let dir = random_unit(self.dim - self.subspace_dim, &mut rng);
            for (b, d) in g.basis[self.subspace_dim..].iter().zip(&dir) {
                for (xi, bi) in x.iter_mut().zip(b) {
                    *xi += length * d * bi;
                }
            }
            test.push_row(&x)?;
            kinds.push(SampleKind::Novel);
        }

        let labels = kinds.iter().map(|k| k.label()).collect();
        Ok(BenchmarkData {
            train: DatasetTable::new(train, Split::TrainNormal),
            test: DatasetTable::new(test, Split::Test).with_labels(labels)?,
            kinds,
            subspace: Mat64::from_rows(&g.basis[..self.subspace_dim])?,
        })
    }
}

fn random_unit(n: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let nv = norm(&v);
        if nv > 1e-6 {
            v.iter_mut().for_each(|x| *x /= nv);
            return v;
        }
    }
}

/// Random unit vector orthogonal to `v` (any unit vector if `v` is zero or
/// one-dimensional).
fn tangent_unit(v: &[f64], rng: &mut Rng) -> Vec<f64> {
    let nv = norm(v);
    if v.len() < 2 || nv < 1e-12 {
        return random_unit(v.len(), rng);
    }
    loop {
        let mut t = random_unit(v.len(), rng);
        let p = dot_unchecked(&t, v) / (nv * nv);
        t.iter_mut().zip(v).for_each(|(ti, vi)| *ti -= p * vi);
        let nt = norm(&t);
        if nt > 1e-6 {
            t.iter_mut().for_each(|x| *x /= nt);
            return t;
        }
    }
}

/// Rows of a random orthonormal basis (Gram–Schmidt on Gaussian vectors).
fn random_orthonormal(n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        // Two passes for numerical orthogonality.
        for _ in 0..2 {
            for b in &basis {
                let p = dot_unchecked(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let nv = norm(&v);
        if nv > 1e-6 {
            v.iter_mut().for_each(|x| *x /= nv);
            basis.push(v);
        }
    }
    basis
}
