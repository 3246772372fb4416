//! Fits a Gaussian to the benchmark normals and samples an outlier class
//! from it, then checks the samples reproduce the fitted moments.
//!
//!     cargo run --release --example gaussian_outliers

mod common;

use bcos_novelty::numerics::{covariance, Rng};
use bcos_novelty::outliers::{fit_gaussian, sample_outliers};

fn main() -> bcos_novelty::Result<()> {
    let cfg = common::config()?;
    let data = common::benchmark(&cfg)?;
    let model = fit_gaussian(&data.train)?;
    println!(
        "fitted on {} normals in {} dims (jitter {:e})",
        data.train.len(),
        model.dim(),
        model.jitter
    );

    let n = 50_000;
    let samples = sample_outliers(&model, n, &mut Rng::new(cfg.seed), None)?;
    let (mean, cov) = covariance(&samples.samples)?;

    let mean_err = mean
        .iter()
        .zip(&model.mean)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let (mut diff, mut total) = (0.0, 0.0);
    for (a, b) in cov.as_slice().iter().zip(model.cov.as_slice()) {
        diff += (a - b).powi(2);
        total += b * b;
    }
    println!("max |mean error|            {mean_err:.4}");
    println!("relative Frobenius cov err  {:.4}", (diff / total).sqrt());

    // The normals sit in a low-dimensional subspace, so the fitted
    // covariance is nearly singular: most variance lives in a few axes.
    let mut diag: Vec<f64> = (0..model.dim()).map(|i| model.cov.get(i, i)).collect();
    diag.sort_by(|a, b| b.total_cmp(a));
    println!("largest diagonal entries    {:.3?}", &diag[..6]);

    let clamped = sample_outliers(&model, 5, &mut Rng::new(1), Some((-0.5, 0.5)))?;
    println!("clamped sample row 0        {:.3?}", clamped.row(0));
    Ok(())
}
