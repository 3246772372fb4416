//! Projects memory-bank and test features onto two principal components,
//! with and without the ENS column, and writes both tables as CSV.
//!
//!     cargo run --release --example pca_diagnostic -- [out_dir]

mod common;

use std::path::PathBuf;

use bcos_novelty::eval::{pca_diagnostic, EnsColumn, PointSet, ProjectionTable};
use bcos_novelty::numerics::{mean_std, Mat64};
use bcos_novelty::scoring::ens;
use bcos_novelty::synth::SampleKind;

/// Mean second principal coordinate per test kind.
fn summarize(name: &str, table: &ProjectionTable, kinds: &[SampleKind]) {
    println!(
        "{name}: explained variance pc1 {:.4}, pc2 {:.4}",
        table.variances[0], table.variances[1]
    );
    for kind in [SampleKind::Normal, SampleKind::Familiar, SampleKind::Novel] {
        let (pc2, knn): (Vec<f64>, Vec<f64>) = table
            .points
            .iter()
            .filter(|p| p.set == PointSet::Test && kinds[p.index] == kind)
            .map(|p| (p.pc2, p.knn2))
            .unzip();
        println!(
            "  {:<9} mean pc2 {:+.3}  mean knn2 {:.3}",
            format!("{kind:?}").to_lowercase(),
            mean_std(&pc2).0,
            mean_std(&knn).0
        );
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out_dir = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("bcos-pca"));
    std::fs::create_dir_all(&out_dir)?;

    let common::Setup {
        data,
        detector,
        records,
        ..
    } = common::setup()?;
    let net = detector.network();
    let cfg = detector.config();
    let bank = detector.bank();

    let mut test_features = Mat64::zeros(0, bank.feature_dim());
    for x in data.test.samples.iter_rows() {
        test_features.push_row(&net.features(x, bank.source_layer())?)?;
    }
    let labels = data.test.labels.as_deref();
    let bank_ens = data
        .train
        .samples
        .iter_rows()
        .map(|x| ens(net, x, cfg.novelty_layer, cfg.target_node))
        .collect::<bcos_novelty::Result<Vec<_>>>()?;
    let test_ens: Vec<f64> = records.iter().map(|r| r.ens_raw).collect();

    let plain = pca_diagnostic(bank, &test_features, labels, None)?;
    let with_ens = pca_diagnostic(
        bank,
        &test_features,
        labels,
        Some(EnsColumn {
            bank: &bank_ens,
            test: &test_ens,
        }),
    )?;
    summarize("features", &plain, &data.kinds);
    summarize("features + ENS", &with_ens, &data.kinds);

    for (file, table) in [("pca.csv", &plain), ("pca_ens.csv", &with_ens)] {
        let path = out_dir.join(file);
        std::fs::write(&path, table.to_csv())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
