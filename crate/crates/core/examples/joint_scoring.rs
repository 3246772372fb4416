//! Scores the benchmark test set on both channels and shows which anomaly
//! kind each channel catches.
//!
//!     cargo run --release --example joint_scoring

mod common;

use bcos_novelty::eval::{auroc, LabeledScores};
use bcos_novelty::numerics::mean_std;
use bcos_novelty::scoring::ScoreRecord;
use bcos_novelty::synth::SampleKind;

fn main() -> bcos_novelty::Result<()> {
    let common::Setup {
        data,
        detector,
        records,
        ..
    } = common::setup()?;
    let labels: Vec<u8> = data.kinds.iter().map(|k| k.label()).collect();
    let cfg = detector.config();
    println!(
        "k = {}, ENS from layer {} node {}, w = {}",
        cfg.k, cfg.novelty_layer, cfg.target_node, cfg.joint_weight
    );

    let channels: [fn(&ScoreRecord) -> f64; 3] = [|r| r.ffs_norm, |r| r.ens_norm, |r| r.joint];

    println!("\nmean z-score by kind");
    println!("{:<10}{:>10}{:>10}{:>10}", "kind", "ffs", "ens", "joint");
    for kind in [SampleKind::Normal, SampleKind::Familiar, SampleKind::Novel] {
        print!("{:<10}", format!("{kind:?}").to_lowercase());
        for get in channels {
            let v: Vec<f64> = records
                .iter()
                .zip(&data.kinds)
                .filter(|(_, k)| **k == kind)
                .map(|(r, _)| get(r))
                .collect();
            print!("{:>10.3}", mean_std(&v).0);
        }
        println!();
    }

    println!("\nAUROC against test normals");
    println!(
        "{:<10}{:>10}{:>10}{:>10}",
        "anomalies", "ffs", "ens", "joint"
    );
    for (name, kind) in [
        ("familiar", Some(SampleKind::Familiar)),
        ("novel", Some(SampleKind::Novel)),
        ("all", None),
    ] {
        print!("{name:<10}");
        for get in channels {
            let all = LabeledScores::indexed(records.iter().map(get).collect(), labels.clone())?;
            let subset = all.select(|i| {
                data.kinds[i] == SampleKind::Normal || kind.is_none_or(|k| data.kinds[i] == k)
            });
            print!("{:>10.4}", auroc(&subset)?);
        }
        println!();
    }
    Ok(())
}
