//! Sweeps the neighbour count of the familiarity score and reports AUROC
//! for each channel.
//!
//!     cargo run --release --example k_sweep

mod common;

use bcos_novelty::eval::{auroc, LabeledScores};
use bcos_novelty::scoring::{Detector, ScoreConfig};

fn main() -> bcos_novelty::Result<()> {
    let cfg = common::config()?;
    let data = common::benchmark(&cfg)?;
    eprintln!("training...");
    let net = common::train_network(&cfg, &data)?;
    let labels: Vec<u8> = data.kinds.iter().map(|k| k.label()).collect();

    println!("{:>3}{:>10}{:>10}", "k", "ffs", "joint");
    for k in 1..=5 {
        let sc = ScoreConfig {
            k,
            ..cfg.score.clone()
        };
        let det = Detector::fit(net.clone(), &data.train, &sc)?;
        let records = det.score_table(&data.test)?;
        let ffs =
            LabeledScores::indexed(records.iter().map(|r| r.ffs_norm).collect(), labels.clone())?;
        let joint =
            LabeledScores::indexed(records.iter().map(|r| r.joint).collect(), labels.clone())?;
        println!("{k:>3}{:>10.4}{:>10.4}", auroc(&ffs)?, auroc(&joint)?);
    }
    Ok(())
}
