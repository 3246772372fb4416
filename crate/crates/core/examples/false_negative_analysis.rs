//! Counts the anomalies each detector misses at its own best threshold and
//! how many of familiarity's misses the joint score recovers.
//!
//!     cargo run --release --example false_negative_analysis

mod common;

use bcos_novelty::eval::{fn_reduction, oracle_threshold, ConfusionReport, LabeledScores};
use bcos_novelty::synth::SampleKind;

fn missed(ls: &LabeledScores, c: &ConfusionReport) -> Vec<usize> {
    (0..ls.len())
        .filter(|&i| ls.labels[i] == 1 && ls.scores[i] <= c.threshold)
        .collect()
}

fn main() -> bcos_novelty::Result<()> {
    let common::Setup { data, records, .. } = common::setup()?;
    let labels: Vec<u8> = data.kinds.iter().map(|k| k.label()).collect();
    let ffs = LabeledScores::indexed(records.iter().map(|r| r.ffs_norm).collect(), labels.clone())?;
    let joint = LabeledScores::indexed(records.iter().map(|r| r.joint).collect(), labels)?;

    let cf = oracle_threshold(&ffs)?;
    let cj = oracle_threshold(&joint)?;
    for (name, c) in [("ffs", &cf), ("joint", &cj)] {
        println!(
            "{name:<6} threshold {:+.4}  tp {:>3} fp {:>3} tn {:>3} fn {:>3}  fnr {:.3} fpr {:.3}",
            c.threshold, c.tp, c.fp, c.tn, c.fn_, c.fnr, c.fpr
        );
    }

    let missed_ffs = missed(&ffs, &cf);
    let missed_joint = missed(&joint, &cj);
    println!("\nmissed anomalies by kind");
    for kind in [SampleKind::Familiar, SampleKind::Novel] {
        let count = |v: &[usize]| v.iter().filter(|&&i| data.kinds[i] == kind).count();
        println!(
            "{:<9} ffs {:>3}  joint {:>3}",
            format!("{kind:?}").to_lowercase(),
            count(&missed_ffs),
            count(&missed_joint)
        );
    }
    let recovered = missed_ffs
        .iter()
        .filter(|i| !missed_joint.contains(i))
        .count();
    let introduced = missed_joint
        .iter()
        .filter(|i| !missed_ffs.contains(i))
        .count();
    println!("\nrecovered by joint {recovered}, newly missed {introduced}");
    println!("fn_reduction {:.4}", fn_reduction(&ffs, &joint)?);
    Ok(())
}
