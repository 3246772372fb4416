//! Renders contribution heatmaps (`θ(x) ⊙ x`) for a normal and a novel test
//! sample, treating each 16-dim input as a 4x4 image.
//!
//!     cargo run --release --example explanation_heatmap -- [out_dir]

mod common;

use std::path::PathBuf;

use bcos_novelty::data::{contributions, load_pgm, save_heatmap};
use bcos_novelty::numerics::{dot, norm};
use bcos_novelty::synth::SampleKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out_dir = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("bcos-heatmaps"));
    std::fs::create_dir_all(&out_dir)?;

    let common::Setup {
        data,
        detector,
        records,
        ..
    } = common::setup()?;
    let net = detector.network();
    let cfg = detector.config();

    for kind in [SampleKind::Normal, SampleKind::Novel] {
        let i = data
            .kinds
            .iter()
            .position(|k| *k == kind)
            .expect("kind present");
        let x = data.test.row(i);
        let theta = net.explain(x, cfg.novelty_layer, cfg.target_node)?;
        let contrib = contributions(&theta, x)?;

        // Share of each vector lying in the normal subspace. Weights that
        // never saw the complement cannot point there, so a novel input
        // and its explanation disagree.
        let in_subspace = |v: &[f64]| -> bcos_novelty::Result<f64> {
            let mut sq = 0.0;
            for b in data.subspace.iter_rows() {
                sq += dot(b, v)?.powi(2);
            }
            Ok(sq.sqrt() / norm(v))
        };
        let (share_x, share_theta) = (in_subspace(x)?, in_subspace(&theta)?);
        let name = format!("{kind:?}").to_lowercase();
        let path = out_dir.join(format!("{name}.pgm"));
        let scale = save_heatmap(&contrib, (4, 4), &path)?;
        println!(
            "{name:<7} sample {i:>3}: ENS {:.4}  in subspace: input {share_x:.3}, explanation {share_theta:.3}",
            records[i].ens_raw
        );
        println!(
            "        |contribution| range [{:.4}, {:.4}] -> {}",
            scale.min,
            scale.max,
            path.display()
        );
        let back = load_pgm(&path)?;
        println!(
            "        reloaded {}x{} image",
            back.shape_hint.unwrap().0,
            back.shape_hint.unwrap().1
        );
    }
    Ok(())
}
