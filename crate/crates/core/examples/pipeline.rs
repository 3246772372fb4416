//! Runs the whole detector from a config file and prints the metrics.
//!
//!     cargo run --release --example pipeline -- [config.toml]

use std::path::PathBuf;

use bcos_novelty::pipeline::{run_pipeline, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/configs/synthetic.toml"
            ))
        });
    let cfg = RunConfig::load(&path)?;
    let out = run_pipeline(&cfg)?;
    print!("{}", out.metrics.to_text());
    println!(
        "wrote {} files to {}",
        out.files.len(),
        cfg.output_dir().display()
    );
    Ok(())
}
