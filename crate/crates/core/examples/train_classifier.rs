//! Trains the normal-vs-outlier classifier on the bundled benchmark and
//! prints the loss curve and accuracy on held-out data.
//!
//!     cargo run --release --example train_classifier

mod common;

use bcos_novelty::bcos::{self, BcosNetwork, TrainConfig, NORMAL_NODE, OUTLIER_NODE};
use bcos_novelty::data::DatasetTable;
use bcos_novelty::outliers::{fit_gaussian, sample_outliers};
use bcos_novelty::pipeline::Seeds;

fn accuracy(net: &BcosNetwork, table: &DatasetTable, label: usize) -> bcos_novelty::Result<f64> {
    let mut hits = 0;
    for x in table.samples.iter_rows() {
        let z = net.logits(x)?;
        let pred = if z[OUTLIER_NODE] > z[NORMAL_NODE] {
            1
        } else {
            0
        };
        hits += usize::from(pred == label);
    }
    Ok(hits as f64 / table.len() as f64)
}

fn main() -> bcos_novelty::Result<()> {
    let cfg = common::config()?;
    let data = common::benchmark(&cfg)?;
    let mut seeds = Seeds::new(cfg.seed);

    let gauss = fit_gaussian(&data.train)?;
    let outliers = sample_outliers(&gauss, data.train.len(), &mut seeds.outliers, None)?;
    let mut dims = vec![data.train.dim()];
    dims.extend(&cfg.network.hidden);
    dims.push(bcos::HEAD_DIM);
    let net = BcosNetwork::init(&dims, cfg.network.b, &mut seeds.init)?;
    let tc = TrainConfig {
        learning_rate: cfg.train.learning_rate,
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        seed: seeds.train,
        weight_decay: cfg.train.weight_decay,
    };
    println!("network {:?}, B = {}", net.dims(), cfg.network.b);
    println!("chance-level loss {:.4}", 2.0 * std::f64::consts::LN_2);

    let (trained, history) = bcos::train_with_history(&net, &data.train, &outliers, &tc)?;
    for (epoch, loss) in history.iter().enumerate() {
        if epoch == 0 || (epoch + 1) % 100 == 0 {
            println!("epoch {:>5}  loss {loss:.4}", epoch + 1);
        }
    }

    // Fresh draws from both classes, never seen in training.
    let held_out = sample_outliers(&gauss, 500, &mut seeds.outliers, None)?;
    let normals = data.test.filter_label(0, bcos_novelty::data::Split::Test)?;
    println!(
        "\naccuracy on training normals  {:.3}",
        accuracy(&trained, &data.train, 0)?
    );
    println!(
        "accuracy on test normals      {:.3}",
        accuracy(&trained, &normals, 0)?
    );
    println!(
        "accuracy on fresh outliers    {:.3}",
        accuracy(&trained, &held_out, 1)?
    );
    Ok(())
}
