//! Setup shared by the examples: the bundled synthetic benchmark and a
//! detector trained the same way `run_pipeline` trains it.

#![allow(dead_code)]

use bcos_novelty::bcos::{self, BcosNetwork, TrainConfig};
use bcos_novelty::outliers::{fit_gaussian, sample_outliers};
use bcos_novelty::pipeline::{RunConfig, Seeds};
use bcos_novelty::scoring::{Detector, ScoreRecord};
use bcos_novelty::synth::BenchmarkData;
use bcos_novelty::Result;

pub const CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/synthetic.toml");

pub struct Setup {
    pub cfg: RunConfig,
    pub data: BenchmarkData,
    pub detector: Detector,
    pub records: Vec<ScoreRecord>,
}

pub fn config() -> Result<RunConfig> {
    RunConfig::load(std::path::Path::new(CONFIG))
}

pub fn benchmark(cfg: &RunConfig) -> Result<BenchmarkData> {
    let bench = cfg.synthetic.clone().unwrap_or_default();
    bench.generate(Seeds::new(cfg.seed).synthetic)
}

pub fn train_network(cfg: &RunConfig, data: &BenchmarkData) -> Result<BcosNetwork> {
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
    bcos::train(&net, &data.train, &outliers, &tc)
}

pub fn setup() -> Result<Setup> {
    let cfg = config()?;
    let data = benchmark(&cfg)?;
    eprintln!(
        "training on {} normals for {} epochs...",
        data.train.len(),
        cfg.train.epochs
    );
    let net = train_network(&cfg, &data)?;
    let detector = Detector::fit(net, &data.train, &cfg.score)?;
    let records = detector.score_table(&data.test)?;
    Ok(Setup {
        cfg,
        data,
        detector,
        records,
    })
}
