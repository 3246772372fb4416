//! End-to-end runs driven by a TOML [`RunConfig`].
//!
//! Stages always run in this order, and `run.log` lists them as they finish:
//!
//! ```text
//! load -> fit-gaussian -> sample-outliers -> train -> memory-bank
//!      -> normalize -> score -> eval -> write
//! ```
//!
//! Every random draw comes from streams derived from the single `seed`, so
//! two runs of the same config write byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bcos::{self, BcosNetwork, TrainConfig, DEFAULT_B, NORMAL_NODE};
use crate::data::{self, DatasetTable};
use crate::error::{Error, Result};
use crate::eval::{self, EnsColumn, LabeledScores, MetricsReport};
use crate::numerics::{Mat64, Rng};
use crate::outliers;
use crate::scoring::{self, Detector, ScoreConfig, ScoreRecord};
use crate::synth::{SampleKind, SubspaceBenchmark};

/// Stage names, in execution order.
pub const STAGES: [&str; 9] = [
    "load",
    "fit-gaussian",
    "sample-outliers",
    "train",
    "memory-bank",
    "normalize",
    "score",
    "eval",
    "write",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub outliers: OutlierSection,
    #[serde(default)]
    pub score: ScoreConfig,
    pub data: Option<DataSection>,
    pub synthetic: Option<SubspaceBenchmark>,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory relative paths are resolved against; set by [`RunConfig::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    /// Hidden layer widths; the input width comes from the data and the
    /// head is always 2 wide.
    pub hidden: Vec<usize>,
    pub b: f64,
    /// Per-layer exponents, overriding `b` when present.
    pub exponents: Option<Vec<f64>>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            b: DEFAULT_B,
            exponents: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            batch_size: d.batch_size,
            weight_decay: d.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutlierSection {
    /// Number of outliers; 0 means as many as there are training normals.
    pub count: usize,
    pub clamp: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub train_normal: PathBuf,
    /// Labelled test set.
    pub test: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Heatmaps for this many of the highest-scoring test samples.
    pub heatmaps: usize,
    /// Heatmap shape when the test data carries none.
    pub heatmap_shape: Option<(usize, usize)>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            heatmaps: 0,
            heatmap_shape: None,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("run config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::parse(path, m),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data, &self.synthetic) {
            (Some(_), Some(_)) => Err(Error::config("give either [data] or [synthetic], not both")),
            (None, None) => Err(Error::config("one of [data] or [synthetic] is required")),
            _ => Ok(()),
        }?;
        if self.network.hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        if let Some(ex) = &self.network.exponents {
            if ex.len() != self.network.hidden.len() + 1 {
                return Err(Error::config(format!(
                    "{} exponents for {} layers",
                    ex.len(),
                    self.network.hidden.len() + 1
                )));
            }
        }
        self.train_config(0).validate()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            seed,
            weight_decay: self.train.weight_decay,
        }
    }
}

/// Independent random streams of one run. The CLI subcommands draw from the
/// same streams, so a stage run on its own matches the pipeline.
pub struct Seeds {
    pub synthetic: u64,
    pub outliers: Rng,
    pub init: Rng,
    pub train: u64,
}

impl Seeds {
    pub fn new(seed: u64) -> Self {
        let root = Rng::new(seed);
        Self {
            synthetic: root.derive(0).next_u64(),
            outliers: root.derive(1),
            init: root.derive(2),
            train: root.derive(3).next_u64(),
        }
    }
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsReport,
    pub records: Vec<ScoreRecord>,
    /// Test labels in score order.
    pub labels: Vec<u8>,
    /// Anomaly kinds for synthetic runs.
    pub kinds: Option<Vec<SampleKind>>,
    pub files: Vec<PathBuf>,
}

struct RunLog {
    text: String,
}

impl RunLog {
    fn stage<T>(
        &mut self,
        name: &'static str,
        detail: impl FnOnce(&T) -> String,
        r: Result<T>,
    ) -> Result<T> {
        match r {
            Ok(v) => {
                let _ = writeln!(self.text, "stage {name}: ok ({})", detail(&v));
                Ok(v)
            }
            Err(e) => {
                let _ = writeln!(self.text, "stage {name}: failed: {e}");
                Err(e.in_stage(name))
            }
        }
    }
}

struct Loaded {
    train: DatasetTable,
    test: DatasetTable,
    kinds: Option<Vec<SampleKind>>,
}

fn load(cfg: &RunConfig, seeds: &Seeds) -> Result<Loaded> {
    let loaded = if let Some(bench) = &cfg.synthetic {
        let d = bench.generate(seeds.synthetic)?;
        Loaded {
            train: d.train,
            test: d.test,
            kinds: Some(d.kinds),
        }
    } else {
        let paths = cfg.data.as_ref().expect("validated");
        Loaded {
            train: data::load_csv(&cfg.resolve(&paths.train_normal))?,
            test: data::load_csv(&cfg.resolve(&paths.test))?,
            kinds: None,
        }
    };
    if loaded.train.dim() != loaded.test.dim() {
        return Err(Error::dim(format!(
            "train normals have {} columns, test set {}",
            loaded.train.dim(),
            loaded.test.dim()
        )));
    }
    loaded.test.require_labels("evaluation")?;
    Ok(loaded)
}

fn build_network(cfg: &RunConfig, input_dim: usize, rng: &mut Rng) -> Result<BcosNetwork> {
    let mut dims = vec![input_dim];
    dims.extend(&cfg.network.hidden);
    dims.push(bcos::HEAD_DIM);
    match &cfg.network.exponents {
        Some(ex) => BcosNetwork::init_with_exponents(&dims, ex, rng),
        None => BcosNetwork::init(&dims, cfg.network.b, rng),
    }
}

fn labeled(values: impl Iterator<Item = f64>, labels: &[u8]) -> Result<LabeledScores> {
    LabeledScores::indexed(values.collect(), labels.to_vec())
}

fn evaluate(
    det: &Detector,
    train: &DatasetTable,
    test: &DatasetTable,
    records: &[ScoreRecord],
    kinds: Option<&[SampleKind]>,
) -> Result<(MetricsReport, eval::ProjectionTable)> {
    let labels = test.require_labels("evaluation")?;
    let joint = labeled(records.iter().map(|r| r.joint), labels)?;
    let ffs_only = labeled(records.iter().map(|r| r.ffs_norm), labels)?;
    let ens_only = labeled(records.iter().map(|r| r.ens_norm), labels)?;
    let mut m = eval::channel_metrics(&joint, &ffs_only, &ens_only)?;

    if let Some(kinds) = kinds {
        for (name, kind) in [
            ("familiar", SampleKind::Familiar),
            ("novel", SampleKind::Novel),
        ] {
            let keep = |i: usize| kinds[i] == SampleKind::Normal || kinds[i] == kind;
            if !kinds.contains(&kind) {
                continue;
            }
            m.push(&format!("auroc_{name}"), eval::auroc(&joint.select(keep))?);
            m.push(
                &format!("auroc_ffs_{name}"),
                eval::auroc(&ffs_only.select(keep))?,
            );
            m.push(
                &format!("fn_reduction_{name}"),
                eval::fn_reduction(&ffs_only.select(keep), &joint.select(keep))?,
            );
        }
    }

    let cfg = det.config();
    let net = det.network();
    let layer = det.bank().source_layer();
    let mut test_features = Mat64::zeros(0, det.bank().feature_dim());
    for x in test.samples.iter_rows() {
        test_features.push_row(&net.features(x, layer)?)?;
    }
    let bank_ens = train
        .samples
        .iter_rows()
        .map(|x| scoring::ens(net, x, cfg.novelty_layer, cfg.target_node))
        .collect::<Result<Vec<_>>>()?;
    let test_ens: Vec<f64> = records.iter().map(|r| r.ens_raw).collect();
    let projection = eval::pca_diagnostic(
        det.bank(),
        &test_features,
        Some(labels),
        Some(EnsColumn {
            bank: &bank_ens,
            test: &test_ens,
        }),
    )?;
    Ok((m, projection))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>, files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    files.push(path.to_path_buf());
    Ok(())
}

/// Heatmaps of the input contributions for the `n` highest joint scores.
fn write_heatmaps(
    det: &Detector,
    test: &DatasetTable,
    records: &[ScoreRecord],
    n: usize,
    shape: (usize, usize),
    dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    // Highest score first, ties to the lower index.
    order.sort_by(|a, b| {
        records[*b]
            .joint
            .total_cmp(&records[*a].joint)
            .then(a.cmp(b))
    });
    for &i in order.iter().take(n) {
        let x = test.row(i);
        let theta = det.network().explain(x, 0, NORMAL_NODE)?;
        let contrib = data::contributions(&theta, x)?;
        let path = dir.join(format!("heatmap_{i}.pgm"));
        data::save_heatmap(&contrib, shape, &path)?;
        files.push(path.clone());
        let mut side = path.into_os_string();
        side.push(".txt");
        files.push(PathBuf::from(side));
    }
    Ok(())
}

/// Runs every stage of `cfg`, writing artifacts into its output directory.
/// Errors are tagged with the stage that raised them.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate().map_err(|e| e.in_stage("load"))?;
    let out = cfg.output_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e).in_stage("load"))?;

    let mut log = RunLog {
        text: format!("seed = {}\n", cfg.seed),
    };
    let result = run_stages(cfg, &out, &mut log);
    let log_path = out.join("run.log");
    std::fs::write(&log_path, &log.text).map_err(|e| Error::io(&log_path, e).in_stage("write"))?;
    let mut output = result?;
    output.files.push(log_path);
    Ok(output)
}

fn run_stages(cfg: &RunConfig, out: &Path, log: &mut RunLog) -> Result<RunOutput> {
    let mut seeds = Seeds::new(cfg.seed);
    let mut files = Vec::new();

    let loaded = log.stage(
        "load",
        |l: &Loaded| {
            format!(
                "{} train normals, {} test samples, dim {}",
                l.train.len(),
                l.test.len(),
                l.train.dim()
            )
        },
        load(cfg, &seeds),
    )?;

    let gaussian = log.stage(
        "fit-gaussian",
        |g: &outliers::GaussianModel| format!("jitter {}", g.jitter),
        outliers::fit_gaussian(&loaded.train),
    )?;

    let count = if cfg.outliers.count == 0 {
        loaded.train.len()
    } else {
        cfg.outliers.count
    };
    let outlier_set = log.stage(
        "sample-outliers",
        |t: &DatasetTable| format!("{} samples", t.len()),
        outliers::sample_outliers(&gaussian, count, &mut seeds.outliers, cfg.outliers.clamp),
    )?;

    let net = log.stage(
        "train",
        |n: &BcosNetwork| format!("dims {:?}, {} epochs", n.dims(), cfg.train.epochs),
        build_network(cfg, loaded.train.dim(), &mut seeds.init).and_then(|init| {
            bcos::train(
                &init,
                &loaded.train,
                &outlier_set,
                &cfg.train_config(seeds.train),
            )
        }),
    )?;

    let bank = log.stage(
        "memory-bank",
        |b: &scoring::MemoryBank| format!("{} rows, layer {}", b.len(), b.source_layer()),
        cfg.score.validate(&net).and_then(|_| {
            let layer = cfg
                .score
                .feature_layer
                .unwrap_or_else(|| net.default_feature_layer());
            scoring::build_memory_bank(&net, &loaded.train, layer)
        }),
    )?;

    let detector = log.stage(
        "normalize",
        |d: &Detector| {
            let n = d.config().normalization.expect("fitted");
            format!(
                "ffs mean {} std {}, ens mean {} std {}",
                n.ffs.mean, n.ffs.std, n.ens.mean, n.ens.std
            )
        },
        Detector::with_bank(net, bank, &loaded.train, &cfg.score),
    )?;

    let records = log.stage(
        "score",
        |r: &Vec<ScoreRecord>| format!("{} samples", r.len()),
        detector.score_table(&loaded.test),
    )?;

    let (metrics, projection) = log.stage(
        "eval",
        |(m, _): &(MetricsReport, eval::ProjectionTable)| {
            format!("auroc {}", m.get("auroc").unwrap_or("?"))
        },
        evaluate(
            &detector,
            &loaded.train,
            &loaded.test,
            &records,
            loaded.kinds.as_deref(),
        ),
    )?;

    let labels = loaded.test.require_labels("evaluation")?.to_vec();
    log.stage(
        "write",
        |n: &usize| format!("{n} files"),
        (|| -> Result<usize> {
            if cfg.synthetic.is_some() {
                let p = out.join("train_normal.csv");
                data::save_csv(&loaded.train, &p)?;
                files.push(p);
                let p = out.join("test.csv");
                data::save_csv(&loaded.test, &p)?;
                files.push(p);
            }
            let p = out.join("outliers.csv");
            data::save_csv(&outlier_set, &p)?;
            files.push(p);
            let p = out.join("model.bcos");
            bcos::write_model(detector.network(), &p)?;
            files.push(p);
            write_file(
                &out.join("scores.csv"),
                scoring::scores_csv(&records, Some(&labels)),
                &mut files,
            )?;
            write_file(&out.join("metrics.txt"), metrics.to_text(), &mut files)?;
            write_file(&out.join("projection.csv"), projection.to_csv(), &mut files)?;
            if cfg.output.heatmaps > 0 {
                let shape = cfg
                    .output
                    .heatmap_shape
                    .or(loaded.test.shape_hint)
                    .ok_or_else(|| {
                        Error::config("heatmaps need a shape: set output.heatmap_shape")
                    })?;
                write_heatmaps(
                    &detector,
                    &loaded.test,
                    &records,
                    cfg.output.heatmaps,
                    shape,
                    out,
                    &mut files,
                )?;
            }
            Ok(files.len())
        })(),
    )?;

    Ok(RunOutput {
        metrics,
        records,
        labels,
        kinds: loaded.kinds,
        files,
    })
}
