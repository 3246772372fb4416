//! `bcos-novelty`: train, score, explain and evaluate from the shell.
//!
//! Every subcommand takes `--config <file.toml>`. Its keys are the long flag
//! names with `-` replaced by `_`; flags given on the command line win, and
//! relative paths in the file resolve against the file's directory.
//! `pipeline` is the exception: its config is a full run config.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use bcos_novelty::bcos::{self, BcosNetwork, TrainConfig};
use bcos_novelty::data;
use bcos_novelty::eval::{self, LabeledScores};
use bcos_novelty::outliers::{fit_gaussian, sample_outliers};
use bcos_novelty::pipeline::{run_pipeline, RunConfig, Seeds};
use bcos_novelty::scoring::{self, Detector, ScoreConfig};
use bcos_novelty::{Error, Result};

#[derive(Parser)]
#[command(
    name = "bcos-novelty",
    version,
    about = "Familiarity plus explanation-based novelty anomaly detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a B-cos classifier on normals against outliers.
    Train(TrainArgs),
    /// Fit a Gaussian to normals and sample an outlier set from it.
    GenOutliers(GenOutliersArgs),
    /// Score a test set with a trained model and its memory bank.
    Score(ScoreArgs),
    /// Explain one sample and render its contribution heatmap.
    Explain(ExplainArgs),
    /// Compute AUROC and oracle-threshold metrics from a score file.
    Eval(EvalArgs),
    /// Run every stage from a run config.
    Pipeline(PipelineArgs),
}

/// Per-subcommand plumbing: resolve file paths, then let flags override.
macro_rules! layered {
    ($t:ident { paths: [$($p:ident),*], values: [$($v:ident),*] }) => {
        impl $t {
            fn resolve_against(mut self, base: &Path) -> Self {
                $(self.$p = self.$p.map(|p| base.join(p));)*
                self
            }

            fn over(self, file: Self) -> Self {
                Self {
                    config: self.config,
                    $($p: self.$p.or(file.$p),)*
                    $($v: self.$v.or(file.$v),)*
                }
            }

            fn merged(self) -> Result<Self> {
                let Some(path) = self.config.clone() else {
                    return Ok(self);
                };
                let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                let file: Self = toml::from_str(&text).map_err(|e| Error::Parse {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                let base = path.parent().unwrap_or(Path::new("."));
                Ok(self.over(file.resolve_against(base)))
            }
        }
    };
}

fn need<T>(value: Option<T>, key: &str) -> Result<T> {
    value.ok_or_else(|| {
        Error::Config(format!(
            "missing --{} (or `{key}` in the config file)",
            key.replace('_', "-")
        ))
    })
}

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| e.in_stage(name))
}

#[derive(Args, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
#[command(allow_negative_numbers = true)]
struct TrainArgs {
    /// TOML file supplying any of the flags below.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Training normals (CSV).
    #[arg(long)]
    normals: Option<PathBuf>,
    /// Outliers (CSV), e.g. from `gen-outliers`.
    #[arg(long)]
    outliers: Option<PathBuf>,
    /// Where to write the model.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Alignment exponent for every layer.
    #[arg(long)]
    b: Option<f64>,
    /// Gradient step size.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Passes over the combined training set.
    #[arg(long)]
    epochs: Option<usize>,
    /// Samples per gradient step.
    #[arg(long)]
    batch_size: Option<usize>,
    /// L2 shrinkage applied to every weight each step.
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Root seed; initial weights and batch order derive from it.
    #[arg(long)]
    seed: Option<u64>,
}

layered!(TrainArgs {
    paths: [normals, outliers, out],
    values: [
        hidden,
        b,
        learning_rate,
        epochs,
        batch_size,
        weight_decay,
        seed
    ]
});

fn train(args: TrainArgs) -> Result<()> {
    let a = stage("load", || args.merged())?;
    let seed = stage("load", || need(a.seed, "seed"))?;
    let out = stage("load", || need(a.out.clone(), "out"))?;
    let (normals, outliers) = stage("load", || {
        Ok((
            data::load_csv(&need(a.normals.clone(), "normals")?)?,
            data::load_csv(&need(a.outliers.clone(), "outliers")?)?,
        ))
    })?;

    let defaults = TrainConfig::default();
    let mut seeds = Seeds::new(seed);
    let cfg = TrainConfig {
        learning_rate: a.learning_rate.unwrap_or(defaults.learning_rate),
        epochs: a.epochs.unwrap_or(defaults.epochs),
        batch_size: a.batch_size.unwrap_or(defaults.batch_size),
        seed: seeds.train,
        weight_decay: a.weight_decay.unwrap_or(defaults.weight_decay),
    };
    let net = stage("train", || {
        let mut dims = vec![normals.dim()];
        dims.extend(a.hidden.clone().unwrap_or_else(|| vec![32]));
        dims.push(bcos::HEAD_DIM);
        let net = BcosNetwork::init(&dims, a.b.unwrap_or(bcos::DEFAULT_B), &mut seeds.init)?;
        let (net, history) = bcos::train_with_history(&net, &normals, &outliers, &cfg)?;
        if let Some(last) = history.last() {
            eprintln!("final training loss {last}");
        }
        Ok(net)
    })?;
    stage("write", || bcos::write_model(&net, &out))?;
    println!("wrote {}", out.display());
    Ok(())
}

#[derive(Args, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
#[command(allow_negative_numbers = true)]
struct GenOutliersArgs {
    /// TOML file supplying any of the flags below.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Normals (CSV) to fit the Gaussian to.
    #[arg(long)]
    normals: Option<PathBuf>,
    /// Where to write the outliers (CSV).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of outliers; defaults to the number of normals.
    #[arg(long)]
    count: Option<usize>,
    /// Element-wise range `lo,hi` to clamp samples to.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    clamp: Option<Vec<f64>>,
    /// Seed for the sampler.
    #[arg(long)]
    seed: Option<u64>,
}

layered!(GenOutliersArgs {
    paths: [normals, out],
    values: [count, clamp, seed]
});

fn gen_outliers(args: GenOutliersArgs) -> Result<()> {
    let a = stage("load", || args.merged())?;
    let seed = stage("load", || need(a.seed, "seed"))?;
    let out = stage("load", || need(a.out.clone(), "out"))?;
    let clamp = stage("load", || match a.clamp.as_deref() {
        None => Ok(None),
        Some([lo, hi]) => Ok(Some((*lo, *hi))),
        Some(_) => Err(Error::Config("clamp needs exactly two values".into())),
    })?;
    let normals = stage("load", || {
        data::load_csv(&need(a.normals.clone(), "normals")?)
    })?;
    let model = stage("fit-gaussian", || fit_gaussian(&normals))?;
    let mut rng = Seeds::new(seed).outliers;
    let outliers = stage("sample-outliers", || {
        sample_outliers(&model, a.count.unwrap_or(normals.len()), &mut rng, clamp)
    })?;
    stage("write", || data::save_csv(&outliers, &out))?;
    println!("wrote {} outliers to {}", outliers.len(), out.display());
    Ok(())
}

#[derive(Args, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
#[command(allow_negative_numbers = true)]
struct ScoreArgs {
    /// TOML file supplying any of the flags below.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Trained model file, e.g. from `train`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Training normals (CSV); they form the memory bank.
    #[arg(long)]
    normals: Option<PathBuf>,
    /// Samples to score (CSV, optionally labelled).
    #[arg(long)]
    test: Option<PathBuf>,
    /// Where to write the scores (CSV).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Neighbours summed in the familiarity score.
    #[arg(long)]
    k: Option<usize>,
    /// Layer whose input is checked for novelty.
    #[arg(long)]
    novelty_layer: Option<usize>,
    /// Output node whose explanation is used.
    #[arg(long)]
    target_node: Option<usize>,
    /// Layer whose input feeds the memory bank.
    #[arg(long)]
    feature_layer: Option<usize>,
    /// Weight of the novelty channel in the joint score.
    #[arg(long)]
    joint_weight: Option<f64>,
}

layered!(ScoreArgs {
    paths: [model, normals, test, out],
    values: [k, novelty_layer, target_node, feature_layer, joint_weight]
});

fn score(args: ScoreArgs) -> Result<()> {
    let a = stage("load", || args.merged())?;
    let out = stage("load", || need(a.out.clone(), "out"))?;
    let (net, normals, test) = stage("load", || {
        Ok((
            bcos::read_model(&need(a.model.clone(), "model")?)?,
            data::load_csv(&need(a.normals.clone(), "normals")?)?,
            data::load_csv(&need(a.test.clone(), "test")?)?,
        ))
    })?;
    let d = ScoreConfig::default();
    let cfg = ScoreConfig {
        k: a.k.unwrap_or(d.k),
        novelty_layer: a.novelty_layer.unwrap_or(d.novelty_layer),
        target_node: a.target_node.unwrap_or(d.target_node),
        joint_weight: a.joint_weight.unwrap_or(d.joint_weight),
        feature_layer: a.feature_layer.or(d.feature_layer),
        normalization: None,
    };
    let det = stage("normalize", || Detector::fit(net, &normals, &cfg))?;
    let records = stage("score", || det.score_table(&test))?;
    let text = scoring::scores_csv(&records, test.labels.as_deref());
    stage("write", || {
        std::fs::write(&out, text).map_err(|e| Error::Io {
            path: out.clone(),
            source: e,
        })
    })?;
    println!("wrote {} scores to {}", records.len(), out.display());
    Ok(())
}

#[derive(Args, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
#[command(allow_negative_numbers = true)]
struct ExplainArgs {
    /// TOML file supplying any of the flags below.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Trained model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Input sample: a `.pgm` image or a CSV table.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Row of a CSV input to explain.
    #[arg(long)]
    row: Option<usize>,
    /// Layer the explanation starts from (0 = raw input).
    #[arg(long)]
    layer: Option<usize>,
    /// Output node to explain (0 = normal, 1 = outlier).
    #[arg(long)]
    node: Option<usize>,
    /// Heatmap path (P5); a `.txt` sidecar records its scaling.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Heatmap `height,width` when the input carries no shape.
    #[arg(long, value_delimiter = ',')]
    shape: Option<Vec<usize>>,
}

layered!(ExplainArgs {
    paths: [model, input, out],
    values: [row, layer, node, shape]
});

fn explain(args: ExplainArgs) -> Result<()> {
    let a = stage("load", || args.merged())?;
    let out = stage("load", || need(a.out.clone(), "out"))?;
    let (net, table) = stage("load", || {
        let input = need(a.input.clone(), "input")?;
        let table = if input
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
        {
            data::load_pgm(&input)?
        } else {
            data::load_csv(&input)?
        };
        Ok((bcos::read_model(&need(a.model.clone(), "model")?)?, table))
    })?;
    let row = a.row.unwrap_or(0);
    let layer = a.layer.unwrap_or(0);
    let node = a.node.unwrap_or(bcos::NORMAL_NODE);
    let shape = stage("load", || match (a.shape.as_deref(), table.shape_hint) {
        (Some([h, w]), _) => Ok((*h, *w)),
        (Some(_), _) => Err(Error::Config("shape needs exactly two values".into())),
        (None, Some(s)) => Ok(s),
        (None, None) => Err(Error::Config(
            "input has no shape; pass --shape height,width".into(),
        )),
    })?;
    let (contrib, ens) = stage("score", || {
        if row >= table.len() {
            return Err(Error::Index(format!(
                "row {row} of a {}-row table",
                table.len()
            )));
        }
        let x = table.row(row);
        let (_, trace) = net.forward(x)?;
        let theta = net.explain(x, layer, node)?;
        let ens = scoring::ens_from_trace(&net, &trace, layer, node)?;
        Ok((data::contributions(&theta, &trace.inputs[layer])?, ens))
    })?;
    let scale = stage("write", || data::save_heatmap(&contrib, shape, &out))?;
    println!("ens = {ens}");
    println!("contribution range = [{}, {}]", scale.min, scale.max);
    println!("wrote {}", out.display());
    Ok(())
}

#[derive(Args, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
#[command(allow_negative_numbers = true)]
struct EvalArgs {
    /// TOML file supplying any of the flags below.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Labelled score file from `score` or `pipeline`.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Where to write the metrics; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

layered!(EvalArgs {
    paths: [scores, out],
    values: []
});

fn evaluate(args: EvalArgs) -> Result<()> {
    let a = stage("load", || args.merged())?;
    let rows = stage("load", || {
        let path = need(a.scores.clone(), "scores")?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        scoring::parse_scores_csv(&text, &path)
    })?;
    let metrics = stage("eval", || {
        let labels = rows
            .iter()
            .map(|r| {
                r.label
                    .ok_or_else(|| Error::Config(format!("sample {} has no label", r.sample_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let ids: Vec<String> = rows.iter().map(|r| r.sample_id.clone()).collect();
        let column = |f: fn(&scoring::ScoreRow) -> f64| {
            LabeledScores::new(rows.iter().map(f).collect(), labels.clone(), ids.clone())
        };
        eval::channel_metrics(
            &column(|r| r.joint)?,
            &column(|r| r.ffs_norm)?,
            &column(|r| r.ens_norm)?,
        )
    })?;
    match a.out {
        Some(out) => {
            stage("write", || {
                std::fs::write(&out, metrics.to_text()).map_err(|e| Error::Io {
                    path: out.clone(),
                    source: e,
                })
            })?;
            println!("wrote {}", out.display());
        }
        None => print!("{}", metrics.to_text()),
    }
    Ok(())
}

#[derive(Args)]
struct PipelineArgs {
    /// Run config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `[output] dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn pipeline(args: PipelineArgs) -> Result<()> {
    let mut cfg = stage("load", || RunConfig::load(&args.config))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = args.output_dir {
        // Relative to the working directory, like any other flag.
        cfg.output.dir = std::env::current_dir()
            .map_err(|e| Error::Io {
                path: ".".into(),
                source: e,
            })?
            .join(dir);
    }
    let out = run_pipeline(&cfg)?;
    print!("{}", out.metrics.to_text());
    for f in &out.files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::GenOutliers(a) => gen_outliers(a),
        Command::Score(a) => score(a),
        Command::Explain(a) => explain(a),
        Command::Eval(a) => evaluate(a),
        Command::Pipeline(a) => pipeline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                if !msg.contains(&s.to_string()) {
                    msg.push_str(&format!(": {s}"));
                }
                source = s.source();
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
