//! End-to-end runs of the `bcos-novelty` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bcos_novelty::data::{load_csv, save_csv};
use bcos_novelty::eval::MetricsReport;
use bcos_novelty::scoring::parse_scores_csv;
use bcos_novelty::synth::SubspaceBenchmark;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bcos-novelty"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small benchmark written as `train.csv` and `test.csv`.
fn workspace() -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let bench = SubspaceBenchmark {
        dim: 6,
        subspace_dim: 2,
        clusters: 2,
        train_normals: 60,
        test_normals: 20,
        familiar_anomalies: 10,
        novel_anomalies: 10,
        ..Default::default()
    };
    let data = bench.generate(3).unwrap();
    let train = dir.path().join("train.csv");
    let test = dir.path().join("test.csv");
    save_csv(&data.train, &train).unwrap();
    save_csv(&data.test, &test).unwrap();
    (dir, train, test)
}

#[test]
fn subcommands_chain_into_a_full_run() {
    let (dir, train, test) = workspace();
    let d = dir.path();
    let (outliers, model, scores, metrics, heat) = (
        d.join("outliers.csv"),
        d.join("model.bcos"),
        d.join("scores.csv"),
        d.join("metrics.txt"),
        d.join("heat.pgm"),
    );

    let o = ok(&[
        "gen-outliers",
        "--normals",
        s(&train),
        "--out",
        s(&outliers),
        "--seed",
        "1",
    ]);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("wrote 60 outliers"));
    assert_eq!(load_csv(&outliers).unwrap().len(), 60);

    ok(&[
        "train",
        "--normals",
        s(&train),
        "--outliers",
        s(&outliers),
        "--out",
        s(&model),
        "--hidden",
        "8",
        "--epochs",
        "20",
        "--seed",
        "1",
    ]);
    let net = bcos_novelty::bcos::read_model(&model).unwrap();
    assert_eq!(net.dims(), vec![6, 8, 2]);

    ok(&[
        "score",
        "--model",
        s(&model),
        "--normals",
        s(&train),
        "--test",
        s(&test),
        "--out",
        s(&scores),
        "--k",
        "2",
    ]);
    let rows = parse_scores_csv(&std::fs::read_to_string(&scores).unwrap(), &scores).unwrap();
    assert_eq!(rows.len(), 40);
    assert!(rows.iter().all(|r| r.label.is_some()));

    ok(&["eval", "--scores", s(&scores), "--out", s(&metrics)]);
    let m = MetricsReport::parse(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    let a = m.get_f64("auroc").unwrap();
    assert!((0.0..=1.0).contains(&a));
    let printed = ok(&["eval", "--scores", s(&scores)]);
    assert_eq!(
        String::from_utf8(printed.stdout).unwrap(),
        std::fs::read_to_string(&metrics).unwrap()
    );

    let o = ok(&[
        "explain",
        "--model",
        s(&model),
        "--input",
        s(&test),
        "--row",
        "25",
        "--out",
        s(&heat),
        "--shape",
        "2,3",
    ]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("ens"));
    let img = bcos_novelty::data::load_pgm(&heat).unwrap();
    assert_eq!(img.shape_hint, Some((2, 3)));
    assert!(heat.with_extension("pgm.txt").exists());
}

#[test]
fn config_file_matches_flags() {
    let (dir, train, _) = workspace();
    let d = dir.path();
    let outliers = d.join("outliers.csv");
    ok(&[
        "gen-outliers",
        "--normals",
        s(&train),
        "--out",
        s(&outliers),
        "--seed",
        "4",
    ]);

    let by_flags = d.join("a.bcos");
    ok(&[
        "train",
        "--normals",
        s(&train),
        "--outliers",
        s(&outliers),
        "--out",
        s(&by_flags),
        "--hidden",
        "5,4",
        "--b",
        "2",
        "--learning-rate",
        "0.1",
        "--epochs",
        "5",
        "--batch-size",
        "8",
        "--weight-decay",
        "0.001",
        "--seed",
        "9",
    ]);

    // Relative paths resolve against the config file's directory.
    let cfg = d.join("train.toml");
    std::fs::write(
        &cfg,
        "normals = \"train.csv\"\noutliers = \"outliers.csv\"\nout = \"b.bcos\"\n\
         hidden = [5, 4]\nb = 2.0\nlearning_rate = 0.1\nepochs = 5\nbatch_size = 8\n\
         weight_decay = 0.001\nseed = 9\n",
    )
    .unwrap();
    ok(&["train", "--config", s(&cfg)]);
    assert_eq!(
        std::fs::read(&by_flags).unwrap(),
        std::fs::read(d.join("b.bcos")).unwrap()
    );

    // A flag overrides the file.
    let c = d.join("c.bcos");
    ok(&["train", "--config", s(&cfg), "--seed", "10", "--out", s(&c)]);
    assert_ne!(
        std::fs::read(&by_flags).unwrap(),
        std::fs::read(&c).unwrap()
    );

    std::fs::write(&cfg, "epoch = 5\n").unwrap();
    let o = run(&["train", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));
}

#[test]
fn failures_name_the_stage_and_exit_nonzero() {
    let (dir, train, test) = workspace();
    let missing = dir.path().join("nope.bcos");
    let o = run(&[
        "score",
        "--model",
        s(&missing),
        "--normals",
        s(&train),
        "--test",
        s(&test),
        "--out",
        s(&dir.path().join("x.csv")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error:"), "{err}");
    assert!(err.contains("stage `load` failed"), "{err}");
    assert!(err.contains("nope.bcos"), "{err}");

    let o = run(&[
        "train",
        "--normals",
        s(&train),
        "--seed",
        "1",
        "--out",
        s(&missing),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--outliers"), "{}", stderr(&o));

    let o = run(&[
        "gen-outliers",
        "--normals",
        s(&test),
        "--out",
        s(&dir.path().join("o.csv")),
        "--seed",
        "1",
        "--count",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("stage `sample-outliers` failed"),
        "{}",
        stderr(&o)
    );

    // Usage errors come from the argument parser.
    assert_eq!(run(&["train", "--epochs", "many"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn pipeline_subcommand_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 2\n[network]\nhidden = [6]\n[train]\nepochs = 5\n\
         [synthetic]\ndim = 6\nsubspace_dim = 2\nclusters = 2\ntrain_normals = 40\n\
         test_normals = 10\nfamiliar_anomalies = 5\nnovel_anomalies = 5\n\
         [output]\ndir = \"out\"\nheatmaps = 1\nheatmap_shape = [2, 3]\n",
    )
    .unwrap();
    let o = ok(&["pipeline", "--config", s(&cfg)]);
    let out = dir.path().join("out");
    for f in [
        "model.bcos",
        "scores.csv",
        "metrics.txt",
        "projection.csv",
        "run.log",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert!(String::from_utf8_lossy(&o.stdout).contains("auroc"));

    let other = dir.path().join("other");
    ok(&[
        "pipeline",
        "--config",
        s(&cfg),
        "--seed",
        "3",
        "--output-dir",
        s(&other),
    ]);
    let log = std::fs::read_to_string(other.join("run.log")).unwrap();
    assert!(log.starts_with("seed = 3"), "{log}");
}
