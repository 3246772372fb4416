//! Acceptance checks. Runs as a plain program (`harness = false`) so every
//! criterion prints one PASS/FAIL line even when others fail.
//!
//!     cargo test --release --test acceptance

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use bcos_novelty::bcos::{gradients, loss, BcosLayer, BcosNetwork, HEAD_DIM};
use bcos_novelty::data::load_csv;
use bcos_novelty::eval::{auroc, candidate_thresholds, oracle_threshold, LabeledScores};
use bcos_novelty::numerics::{Mat64, Rng};
use bcos_novelty::pipeline::{run_pipeline, RunConfig, RunOutput};
use bcos_novelty::scoring::{ens, ffs, Detector, MemoryBank, ScoreConfig};
use bcos_novelty::synth::SampleKind;

const CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/synthetic.toml");

const COLLAPSE_TOL: f64 = 1e-9;
const COLLAPSE_BUDGET: Duration = Duration::from_secs(10);
const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;
const FD_COS_CUTOFF: f64 = 1e-6;
const FD_REL_FLOOR: f64 = 1e-6;
const FD_BUDGET: Duration = Duration::from_secs(30);
const ENS_SCALE_TOL: f64 = 1e-9;
const K_SWEEP_SPREAD: f64 = 0.02;
const NOVEL_MARGIN: f64 = 0.05;
const BENCHMARK_BUDGET: Duration = Duration::from_secs(300);
const PIPELINE_AUROC: f64 = 0.9;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

/// 2 to 4 layers, widths 4 to 16, two-node head, one B for the whole net.
fn random_net(rng: &mut Rng) -> BcosNetwork {
    let depth = 2 + rng.below(3);
    let mut dims: Vec<usize> = (0..depth).map(|_| 4 + rng.below(13)).collect();
    dims.push(HEAD_DIM);
    let b = [1.25, 1.5, 2.0][rng.below(3)];
    BcosNetwork::init(&dims, b, rng).unwrap()
}

/// Forward pass written out from the unit definition
/// `|cos(x, w)|^(B-1) · (w·x)`, sharing no code with the library.
fn reference_logits(net: &BcosNetwork, x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    for layer in net.layers() {
        let w = layer.weights();
        let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut out = vec![0.0; w.rows()];
        for (r, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            let mut nw = 0.0;
            for (c, ac) in a.iter().enumerate() {
                s += w.get(r, c) * ac;
                nw += w.get(r, c) * w.get(r, c);
            }
            let cos = s / (nw.sqrt() * na);
            *o = cos.abs().powf(layer.b() - 1.0) * s;
        }
        a = out;
    }
    a
}

fn collapse_faithfulness() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(101);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let net = random_net(&mut rng);
        let x = random_vec(&mut rng, net.input_dim());
        let logits = reference_logits(&net, &x);
        for (node, logit) in logits.iter().enumerate() {
            let theta = net.explain(&x, 0, node).unwrap();
            let lin: f64 = theta.iter().zip(&x).map(|(t, v)| t * v).sum();
            worst = worst.max((lin - logit).abs() / logit.abs().max(1.0));
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= COLLAPSE_TOL && elapsed < COLLAPSE_BUDGET,
        format!("500 nets, worst scaled error {worst:.2e} (tol {COLLAPSE_TOL:e}), {elapsed:.2?}"),
    )
}

fn with_weight(net: &BcosNetwork, l: usize, r: usize, c: usize, v: f64) -> BcosNetwork {
    let layers = net
        .layers()
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            let mut w = layer.weights().clone();
            if i == l {
                w.set(r, c, v);
            }
            BcosLayer::new(w, layer.b()).unwrap()
        })
        .collect();
    BcosNetwork::new(layers).unwrap()
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(202);
    let (mut worst, mut checked, mut skipped) = (0.0f64, 0usize, 0usize);
    let mut at = String::new();
    let (mut over, mut over_cos) = (0usize, 0.0f64);
    for _ in 0..100 {
        let net = random_net(&mut rng);
        let x = random_vec(&mut rng, net.input_dim());
        let label = rng.below(2);
        let analytic = gradients(&net, &x, label).unwrap();
        let (_, trace) = net.forward(&x).unwrap();
        for (l, layer) in net.layers().iter().enumerate() {
            let w = layer.weights();
            for r in 0..w.rows() {
                // |c|^(B-1) has no derivative at c = 0.
                if trace.cosines[l][r].abs() < FD_COS_CUTOFF {
                    skipped += w.cols();
                    continue;
                }
                for c in 0..w.cols() {
                    let v = w.get(r, c);
                    let lp = loss(
                        &with_weight(&net, l, r, c, v + FD_STEP).logits(&x).unwrap(),
                        label,
                    )
                    .unwrap();
                    let lm = loss(
                        &with_weight(&net, l, r, c, v - FD_STEP).logits(&x).unwrap(),
                        label,
                    )
                    .unwrap();
                    let numeric = (lp - lm) / (2.0 * FD_STEP);
                    let a = analytic.layers[l].get(r, c);
                    let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_REL_FLOOR);
                    if rel > FD_TOL {
                        over += 1;
                        over_cos = over_cos.max(trace.cosines[l][r].abs());
                    }
                    if rel > worst {
                        worst = rel;
                        at = format!(
                            "analytic {a:.6e} vs numeric {numeric:.6e}, |cos| {:.2e}, B {}",
                            trace.cosines[l][r].abs(),
                            layer.b()
                        );
                    }
                    checked += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= FD_TOL && elapsed < FD_BUDGET,
        format!(
            "100 triples, {checked} weights ({skipped} skipped), worst relative error {worst:.2e} (tol {FD_TOL:e}; {at}); {over} over tolerance, all in units with |cos| <= {over_cos:.2e}; {elapsed:.2?}"
        ),
    )
}

fn brute_force_ffs(rows: &[Vec<f64>], q: &[f64], k: usize) -> f64 {
    let mut d: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let sq: f64 = r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            (sq.sqrt(), i)
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d[..k].iter().map(|(v, _)| v).sum()
}

fn pairwise_auroc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut twice_wins, mut pairs) = (0u64, 0u64);
    for (s1, l1) in scores.iter().zip(labels) {
        for (s0, l0) in scores.iter().zip(labels) {
            if *l1 == 1 && *l0 == 0 {
                pairs += 1;
                twice_wins += if s1 > s0 { 2 } else { u64::from(s1 == s0) };
            }
        }
    }
    twice_wins as f64 / (2 * pairs) as f64
}

/// Every candidate cut scored from scratch; first (lowest) best wins.
/// Balanced accuracy compared as `tp·neg + tn·pos`, which is exact.
fn enumerate_threshold(scores: &[f64], labels: &[u8]) -> (f64, usize, usize) {
    let pos = labels.iter().filter(|l| **l == 1).count();
    let neg = labels.len() - pos;
    let mut best: Option<(usize, f64, usize, usize)> = None;
    for t in candidate_thresholds(scores) {
        let tp = scores
            .iter()
            .zip(labels)
            .filter(|(s, l)| **l == 1 && **s > t)
            .count();
        let tn = scores
            .iter()
            .zip(labels)
            .filter(|(s, l)| **l == 0 && **s <= t)
            .count();
        let key = tp * neg + tn * pos;
        if best.is_none_or(|b| key > b.0) {
            best = Some((key, t, tp, tn));
        }
    }
    let (_, t, tp, tn) = best.unwrap();
    (t, tp, tn)
}

/// Scores on a coarse grid half the time so ties are common.
fn random_labeled(rng: &mut Rng, n: usize) -> (Vec<f64>, Vec<u8>) {
    let coarse = rng.below(2) == 0;
    let mut labels: Vec<u8> = (0..n).map(|_| rng.below(2) as u8).collect();
    labels[0] = 0;
    labels[1] = 1;
    let scores = labels
        .iter()
        .map(|l| {
            let s = rng.normal() + f64::from(*l);
            if coarse {
                (s * 2.0).round() / 2.0
            } else {
                s
            }
        })
        .collect();
    (scores, labels)
}

fn oracle_equivalences() -> Outcome {
    let mut rng = Rng::new(303);
    let mut failures = Vec::new();

    for q in 0..1000 {
        let n = 2 + rng.below(60);
        let d = 1 + rng.below(12);
        let grid = rng.below(2) == 0;
        let draw = |rng: &mut Rng| {
            let v = rng.normal();
            if grid {
                v.round()
            } else {
                v
            }
        };
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| draw(&mut rng)).collect())
            .collect();
        let query: Vec<f64> = (0..d).map(|_| draw(&mut rng)).collect();
        let k = 1 + rng.below(n.min(5));
        let bank = MemoryBank::new(Mat64::from_rows(&rows).unwrap(), 0).unwrap();
        let got = ffs(&bank, &query, k).unwrap();
        if got != brute_force_ffs(&rows, &query, k) {
            failures.push(format!("ffs query {q}"));
        }
    }

    for set in 0..200 {
        let n = 2 + rng.below(199);
        let (scores, labels) = random_labeled(&mut rng, n);
        let ls = LabeledScores::indexed(scores.clone(), labels.clone()).unwrap();
        if auroc(&ls).unwrap() != pairwise_auroc(&scores, &labels) {
            failures.push(format!("auroc set {set}"));
        }
        let c = oracle_threshold(&ls).unwrap();
        if (c.threshold, c.tp, c.tn) != enumerate_threshold(&scores, &labels) {
            failures.push(format!("threshold set {set}"));
        }
    }
    check(
        failures.is_empty(),
        format!(
            "1000 ffs queries, 200 auroc sets, 200 threshold sets; mismatches: {}",
            if failures.is_empty() {
                "none".to_string()
            } else {
                failures.join(", ")
            }
        ),
    )
}

fn ens_bounds() -> Outcome {
    let mut rng = Rng::new(404);
    let (mut lo, mut hi, mut worst_scale) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for _ in 0..100 {
        let net = random_net(&mut rng);
        for _ in 0..100 {
            let x = random_vec(&mut rng, net.input_dim());
            let layer = rng.below(net.depth());
            let node = rng.below(HEAD_DIM);
            let e = ens(&net, &x, layer, node).unwrap();
            lo = lo.min(e);
            hi = hi.max(e);
            for alpha in [0.5, 2.0, 10.0] {
                let xs: Vec<f64> = x.iter().map(|v| alpha * v).collect();
                worst_scale = worst_scale.max((ens(&net, &xs, layer, node).unwrap() - e).abs());
            }
        }
    }
    check(
        lo >= 0.0 && hi <= 2.0 && worst_scale <= ENS_SCALE_TOL,
        format!(
            "10000 pairs, ENS in [{lo:.4}, {hi:.4}], worst |ENS(ax) - ENS(x)| {worst_scale:.2e} (tol {ENS_SCALE_TOL:e})"
        ),
    )
}

struct Run {
    dir: tempfile::TempDir,
    output: RunOutput,
    elapsed: Duration,
}

fn run_bundled() -> Run {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::load(Path::new(CONFIG)).unwrap();
    cfg.output.dir = dir.path().to_path_buf();
    let start = Instant::now();
    let output = run_pipeline(&cfg).unwrap();
    Run {
        dir,
        output,
        elapsed: start.elapsed(),
    }
}

fn metric(run: &Run, key: &str) -> f64 {
    run.output
        .metrics
        .get_f64(key)
        .unwrap_or_else(|| panic!("metric {key} missing"))
}

/// Reloads the emitted model and data and rescores with k = 1..5.
fn k_sweep(run: &Run) -> Outcome {
    let cfg = RunConfig::load(Path::new(CONFIG)).unwrap();
    let dir = run.dir.path();
    let net = bcos_novelty::bcos::read_model(&dir.join("model.bcos")).unwrap();
    let train = load_csv(&dir.join("train_normal.csv")).unwrap();
    let test = load_csv(&dir.join("test.csv")).unwrap();
    let labels = test.labels.clone().unwrap();
    let mut aurocs = Vec::new();
    for k in 1..=5 {
        let sc = ScoreConfig {
            k,
            ..cfg.score.clone()
        };
        let records = Detector::fit(net.clone(), &train, &sc)
            .unwrap()
            .score_table(&test)
            .unwrap();
        let joint =
            LabeledScores::indexed(records.iter().map(|r| r.joint).collect(), labels.clone())
                .unwrap();
        aurocs.push(auroc(&joint).unwrap());
    }
    let spread = aurocs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - aurocs.iter().copied().fold(f64::INFINITY, f64::min);
    let reproduces = aurocs[cfg.score.k - 1] == metric(run, "auroc");
    check(
        spread <= K_SWEEP_SPREAD && reproduces,
        format!(
            "joint AUROC for k=1..5 {:.4?}, spread {spread:.4} (tol {K_SWEEP_SPREAD}), k={} reproduces pipeline: {reproduces}",
            aurocs, cfg.score.k
        ),
    )
}

/// Residual of `x` outside the normal subspace, relative to its projection.
/// The subspace is recovered from the training normals alone.
fn off_subspace_ratio(basis: &[Vec<f64>], x: &[f64]) -> f64 {
    let mut inside = vec![0.0; x.len()];
    for b in basis {
        let c: f64 = b.iter().zip(x).map(|(u, v)| u * v).sum();
        for (i, u) in inside.iter_mut().zip(b) {
            *i += c * u;
        }
    }
    let out: f64 = x
        .iter()
        .zip(&inside)
        .map(|(v, i)| (v - i).powi(2))
        .sum::<f64>()
        .sqrt();
    out / inside.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Gram–Schmidt over training rows until `rank` directions are found.
fn span(rows: &Mat64, rank: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for r in rows.iter_rows() {
        let mut v = r.to_vec();
        for b in &basis {
            let c: f64 = b.iter().zip(&v).map(|(u, w)| u * w).sum();
            v.iter_mut().zip(b).for_each(|(w, u)| *w -= c * u);
        }
        let n = v.iter().map(|w| w * w).sum::<f64>().sqrt();
        if n > 1e-6 * r.iter().map(|w| w * w).sum::<f64>().sqrt() {
            basis.push(v.iter().map(|w| w / n).collect());
        }
        if basis.len() == rank {
            break;
        }
    }
    basis
}

fn novel_benchmark(run: &Run) -> Outcome {
    let cfg = RunConfig::load(Path::new(CONFIG)).unwrap();
    let bench = cfg.synthetic.clone().unwrap();
    let kinds = run.output.kinds.as_ref().unwrap();
    let train = load_csv(&run.dir.path().join("train_normal.csv")).unwrap();
    let test = load_csv(&run.dir.path().join("test.csv")).unwrap();

    // The benchmark itself: normals span exactly subspace_dim directions,
    // familiar anomalies stay inside, novel ones leave it.
    let basis = span(&train.samples, bench.dim);
    let mut worst_in: f64 = 0.0;
    let mut novel_min = f64::INFINITY;
    for (x, kind) in test.samples.iter_rows().zip(kinds) {
        let r = off_subspace_ratio(&basis[..bench.subspace_dim], x);
        match kind {
            SampleKind::Novel => novel_min = novel_min.min(r),
            _ => worst_in = worst_in.max(r),
        }
    }
    let constructed = basis.len() == bench.subspace_dim
        && worst_in < 1e-9
        && novel_min > 0.5 * bench.novel_energy;

    let gain = metric(run, "auroc_novel") - metric(run, "auroc_ffs_novel");
    let fnr_all = metric(run, "fn_reduction");
    let fnr_novel = metric(run, "fn_reduction_novel");
    check(
        constructed && gain >= NOVEL_MARGIN && fnr_all > 0.0 && fnr_novel > 0.0 && run.elapsed < BENCHMARK_BUDGET,
        format!(
            "rank {} normals, in-subspace residual {worst_in:.1e}, novel residual >= {novel_min:.2}; novel AUROC joint {:.4} vs ffs {:.4} (gain {gain:.4}, need {NOVEL_MARGIN}); fn_reduction all {fnr_all:.4}, novel {fnr_novel:.4}; {:.2?}",
            basis.len(),
            metric(run, "auroc_novel"),
            metric(run, "auroc_ffs_novel"),
            run.elapsed
        ),
    )
}

fn gaussian_pipeline(run: &Run) -> Outcome {
    let a = metric(run, "auroc");
    check(
        a >= PIPELINE_AUROC,
        format!(
            "combined AUROC {a:.4} (need {PIPELINE_AUROC}), {} test samples",
            run.output.labels.len()
        ),
    )
}

fn read_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        files.insert(
            p.strip_prefix(dir).unwrap().to_path_buf(),
            std::fs::read(&p).unwrap(),
        );
    }
    files
}

fn determinism(a: &Run, b: &Run) -> Outcome {
    let (fa, fb) = (read_tree(a.dir.path()), read_tree(b.dir.path()));
    let differing: Vec<String> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    check(
        differing.is_empty() && !fa.is_empty(),
        format!(
            "{} files compared, differing: {}",
            fa.len(),
            if differing.is_empty() {
                "none".to_string()
            } else {
                differing.join(", ")
            }
        ),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, outcome: Outcome| {
        match &outcome {
            Ok(d) => println!("PASS {name}: {d}"),
            Err(d) => println!("FAIL {name}: {d}"),
        }
        results.push((name, outcome));
    };

    report("1 collapse faithfulness", collapse_faithfulness());
    report("2 gradient correctness", gradient_correctness());
    report("3 oracle equivalences", oracle_equivalences());
    report("4 ENS bounds and invariances", ens_bounds());

    let first = run_bundled();
    let second = run_bundled();
    report("5 k-sweep", k_sweep(&first));
    report("6 novel-feature benchmark", novel_benchmark(&first));
    report("7 Gaussian-outlier pipeline", gaussian_pipeline(&first));
    report("8 determinism", determinism(&first, &second));

    let failed: Vec<&str> = results
        .iter()
        .filter(|(_, o)| o.is_err())
        .map(|(n, _)| *n)
        .collect();
    println!(
        "\n{} of {} acceptance criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
