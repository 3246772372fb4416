//! AUROC, oracle-threshold confusion analysis, false-negative reduction and
//! PCA diagnostics. Higher scores always mean "more anomalous".

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::data::Label;
use crate::error::{Error, Result};
use crate::numerics::{Mat64, Pca};
use crate::scoring::{ffs, ffs_leave_one_out, ChannelStats, MemoryBank};

/// Scores with their labels (0 normal, 1 anomaly) and sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScores {
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
    pub ids: Vec<String>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<Label>, ids: Vec<String>) -> Result<Self> {
        if scores.len() != labels.len() || scores.len() != ids.len() {
            return Err(Error::dim(format!(
                "{} scores, {} labels, {} ids",
                scores.len(),
                labels.len(),
                ids.len()
            )));
        }
        if let Some(l) = labels.iter().find(|l| **l > 1) {
            return Err(Error::config(format!("label {l} is not 0 or 1")));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::NonFinite("NaN score".into()));
        }
        Ok(Self {
            scores,
            labels,
            ids,
        })
    }

    /// Ids are the row positions `0..n`.
    pub fn indexed(scores: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        let ids = (0..scores.len()).map(|i| i.to_string()).collect();
        Self::new(scores, labels, ids)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|l| **l == 1).count();
        (pos, self.labels.len() - pos)
    }

    fn require_both_classes(&self) -> Result<(usize, usize)> {
        let (pos, neg) = self.class_counts();
        if pos == 0 || neg == 0 {
            return Err(Error::config(format!(
                "need both classes, got {pos} anomalies and {neg} normals"
            )));
        }
        Ok((pos, neg))
    }

    /// Subset keeping the rows where `keep` is true.
    pub fn select(&self, keep: impl Fn(usize) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|i| keep(*i)).collect();
        Self {
            scores: idx.iter().map(|i| self.scores[*i]).collect(),
            labels: idx.iter().map(|i| self.labels[*i]).collect(),
            ids: idx.iter().map(|i| self.ids[*i].clone()).collect(),
        }
    }
}

fn cmp_f64(a: &f64, b: &f64) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Probability that a random anomaly outscores a random normal, ties
/// counting one half; computed from average ranks (Mann–Whitney U).
pub fn auroc(ls: &LabeledScores) -> Result<f64> {
    let (pos, neg) = ls.require_both_classes()?;
    let mut order: Vec<usize> = (0..ls.len()).collect();
    order.sort_by(|a, b| cmp_f64(&ls.scores[*a], &ls.scores[*b]));

    // Sum of (doubled) average ranks of the anomalies; doubling keeps every
    // quantity an integer.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && ls.scores[order[j]] == ls.scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j average to (i+1+j)/2.
        let avg2 = (i + 1 + j) as u128;
        let tied_pos = order[i..j].iter().filter(|k| ls.labels[**k] == 1).count() as u128;
        rank_sum2 += avg2 * tied_pos;
        i = j;
    }
    let p = pos as u128;
    // 2U = 2·R - p(p+1)
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * pos * neg) as f64)
}

/// Confusion counts at a threshold; `score > threshold` is flagged anomalous.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionReport {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub fnr: f64,
    pub fpr: f64,
}

impl ConfusionReport {
    pub fn at(ls: &LabeledScores, threshold: f64) -> Self {
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for (s, l) in ls.scores.iter().zip(&ls.labels) {
            match (*s > threshold, *l == 1) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        Self::from_counts(threshold, tp, fp, tn, fn_)
    }

    fn from_counts(threshold: f64, tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let rate = |a: usize, b: usize| {
            if a + b == 0 {
                0.0
            } else {
                a as f64 / (a + b) as f64
            }
        };
        Self {
            threshold,
            tp,
            fp,
            tn,
            fn_,
            fnr: rate(fn_, tp),
            fpr: rate(fp, tn),
        }
    }

    pub fn balanced_accuracy(&self) -> f64 {
        let tpr = self.tp as f64 / (self.tp + self.fn_).max(1) as f64;
        let tnr = self.tn as f64 / (self.tn + self.fp).max(1) as f64;
        0.5 * (tpr + tnr)
    }

    /// `tp·N + tn·P`, proportional to balanced accuracy with integer precision.
    fn balanced_key(&self) -> u128 {
        let p = (self.tp + self.fn_) as u128;
        let n = (self.tn + self.fp) as u128;
        self.tp as u128 * n + self.tn as u128 * p
    }
}

/// Candidate cuts: one below every score, the midpoints between adjacent
/// distinct scores, and one above every score. Ascending.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(cmp_f64);
    sorted.dedup();
    let (Some(lo), Some(hi)) = (sorted.first().copied(), sorted.last().copied()) else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push(lo - 1.0);
    out.extend(sorted.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    out.push(hi + 1.0);
    out
}

/// Threshold maximising balanced accuracy; ties go to the lower threshold.
pub fn oracle_threshold(ls: &LabeledScores) -> Result<ConfusionReport> {
    let (pos, neg) = ls.require_both_classes()?;
    let mut order: Vec<usize> = (0..ls.len()).collect();
    order.sort_by(|a, b| cmp_f64(&ls.scores[*a], &ls.scores[*b]));
    let thresholds = candidate_thresholds(&ls.scores);

    // Sweep upward: everything at or below the threshold is called normal.
    let (mut tn, mut fn_) = (0usize, 0usize);
    let mut cursor = 0;
    let mut best: Option<ConfusionReport> = None;
    for t in thresholds {
        while cursor < order.len() && ls.scores[order[cursor]] <= t {
            if ls.labels[order[cursor]] == 1 {
                fn_ += 1;
            } else {
                tn += 1;
            }
            cursor += 1;
        }
        let report = ConfusionReport::from_counts(t, pos - fn_, neg - tn, tn, fn_);
        if best.is_none_or(|b| report.balanced_key() > b.balanced_key()) {
            best = Some(report);
        }
    }
    best.ok_or_else(|| Error::config("no scores"))
}

/// Relative drop in false negatives from `base` to `joint`, each at its own
/// oracle threshold. 0 when `base` has no false negatives.
pub fn fn_reduction(base: &LabeledScores, joint: &LabeledScores) -> Result<f64> {
    if base.ids != joint.ids {
        return Err(Error::config("score sets cover different sample ids"));
    }
    if base.labels != joint.labels {
        return Err(Error::config("score sets disagree on labels"));
    }
    let fb = oracle_threshold(base)?.fn_;
    let fj = oracle_threshold(joint)?.fn_;
    if fb == 0 {
        return Ok(0.0);
    }
    Ok((fb as f64 - fj as f64) / fb as f64)
}

/// ENS values accompanying the bank and test rows of a PCA diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct EnsColumn<'a> {
    pub bank: &'a [f64],
    pub test: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointSet {
    Bank,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPoint {
    pub set: PointSet,
    pub index: usize,
    pub pc1: f64,
    pub pc2: f64,
    /// Sum of distances to the two nearest bank rows in feature space
    /// (leave-one-out for bank rows).
    pub knn2: f64,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionTable {
    pub points: Vec<ProjectionPoint>,
    pub variances: [f64; 2],
}

impl ProjectionTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("set,index,pc1,pc2,knn2_distance,label\n");
        for p in &self.points {
            let set = match p.set {
                PointSet::Bank => "bank",
                PointSet::Test => "test",
            };
            let _ = write!(out, "{set},{},{},{},{},", p.index, p.pc1, p.pc2, p.knn2);
            if let Some(l) = p.label {
                let _ = write!(out, "{l}");
            }
            out.push('\n');
        }
        out
    }
}

/// Two-component PCA fitted on the bank rows, applied to bank and test rows.
///
/// With `ens` supplied, each row is extended by its ENS z-scored against the
/// bank's ENS values before fitting and projecting.
pub fn pca_diagnostic(
    bank: &MemoryBank,
    test_features: &Mat64,
    test_labels: Option<&[Label]>,
    ens: Option<EnsColumn<'_>>,
) -> Result<ProjectionTable> {
    let d = bank.feature_dim();
    if test_features.rows() > 0 && test_features.cols() != d {
        return Err(Error::dim(format!(
            "test features have {} columns, bank has {d}",
            test_features.cols()
        )));
    }
    if let Some(l) = test_labels {
        if l.len() != test_features.rows() {
            return Err(Error::dim("test labels do not match test rows"));
        }
    }
    let (bank_rows, test_rows) = match ens {
        None => (bank.features().clone(), test_features.clone()),
        Some(col) => {
            if col.bank.len() != bank.len() || col.test.len() != test_features.rows() {
                return Err(Error::dim("ENS column lengths do not match the rows"));
            }
            let stats = ChannelStats::fit(col.bank)?;
            (
                augment(bank.features(), col.bank, &stats)?,
                augment(test_features, col.test, &stats)?,
            )
        }
    };
    if bank_rows.cols() < 2 {
        return Err(Error::dim(
            "pca diagnostic needs at least 2 feature columns",
        ));
    }
    let pca = Pca::fit(&bank_rows, 2)?;
    let bank_proj = pca.transform(&bank_rows)?;
    let test_proj = if test_rows.rows() > 0 {
        pca.transform(&test_rows)?
    } else {
        Mat64::zeros(0, 2)
    };

    let mut points = Vec::with_capacity(bank.len() + test_features.rows());
    let k = 2.min(bank.len() - 1);
    for i in 0..bank.len() {
        points.push(ProjectionPoint {
            set: PointSet::Bank,
            index: i,
            pc1: bank_proj.get(i, 0),
            pc2: bank_proj.get(i, 1),
            knn2: ffs_leave_one_out(bank, bank.features().row(i), k, i)?,
            label: Some(0),
        });
    }
    for i in 0..test_features.rows() {
        points.push(ProjectionPoint {
            set: PointSet::Test,
            index: i,
            pc1: test_proj.get(i, 0),
            pc2: test_proj.get(i, 1),
            knn2: ffs(bank, test_features.row(i), 2)?,
            label: test_labels.map(|l| l[i]),
        });
    }
    Ok(ProjectionTable {
        points,
        variances: [pca.variances[0], pca.variances[1]],
    })
}

fn augment(rows: &Mat64, ens: &[f64], stats: &ChannelStats) -> Result<Mat64> {
    let mut out = Mat64::zeros(0, 0);
    let mut buf = Vec::with_capacity(rows.cols() + 1);
    for (r, e) in rows.iter_rows().zip(ens) {
        buf.clear();
        buf.extend_from_slice(r);
        buf.push(stats.z(*e));
        out.push_row(&buf)?;
    }
    if rows.rows() == 0 {
        return Ok(Mat64::zeros(0, rows.cols() + 1));
    }
    Ok(out)
}

/// Key-value metrics document.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    entries: Vec<(String, String)>,
}

impl MetricsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    /// Adds the standard confusion keys.
    pub fn push_confusion(&mut self, c: &ConfusionReport) {
        self.push("threshold", c.threshold);
        self.push("tp", c.tp);
        self.push("fp", c.fp);
        self.push("tn", c.tn);
        self.push("fn", c.fn_);
        self.push("fnr", c.fnr);
        self.push("fpr", c.fpr);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once(" = ").ok_or_else(|| {
                Error::config(format!("metrics line {} is not `key = value`", i + 1))
            })?;
            r.push(k.trim(), v.trim());
        }
        Ok(r)
    }
}

/// Metrics comparing the joint score against its two channels on one
/// labelled set:
///
/// `auroc`, the joint score's oracle confusion (`threshold`, `tp`, `fp`,
/// `tn`, `fn`, `fnr`, `fpr`), `fn_reduction` of joint over familiarity alone,
/// `auroc_ffs`, `auroc_ens` and `fn_ffs`.
pub fn channel_metrics(
    joint: &LabeledScores,
    ffs: &LabeledScores,
    ens: &LabeledScores,
) -> Result<MetricsReport> {
    let mut m = MetricsReport::new();
    m.push("auroc", auroc(joint)?);
    m.push_confusion(&oracle_threshold(joint)?);
    m.push("fn_reduction", fn_reduction(ffs, joint)?);
    m.push("auroc_ffs", auroc(ffs)?);
    m.push("auroc_ens", auroc(ens)?);
    m.push("fn_ffs", oracle_threshold(ffs)?.fn_);
    Ok(m)
}
