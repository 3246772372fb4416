//! Familiarity (k-NN distance in feature space), explanation-based novelty,
//! and their normalised combination.
//!
//! * FFS: sum of Euclidean distances from a sample's features to the `k`
//!   nearest rows of the memory bank of training-normal features.
//! * ENS: `1 - cos(θ, a)` where `a` is the activation entering the chosen
//!   layer and `θ` is the network collapsed from that layer to one output
//!   node. The explanation of an input the network can fully account for
//!   points along the input; novel directions the weights never aligned to
//!   pull the two apart.
//! * Joint: `z(FFS) + w·z(ENS)`, z-scores fitted on training normals only.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bcos::{collapse, ActivationTrace, BcosNetwork, HEAD_DIM, NORMAL_NODE};
use crate::data::{DatasetTable, Label};
use crate::error::{Error, Result};
use crate::numerics::{cosine_unchecked, euclidean_unchecked, Mat64};

/// Floor applied to fitted standard deviations.
pub const STD_FLOOR: f64 = 1e-12;

/// Features of every training-normal sample at one layer. Read-only once built.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    features: Mat64,
    source_layer: usize,
}

impl MemoryBank {
    pub fn new(features: Mat64, source_layer: usize) -> Result<Self> {
        if features.rows() < 2 {
            return Err(Error::config(format!(
                "memory bank needs at least 2 rows, got {}",
                features.rows()
            )));
        }
        Ok(Self {
            features,
            source_layer,
        })
    }

    pub fn features(&self) -> &Mat64 {
        &self.features
    }

    pub fn source_layer(&self) -> usize {
        self.source_layer
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    /// Distances to the `k` nearest rows, ascending, ties to the lower row
    /// index. `skip` excludes one row (leave-one-out).
    pub fn nearest(
        &self,
        query: &[f64],
        k: usize,
        skip: Option<usize>,
    ) -> Result<Vec<(f64, usize)>> {
        if query.len() != self.feature_dim() {
            return Err(Error::dim(format!(
                "query has {} features, bank has {}",
                query.len(),
                self.feature_dim()
            )));
        }
        let available = self.len() - usize::from(skip.is_some_and(|s| s < self.len()));
        if k == 0 || k > available {
            return Err(Error::config(format!(
                "k = {k} needs between 1 and {available} bank rows"
            )));
        }
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (i, row) in self.features.iter_rows().enumerate() {
            if Some(i) == skip {
                continue;
            }
            let d = euclidean_unchecked(query, row);
            if best.len() == k && d >= best[k - 1].0 {
                continue;
            }
            // Rows arrive in index order, so an equal distance already held
            // keeps precedence.
            let at = best.partition_point(|(bd, _)| *bd <= d);
            best.insert(at, (d, i));
            best.truncate(k);
        }
        Ok(best)
    }
}

pub fn build_memory_bank(
    net: &BcosNetwork,
    normals: &DatasetTable,
    layer: usize,
) -> Result<MemoryBank> {
    if normals.len() < 2 {
        return Err(Error::config(format!(
            "memory bank needs at least 2 normal samples, got {}",
            normals.len()
        )));
    }
    let mut rows = Mat64::zeros(0, 0);
    for x in normals.samples.iter_rows() {
        rows.push_row(&net.features(x, layer)?)?;
    }
    MemoryBank::new(rows, layer)
}

/// Sum of distances to the `k` nearest bank rows.
pub fn ffs(bank: &MemoryBank, feature: &[f64], k: usize) -> Result<f64> {
    Ok(bank.nearest(feature, k, None)?.iter().map(|(d, _)| d).sum())
}

/// [`ffs`] with bank row `skip` left out; used to score the bank's own
/// samples without matching themselves.
pub fn ffs_leave_one_out(bank: &MemoryBank, feature: &[f64], k: usize, skip: usize) -> Result<f64> {
    Ok(bank
        .nearest(feature, k, Some(skip))?
        .iter()
        .map(|(d, _)| d)
        .sum())
}

/// Novelty of the activation entering `layer`, explained towards `node`.
pub fn ens(net: &BcosNetwork, x: &[f64], layer: usize, node: usize) -> Result<f64> {
    let (_, trace) = net.forward(x)?;
    ens_from_trace(net, &trace, layer, node)
}

pub fn ens_from_trace(
    net: &BcosNetwork,
    trace: &ActivationTrace,
    layer: usize,
    node: usize,
) -> Result<f64> {
    let theta = collapse(net, trace, layer, node)?;
    Ok(1.0 - cosine_unchecked(&theta, &trace.inputs[layer]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

impl ChannelStats {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::config(format!(
                "normalisation needs at least 2 values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "score {v} in normalisation input"
            )));
        }
        let first = values[0];
        if values.iter().all(|v| *v == first) {
            return Ok(Self {
                mean: first,
                std: STD_FLOOR,
            });
        }
        let (mean, std) = crate::numerics::mean_std(values);
        Ok(Self {
            mean,
            std: std.max(STD_FLOOR),
        })
    }

    pub fn z(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }
}

/// Fitted z-score statistics for the two score channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub ffs: ChannelStats,
    pub ens: ChannelStats,
}

pub fn fit_normalization(ffs_scores: &[f64], ens_scores: &[f64]) -> Result<Normalization> {
    Ok(Normalization {
        ffs: ChannelStats::fit(ffs_scores)?,
        ens: ChannelStats::fit(ens_scores)?,
    })
}

/// Scoring hyper-parameters. `normalization` is filled in by fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreConfig {
    pub k: usize,
    /// Layer whose input activation is checked for novelty (0 = raw input).
    pub novelty_layer: usize,
    pub target_node: usize,
    pub joint_weight: f64,
    /// Layer whose input activation feeds the memory bank; defaults to the
    /// input of the classification head.
    pub feature_layer: Option<usize>,
    #[serde(skip)]
    pub normalization: Option<Normalization>,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            k: 2,
            novelty_layer: 0,
            target_node: NORMAL_NODE,
            joint_weight: 1.0,
            feature_layer: None,
            normalization: None,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self, net: &BcosNetwork) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if self.target_node >= HEAD_DIM {
            return Err(Error::index(format!(
                "target node {} is not 0 or 1",
                self.target_node
            )));
        }
        if !self.joint_weight.is_finite() {
            return Err(Error::config("joint_weight must be finite"));
        }
        for (name, l) in [
            ("novelty_layer", Some(self.novelty_layer)),
            ("feature_layer", self.feature_layer),
        ] {
            if let Some(l) = l {
                if l >= net.depth() {
                    return Err(Error::index(format!(
                        "{name} {l} out of range for a {}-layer network",
                        net.depth()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Scores for one sample and where they came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRecord {
    pub ffs_raw: f64,
    pub ens_raw: f64,
    pub ffs_norm: f64,
    pub ens_norm: f64,
    pub joint: f64,
    pub layer_used: usize,
    pub node_used: usize,
}

pub fn joint_score(ffs_raw: f64, ens_raw: f64, cfg: &ScoreConfig) -> Result<ScoreRecord> {
    let norm = cfg
        .normalization
        .as_ref()
        .ok_or_else(|| Error::State("score normalisation has not been fitted".into()))?;
    let ffs_norm = norm.ffs.z(ffs_raw);
    let ens_norm = norm.ens.z(ens_raw);
    Ok(ScoreRecord {
        ffs_raw,
        ens_raw,
        ffs_norm,
        ens_norm,
        joint: ffs_norm + cfg.joint_weight * ens_norm,
        layer_used: cfg.novelty_layer,
        node_used: cfg.target_node,
    })
}

/// A trained network, its memory bank and fitted score configuration.
#[derive(Debug, Clone)]
pub struct Detector {
    net: BcosNetwork,
    bank: MemoryBank,
    cfg: ScoreConfig,
}

impl Detector {
    /// Builds the memory bank from `normals` and fits normalisation on their
    /// leave-one-out FFS and their ENS.
    pub fn fit(net: BcosNetwork, normals: &DatasetTable, cfg: &ScoreConfig) -> Result<Self> {
        cfg.validate(&net)?;
        let layer = cfg
            .feature_layer
            .unwrap_or_else(|| net.default_feature_layer());
        let bank = build_memory_bank(&net, normals, layer)?;
        Self::with_bank(net, bank, normals, cfg)
    }

    /// Fits normalisation for an already built bank of `normals`.
    pub fn with_bank(
        net: BcosNetwork,
        bank: MemoryBank,
        normals: &DatasetTable,
        cfg: &ScoreConfig,
    ) -> Result<Self> {
        cfg.validate(&net)?;
        if bank.len() != normals.len() {
            return Err(Error::dim(format!(
                "bank has {} rows for {} normals",
                bank.len(),
                normals.len()
            )));
        }
        let layer = bank.source_layer();
        let mut ffs_train = Vec::with_capacity(normals.len());
        let mut ens_train = Vec::with_capacity(normals.len());
        for (i, x) in normals.samples.iter_rows().enumerate() {
            let (_, trace) = net.forward(x)?;
            ffs_train.push(ffs_leave_one_out(&bank, &trace.inputs[layer], cfg.k, i)?);
            ens_train.push(ens_from_trace(
                &net,
                &trace,
                cfg.novelty_layer,
                cfg.target_node,
            )?);
        }
        let mut cfg = cfg.clone();
        cfg.feature_layer = Some(layer);
        cfg.normalization = Some(fit_normalization(&ffs_train, &ens_train)?);
        Ok(Self { net, bank, cfg })
    }

    pub fn network(&self) -> &BcosNetwork {
        &self.net
    }

    pub fn bank(&self) -> &MemoryBank {
        &self.bank
    }

    pub fn config(&self) -> &ScoreConfig {
        &self.cfg
    }

    /// Same detector with a different joint weight; normalisation is kept.
    pub fn with_joint_weight(mut self, w: f64) -> Self {
        self.cfg.joint_weight = w;
        self
    }

    pub fn score(&self, x: &[f64]) -> Result<ScoreRecord> {
        let (_, trace) = self.net.forward(x)?;
        let f = ffs(
            &self.bank,
            &trace.inputs[self.bank.source_layer()],
            self.cfg.k,
        )?;
        let e = ens_from_trace(
            &self.net,
            &trace,
            self.cfg.novelty_layer,
            self.cfg.target_node,
        )?;
        joint_score(f, e, &self.cfg)
    }

    pub fn score_table(&self, table: &DatasetTable) -> Result<Vec<ScoreRecord>> {
        table.samples.iter_rows().map(|x| self.score(x)).collect()
    }
}

pub const SCORES_HEADER: &str = "sample_id,ffs_raw,ens_raw,ffs_norm,ens_norm,joint,label";

/// Score table as CSV; the label cell is empty for unlabelled samples.
pub fn scores_csv(records: &[ScoreRecord], labels: Option<&[Label]>) -> String {
    let mut out = String::from(SCORES_HEADER);
    out.push('\n');
    for (i, r) in records.iter().enumerate() {
        let _ = write!(
            out,
            "{i},{},{},{},{},{},",
            r.ffs_raw, r.ens_raw, r.ffs_norm, r.ens_norm, r.joint
        );
        if let Some(l) = labels.and_then(|l| l.get(i)) {
            let _ = write!(out, "{l}");
        }
        out.push('\n');
    }
    out
}

/// One parsed row of a score table.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ScoreRow {
    pub sample_id: String,
    pub ffs_raw: f64,
    pub ens_raw: f64,
    pub ffs_norm: f64,
    pub ens_norm: f64,
    pub joint: f64,
    pub label: Option<Label>,
}

pub fn parse_scores_csv(text: &str, path: &Path) -> Result<Vec<ScoreRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != SCORES_HEADER {
        return Err(Error::parse(
            path,
            format!("expected header `{SCORES_HEADER}`"),
        ));
    }
    let mut rows = Vec::new();
    for row in reader.deserialize::<ScoreRow>() {
        let row = row.map_err(|e| Error::parse(path, e.to_string()))?;
        if row.label.is_some_and(|l| l > 1) {
            return Err(Error::parse(
                path,
                format!("sample {}: label is not 0 or 1", row.sample_id),
            ));
        }
        rows.push(row);
    }
    Ok(rows)
}
