//! Datasets and the on-disk formats they travel in.

mod csv;
mod pgm;

pub use self::csv::{load_csv, save_csv, write_csv_string};
pub use self::pgm::{
    contributions, load_pgm, read_pgm, save_heatmap, save_pgm, write_pgm, HeatmapScale, PgmImage,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Mat64;

/// Role a dataset plays in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    TrainNormal,
    TestNormal,
    TestAnomaly,
    Outlier,
    /// Mixed test set carrying per-row labels.
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::TrainNormal => "train_normal",
            Split::TestNormal => "test_normal",
            Split::TestAnomaly => "test_anomaly",
            Split::Outlier => "outlier",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "train_normal" => Split::TrainNormal,
            "test_normal" => Split::TestNormal,
            "test_anomaly" => Split::TestAnomaly,
            "outlier" => Split::Outlier,
            "test" => Split::Test,
            other => return Err(Error::config(format!("unknown split tag `{other}`"))),
        })
    }
}

/// Labels: 0 = normal, 1 = anomaly.
pub type Label = u8;

/// Fixed-width real vectors, one per row, with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTable {
    pub samples: Mat64,
    pub labels: Option<Vec<Label>>,
    pub split: Split,
    /// `(height, width)` when rows are flattened grayscale images.
    pub shape_hint: Option<(usize, usize)>,
}

impl DatasetTable {
    pub fn new(samples: Mat64, split: Split) -> Self {
        Self {
            samples,
            labels: None,
            split,
            shape_hint: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != self.samples.rows() {
            return Err(Error::dim(format!(
                "{} labels for {} samples",
                labels.len(),
                self.samples.rows()
            )));
        }
        if let Some(bad) = labels.iter().find(|l| **l > 1) {
            return Err(Error::config(format!("label {bad} is not 0 or 1")));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_shape(mut self, height: usize, width: usize) -> Result<Self> {
        if height * width != self.samples.cols() {
            return Err(Error::dim(format!(
                "shape {height}x{width} does not match row width {}",
                self.samples.cols()
            )));
        }
        self.shape_hint = Some((height, width));
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.samples.row(i)
    }

    /// Labels, or an error naming what needed them.
    pub fn require_labels(&self, purpose: &str) -> Result<&[Label]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::config(format!("{purpose} needs a labelled dataset")))
    }

    /// Rows whose label equals `label`.
    pub fn filter_label(&self, label: Label, split: Split) -> Result<DatasetTable> {
        let labels = self.require_labels("filtering by label")?;
        let rows: Vec<&[f64]> = self
            .samples
            .iter_rows()
            .zip(labels)
            .filter(|(_, l)| **l == label)
            .map(|(r, _)| r)
            .collect();
        let mut m = Mat64::zeros(0, self.dim());
        for r in rows {
            m.push_row(r)?;
        }
        let n = m.rows();
        let mut t = DatasetTable::new(m, split).with_labels(vec![label; n])?;
        t.shape_hint = self.shape_hint;
        Ok(t)
    }

    /// Stacks two tables with the same width. The result takes `split` and
    /// keeps labels only when both inputs have them.
    pub fn concat(&self, other: &DatasetTable, split: Split) -> Result<DatasetTable> {
        if self.dim() != other.dim() && !self.is_empty() && !other.is_empty() {
            return Err(Error::dim(format!(
                "cannot stack widths {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        let mut m = self.samples.clone();
        for r in other.samples.iter_rows() {
            m.push_row(r)?;
        }
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Ok(DatasetTable {
            samples: m,
            labels,
            split,
            shape_hint: self.shape_hint.or(other.shape_hint),
        })
    }
}
