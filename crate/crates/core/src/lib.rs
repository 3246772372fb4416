//! Anomaly detection with bias-free B-cos networks.
//!
//! A test sample is scored on two channels:
//!
//! * **familiarity** ([`scoring::ffs`]): distance in feature space to the
//!   nearest training normals; large when the familiar features look wrong;
//! * **novelty** ([`scoring::ens`]): how far the network's own linear
//!   explanation of an activation points away from that activation; large
//!   when the input carries directions the weights never aligned to.
//!
//! The two are z-scored on training normals and summed ([`scoring::joint_score`]).
//! The network is trained against a synthetic outlier class drawn from a
//! Gaussian fitted to the normals ([`outliers`]). [`eval`] provides AUROC,
//! oracle-threshold confusion analysis and a PCA diagnostic, and
//! [`pipeline::run_pipeline`] chains everything from a TOML config.
//!
//! The `examples/` directory has one runnable program per capability:
//! `bcos_collapse`, `train_classifier`, `gaussian_outliers`, `joint_scoring`,
//! `false_negative_analysis`, `pca_diagnostic`, `explanation_heatmap`,
//! `k_sweep` and `pipeline`.

#![allow(clippy::needless_range_loop)]

pub mod bcos;
pub mod data;
mod error;
pub mod eval;
pub mod numerics;
pub mod outliers;
pub mod pipeline;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
