//! Two-class logistic loss, its analytic gradient through the B-cos
//! nonlinearity, and mini-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::{BcosNetwork, HEAD_DIM};
use crate::data::DatasetTable;
use crate::error::{Error, Result};
use crate::numerics::{norm, Mat64, Rng, NORM_EPS};

/// Alignment below which a unit's local derivative is taken to be zero.
const COS_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// L2 penalty `λ/2·‖W‖²` added to the loss of every batch.
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 200,
            batch_size: 32,
            seed: 0,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::config(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// Per-layer weight gradients of the loss for one or more samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub layers: Vec<Mat64>,
}

fn check_label(label: usize) -> Result<()> {
    if label >= HEAD_DIM {
        return Err(Error::index(format!("label {label} is not 0 or 1")));
    }
    Ok(())
}

/// Logistic loss on each output node against a one-hot target: node
/// `label` should fire positive, the other node negative.
pub fn loss(logits: &[f64], label: usize) -> Result<f64> {
    check_label(label)?;
    Ok((0..HEAD_DIM)
        .map(|j| softplus(if j == label { -logits[j] } else { logits[j] }))
        .sum())
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Analytic gradient of [`loss`] with respect to every weight.
///
/// For a unit with output `o`, pre-activation `s = w·a` and alignment `c`:
/// `∂o/∂w = B|c|^(B-1)·a + (1-B)·o·w/‖w‖²` and
/// `∂o/∂a = B|c|^(B-1)·w + (1-B)·o·a/‖a‖²`.
pub fn gradients(net: &BcosNetwork, x: &[f64], label: usize) -> Result<Gradients> {
    let mut layers: Vec<Mat64> = net
        .layers()
        .iter()
        .map(|l| Mat64::zeros(l.out_dim(), l.in_dim()))
        .collect();
    let loss = accumulate_gradients(net, x, label, &mut layers)?;
    Ok(Gradients { loss, layers })
}

/// Adds the gradient for one sample into `acc` and returns its loss.
fn accumulate_gradients(
    net: &BcosNetwork,
    x: &[f64],
    label: usize,
    acc: &mut [Mat64],
) -> Result<f64> {
    check_label(label)?;
    let (logits, trace) = net.forward(x)?;
    let mut delta: Vec<f64> = (0..HEAD_DIM)
        .map(|j| sigmoid(logits[j]) - if j == label { 1.0 } else { 0.0 })
        .collect();

    for l in (0..net.depth()).rev() {
        let layer = &net.layers()[l];
        let b = layer.b();
        let a = &trace.inputs[l];
        let na = norm(a);
        let mut delta_in = vec![0.0; layer.in_dim()];
        if na >= NORM_EPS {
            let grad = &mut acc[l];
            for (u, w) in layer.weights().iter_rows().enumerate() {
                let g = delta[u];
                let c = trace.cosines[l][u];
                if g == 0.0 || c.abs() < COS_EPS {
                    continue;
                }
                let nw = norm(w);
                if nw < NORM_EPS {
                    continue;
                }
                let o = trace.outputs[l][u];
                let ds = b * c.abs().powf(b - 1.0);
                let kw = (1.0 - b) * o / (nw * nw);
                let ka = (1.0 - b) * o / (na * na);
                let grow = grad.row_mut(u);
                for k in 0..w.len() {
                    grow[k] += g * (ds * a[k] + kw * w[k]);
                    delta_in[k] += g * (ds * w[k] + ka * a[k]);
                }
            }
        }
        delta = delta_in;
    }

    loss(&logits, label)
}

/// Mini-batch gradient descent on normals (label 0) against outliers
/// (label 1). Returns the trained copy; `net` is left untouched.
pub fn train(
    net: &BcosNetwork,
    normals: &DatasetTable,
    outliers: &DatasetTable,
    cfg: &TrainConfig,
) -> Result<BcosNetwork> {
    Ok(train_with_history(net, normals, outliers, cfg)?.0)
}

/// Like [`train`], also returning the mean training loss after each epoch.
pub fn train_with_history(
    net: &BcosNetwork,
    normals: &DatasetTable,
    outliers: &DatasetTable,
    cfg: &TrainConfig,
) -> Result<(BcosNetwork, Vec<f64>)> {
    cfg.validate()?;
    if normals.is_empty() || outliers.is_empty() {
        return Err(Error::config(format!(
            "training needs both classes, got {} normals and {} outliers",
            normals.len(),
            outliers.len()
        )));
    }
    for table in [normals, outliers] {
        if table.dim() != net.input_dim() {
            return Err(Error::dim(format!(
                "network expects {} inputs, dataset has {} columns",
                net.input_dim(),
                table.dim()
            )));
        }
    }

    let samples: Vec<(&[f64], usize)> = normals
        .samples
        .iter_rows()
        .map(|r| (r, 0))
        .chain(outliers.samples.iter_rows().map(|r| (r, 1)))
        .collect();

    let mut model = net.clone();
    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut acc: Vec<Mat64> = net
        .layers()
        .iter()
        .map(|l| Mat64::zeros(l.out_dim(), l.in_dim()))
        .collect();

    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            for g in acc.iter_mut() {
                g.data_mut().fill(0.0);
            }
            for &i in batch {
                let (x, y) = samples[i];
                accumulate_gradients(&model, x, y, &mut acc)?;
            }
            let step = cfg.learning_rate / batch.len() as f64;
            let shrink = cfg.learning_rate * cfg.weight_decay;
            for (layer, g) in model.layers_mut().iter_mut().zip(&acc) {
                for (w, d) in layer.weights_mut().data_mut().iter_mut().zip(g.as_slice()) {
                    *w -= step * d + shrink * *w;
                }
            }
        }
        let total: f64 = samples
            .iter()
            .map(|(x, y)| loss(&model.logits(x)?, *y))
            .sum::<Result<f64>>()?;
        let mean = total / samples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(
                "training loss diverged; lower the learning rate".into(),
            ));
        }
        history.push(mean);
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bcos::{BcosLayer, DEFAULT_B};
    use crate::data::Split;

    fn random_net(rng: &mut Rng, dims: &[usize], b: f64) -> BcosNetwork {
        BcosNetwork::init(dims, b, rng).unwrap()
    }

    /// Central differences of the loss with respect to every weight.
    fn numeric_gradients(net: &BcosNetwork, x: &[f64], label: usize, h: f64) -> Vec<Mat64> {
        let mut out = Vec::new();
        for l in 0..net.depth() {
            let w = net.layers()[l].weights();
            let mut g = Mat64::zeros(w.rows(), w.cols());
            for r in 0..w.rows() {
                for c in 0..w.cols() {
                    let mut plus = net.clone();
                    let v = plus.layers()[l].weights().get(r, c);
                    plus.layers_mut()[l].weights_mut().set(r, c, v + h);
                    let mut minus = net.clone();
                    minus.layers_mut()[l].weights_mut().set(r, c, v - h);
                    let lp = loss(&plus.logits(x).unwrap(), label).unwrap();
                    let lm = loss(&minus.logits(x).unwrap(), label).unwrap();
                    g.set(r, c, (lp - lm) / (2.0 * h));
                }
            }
            out.push(g);
        }
        out
    }

    #[test]
    fn loss_matches_logistic() {
        let z: [f64; 2] = [0.3, -1.2];
        let want = (1.0 + (-z[0]).exp()).ln() + (1.0 + z[1].exp()).ln();
        assert!((loss(&z, 0).unwrap() - want).abs() < 1e-15);
        let want = (1.0 + z[0].exp()).ln() + (1.0 + (-z[1]).exp()).ln();
        assert!((loss(&z, 1).unwrap() - want).abs() < 1e-15);
        // Large margins neither overflow nor lose the small tail.
        assert_eq!(loss(&[800.0, -800.0], 0).unwrap(), 0.0);
        assert_eq!(loss(&[800.0, -800.0], 1).unwrap(), 1600.0);
        assert!(loss(&z, 2).is_err());
    }

    #[test]
    fn analytic_matches_finite_differences() {
        let mut rng = Rng::new(21);
        for trial in 0..20 {
            let dims = [3 + trial % 4, 5, 4, 2];
            let net = random_net(&mut rng, &dims, DEFAULT_B);
            let x: Vec<f64> = (0..dims[0]).map(|_| rng.normal()).collect();
            let label = trial % 2;
            let analytic = gradients(&net, &x, label).unwrap();
            let numeric = numeric_gradients(&net, &x, label, 1e-5);
            for (a, n) in analytic.layers.iter().zip(&numeric) {
                for (ga, gn) in a.as_slice().iter().zip(n.as_slice()) {
                    let rel = (ga - gn).abs() / ga.abs().max(gn.abs()).max(1e-6);
                    assert!(rel <= 1e-4, "trial {trial}: analytic {ga} vs numeric {gn}");
                }
            }
        }
    }

    #[test]
    fn orthogonal_unit_contributes_nothing() {
        // Unit 0 of the first layer is orthogonal to the input.
        let l1 = BcosLayer::new(
            Mat64::from_rows(&[[0.0, 1.0], [1.0, 0.5]]).unwrap(),
            DEFAULT_B,
        )
        .unwrap();
        let l2 = BcosLayer::new(
            Mat64::from_rows(&[[1.0, 1.0], [-1.0, 0.5]]).unwrap(),
            DEFAULT_B,
        )
        .unwrap();
        let net = BcosNetwork::new(vec![l1, l2]).unwrap();
        let g = gradients(&net, &[2.0, 0.0], 1).unwrap();
        assert_eq!(g.layers[0].row(0), &[0.0, 0.0]);
        assert!(g.layers[0].row(1).iter().any(|v| *v != 0.0));
    }

    fn toy_tables(rng: &mut Rng, n: usize) -> (DatasetTable, DatasetTable) {
        // Directionally separable: normals around (3, 0.5), outliers around (0.5, 3).
        let normals: Vec<[f64; 2]> = (0..n)
            .map(|_| [3.0 + 0.5 * rng.normal(), 0.5 + 0.5 * rng.normal()])
            .collect();
        let outliers: Vec<[f64; 2]> = (0..n)
            .map(|_| [0.5 + 0.5 * rng.normal(), 3.0 + 0.5 * rng.normal()])
            .collect();
        (
            DatasetTable::new(Mat64::from_rows(&normals).unwrap(), Split::TrainNormal),
            DatasetTable::new(Mat64::from_rows(&outliers).unwrap(), Split::Outlier),
        )
    }

    fn accuracy(net: &BcosNetwork, normals: &DatasetTable, outliers: &DatasetTable) -> f64 {
        let mut correct = 0;
        for r in normals.samples.iter_rows() {
            let z = net.logits(r).unwrap();
            correct += usize::from(z[0] > z[1]);
        }
        for r in outliers.samples.iter_rows() {
            let z = net.logits(r).unwrap();
            correct += usize::from(z[1] > z[0]);
        }
        correct as f64 / (normals.len() + outliers.len()) as f64
    }

    #[test]
    fn learns_separable_toy() {
        let mut rng = Rng::new(5);
        let (normals, outliers) = toy_tables(&mut rng, 100);
        let net = random_net(&mut rng, &[2, 8, 2], DEFAULT_B);
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 200,
            batch_size: 16,
            seed: 9,
            weight_decay: 0.0,
        };
        let trained = train(&net, &normals, &outliers, &cfg).unwrap();
        assert!(accuracy(&trained, &normals, &outliers) >= 0.95);
    }

    #[test]
    fn full_batch_loss_decreases_monotonically() {
        // 1D, linearly separable: positives vs negatives on the real line.
        let normals = DatasetTable::new(
            Mat64::from_rows(&[[1.0], [2.0], [1.5], [0.7]]).unwrap(),
            Split::TrainNormal,
        );
        let outliers = DatasetTable::new(
            Mat64::from_rows(&[[-1.0], [-0.5], [-2.0], [-1.2]]).unwrap(),
            Split::Outlier,
        );
        let mut rng = Rng::new(3);
        let net = random_net(&mut rng, &[1, 3, 2], DEFAULT_B);
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 100,
            batch_size: 8,
            seed: 1,
            weight_decay: 0.0,
        };
        let (_, history) = train_with_history(&net, &normals, &outliers, &cfg).unwrap();
        for pair in history.windows(2) {
            assert!(
                pair[1] <= pair[0],
                "loss rose from {} to {}",
                pair[0],
                pair[1]
            );
        }
        assert!(history.last().unwrap() < history.first().unwrap());
    }

    #[test]
    fn zero_epochs_is_identity_and_seed_is_deterministic() {
        let mut rng = Rng::new(8);
        let (normals, outliers) = toy_tables(&mut rng, 20);
        let net = random_net(&mut rng, &[2, 4, 2], DEFAULT_B);
        let mut cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert_eq!(train(&net, &normals, &outliers, &cfg).unwrap(), net);
        cfg.epochs = 5;
        let a = train(&net, &normals, &outliers, &cfg).unwrap();
        let b = train(&net, &normals, &outliers, &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, net);
    }

    #[test]
    fn rejects_empty_split_and_bad_config() {
        let mut rng = Rng::new(8);
        let (normals, _) = toy_tables(&mut rng, 5);
        let empty = DatasetTable::new(Mat64::zeros(0, 2), Split::Outlier);
        let net = random_net(&mut rng, &[2, 4, 2], DEFAULT_B);
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(&net, &normals, &empty, &cfg),
            Err(Error::Config(_))
        ));
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..cfg
        };
        assert!(train(&net, &normals, &normals, &bad).is_err());
        let bad = TrainConfig {
            weight_decay: -1.0,
            ..TrainConfig::default()
        };
        assert!(train(&net, &normals, &normals, &bad).is_err());
    }

    #[test]
    fn decay_alone_shrinks_weights_geometrically() {
        // A zero head passes no gradient back, leaving only the decay.
        let mut rng = Rng::new(2);
        let (normals, outliers) = toy_tables(&mut rng, 4);
        let mut net = random_net(&mut rng, &[2, 3, 2], DEFAULT_B);
        net.layers_mut()[1].weights_mut().data_mut().fill(0.0);
        let cfg = TrainConfig {
            learning_rate: 0.1,
            epochs: 3,
            batch_size: 8,
            seed: 0,
            weight_decay: 0.5,
        };
        let trained = train(&net, &normals, &outliers, &cfg).unwrap();
        let factor = 0.95f64.powi(3);
        for (a, b) in trained.layers()[0]
            .weights()
            .as_slice()
            .iter()
            .zip(net.layers()[0].weights().as_slice())
        {
            assert!((a - b * factor).abs() < 1e-12, "{a} vs {}", b * factor);
        }
    }
}
