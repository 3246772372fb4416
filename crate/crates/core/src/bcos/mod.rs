//! Bias-free B-cos networks.
//!
//! A B-cos unit with weights `w` maps an input `x` to
//! `‖x‖·‖w‖·|cos(x, w)|^B·sign(cos(x, w))`, which is the same as the linear
//! response `w·x` rescaled by `|cos(x, w)|^(B-1)`. For a fixed input every
//! unit is therefore linear with an *effective weight* `|cos|^(B-1)·w`, and a
//! whole stack of such units collapses into one input-specific linear map.
//! [`collapse`] computes that map from an [`ActivationTrace`]; its dot
//! product with the explained activation reproduces the logit exactly.

mod serialize;
mod train;

pub use serialize::{read_model, write_model, FORMAT_VERSION, MAGIC};
pub use train::{gradients, loss, train, train_with_history, Gradients, TrainConfig};

use crate::error::{Error, Result};
use crate::numerics::{dot_unchecked, norm, Mat64, Rng, NORM_EPS};

/// Default alignment exponent.
pub const DEFAULT_B: f64 = 1.5;
/// Index of the "normal" output node.
pub const NORMAL_NODE: usize = 0;
/// Index of the "outlier" output node.
pub const OUTLIER_NODE: usize = 1;
/// Width of the classification head.
pub const HEAD_DIM: usize = 2;

fn check_b(b: f64) -> Result<()> {
    if !b.is_finite() || b <= 1.0 {
        return Err(Error::config(format!("B exponent must be > 1, got {b}")));
    }
    Ok(())
}

fn check_pair(x: &[f64], w: &[f64]) -> Result<()> {
    if x.len() != w.len() {
        return Err(Error::dim(format!(
            "input has {} elements, weights have {}",
            x.len(),
            w.len()
        )));
    }
    Ok(())
}

/// Alignment of `x` and `w` and the factor `|cos|^(B-1)` that turns `w` into
/// the unit's effective weight. Both are 0 when either norm is below the floor.
fn unit_scale(x: &[f64], w: &[f64], b: f64) -> (f64, f64, f64) {
    let s = dot_unchecked(x, w);
    let nx = norm(x);
    let nw = norm(w);
    if nx < NORM_EPS || nw < NORM_EPS {
        return (s, 0.0, 0.0);
    }
    let c = (s / (nx * nw)).clamp(-1.0, 1.0);
    (s, c, c.abs().powf(b - 1.0))
}

/// Output of a single B-cos unit.
pub fn bcos_unit(x: &[f64], w: &[f64], b: f64) -> Result<f64> {
    check_pair(x, w)?;
    check_b(b)?;
    let (s, _, scale) = unit_scale(x, w, b);
    Ok(scale * s)
}

/// `w` rescaled by `|cos(x, w)|^(B-1)`; its dot product with `x` equals
/// [`bcos_unit`].
pub fn effective_weight(x: &[f64], w: &[f64], b: f64) -> Result<Vec<f64>> {
    check_pair(x, w)?;
    check_b(b)?;
    let (_, _, scale) = unit_scale(x, w, b);
    Ok(w.iter().map(|v| v * scale).collect())
}

/// One fully-connected B-cos layer (no bias).
#[derive(Debug, Clone, PartialEq)]
pub struct BcosLayer {
    weights: Mat64,
    b: f64,
}

impl BcosLayer {
    /// `weights` is `out_dim × in_dim`.
    pub fn new(weights: Mat64, b: f64) -> Result<Self> {
        check_b(b)?;
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::config("layer must have non-zero dimensions"));
        }
        Ok(Self { weights, b })
    }

    /// Uniform initialisation in `[-1/√in, 1/√in]`.
    pub fn init(in_dim: usize, out_dim: usize, b: f64, rng: &mut Rng) -> Result<Self> {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let data = (0..in_dim * out_dim)
            .map(|_| rng.uniform(-bound, bound))
            .collect();
        Self::new(Mat64::new(out_dim, in_dim, data)?, b)
    }

    pub fn weights(&self) -> &Mat64 {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Mat64 {
        &mut self.weights
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    /// Applies the layer, returning `(outputs, pre_activations, cosines)`.
    fn apply(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.out_dim();
        let mut out = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut cos = Vec::with_capacity(n);
        for w in self.weights.iter_rows() {
            let (s, c, scale) = unit_scale(x, w, self.b);
            out.push(scale * s);
            pre.push(s);
            cos.push(c);
        }
        (out, pre, cos)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::dim(format!(
                "layer expects {} inputs, got {}",
                self.in_dim(),
                x.len()
            )));
        }
        Ok(self.apply(x).0)
    }

    fn scale_from_cos(&self, c: f64) -> f64 {
        c.abs().powf(self.b - 1.0)
    }
}

/// Everything recorded while running one input through a network.
///
/// Layer `l` (0-based) reads `inputs[l]` and writes `outputs[l]`;
/// `inputs[l + 1] == outputs[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub inputs: Vec<Vec<f64>>,
    pub pre_activations: Vec<Vec<f64>>,
    pub cosines: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

impl ActivationTrace {
    pub fn logits(&self) -> &[f64] {
        self.outputs.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Recomputes every layer from its recorded input; returns true when the
    /// recorded outputs are reproduced bit-for-bit.
    pub fn replays(&self, net: &BcosNetwork) -> bool {
        if self.inputs.len() != net.depth() {
            return false;
        }
        for (l, layer) in net.layers.iter().enumerate() {
            let (out, _, _) = layer.apply(&self.inputs[l]);
            if out != self.outputs[l] {
                return false;
            }
            if l + 1 < net.depth() && self.inputs[l + 1] != self.outputs[l] {
                return false;
            }
        }
        true
    }
}

/// A stack of at least two B-cos layers ending in a two-node head
/// (node 0 = normal, node 1 = outlier).
#[derive(Debug, Clone, PartialEq)]
pub struct BcosNetwork {
    layers: Vec<BcosLayer>,
}

impl BcosNetwork {
    pub fn new(layers: Vec<BcosLayer>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::config(format!(
                "network needs at least 2 layers, got {}",
                layers.len()
            )));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::dim(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        let head = layers.last().map(BcosLayer::out_dim).unwrap_or(0);
        if head != HEAD_DIM {
            return Err(Error::config(format!(
                "final layer must have {HEAD_DIM} outputs, got {head}"
            )));
        }
        Ok(Self { layers })
    }

    /// Randomly initialised network with layer widths `dims`
    /// (`dims[0]` = input, last = 2) and exponent `b` for every layer.
    pub fn init(dims: &[usize], b: f64, rng: &mut Rng) -> Result<Self> {
        Self::init_with_exponents(dims, &vec![b; dims.len().saturating_sub(1)], rng)
    }

    pub fn init_with_exponents(dims: &[usize], bs: &[f64], rng: &mut Rng) -> Result<Self> {
        if dims.len() < 3 {
            return Err(Error::config(format!(
                "need at least 3 layer widths for 2 layers, got {dims:?}"
            )));
        }
        if bs.len() != dims.len() - 1 {
            return Err(Error::config(format!(
                "{} layers but {} B exponents",
                dims.len() - 1,
                bs.len()
            )));
        }
        let layers = dims
            .windows(2)
            .zip(bs)
            .map(|(d, &b)| BcosLayer::init(d[0], d[1], b, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[BcosLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [BcosLayer] {
        &mut self.layers
    }

    /// Number of layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Layer widths, input first.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].in_dim()];
        d.extend(self.layers.iter().map(BcosLayer::out_dim));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    /// Layer whose input is used as the familiarity feature by default
    /// (the input of the classification head).
    pub fn default_feature_layer(&self) -> usize {
        self.depth() - 1
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ActivationTrace)> {
        if x.len() != self.input_dim() {
            return Err(Error::dim(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let l = self.depth();
        let mut trace = ActivationTrace {
            inputs: Vec::with_capacity(l),
            pre_activations: Vec::with_capacity(l),
            cosines: Vec::with_capacity(l),
            outputs: Vec::with_capacity(l),
        };
        let mut current = x.to_vec();
        for layer in &self.layers {
            let (out, pre, cos) = layer.apply(&current);
            trace.inputs.push(current);
            trace.pre_activations.push(pre);
            trace.cosines.push(cos);
            current = out.clone();
            trace.outputs.push(out);
        }
        Ok((current, trace))
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.0)
    }

    /// Activation entering layer `layer` (`0` is the raw input).
    pub fn features(&self, x: &[f64], layer: usize) -> Result<Vec<f64>> {
        self.check_layer(layer)?;
        let (_, mut trace) = self.forward(x)?;
        Ok(trace.inputs.swap_remove(layer))
    }

    /// Collapsed linear map from the activation entering `from_layer` to
    /// output node `node`. See [`collapse`].
    pub fn explain(&self, x: &[f64], from_layer: usize, node: usize) -> Result<Vec<f64>> {
        let (_, trace) = self.forward(x)?;
        collapse(self, &trace, from_layer, node)
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer >= self.depth() {
            return Err(Error::index(format!(
                "layer {layer} out of range for a {}-layer network",
                self.depth()
            )));
        }
        Ok(())
    }
}

/// Row of `W_L^eff · … · W_{from_layer+1}^eff` selecting output `node`.
///
/// The effective matrices are built from the traced inputs, so for the
/// activation `a = trace.inputs[from_layer]` the result `θ` satisfies
/// `θ·a == logits[node]` up to rounding.
pub fn collapse(
    net: &BcosNetwork,
    trace: &ActivationTrace,
    from_layer: usize,
    node: usize,
) -> Result<Vec<f64>> {
    net.check_layer(from_layer)?;
    if node >= HEAD_DIM {
        return Err(Error::index(format!("output node {node} out of range")));
    }
    if trace.cosines.len() != net.depth() {
        return Err(Error::dim(format!(
            "trace has {} layers, network has {}",
            trace.cosines.len(),
            net.depth()
        )));
    }

    // Row vector over the outputs of the current layer.
    let mut row = vec![0.0; HEAD_DIM];
    row[node] = 1.0;
    for l in (from_layer..net.depth()).rev() {
        let layer = &net.layers[l];
        let cos = &trace.cosines[l];
        let mut next = vec![0.0; layer.in_dim()];
        for (u, w) in layer.weights.iter_rows().enumerate() {
            let coeff = row[u];
            if coeff == 0.0 {
                continue;
            }
            let scaled = coeff * layer.scale_from_cos(cos[u]);
            if scaled == 0.0 {
                continue;
            }
            for (n, wk) in next.iter_mut().zip(w) {
                *n += scaled * wk;
            }
        }
        row = next;
    }
    Ok(row)
}
