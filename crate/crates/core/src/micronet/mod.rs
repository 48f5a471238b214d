//! Minimal multilayer perceptron.
//!
//! Parameters are stored as `f32` (the interchange precision); every forward,
//! backward and Jacobian computation promotes to `f64`. Hidden layers use
//! ReLU with derivative 0 at exactly 0; the output layer is linear and softmax
//! is applied only inside the loss.

mod targets;
mod train;

pub use targets::{loss_and_residual, make_targets, off_class_weights, target_row, TargetScheme};
pub use train::{
    accuracy, fit, fit_observed, representation_gradient, sample_gradients, train, FitOutcome,
    Gradients, Objective, SgdConfig, Target, TrainOutcome,
};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::datagen::Dataset;
use crate::error::{ensure_len, invalid, Error, Result};
use crate::linalg::Matrix;
use crate::repr_stats::{ActivationBatch, ActivationSet};
use crate::rng::{stream, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative at the pre-activation `x`; ReLU uses 0 at `x = 0`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Affine map `out × in` followed by an activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
    activation: Activation,
}

impl Layer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(invalid("layer", "dimensions must be at least 1"));
        }
        ensure_len("layer weights", in_dim * out_dim, weights.len())?;
        ensure_len("layer bias", out_dim, bias.len())?;
        if weights.iter().chain(&bias).any(|w| !w.is_finite()) {
            return Err(Error::Numeric("non-finite layer parameter"));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Row-major `out × in`.
    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights_mut(&mut self) -> &mut [f32] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f32] {
        &mut self.bias
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f32 {
        self.weights[row * self.in_dim + col]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out_dim)
            .map(|i| {
                let row = &self.weights[i * self.in_dim..(i + 1) * self.in_dim];
                row.iter().zip(x).map(|(&w, &xi)| w as f64 * xi).sum::<f64>() + self.bias[i] as f64
            })
            .collect()
    }

    fn weight_matrix(&self) -> Matrix {
        Matrix::from_fn(self.out_dim, self.in_dim, |i, j| self.weight(i, j) as f64)
    }
}

/// Sequential network with a designated edge/cloud split.
///
/// Layers `< split_index` run on the edge; the rest run in the cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    split_index: usize,
}

/// Per-layer values for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Affine outputs before the activation, one vector per layer.
    pub pre_activations: Vec<Vec<f64>>,
    /// Post-activation representations `z^(ℓ)`; the last entry is the logits.
    pub activations: Vec<Vec<f64>>,
    /// `softmax(logits)`.
    pub probs: Vec<f64>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Parameter counts split between edge and cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamCount {
    pub edge: usize,
    pub total: usize,
    pub edge_share: f64,
}

impl MlpModel {
    pub fn new(layers: Vec<Layer>, split_index: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("model layers"));
        }
        for pair in layers.windows(2) {
            ensure_len("chained layer dimensions", pair[0].out_dim, pair[1].in_dim)?;
        }
        if layers.last().map(|l| l.activation) != Some(Activation::Identity) {
            return Err(invalid("layers", "the output layer must use the identity activation"));
        }
        if split_index > layers.len() {
            return Err(invalid("split_index", format!("must be at most {}", layers.len())));
        }
        Ok(Self {
            layers,
            split_index,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn split_index(&self) -> usize {
        self.split_index
    }

    pub fn with_split(mut self, split_index: usize) -> Result<Self> {
        if split_index > self.layers.len() {
            return Err(invalid("split_index", format!("must be at most {}", self.layers.len())));
        }
        self.split_index = split_index;
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    /// Output width (the class count for classifiers).
    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Output width of layer `layer`.
    pub fn width(&self, layer: usize) -> Result<usize> {
        self.check_layer(layer)?;
        Ok(self.layers[layer].out_dim)
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer < self.layers.len() {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                context: "layer",
                index: layer,
                len: self.layers.len(),
            })
        }
    }

    pub fn forward(&self, x: &[f32]) -> Result<ForwardTrace> {
        let x: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        self.forward_f64(&x)
    }

    pub fn forward_f64(&self, x: &[f64]) -> Result<ForwardTrace> {
        ensure_len("model input", self.input_dim(), x.len())?;
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = activations.last().map(Vec::as_slice).unwrap_or(x);
            let pre = layer.pre_activation(input);
            let post = pre.iter().map(|&v| layer.activation.apply(v)).collect();
            pre_activations.push(pre);
            activations.push(post);
        }
        let probs = softmax(activations.last().map(Vec::as_slice).unwrap_or(&[]));
        Ok(ForwardTrace {
            pre_activations,
            activations,
            probs,
        })
    }

    /// Logits obtained by feeding `z` as the output of layer `layer`.
    pub fn forward_from(&self, layer: usize, z: &[f64]) -> Result<Vec<f64>> {
        self.check_layer(layer)?;
        ensure_len("representation", self.layers[layer].out_dim, z.len())?;
        let mut h = z.to_vec();
        for l in &self.layers[layer + 1..] {
            h = l.pre_activation(&h).into_iter().map(|v| l.activation.apply(v)).collect();
        }
        Ok(h)
    }

    /// `∂o/∂z^(layer)` at input `x`, a `K × d_layer` matrix.
    pub fn jacobian(&self, x: &[f32], layer: usize) -> Result<Matrix> {
        self.check_layer(layer)?;
        let trace = self.forward(x)?;
        self.jacobian_at(&trace, layer)
    }

    /// Jacobian evaluated at the ReLU masks recorded in `trace`.
    pub fn jacobian_at(&self, trace: &ForwardTrace, layer: usize) -> Result<Matrix> {
        self.check_layer(layer)?;
        ensure_len("trace layers", self.layers.len(), trace.pre_activations.len())?;
        let mut acc = Matrix::identity(self.output_dim());
        for j in ((layer + 1)..self.layers.len()).rev() {
            let l = &self.layers[j];
            let mut w = l.weight_matrix();
            for (r, &pre) in trace.pre_activations[j].iter().enumerate() {
                let mask = l.activation.derivative(pre);
                if mask != 1.0 {
                    for c in 0..l.in_dim {
                        w[(r, c)] *= mask;
                    }
                }
            }
            acc = acc.matmul(&w)?;
        }
        Ok(acc)
    }

    pub fn count_params(&self, split_index: usize) -> Result<ParamCount> {
        if split_index > self.layers.len() {
            return Err(invalid("split_index", format!("must be at most {}", self.layers.len())));
        }
        let edge: usize = self.layers[..split_index].iter().map(Layer::param_count).sum();
        let total: usize = self.layers.iter().map(Layer::param_count).sum();
        Ok(ParamCount {
            edge,
            total,
            edge_share: edge as f64 / total as f64,
        })
    }
}

/// Initializes `input_dim → hidden… → classes` with weights drawn uniformly
/// from `[-1/√in, 1/√in]` and zero biases. Hidden layers use ReLU. The split
/// index starts at 0.
pub fn init_model(input_dim: usize, hidden: &[usize], classes: usize, seed: u64) -> Result<MlpModel> {
    init_with_stream(input_dim, hidden, classes, seed, stream::INIT)
}

pub(crate) fn init_with_stream(
    input_dim: usize,
    hidden: &[usize],
    out_dim: usize,
    seed: u64,
    rng_stream: u64,
) -> Result<MlpModel> {
    if input_dim == 0 || out_dim == 0 || hidden.iter().any(|&w| w == 0) {
        return Err(invalid("arch", "every width must be at least 1"));
    }
    let mut rng = stream_rng(seed, rng_stream);
    let mut widths = Vec::with_capacity(hidden.len() + 2);
    widths.push(input_dim);
    widths.extend_from_slice(hidden);
    widths.push(out_dim);

    let mut layers = Vec::with_capacity(widths.len() - 1);
    for (j, pair) in widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = 1.0 / libm::sqrt(fan_in as f64);
        let weights = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound) as f32)
            .collect();
        let activation = if j + 2 == widths.len() {
            Activation::Identity
        } else {
            Activation::Relu
        };
        layers.push(Layer::new(fan_in, fan_out, weights, vec![0.0; fan_out], activation)?);
    }
    MlpModel::new(layers, 0)
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    if logits.is_empty() {
        return Vec::new();
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&o| libm::exp(o - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `log softmax` via log-sum-exp.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(logits.iter().map(|&o| libm::exp(o - max)).sum::<f64>());
    logits.iter().map(|&o| o - lse).collect()
}

/// Runs the dataset through `model` and captures the requested layers.
///
/// Batches come back in the order of `layers`, each named `fc{j}` after the
/// model layer it was read from.
pub fn extract(model: &MlpModel, dataset: &Dataset, layers: &[usize]) -> Result<ActivationSet> {
    if layers.is_empty() {
        return Err(Error::Empty("layer list"));
    }
    for &l in layers {
        model.check_layer(l)?;
    }
    ensure_len("dataset dimension", model.input_dim(), dataset.dim())?;
    let mut data: Vec<Vec<f32>> = layers
        .iter()
        .map(|&l| Vec::with_capacity(dataset.len() * model.layers[l].out_dim))
        .collect();
    for i in 0..dataset.len() {
        let trace = model.forward(dataset.row(i))?;
        for (buf, &l) in data.iter_mut().zip(layers) {
            buf.extend(trace.activations[l].iter().map(|&v| v as f32));
        }
    }
    let batches = layers
        .iter()
        .zip(data)
        .map(|(&l, buf)| {
            ActivationBatch::new(
                format!("fc{l}"),
                vec![model.layers[l].out_dim],
                buf,
                dataset.labels().to_vec(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    ActivationSet::new(dataset.classes(), batches)
}

/// Initialized model with non-zero biases, for tests.
#[cfg(test)]
pub(crate) fn random_model(input_dim: usize, hidden: &[usize], classes: usize, seed: u64) -> MlpModel {
    let mut m = init_model(input_dim, hidden, classes, seed).unwrap();
    let mut rng = stream_rng(seed, 99);
    for layer in m.layers_mut() {
        for b in layer.bias_mut() {
            *b = rng.random_range(-0.3f32..0.3);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn identity_layer(n: usize, act: Activation) -> Layer {
        let mut w = vec![0.0f32; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        Layer::new(n, n, w, vec![0.0; n], act).unwrap()
    }

    #[test]
    fn init_structure() {
        let m = init_model(4, &[], 2, 0).unwrap();
        assert_eq!(m.num_layers(), 1);
        let l = &m.layers()[0];
        assert_eq!((l.out_dim(), l.in_dim()), (2, 4));
        assert!(l.bias().iter().all(|&b| b == 0.0));
        assert_eq!(m, init_model(4, &[], 2, 0).unwrap());
        assert!(init_model(4, &[0], 2, 0).is_err());
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let m = init_model(8, &[8], 3, 1).unwrap();
        for l in m.layers() {
            let bound = 1.0 / (l.in_dim() as f32).sqrt() + 1e-6;
            assert!(l.weights().iter().all(|w| w.abs() <= bound));
        }
    }

    #[test]
    fn softmax_of_one_two() {
        let m = MlpModel::new(vec![identity_layer(2, Activation::Identity)], 0).unwrap();
        let t = m.forward(&[1.0, 2.0]).unwrap();
        assert_eq!(t.logits(), &[1.0, 2.0]);
        assert_relative_eq!(t.probs[0], 0.268_941_421_369_995, epsilon = 1e-12);
        assert_relative_eq!(t.probs[1], 0.731_058_578_630_005, epsilon = 1e-12);
    }

    #[test]
    fn zero_weights_give_uniform_probs() {
        let l = Layer::new(3, 4, vec![0.0; 12], vec![0.0; 4], Activation::Identity).unwrap();
        let m = MlpModel::new(vec![l], 0).unwrap();
        let t = m.forward(&[0.3, 0.1, 0.9]).unwrap();
        assert!(t.probs.iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn forward_matches_naive_chain() {
        let m = random_model(5, &[7, 6], 3, 11);
        let x = [0.1f32, 0.5, 0.9, 0.3, 0.7];
        let t = m.forward(&x).unwrap();
        let mut h: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        for (j, l) in m.layers().iter().enumerate() {
            let mut next = vec![0.0; l.out_dim()];
            for (r, out) in next.iter_mut().enumerate() {
                let mut s = l.bias()[r] as f64;
                for c in 0..l.in_dim() {
                    s += l.weight(r, c) as f64 * h[c];
                }
                *out = if l.activation() == Activation::Relu { s.max(0.0) } else { s };
            }
            for (a, b) in next.iter().zip(&t.activations[j]) {
                assert!((a - b).abs() < 1e-12);
            }
            h = next;
        }
        assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let m = init_model(4, &[], 2, 0).unwrap();
        assert!(matches!(m.forward(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn jacobian_of_last_hidden_is_output_weight() {
        let m = random_model(3, &[4], 2, 5);
        let j = m.jacobian(&[0.2, 0.4, 0.6], 0).unwrap();
        let w = &m.layers()[1];
        for r in 0..2 {
            for c in 0..4 {
                assert_eq!(j[(r, c)], w.weight(r, c) as f64);
            }
        }
        let at_logits = m.jacobian(&[0.2, 0.4, 0.6], 1).unwrap();
        assert_eq!(at_logits, Matrix::identity(2));
        assert!(matches!(m.jacobian(&[0.2, 0.4, 0.6], 2), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn jacobian_of_linear_chain_is_product() {
        let w1 = vec![1.0f32, 2.0, -1.0, 0.5, 0.0, 3.0];
        let w2 = vec![0.5f32, -1.0, 2.0, 1.0];
        let l1 = Layer::new(3, 2, w1, vec![0.1, 0.2], Activation::Identity).unwrap();
        let l2 = Layer::new(2, 2, w2, vec![0.0, 0.0], Activation::Identity).unwrap();
        let l0 = identity_layer(3, Activation::Identity);
        let m = MlpModel::new(vec![l0, l1, l2], 0).unwrap();
        let j = m.jacobian(&[0.3, 0.3, 0.3], 0).unwrap();
        // W2 · W1
        let expected = [0.5 * 1.0 - 1.0 * 0.5, 0.5 * 2.0, -0.5 - 3.0, 2.0 + 0.5, 4.0, -2.0 + 3.0];
        for (a, b) in j.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let h = 1e-4;
        for seed in 0..10u64 {
            let m = random_model(4, &[6, 5, 4], 3, seed);
            let x = [0.2f32, 0.8, 0.5, 0.1];
            let trace = m.forward(&x).unwrap();
            for layer in 0..m.num_layers() {
                let z = &trace.activations[layer];
                // Skip points within a step of a ReLU kink downstream.
                let near_kink = trace.pre_activations[layer + 1..]
                    .iter()
                    .flatten()
                    .any(|v| v.abs() < 1e-2);
                if near_kink {
                    continue;
                }
                let j = m.jacobian_at(&trace, layer).unwrap();
                for col in 0..z.len() {
                    let mut zp = z.clone();
                    let mut zm = z.clone();
                    zp[col] += h;
                    zm[col] -= h;
                    let op = m.forward_from(layer, &zp).unwrap();
                    let om = m.forward_from(layer, &zm).unwrap();
                    for r in 0..3 {
                        let fd = (op[r] - om[r]) / (2.0 * h);
                        let scale = fd.abs().max(j[(r, col)].abs()).max(1e-6);
                        assert!((fd - j[(r, col)]).abs() / scale <= 1e-3, "seed {seed} layer {layer}");
                    }
                }
            }
        }
    }

    #[test]
    fn extract_shapes_and_identity_layer() {
        let l0 = identity_layer(3, Activation::Relu);
        let l1 = Layer::new(3, 2, vec![0.1; 6], vec![0.0; 2], Activation::Identity).unwrap();
        let m = MlpModel::new(vec![l0, l1], 1).unwrap();
        let ds = Dataset::new(vec![0.1, 0.2, 0.3, 0.9, 0.8, 0.7], vec![0, 1], 2, 3).unwrap();
        let acts = extract(&m, &ds, &[0, 1]).unwrap();
        assert_eq!(acts.batches.len(), 2);
        assert_eq!(acts.batches[0].data, ds.inputs());
        assert_eq!(acts.batches[1].dim(), 2);
        for i in 0..ds.len() {
            let t = m.forward(ds.row(i)).unwrap();
            let row = acts.batches[1].row(i);
            for (a, b) in row.iter().zip(&t.activations[1]) {
                assert_eq!(*a, *b as f32);
            }
        }
    }

    #[test]
    fn parameter_counts() {
        let m = init_model(4, &[], 2, 0).unwrap();
        let p = m.count_params(1).unwrap();
        assert_eq!((p.edge, p.total, p.edge_share), (10, 10, 1.0));
        assert_eq!(m.count_params(0).unwrap().edge, 0);
        let m = init_model(4, &[8, 8], 3, 0).unwrap();
        assert_eq!(m.count_params(3).unwrap().total, (8 * 4 + 8) + (8 * 8 + 8) + (3 * 8 + 3));
        assert_eq!(m.count_params(3).unwrap().total, 139);
        assert!(m.count_params(4).is_err());
    }

    #[test]
    fn rejects_unchained_layers() {
        let a = Layer::new(3, 2, vec![0.0; 6], vec![0.0; 2], Activation::Relu).unwrap();
        let b = Layer::new(3, 2, vec![0.0; 6], vec![0.0; 2], Activation::Identity).unwrap();
        assert!(MlpModel::new(vec![a.clone(), b], 0).is_err());
        assert!(MlpModel::new(vec![a], 0).is_err());
    }
}
