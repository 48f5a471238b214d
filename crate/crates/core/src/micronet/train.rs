//! Backpropagation and plain minibatch SGD.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{loss_and_residual, make_targets, MlpModel, TargetScheme};
use crate::datagen::Dataset;
use crate::error::{ensure_len, invalid, Error, Result};
use crate::rng::stream_rng;

/// Training hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl SgdConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(invalid("lr", "must be finite and non-negative"));
        }
        if self.batch == 0 {
            return Err(invalid("batch", "must be at least 1"));
        }
        Ok(())
    }
}

/// Per-sample target for one gradient evaluation.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    /// Cross-entropy against a target distribution over logits.
    CrossEntropy(&'a [f64]),
    /// Mean squared error `(1/m) Σ (o − t)²` against a real vector.
    SquaredError(&'a [f32]),
}

/// Row-major targets for a whole training set.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    CrossEntropy(&'a [f64]),
    SquaredError(&'a [f32]),
}

impl<'a> Objective<'a> {
    fn row(&self, i: usize, width: usize) -> Target<'a> {
        match *self {
            Objective::CrossEntropy(q) => Target::CrossEntropy(&q[i * width..(i + 1) * width]),
            Objective::SquaredError(t) => Target::SquaredError(&t[i * width..(i + 1) * width]),
        }
    }

    fn len(&self) -> usize {
        match self {
            Objective::CrossEntropy(q) => q.len(),
            Objective::SquaredError(t) => t.len(),
        }
    }
}

/// Parameter gradients, laid out like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.layers().iter().map(|l| vec![0.0; l.weights().len()]).collect(),
            bias: model.layers().iter().map(|l| vec![0.0; l.bias().len()]).collect(),
        }
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

/// Loss and `∂L/∂o` for one sample.
fn output_residual(model: &MlpModel, trace: &super::ForwardTrace, target: Target<'_>) -> Result<(f64, Vec<f64>)> {
    match target {
        Target::CrossEntropy(q) => loss_and_residual(trace, q),
        Target::SquaredError(t) => {
            let o = trace.logits();
            ensure_len("regression target", model.output_dim(), t.len())?;
            let m = o.len() as f64;
            let mut loss = 0.0;
            let grad = o
                .iter()
                .zip(t)
                .map(|(&oi, &ti)| {
                    let e = oi - ti as f64;
                    loss += e * e;
                    2.0 * e / m
                })
                .collect();
            Ok((loss / m, grad))
        }
    }
}

/// Backward pass; returns the loss, parameter gradients, and `∂L/∂z^(ℓ)` for
/// every layer `ℓ`.
fn backward(model: &MlpModel, x: &[f64], target: Target<'_>) -> Result<(f64, Gradients, Vec<Vec<f64>>)> {
    let trace = model.forward_f64(x)?;
    let (loss, mut upstream) = output_residual(model, &trace, target)?;
    let n = model.num_layers();
    let mut grads = Gradients::zeros_like(model);
    let mut repr_grads = vec![Vec::new(); n];
    for j in (0..n).rev() {
        let layer = &model.layers()[j];
        repr_grads[j] = upstream.clone();
        let delta: Vec<f64> = upstream
            .iter()
            .zip(&trace.pre_activations[j])
            .map(|(&g, &pre)| g * layer.activation().derivative(pre))
            .collect();
        let input = if j == 0 { x } else { &trace.activations[j - 1] };
        let in_dim = layer.in_dim();
        for (r, &d) in delta.iter().enumerate() {
            grads.bias[j][r] = d;
            let row = &mut grads.weights[j][r * in_dim..(r + 1) * in_dim];
            for (g, &xi) in row.iter_mut().zip(input) {
                *g = d * xi;
            }
        }
        if j > 0 {
            let mut next = vec![0.0; in_dim];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (c, nx) in next.iter_mut().enumerate() {
                    *nx += layer.weight(r, c) as f64 * d;
                }
            }
            upstream = next;
        }
    }
    Ok((loss, grads, repr_grads))
}

/// Loss and parameter gradients for a single sample.
pub fn sample_gradients(model: &MlpModel, x: &[f64], target: Target<'_>) -> Result<(f64, Gradients)> {
    let (loss, grads, _) = backward(model, x, target)?;
    Ok((loss, grads))
}

/// `∂L/∂z^(layer)` by backpropagation.
pub fn representation_gradient(model: &MlpModel, x: &[f64], target: Target<'_>, layer: usize) -> Result<Vec<f64>> {
    model.check_layer(layer)?;
    let (_, _, mut repr) = backward(model, x, target)?;
    Ok(core::mem::take(&mut repr[layer]))
}

/// Result of [`fit`].
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: MlpModel,
    /// Mean per-sample loss of each epoch, accumulated during the updates.
    pub losses: Vec<f64>,
}

/// Minibatch SGD over `n` samples of `inputs` (row-major `n × input_dim`).
pub fn fit(model: MlpModel, inputs: &[f32], objective: Objective<'_>, config: SgdConfig) -> Result<FitOutcome> {
    fit_observed(model, inputs, objective, config, |_, _| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_observed(
    mut model: MlpModel,
    inputs: &[f32],
    objective: Objective<'_>,
    config: SgdConfig,
    mut on_epoch: impl FnMut(usize, &MlpModel),
) -> Result<FitOutcome> {
    config.validate()?;
    let d = model.input_dim();
    let k = model.output_dim();
    if inputs.is_empty() || inputs.len() % d != 0 {
        return Err(invalid("inputs", "must hold a whole number of rows of the model's input width"));
    }
    let n = inputs.len() / d;
    ensure_len("training targets", n * k, objective.len())?;

    let mut rng = stream_rng(config.seed, crate::rng::stream::TRAIN);
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    let mut xbuf = vec![0.0f64; d];

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch) {
            let mut acc = Gradients::zeros_like(&model);
            for &i in chunk {
                for (b, &v) in xbuf.iter_mut().zip(&inputs[i * d..(i + 1) * d]) {
                    *b = v as f64;
                }
                let (loss, g, _) = backward(&model, &xbuf, objective.row(i, k))?;
                epoch_loss += loss;
                acc.add(&g);
            }
            let step = config.lr / chunk.len() as f64;
            if step == 0.0 {
                continue;
            }
            for (j, layer) in model.layers_mut().iter_mut().enumerate() {
                for (w, g) in layer.weights_mut().iter_mut().zip(&acc.weights[j]) {
                    *w = (*w as f64 - step * g) as f32;
                }
                for (b, g) in layer.bias_mut().iter_mut().zip(&acc.bias[j]) {
                    *b = (*b as f64 - step * g) as f32;
                }
            }
        }
        let mean = epoch_loss / n as f64;
        let params_finite = model
            .layers()
            .iter()
            .all(|l| l.weights().iter().chain(l.bias()).all(|w| w.is_finite()));
        if !mean.is_finite() || !params_finite {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        losses.push(mean);
        on_epoch(epoch, &model);
    }
    Ok(FitOutcome { model, losses })
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub losses: Vec<f64>,
    /// Training-set accuracy of the final model.
    pub accuracy: f64,
}

/// Cross-entropy training of a classifier under `scheme`.
pub fn train(model: MlpModel, dataset: &Dataset, scheme: &TargetScheme, config: SgdConfig) -> Result<TrainOutcome> {
    if config.epochs == 0 {
        return Err(invalid("epochs", "must be at least 1"));
    }
    ensure_len("model outputs", model.output_dim(), dataset.classes())?;
    let targets = make_targets(dataset.labels(), scheme, dataset.classes())?;
    let FitOutcome { model, losses } = fit(model, dataset.inputs(), Objective::CrossEntropy(&targets), config)?;
    let accuracy = accuracy(&model, dataset)?;
    Ok(TrainOutcome {
        model,
        losses,
        accuracy,
    })
}

/// Fraction of samples whose arg-max logit equals the label.
pub fn accuracy(model: &MlpModel, dataset: &Dataset) -> Result<f64> {
    let mut hits = 0usize;
    for i in 0..dataset.len() {
        let t = model.forward(dataset.row(i))?;
        let pred = t
            .probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        hits += (pred == dataset.labels()[i] as usize) as usize;
    }
    Ok(hits as f64 / dataset.len() as f64)
}
