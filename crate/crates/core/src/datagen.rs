//! Deterministic synthetic datasets.
//!
//! Class `c` of `K` is an isotropic Gaussian centred at `t_c · 1`, where the
//! scalars `t_c` are evenly spaced over `[0.2, 0.8]` (a single class sits at
//! 0.5). Samples are clamped to `[0, 1]` so that reconstruction errors live on
//! the unit data range.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure_len, invalid, Error, Result};
use crate::rng::{stream, stream_rng};

/// Labeled input vectors, row-major `len × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f32>,
    labels: Vec<u32>,
    classes: usize,
    dim: usize,
}

impl Dataset {
    /// Validates the invariants: at least one sample, labels below `classes`,
    /// every entry finite and inside `[0, 1]`.
    pub fn new(inputs: Vec<f32>, labels: Vec<u32>, classes: usize, dim: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if classes == 0 {
            return Err(invalid("classes", "must be at least 1"));
        }
        ensure_len("dataset inputs", labels.len() * dim, inputs.len())?;
        if let Some(&bad) = labels.iter().find(|&&y| y as usize >= classes) {
            return Err(invalid("labels", alloc::format!("label {bad} >= class count {classes}")));
        }
        if let Some(x) = inputs.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(invalid("inputs", alloc::format!("entry {x} outside [0, 1]")));
        }
        Ok(Self {
            inputs,
            labels,
            classes,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn inputs(&self) -> &[f32] {
        &self.inputs
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::OutOfRange {
                    context: "dataset sample",
                    index: i,
                    len: self.len(),
                });
            }
            inputs.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(inputs, labels, self.classes, self.dim)
    }

    /// Empirical class frequencies, used as the prior for prior-weighted
    /// smoothing.
    pub fn class_prior(&self) -> Vec<f64> {
        let mut counts = alloc::vec![0usize; self.classes];
        for &y in &self.labels {
            counts[y as usize] += 1;
        }
        let n = self.len() as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }
}

/// Parameters of [`gaussian_mixture`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub spread: f64,
    pub seed: u64,
}

/// Centre coordinate shared by every axis for class `class` of `classes`.
pub fn center_coordinate(class: usize, classes: usize) -> f64 {
    if classes <= 1 {
        0.5
    } else {
        0.2 + 0.6 * class as f64 / (classes - 1) as f64
    }
}

/// Samples `classes · per_class` points, class-major order.
pub fn gaussian_mixture(spec: MixtureSpec) -> Result<Dataset> {
    let MixtureSpec {
        classes,
        per_class,
        dim,
        spread,
        seed,
    } = spec;
    if classes == 0 {
        return Err(invalid("classes", "must be at least 1"));
    }
    if per_class < 2 {
        return Err(invalid("per_class", "class statistics need at least 2 samples per class"));
    }
    if dim == 0 {
        return Err(invalid("dim", "must be at least 1"));
    }
    if !spread.is_finite() || spread < 0.0 {
        return Err(invalid("spread", "must be finite and non-negative"));
    }

    let mut rng = stream_rng(seed, stream::DATA);
    let mut inputs = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        let center = center_coordinate(c, classes);
        for _ in 0..per_class {
            for _ in 0..dim {
                let noise: f64 = rng.sample(StandardNormal);
                let x = (center + spread * noise).clamp(0.0, 1.0);
                inputs.push(x as f32);
            }
            labels.push(c as u32);
        }
    }
    Dataset::new(inputs, labels, classes, dim)
}

/// Random partition of `0..len` into an auxiliary set of
/// `round(len · aux_fraction)` indices and its complement, both sorted.
pub fn split_indices(len: usize, aux_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(aux_fraction > 0.0 && aux_fraction < 1.0) {
        return Err(invalid("aux_fraction", "must lie strictly between 0 and 1"));
    }
    let aux_len = libm::round(len as f64 * aux_fraction) as usize;
    if aux_len == 0 || aux_len == len {
        return Err(invalid("aux_fraction", "leaves one side of the split empty"));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut stream_rng(seed, stream::SPLIT));
    let mut aux = order[..aux_len].to_vec();
    let mut rest = order[aux_len..].to_vec();
    aux.sort_unstable();
    rest.sort_unstable();
    Ok((aux, rest))
}

/// `size` distinct sample indices drawn without replacement, sorted.
pub fn sample_indices(len: usize, size: usize, seed: u64) -> Result<Vec<usize>> {
    if size == 0 || size > len {
        return Err(invalid("size", alloc::format!("must lie in 1..={len}")));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut stream_rng(seed, stream::EVAL));
    let mut picked = order[..size].to_vec();
    picked.sort_unstable();
    Ok(picked)
}
