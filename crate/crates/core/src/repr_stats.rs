//! Class-conditional statistics of intermediate representations.
//!
//! For class `c` with samples `I_c` the centre is `μ_c = (1/N_c) Σ z_i` and the
//! intra-class mean-squared radius is `R_c² = (1/N_c) Σ ‖z_i − μ_c‖²`, the
//! trace of the biased class covariance. All sums are accumulated in `f64`
//! over `f32` data.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure_len, invalid, Error, Result};
use crate::gpz::{fill_drops, LayerRadiusProfile};

/// One layer's representations for a batch, row-major `B × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationBatch {
    pub layer_name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
    pub labels: Vec<u32>,
}

impl ActivationBatch {
    pub fn new(layer_name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>, labels: Vec<u32>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&e| e == 0) {
            return Err(invalid("shape", "extents must be non-empty and non-zero"));
        }
        let d: usize = shape.iter().product();
        ensure_len("activation data", labels.len() * d, data.len())?;
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite activation"));
        }
        Ok(Self {
            layer_name: layer_name.into(),
            shape,
            data,
            labels,
        })
    }

    /// Flattened per-sample dimension.
    pub fn dim(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }
}

/// Several layers captured over the same samples, ordered shallow to deep.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSet {
    pub classes: usize,
    pub batches: Vec<ActivationBatch>,
}

impl ActivationSet {
    /// Checks that every batch carries the same labels, all below `classes`.
    pub fn new(classes: usize, batches: Vec<ActivationBatch>) -> Result<Self> {
        if let Some(first) = batches.first() {
            for b in &batches[1..] {
                if b.labels != first.labels {
                    return Err(invalid("batches", "layers disagree on sample labels"));
                }
            }
            if let Some(&y) = first.labels.iter().find(|&&y| y as usize >= classes) {
                return Err(invalid("labels", alloc::format!("label {y} >= class count {classes}")));
            }
        }
        Ok(Self { classes, batches })
    }

    pub fn labels(&self) -> &[u32] {
        self.batches.first().map(|b| b.labels.as_slice()).unwrap_or(&[])
    }
}

/// Centre and radius of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRadius {
    pub class: u32,
    pub count: usize,
    pub mean: Vec<f64>,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub dim: usize,
    pub samples: usize,
    /// Classes with at least two samples, in label order.
    pub per_class: Vec<ClassRadius>,
    /// Classes present with fewer than two samples; excluded from averages.
    pub skipped: Vec<u32>,
    /// `tr(Σ_feat) / d` of the whole batch (biased covariance).
    pub sigma2_feat: f64,
    /// Mean of `R_c²` over the included classes.
    pub r2_class_avg: f64,
    /// Whole-batch mean.
    pub grand_mean: Vec<f64>,
}

impl ClassStats {
    /// `Σ_c N_c ‖μ_c − μ‖²` over included classes.
    pub fn between_class_scatter(&self) -> f64 {
        self.per_class
            .iter()
            .map(|c| {
                let d2: f64 = c.mean.iter().zip(&self.grand_mean).map(|(a, b)| (a - b) * (a - b)).sum();
                c.count as f64 * d2
            })
            .sum()
    }

    pub fn max_r2(&self) -> f64 {
        self.per_class.iter().map(|c| c.r2).fold(0.0, f64::max)
    }
}

pub fn class_stats(batch: &ActivationBatch) -> Result<ClassStats> {
    let d = batch.dim();
    let n = batch.len();
    if n == 0 {
        return Err(Error::Empty("activation batch"));
    }

    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &y) in batch.labels.iter().enumerate() {
        groups.entry(y).or_default().push(i);
    }

    let mut grand_mean = vec![0.0f64; d];
    for i in 0..n {
        for (m, &x) in grand_mean.iter_mut().zip(batch.row(i)) {
            *m += x as f64;
        }
    }
    grand_mean.iter_mut().for_each(|m| *m /= n as f64);
    let total_ss: f64 = (0..n)
        .map(|i| sq_dist(batch.row(i), &grand_mean))
        .sum();

    let mut per_class = Vec::new();
    let mut skipped = Vec::new();
    for (class, idx) in groups {
        if idx.len() < 2 {
            skipped.push(class);
            continue;
        }
        let mut mean = vec![0.0f64; d];
        for &i in &idx {
            for (m, &x) in mean.iter_mut().zip(batch.row(i)) {
                *m += x as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= idx.len() as f64);
        let r2 = idx.iter().map(|&i| sq_dist(batch.row(i), &mean)).sum::<f64>() / idx.len() as f64;
        per_class.push(ClassRadius {
            class,
            count: idx.len(),
            mean,
            r2,
        });
    }
    if per_class.is_empty() {
        return Err(Error::NoPopulatedClass);
    }
    let r2_class_avg = per_class.iter().map(|c| c.r2).sum::<f64>() / per_class.len() as f64;
    Ok(ClassStats {
        dim: d,
        samples: n,
        per_class,
        skipped,
        sigma2_feat: total_ss / (n * d) as f64,
        r2_class_avg,
        grand_mean,
    })
}

fn sq_dist(x: &[f32], mean: &[f64]) -> f64 {
    x.iter().zip(mean).map(|(&a, &m)| {
        let e = a as f64 - m;
        e * e
    }).sum()
}

/// Radius per representation dimension, `r2 / d`.
pub fn normalized_radius(r2: f64, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(invalid("d", "must be at least 1"));
    }
    if !(r2 >= 0.0) {
        return Err(invalid("r2", "must be non-negative"));
    }
    Ok(r2 / d as f64)
}

/// Class-averaged and dimension-normalized radius for every layer of `acts`,
/// with drop percentages filled in.
pub fn layer_profiles(acts: &ActivationSet) -> Result<Vec<LayerRadiusProfile>> {
    if acts.batches.is_empty() {
        return Err(Error::Empty("activation set"));
    }
    let mut profiles = Vec::with_capacity(acts.batches.len());
    for (index, batch) in acts.batches.iter().enumerate() {
        let stats = class_stats(batch)?;
        profiles.push(LayerRadiusProfile {
            layer_index: index,
            layer_name: batch.layer_name.clone(),
            d: stats.dim,
            r2: stats.r2_class_avg,
            r2_norm: normalized_radius(stats.r2_class_avg, stats.dim)?,
            drop_pct: None,
        });
    }
    fill_drops(&mut profiles);
    Ok(profiles)
}
