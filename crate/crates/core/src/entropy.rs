//! Gaussian entropy surrogates and lower bounds on `H(X | Z)`.
//!
//! All quantities are in nats. A degenerate (zero-variance) representation has
//! a surrogate of `-∞`, which turns the corresponding lower bound into `+∞`;
//! these sentinels are values, not errors, so that sweeps over layers always
//! complete.

use alloc::vec::Vec;
use core::f64::consts::{LN_2, PI, E};

use crate::error::{invalid, Error, Result};
use crate::repr_stats::{class_stats, ActivationBatch};

/// Default quantization step, `2⁻¹⁰`.
pub const DEFAULT_DELTA: f64 = 1.0 / 1024.0;

/// Largest sample dimension accepted by [`quantized_entropy`].
pub const MAX_QUANTIZED_DIM: usize = 4;

fn ln_2pi_e() -> f64 {
    libm::log(2.0 * PI * E)
}

fn check_dim(name: &'static str, d: usize) -> Result<()> {
    if d == 0 {
        Err(invalid(name, "must be at least 1"))
    } else {
        Ok(())
    }
}

/// `(d/2) ln(2πe σ²)`; `-∞` when `σ² = 0`.
pub fn feat_surrogate(sigma2: f64, d: usize) -> Result<f64> {
    check_dim("d", d)?;
    if sigma2.is_nan() || sigma2 < 0.0 {
        return Err(invalid("sigma2", "must be non-negative"));
    }
    if sigma2 == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(0.5 * d as f64 * libm::log(2.0 * PI * E * sigma2))
}

/// `(D/2) ln(2πe R_c² / D)`; `-∞` when `R_c² = 0`.
pub fn class_surrogate(r2: f64, dim: usize) -> Result<f64> {
    check_dim("D", dim)?;
    if r2.is_nan() || r2 < 0.0 {
        return Err(invalid("r2", "must be non-negative"));
    }
    if r2 == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let d = dim as f64;
    Ok(0.5 * d * libm::log(2.0 * PI * E * r2 / d))
}

/// `max_c h_c + ln K`.
pub fn dec_surrogate(class_surrogates: &[f64], classes: usize) -> Result<f64> {
    check_dim("K", classes)?;
    if class_surrogates.is_empty() {
        return Err(Error::Empty("class surrogates"));
    }
    let max = class_surrogates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(max + libm::log(classes as f64))
}

/// `h_feat − h_dec`.
pub fn surrogate_gap(h_feat: f64, h_dec: f64) -> Result<f64> {
    if !h_feat.is_finite() || !h_dec.is_finite() {
        return Err(invalid("surrogates", "gap needs finite surrogates"));
    }
    Ok(h_feat - h_dec)
}

/// Expanded form of the surrogate gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapDecomposition {
    /// `((d − D)/2) ln(2πe)`
    pub dimension_term: f64,
    /// `(d/2) ln σ²_feat`
    pub feature_variance_term: f64,
    /// `−(D/2) ln(R²_max / D)`
    pub class_radius_term: f64,
    /// `−ln K`
    pub label_term: f64,
}

impl GapDecomposition {
    pub fn total(&self) -> f64 {
        self.dimension_term + self.feature_variance_term + self.class_radius_term + self.label_term
    }
}

pub fn gap_decomposition(sigma2: f64, d: usize, r2_max: f64, dim: usize, classes: usize) -> Result<GapDecomposition> {
    check_dim("d", d)?;
    check_dim("D", dim)?;
    check_dim("K", classes)?;
    if !(sigma2 > 0.0 && r2_max > 0.0) || !sigma2.is_finite() || !r2_max.is_finite() {
        return Err(invalid("variance", "gap decomposition needs positive finite variances"));
    }
    Ok(GapDecomposition {
        dimension_term: 0.5 * (d as f64 - dim as f64) * ln_2pi_e(),
        feature_variance_term: 0.5 * d as f64 * libm::log(sigma2),
        class_radius_term: -0.5 * dim as f64 * libm::log(r2_max / dim as f64),
        label_term: -libm::log(classes as f64),
    })
}

/// Leading finite-precision correction `m ln(1/Δ)`.
pub fn kappa_uniform(m: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(m as f64 * -libm::log(delta))
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(invalid("delta", "must be positive and finite"))
    }
}

/// Plug-in Shannon entropy of `samples` (row-major `N × m`) binned on the
/// uniform grid `floor(x / Δ)`.
pub fn quantized_entropy(samples: &[f64], m: usize, delta: f64) -> Result<f64> {
    check_dim("m", m)?;
    if m > MAX_QUANTIZED_DIM {
        return Err(invalid("m", alloc::format!("at most {MAX_QUANTIZED_DIM} coordinates can be binned")));
    }
    check_delta(delta)?;
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    if samples.len() % m != 0 {
        return Err(invalid("samples", "length is not a multiple of m"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite sample"));
    }
    let mut cells: Vec<[i64; MAX_QUANTIZED_DIM]> = samples
        .chunks_exact(m)
        .map(|row| {
            let mut key = [0i64; MAX_QUANTIZED_DIM];
            for (k, &x) in key.iter_mut().zip(row) {
                *k = libm::floor(x / delta) as i64;
            }
            key
        })
        .collect();
    cells.sort_unstable();
    let n = cells.len() as f64;
    let mut h = 0.0;
    let mut run = 1usize;
    for i in 1..=cells.len() {
        if i < cells.len() && cells[i] == cells[i - 1] {
            run += 1;
        } else {
            let p = run as f64 / n;
            h -= p * libm::log(p);
            run = 1;
        }
    }
    Ok(h)
}

/// Differential entropy of a Gaussian with diagonal covariance.
pub fn gaussian_entropy(variances: &[f64]) -> Result<f64> {
    if variances.is_empty() {
        return Err(Error::Empty("variances"));
    }
    if variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(invalid("variances", "must be positive and finite"));
    }
    Ok(variances.iter().map(|&v| 0.5 * libm::log(2.0 * PI * E * v)).sum())
}

/// `H(Q_Δ(Z)) − h_ref − m ln(1/Δ)`: empirical estimate of the KL mismatch
/// between the density and its cell-wise average.
pub fn bridge_residual(samples: &[f64], m: usize, delta: f64, h_reference: f64) -> Result<f64> {
    if !h_reference.is_finite() {
        return Err(invalid("h_reference", "must be finite"));
    }
    Ok(quantized_entropy(samples, m, delta)? - h_reference - kappa_uniform(m, delta)?)
}

/// Plug-in entropy of the label distribution.
pub fn empirical_label_entropy(labels: &[u32], classes: usize) -> Result<f64> {
    check_dim("K", classes)?;
    if labels.is_empty() {
        return Err(Error::Empty("labels"));
    }
    let mut counts = alloc::vec![0usize; classes];
    for &y in labels {
        let c = y as usize;
        if c >= classes {
            return Err(Error::OutOfRange {
                context: "label",
                index: c,
                len: classes,
            });
        }
        counts[c] += 1;
    }
    let n = labels.len() as f64;
    Ok(counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * libm::log(p)
        })
        .sum())
}

/// What is subtracted from `H(X)` (before `κ`) in each lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Subtrahend {
    Feat { h_feat: f64 },
    Dec { max_class_surrogate: f64, h_label: f64 },
}

impl Subtrahend {
    pub fn value(&self) -> f64 {
        match *self {
            Subtrahend::Feat { h_feat } => h_feat,
            Subtrahend::Dec {
                max_class_surrogate,
                h_label,
            } => max_class_surrogate + h_label,
        }
    }
}

/// `H(X) − subtrahend − κ`. A `-∞` surrogate gives `+∞`.
pub fn hx_given_z_lower(hx: Option<f64>, subtrahend: Subtrahend, kappa: f64) -> Result<f64> {
    let hx = hx.ok_or_else(|| invalid("hx", "an estimate of H(X) is required"))?;
    if !hx.is_finite() || !kappa.is_finite() {
        return Err(invalid("hx", "H(X) and kappa must be finite"));
    }
    Ok(hx - subtrahend.value() - kappa)
}

pub fn to_bits(nats: f64) -> f64 {
    nats / LN_2
}

/// Entropy quantities of one layer. The layer is read both as a feature-level
/// representation (dimension `d`) and as a decision-level one (`D = d`).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerEntropy {
    pub layer: usize,
    pub layer_name: alloc::string::String,
    pub d: usize,
    pub h_feat: f64,
    /// `(class, surrogate)` for every class with at least two samples.
    pub class_surrogates: Vec<(u32, f64)>,
    pub h_dec: f64,
    /// `None` when either surrogate is infinite.
    pub gap: Option<f64>,
    pub ln_k: f64,
    pub h_label: f64,
    pub delta: f64,
    pub kappa: f64,
    /// `h_feat + κ`, comparable across layers without an `H(X)` estimate.
    pub lb_subtrahend_feat: f64,
    /// `max_c h_c + H(Y) + κ`.
    pub lb_subtrahend_dec: f64,
    pub hx: Option<f64>,
    pub lb_feat: Option<f64>,
    pub lb_dec: Option<f64>,
}

pub fn layer_entropy(layer: usize, batch: &ActivationBatch, classes: usize, delta: f64, hx: Option<f64>) -> Result<LayerEntropy> {
    let stats = class_stats(batch)?;
    let d = stats.dim;
    let h_feat = feat_surrogate(stats.sigma2_feat, d)?;
    let class_surrogates = stats
        .per_class
        .iter()
        .map(|c| Ok((c.class, class_surrogate(c.r2, d)?)))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = class_surrogates.iter().map(|&(_, h)| h).collect();
    let h_dec = dec_surrogate(&values, classes)?;
    let max_class = h_dec - libm::log(classes as f64);
    let h_label = empirical_label_entropy(&batch.labels, classes)?;
    let kappa = kappa_uniform(d, delta)?;
    let feat = Subtrahend::Feat { h_feat };
    let dec = Subtrahend::Dec {
        max_class_surrogate: max_class,
        h_label,
    };
    let (lb_feat, lb_dec) = match hx {
        Some(_) => (Some(hx_given_z_lower(hx, feat, kappa)?), Some(hx_given_z_lower(hx, dec, kappa)?)),
        None => (None, None),
    };
    Ok(LayerEntropy {
        layer,
        layer_name: batch.layer_name.clone(),
        d,
        h_feat,
        class_surrogates,
        h_dec,
        gap: surrogate_gap(h_feat, h_dec).ok(),
        ln_k: libm::log(classes as f64),
        h_label,
        delta,
        kappa,
        lb_subtrahend_feat: feat.value() + kappa,
        lb_subtrahend_dec: dec.value() + kappa,
        hx,
        lb_feat,
        lb_dec,
    })
}

/// Quantized-entropy estimate of `H(X)` for inputs of at most
/// [`MAX_QUANTIZED_DIM`] coordinates; `None` for wider inputs.
pub fn input_entropy_estimate(inputs: &[f32], dim: usize, delta: f64) -> Result<Option<f64>> {
    if dim > MAX_QUANTIZED_DIM {
        return Ok(None);
    }
    let xs: Vec<f64> = inputs.iter().map(|&v| v as f64).collect();
    quantized_entropy(&xs, dim, delta).map(Some)
}
