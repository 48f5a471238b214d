//! First-order change of the intra-class radius under a virtual gradient step.
//!
//! For class `c` with samples `z_i`, centre `μ_c` and residuals
//! `r_i = z_i − μ_c`, the step `z_i⁺ = z_i − γ J_iᵀ δ̃_i` changes the radius by
//!
//! ```text
//! ΔR_c² ≈ −(2γ/N_c) Σ_i [ δ̃_ic T_corr,i + Σ_{k≠c} δ̃_ik T_k,i ]
//! ```
//!
//! with `T_k,i = r_iᵀ J_iᵀ e_k` and `δ̃_i = p_i − q_i` for the target `q_i` of
//! the chosen scheme. The centre shift drops out at first order because the
//! residuals sum to zero. The exact oracle applies the step and recomputes
//! the radius; the difference is `(γ²/N_c) Σ ‖g_i − ḡ‖²`.
//!
//! Also here: the angle between `r_i` and `J_iᵀ e_c`, and the residual and
//! feature-gradient norm bounds built on `ε = 1 − p_c`.

use alloc::vec;
use alloc::vec::Vec;

use crate::datagen::Dataset;
use crate::error::{ensure_len, invalid, Error, Result};
use crate::linalg::{dot, norm, svd, Matrix};
use crate::micronet::{
    fit_observed, make_targets, FitOutcome, off_class_weights, representation_gradient, target_row, MlpModel, Objective, SgdConfig,
    Target, TargetScheme,
};

/// Singular values at or below this fraction of `σ₁` count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// `T_k = (J r)_k` for every class `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TTerms {
    pub class: usize,
    pub values: Vec<f64>,
}

impl TTerms {
    pub fn t_corr(&self) -> f64 {
        self.values[self.class]
    }

    /// Off-class terms in increasing class order.
    pub fn t_off(&self) -> Vec<f64> {
        self.values
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != self.class)
            .map(|(_, &v)| v)
            .collect()
    }
}

pub fn t_terms(z: &[f64], mu: &[f64], jacobian: &Matrix, class: usize) -> Result<TTerms> {
    ensure_len("class centre", z.len(), mu.len())?;
    ensure_len("jacobian columns", z.len(), jacobian.cols())?;
    if class >= jacobian.rows() {
        return Err(Error::OutOfRange {
            context: "class",
            index: class,
            len: jacobian.rows(),
        });
    }
    let r: Vec<f64> = z.iter().zip(mu).map(|(a, b)| a - b).collect();
    Ok(TTerms {
        class,
        values: jacobian.matvec(&r)?,
    })
}

/// One sample of the analysed class: representation, Jacobian of the logits
/// with respect to it, and predicted probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSample {
    pub z: Vec<f64>,
    pub jacobian: Matrix,
    pub probs: Vec<f64>,
}

fn class_mean(zs: impl Iterator<Item = impl AsRef<[f64]>>, d: usize) -> (Vec<f64>, usize) {
    let mut mu = vec![0.0; d];
    let mut n = 0;
    for z in zs {
        for (m, v) in mu.iter_mut().zip(z.as_ref()) {
            *m += v;
        }
        n += 1;
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    (mu, n)
}

fn radius(zs: &[Vec<f64>], mu: &[f64]) -> f64 {
    zs.iter()
        .map(|z| z.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum::<f64>()
        / zs.len() as f64
}

fn check_samples(samples: &[ClassSample], class: usize) -> Result<(usize, usize)> {
    if samples.len() < 2 {
        return Err(invalid("samples", "the class needs at least two samples"));
    }
    let d = samples[0].z.len();
    let k = samples[0].probs.len();
    if class >= k {
        return Err(Error::OutOfRange {
            context: "class",
            index: class,
            len: k,
        });
    }
    for s in samples {
        ensure_len("representation", d, s.z.len())?;
        ensure_len("probabilities", k, s.probs.len())?;
        ensure_len("jacobian rows", k, s.jacobian.rows())?;
        ensure_len("jacobian columns", d, s.jacobian.cols())?;
    }
    Ok((d, k))
}

/// `−(2γ/N) Σ_i Σ_k coef_ik T_k,i` with `coef_i = p_i − q` for the scheme's
/// target `q` of class `class`.
pub fn delta_r2_first_order(samples: &[ClassSample], class: usize, scheme: &TargetScheme, gamma: f64) -> Result<f64> {
    let (d, k) = check_samples(samples, class)?;
    let q = target_row(scheme, class, k)?;
    let (mu, n) = class_mean(samples.iter().map(|s| &s.z), d);
    let mut acc = 0.0;
    for s in samples {
        let t = t_terms(&s.z, &mu, &s.jacobian, class)?;
        acc += s.probs.iter().zip(&q).zip(&t.values).map(|((p, q), t)| (p - q) * t).sum::<f64>();
    }
    Ok(-2.0 * gamma / n as f64 * acc)
}

/// Extra first-order drive of a soft target relative to one-hot:
/// `−(2γα/N) Σ_i [T_corr,i − Σ_{k≠c} ρ_k T_k,i]`.
pub fn soft_target_extra(samples: &[ClassSample], class: usize, scheme: &TargetScheme, gamma: f64) -> Result<f64> {
    let (d, k) = check_samples(samples, class)?;
    if let TargetScheme::OneHot = scheme {
        return Ok(0.0);
    }
    let rho = off_class_weights(scheme, class, k)?;
    let (mu, n) = class_mean(samples.iter().map(|s| &s.z), d);
    let mut acc = 0.0;
    for s in samples {
        let t = t_terms(&s.z, &mu, &s.jacobian, class)?;
        acc += t.t_corr() - rho.iter().zip(&t.values).map(|(r, t)| r * t).sum::<f64>();
    }
    Ok(-2.0 * gamma * scheme.alpha() / n as f64 * acc)
}

/// `−(2γ/N) Σ_i r_iᵀ g_i` from raw representation gradients.
pub fn first_order_from_gradients(zs: &[Vec<f64>], grads: &[Vec<f64>], gamma: f64) -> Result<f64> {
    let d = check_pairs(zs, grads)?;
    let (mu, n) = class_mean(zs.iter(), d);
    let acc: f64 = zs
        .iter()
        .zip(grads)
        .map(|(z, g)| z.iter().zip(&mu).zip(g).map(|((a, m), g)| (a - m) * g).sum::<f64>())
        .sum();
    Ok(-2.0 * gamma / n as f64 * acc)
}

fn check_pairs(zs: &[Vec<f64>], grads: &[Vec<f64>]) -> Result<usize> {
    if zs.len() < 2 {
        return Err(invalid("samples", "the class needs at least two samples"));
    }
    ensure_len("gradients", zs.len(), grads.len())?;
    let d = zs[0].len();
    for (z, g) in zs.iter().zip(grads) {
        ensure_len("representation", d, z.len())?;
        ensure_len("gradient", d, g.len())?;
    }
    Ok(d)
}

/// Exact `R_c²⁺ − R_c²` after `z_i⁺ = z_i − γ g_i`. With `recenter = false`
/// the new radius is measured around the old centre.
pub fn delta_r2_oracle(zs: &[Vec<f64>], grads: &[Vec<f64>], gamma: f64, recenter: bool) -> Result<f64> {
    let d = check_pairs(zs, grads)?;
    let (mu, _) = class_mean(zs.iter(), d);
    let before = radius(zs, &mu);
    let moved: Vec<Vec<f64>> = zs
        .iter()
        .zip(grads)
        .map(|(z, g)| z.iter().zip(g).map(|(a, b)| a - gamma * b).collect())
        .collect();
    let after = if recenter {
        let (mu_new, _) = class_mean(moved.iter(), d);
        radius(&moved, &mu_new)
    } else {
        radius(&moved, &mu)
    };
    Ok(after - before)
}

/// Angle in degrees between `r` and `u = Jᵀ e_c`; exactly 90 when
/// `T_corr = 0`, `None` when either vector vanishes.
pub fn angle_deg(residual: &[f64], direction: &[f64]) -> Option<f64> {
    let (nr, nu) = (norm(residual), norm(direction));
    if nr == 0.0 || nu == 0.0 {
        return None;
    }
    if dot(residual, direction) == 0.0 {
        return Some(90.0);
    }
    // 2·atan2(‖r̂ − û‖, ‖r̂ + û‖) keeps full accuracy near 0° and 180°.
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in residual.iter().zip(direction) {
        let (x, y) = (a / nr, b / nu);
        diff += (x - y) * (x - y);
        sum += (x + y) * (x + y);
    }
    Some((2.0 * libm::atan2(libm::sqrt(diff), libm::sqrt(sum))).to_degrees())
}

/// Per-sample record for angle statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleRecord {
    pub p_c: f64,
    pub t_corr: f64,
    pub theta_deg: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeStats {
    pub count: usize,
    /// Fraction with `T_corr < 0` (`θ > 90°`).
    pub frac_negative: f64,
    /// Fraction with `T_corr > 0` (`θ < 90°`).
    pub frac_positive: f64,
}

/// Bin edges of the angle histogram, in degrees.
pub const ANGLE_BIN_WIDTH: f64 = 15.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AngleStats {
    pub alpha: f64,
    /// `p_c < 1 − α`; `None` if no sample falls in the regime.
    pub under_confident: Option<RegimeStats>,
    /// `p_c > 1 − α`.
    pub over_confident: Option<RegimeStats>,
    /// Counts over `[0, 15), [15, 30), …, [165, 180]`.
    pub histogram: Vec<usize>,
    /// Records without a defined angle.
    pub undefined: usize,
}

fn regime(records: &[&AngleRecord]) -> Option<RegimeStats> {
    if records.is_empty() {
        return None;
    }
    let n = records.len() as f64;
    Some(RegimeStats {
        count: records.len(),
        frac_negative: records.iter().filter(|r| r.t_corr < 0.0).count() as f64 / n,
        frac_positive: records.iter().filter(|r| r.t_corr > 0.0).count() as f64 / n,
    })
}

pub fn angle_stats(records: &[AngleRecord], alpha: f64) -> AngleStats {
    let bins = (180.0 / ANGLE_BIN_WIDTH) as usize;
    let mut histogram = vec![0usize; bins];
    let mut undefined = 0;
    for r in records {
        match r.theta_deg {
            Some(t) => histogram[((t / ANGLE_BIN_WIDTH) as usize).min(bins - 1)] += 1,
            None => undefined += 1,
        }
    }
    let cut = 1.0 - alpha;
    let under: Vec<&AngleRecord> = records.iter().filter(|r| r.p_c < cut).collect();
    let over: Vec<&AngleRecord> = records.iter().filter(|r| r.p_c > cut).collect();
    AngleStats {
        alpha,
        under_confident: regime(&under),
        over_confident: regime(&over),
        histogram,
        undefined,
    }
}

/// Angle records at `layer` for every sample of every class with at least two
/// samples, each residual taken from its own class centre.
pub fn angle_records(model: &MlpModel, dataset: &Dataset, layer: usize) -> Result<Vec<AngleRecord>> {
    let k = model.output_dim();
    ensure_len("model outputs", k, dataset.classes())?;
    let mut out = Vec::new();
    for class in 0..k {
        let mut zs = Vec::new();
        let mut rest = Vec::new();
        for i in (0..dataset.len()).filter(|&i| dataset.labels()[i] as usize == class) {
            let x: Vec<f64> = dataset.row(i).iter().map(|&v| v as f64).collect();
            let trace = model.forward_f64(&x)?;
            let mut e_c = vec![0.0; k];
            e_c[class] = 1.0;
            let u = model.jacobian_at(&trace, layer)?.t_matvec(&e_c)?;
            zs.push(trace.activations[layer].clone());
            rest.push((trace.probs[class], u));
        }
        if zs.len() < 2 {
            continue;
        }
        let (mu, _) = class_mean(zs.iter(), zs[0].len());
        for (z, (p_c, u)) in zs.iter().zip(rest) {
            let r: Vec<f64> = z.iter().zip(&mu).map(|(a, b)| a - b).collect();
            out.push(AngleRecord {
                p_c,
                t_corr: dot(&r, &u),
                theta_deg: angle_deg(&r, &u),
            });
        }
    }
    Ok(out)
}

/// Trains `model` under `scheme` and collects [`angle_records`] after every
/// `every`-th epoch.
pub fn angle_trajectory(
    model: MlpModel,
    dataset: &Dataset,
    scheme: &TargetScheme,
    layer: usize,
    config: SgdConfig,
    every: usize,
) -> Result<(FitOutcome, Vec<AngleRecord>)> {
    if every == 0 {
        return Err(invalid("every", "must be at least 1"));
    }
    model.width(layer)?;
    let targets = make_targets(dataset.labels(), scheme, dataset.classes())?;
    let mut records = Vec::new();
    let mut failure = None;
    let outcome = fit_observed(model, dataset.inputs(), Objective::CrossEntropy(&targets), config, |epoch, m| {
        if failure.is_none() && (epoch + 1) % every == 0 {
            match angle_records(m, dataset, layer) {
                Ok(r) => records.extend(r),
                Err(e) => failure = Some(e),
            }
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok((outcome, records)),
    }
}

/// Closed-form residual norm bounds at prediction `p` for class `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualBounds {
    /// `1 − p_c`
    pub epsilon: f64,
    /// `|α − ε| √(K/(K−1))`, a lower bound on `‖p − q_LS‖`.
    pub ls_lb: f64,
    /// `√2 ε`, an upper bound on `‖p − e_c‖`.
    pub onehot_ub: f64,
}

pub fn residual_norm_bounds(p: &[f64], class: usize, alpha: f64) -> Result<ResidualBounds> {
    let k = p.len();
    if k < 2 {
        return Err(invalid("p", "needs at least two classes"));
    }
    if class >= k {
        return Err(Error::OutOfRange {
            context: "class",
            index: class,
            len: k,
        });
    }
    let epsilon = 1.0 - p[class];
    Ok(ResidualBounds {
        epsilon,
        ls_lb: libm::fabs(alpha - epsilon) * libm::sqrt(k as f64 / (k - 1) as f64),
        onehot_ub: core::f64::consts::SQRT_2 * epsilon,
    })
}

/// Feature-gradient bounds for `g = Jᵀ v`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGradBounds {
    pub sigma_max: f64,
    /// Smallest singular value above the rank tolerance.
    pub sigma_min_nonzero: f64,
    pub rank: usize,
    /// `‖Π v‖` with `Π` the projection onto `col(J)`.
    pub proj_norm: f64,
    /// `‖Π v‖ / ‖v‖`, 0 when `v = 0`.
    pub proj_retention: f64,
    /// `σ_r ‖Π v‖`
    pub lower: f64,
    /// `σ₁ ‖v‖`
    pub upper: f64,
    /// `‖Jᵀ v‖`
    pub measured: f64,
}

pub fn feature_grad_bounds(jacobian: &Matrix, v: &[f64]) -> Result<FeatureGradBounds> {
    ensure_len("residual", jacobian.rows(), v.len())?;
    if jacobian.is_zero() {
        return Err(invalid("jacobian", "is identically zero"));
    }
    let s = svd(jacobian);
    let sigma_max = s.s[0];
    let rank = s.s.iter().take_while(|&&x| x > RANK_TOLERANCE * sigma_max).count();
    let sigma_min_nonzero = s.s[rank - 1];
    // Coordinates of v in the left singular basis of the retained directions.
    let proj_sq: f64 = (0..rank)
        .map(|j| {
            let c: f64 = (0..jacobian.rows()).map(|i| s.u[(i, j)] * v[i]).sum();
            c * c
        })
        .sum();
    let proj_norm = libm::sqrt(proj_sq);
    let v_norm = norm(v);
    Ok(FeatureGradBounds {
        sigma_max,
        sigma_min_nonzero,
        rank,
        proj_norm,
        proj_retention: if v_norm > 0.0 { (proj_norm / v_norm).min(1.0) } else { 0.0 },
        lower: sigma_min_nonzero * proj_norm,
        upper: sigma_max * v_norm,
        measured: norm(&jacobian.t_matvec(v)?),
    })
}

/// Summary of the analysed class under one step size.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDynamics {
    pub class: usize,
    pub gamma: f64,
    pub samples: usize,
    pub r2: f64,
    /// First-order prediction through T-terms.
    pub pred: f64,
    /// Same prediction from raw gradients.
    pub pred_from_gradients: f64,
    /// One-hot part of the prediction.
    pub pred_onehot: f64,
    /// Soft-target extra term; `pred = pred_onehot + extra`.
    pub extra: f64,
    pub oracle: f64,
    pub oracle_fixed_center: f64,
    pub abs_err: f64,
    pub t_corr: Vec<f64>,
    pub angles: Vec<AngleRecord>,
    pub residual_norms: Vec<f64>,
    pub residual_bounds: Vec<ResidualBounds>,
    /// `None` where the Jacobian is all zero.
    pub grad_bounds: Vec<Option<FeatureGradBounds>>,
}

/// Runs the virtual-step analysis at `layer` for the training samples of
/// `class`. Gradients for the oracle come from backpropagation, independently
/// of the Jacobian used by the prediction.
pub fn analyze_class(
    model: &MlpModel,
    dataset: &Dataset,
    layer: usize,
    class: usize,
    scheme: &TargetScheme,
    gamma: f64,
) -> Result<ClassDynamics> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(invalid("gamma", "must be finite and non-negative"));
    }
    let k = model.output_dim();
    let q = target_row(scheme, class, k)?;
    let mut samples = Vec::new();
    let mut grads = Vec::new();
    for i in (0..dataset.len()).filter(|&i| dataset.labels()[i] as usize == class) {
        let x: Vec<f64> = dataset.row(i).iter().map(|&v| v as f64).collect();
        let trace = model.forward_f64(&x)?;
        let jacobian = model.jacobian_at(&trace, layer)?;
        grads.push(representation_gradient(model, &x, Target::CrossEntropy(&q), layer)?);
        samples.push(ClassSample {
            z: trace.activations[layer].clone(),
            jacobian,
            probs: trace.probs,
        });
    }
    if samples.len() < 2 {
        return Err(Error::NoPopulatedClass);
    }
    let zs: Vec<Vec<f64>> = samples.iter().map(|s| s.z.clone()).collect();
    let d = zs[0].len();
    let (mu, _) = class_mean(zs.iter(), d);

    let pred = delta_r2_first_order(&samples, class, scheme, gamma)?;
    let pred_onehot = delta_r2_first_order(&samples, class, &TargetScheme::OneHot, gamma)?;
    let extra = soft_target_extra(&samples, class, scheme, gamma)?;
    let oracle = delta_r2_oracle(&zs, &grads, gamma, true)?;

    let mut t_corr = Vec::with_capacity(samples.len());
    let mut angles = Vec::with_capacity(samples.len());
    let mut residual_norms = Vec::with_capacity(samples.len());
    let mut residual_bounds = Vec::with_capacity(samples.len());
    let mut grad_bounds = Vec::with_capacity(samples.len());
    for s in &samples {
        let t = t_terms(&s.z, &mu, &s.jacobian, class)?;
        let r: Vec<f64> = s.z.iter().zip(&mu).map(|(a, b)| a - b).collect();
        let mut e_c = vec![0.0; k];
        e_c[class] = 1.0;
        let u = s.jacobian.t_matvec(&e_c)?;
        angles.push(AngleRecord {
            p_c: s.probs[class],
            t_corr: t.t_corr(),
            theta_deg: angle_deg(&r, &u),
        });
        t_corr.push(t.t_corr());
        let delta: Vec<f64> = s.probs.iter().zip(&q).map(|(p, q)| p - q).collect();
        residual_norms.push(norm(&delta));
        residual_bounds.push(residual_norm_bounds(&s.probs, class, scheme.alpha())?);
        grad_bounds.push(if s.jacobian.is_zero() {
            None
        } else {
            Some(feature_grad_bounds(&s.jacobian, &delta)?)
        });
    }
    Ok(ClassDynamics {
        class,
        gamma,
        samples: samples.len(),
        r2: radius(&zs, &mu),
        pred,
        pred_from_gradients: first_order_from_gradients(&zs, &grads, gamma)?,
        pred_onehot,
        extra,
        oracle,
        oracle_fixed_center: delta_r2_oracle(&zs, &grads, gamma, false)?,
        abs_err: libm::fabs(pred - oracle),
        t_corr,
        angles,
        residual_norms,
        residual_bounds,
        grad_bounds,
    })
}
