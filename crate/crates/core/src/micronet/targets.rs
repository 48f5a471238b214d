use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{log_softmax, ForwardTrace};
use crate::error::{ensure_len, invalid, Error, Result};

/// How a class label becomes a target distribution.
///
/// Smoothing puts `1 − α` on the true class and spreads `α` over the others:
/// uniformly for [`TargetScheme::LabelSmoothing`], in proportion to a class
/// prior for [`TargetScheme::PriorSmoothing`]. Negative `α` is allowed and
/// pushes the target off the simplex (true-class mass above one).
#[derive(Debug, Clone, PartialEq)]
pub enum TargetScheme {
    OneHot,
    LabelSmoothing { alpha: f64 },
    PriorSmoothing { alpha: f64, prior: Vec<f64> },
}

impl TargetScheme {
    /// Smoothing strength, 0 for one-hot.
    pub fn alpha(&self) -> f64 {
        match self {
            TargetScheme::OneHot => 0.0,
            TargetScheme::LabelSmoothing { alpha } | TargetScheme::PriorSmoothing { alpha, .. } => *alpha,
        }
    }

    fn validate(&self, classes: usize) -> Result<()> {
        match self {
            TargetScheme::OneHot => Ok(()),
            TargetScheme::LabelSmoothing { alpha } => {
                if !alpha.is_finite() {
                    return Err(invalid("alpha", "must be finite"));
                }
                if classes < 2 {
                    return Err(invalid("classes", "label smoothing needs at least two classes"));
                }
                Ok(())
            }
            TargetScheme::PriorSmoothing { alpha, prior } => {
                if !alpha.is_finite() {
                    return Err(invalid("alpha", "must be finite"));
                }
                ensure_len("class prior", classes, prior.len())?;
                if prior.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                    return Err(invalid("prior", "entries must be finite and non-negative"));
                }
                let total: f64 = prior.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(invalid("prior", format!("sums to {total}, expected 1")));
                }
                Ok(())
            }
        }
    }
}

/// Off-class weights `r^(c)`: zero at `c`, non-negative, summing to one.
///
/// One-hot has no off-class mass; it is reported with the uniform weights so
/// that the general soft-target decomposition stays well defined.
pub fn off_class_weights(scheme: &TargetScheme, class: usize, classes: usize) -> Result<Vec<f64>> {
    scheme.validate(classes)?;
    if class >= classes {
        return Err(Error::OutOfRange {
            context: "class",
            index: class,
            len: classes,
        });
    }
    if classes < 2 {
        return Err(invalid("classes", "off-class weights need at least two classes"));
    }
    let mut r = vec![0.0; classes];
    match scheme {
        TargetScheme::OneHot | TargetScheme::LabelSmoothing { .. } => {
            let w = 1.0 / (classes - 1) as f64;
            for (k, rk) in r.iter_mut().enumerate() {
                if k != class {
                    *rk = w;
                }
            }
        }
        TargetScheme::PriorSmoothing { prior, .. } => {
            let rest = 1.0 - prior[class];
            if !(rest > 0.0) {
                return Err(invalid("prior", format!("class {class} has prior 1; off-class prior undefined")));
            }
            for (k, rk) in r.iter_mut().enumerate() {
                if k != class {
                    *rk = prior[k] / rest;
                }
            }
        }
    }
    Ok(r)
}

/// Target distribution for one sample of class `class`.
pub fn target_row(scheme: &TargetScheme, class: usize, classes: usize) -> Result<Vec<f64>> {
    scheme.validate(classes)?;
    if class >= classes {
        return Err(Error::OutOfRange {
            context: "class",
            index: class,
            len: classes,
        });
    }
    let mut q = vec![0.0; classes];
    match scheme {
        TargetScheme::OneHot => q[class] = 1.0,
        _ => {
            let alpha = scheme.alpha();
            let r = off_class_weights(scheme, class, classes)?;
            for (k, qk) in q.iter_mut().enumerate() {
                *qk = if k == class { 1.0 - alpha } else { alpha * r[k] };
            }
        }
    }
    Ok(q)
}

/// Row-major `B × K` target matrix.
pub fn make_targets(labels: &[u32], scheme: &TargetScheme, classes: usize) -> Result<Vec<f64>> {
    scheme.validate(classes)?;
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; classes];
    let mut out = Vec::with_capacity(labels.len() * classes);
    for &y in labels {
        let c = y as usize;
        if c >= classes {
            return Err(Error::OutOfRange {
                context: "label",
                index: c,
                len: classes,
            });
        }
        if rows[c].is_none() {
            rows[c] = Some(target_row(scheme, c, classes)?);
        }
        out.extend_from_slice(rows[c].as_deref().unwrap_or(&[]));
    }
    Ok(out)
}

/// Cross-entropy `−Σ q_k log p_k` and the logit residual `δ = p − q`.
pub fn loss_and_residual(trace: &ForwardTrace, target: &[f64]) -> Result<(f64, Vec<f64>)> {
    let logits = trace.logits();
    ensure_len("target row", logits.len(), target.len())?;
    let log_p = log_softmax(logits);
    let mut loss = 0.0;
    for (&q, &lp) in target.iter().zip(&log_p) {
        if q != 0.0 {
            if !lp.is_finite() {
                return Err(Error::Numeric("zero predicted probability on a target class"));
            }
            loss -= q * lp;
        }
    }
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite cross-entropy"));
    }
    let residual = trace.probs.iter().zip(target).map(|(p, q)| p - q).collect();
    Ok((loss, residual))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    fn trace_with_probs(p: &[f64]) -> ForwardTrace {
        let logits: Vec<f64> = p.iter().map(|x| x.ln()).collect();
        ForwardTrace {
            pre_activations: vec![logits.clone()],
            activations: vec![logits],
            probs: p.to_vec(),
        }
    }

    #[test]
    fn target_rows() {
        assert_eq!(target_row(&TargetScheme::OneHot, 1, 3).unwrap(), vec![0.0, 1.0, 0.0]);
        let ls = TargetScheme::LabelSmoothing { alpha: 0.3 };
        assert!(close(&target_row(&ls, 0, 3).unwrap(), &[0.7, 0.15, 0.15]));
        let prior = TargetScheme::PriorSmoothing {
            alpha: 0.3,
            prior: vec![0.5, 0.3, 0.2],
        };
        assert!(close(&target_row(&prior, 0, 3).unwrap(), &[0.7, 0.18, 0.12]));
        let neg = TargetScheme::LabelSmoothing { alpha: -0.05 };
        assert!(close(&target_row(&neg, 0, 2).unwrap(), &[1.05, -0.05]));
    }

    #[test]
    fn rows_sum_to_one() {
        let schemes = [
            TargetScheme::OneHot,
            TargetScheme::LabelSmoothing { alpha: 0.37 },
            TargetScheme::LabelSmoothing { alpha: -0.05 },
            TargetScheme::PriorSmoothing {
                alpha: 0.2,
                prior: vec![0.1, 0.2, 0.3, 0.4],
            },
        ];
        for s in &schemes {
            for c in 0..4 {
                let q = target_row(s, c, 4).unwrap();
                assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn smoothing_errors() {
        let ls = TargetScheme::LabelSmoothing { alpha: 0.1 };
        assert!(target_row(&ls, 0, 1).is_err());
        let degenerate = TargetScheme::PriorSmoothing {
            alpha: 0.1,
            prior: vec![1.0, 0.0],
        };
        assert!(target_row(&degenerate, 0, 2).is_err());
        assert!(target_row(&degenerate, 1, 2).is_ok());
        let bad_sum = TargetScheme::PriorSmoothing {
            alpha: 0.1,
            prior: vec![0.5, 0.6],
        };
        assert!(target_row(&bad_sum, 0, 2).is_err());
    }

    #[test]
    fn make_targets_stacks_rows() {
        let q = make_targets(&[1, 0], &TargetScheme::OneHot, 2).unwrap();
        assert_eq!(q, vec![0.0, 1.0, 1.0, 0.0]);
        assert!(make_targets(&[2], &TargetScheme::OneHot, 2).is_err());
    }

    #[test]
    fn residuals() {
        let t = trace_with_probs(&[0.9, 0.1]);
        let (loss, d) = loss_and_residual(&t, &[1.0, 0.0]).unwrap();
        assert!(close(&d, &[-0.1, 0.1]));
        assert!((loss - 0.105_360_515_657_826_3).abs() < 1e-12);
        let (_, d) = loss_and_residual(&t, &[0.7, 0.3]).unwrap();
        assert!(close(&d, &[0.2, -0.2]));
        let (_, d) = loss_and_residual(&t, &[0.9, 0.1]).unwrap();
        assert!(d.iter().all(|x| x.abs() < 1e-12));
    }
}
