//! Deployment costs of a split: edge FLOPs, payload size, parameter share and
//! energy-derived metrics from an external measurement.
//!
//! A multiply-accumulate counts as two FLOPs; biases and activations are not
//! counted. GFLOPs/W divides the FLOPs of a single inference by the window
//! length, then by the average power over that window.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::micronet::MlpModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Precision {
    Fp32,
    Fp16,
    Int8,
}

impl Precision {
    pub const ALL: [Precision; 3] = [Precision::Fp32, Precision::Fp16, Precision::Int8];

    pub fn bytes(self) -> u64 {
        match self {
            Precision::Fp32 => 4,
            Precision::Fp16 => 2,
            Precision::Int8 => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Precision::Fp32 => "fp32",
            Precision::Fp16 => "fp16",
            Precision::Int8 => "int8",
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fp32" => Ok(Precision::Fp32),
            "fp16" => Ok(Precision::Fp16),
            "int8" => Ok(Precision::Int8),
            other => Err(invalid("precision", alloc::format!("unknown precision `{other}` (fp32, fp16, int8)"))),
        }
    }
}

/// Payload of one sample of `shape` at `precision`.
pub fn tx_bytes(shape: &[usize], precision: Precision) -> Result<u64> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(invalid("shape", "extents must be non-empty and non-zero"));
    }
    Ok(shape.iter().map(|&e| e as u64).product::<u64>() * precision.bytes())
}

/// `Σ 2 · in · out` over layers `< split_index`.
pub fn flops(model: &MlpModel, split_index: usize) -> Result<u64> {
    if split_index > model.num_layers() {
        return Err(invalid("split_index", alloc::format!("must be at most {}", model.num_layers())));
    }
    Ok(model.layers()[..split_index]
        .iter()
        .map(|l| 2 * l.in_dim() as u64 * l.out_dim() as u64)
        .sum())
}

/// Widest vector on the edge side (input included) times 4 bytes.
pub fn act_peak_bytes(model: &MlpModel, split_index: usize) -> Result<u64> {
    if split_index > model.num_layers() {
        return Err(invalid("split_index", alloc::format!("must be at most {}", model.num_layers())));
    }
    let widest = model.layers()[..split_index]
        .iter()
        .map(|l| l.out_dim())
        .fold(model.input_dim(), usize::max);
    Ok(widest as u64 * 4)
}

/// Shape of the representation sent to the cloud at `split_index`.
pub fn split_shape(model: &MlpModel, split_index: usize) -> Result<Vec<usize>> {
    match split_index {
        0 => Ok(alloc::vec![model.input_dim()]),
        s if s <= model.num_layers() => Ok(alloc::vec![model.layers()[s - 1].out_dim()]),
        _ => Err(invalid("split_index", alloc::format!("must be at most {}", model.num_layers()))),
    }
}

/// An external energy measurement over a window of repeated inferences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyMeasurement {
    pub e_total_j: f64,
    pub n_iters: u64,
    pub t_window_s: f64,
    /// Overrides the FLOPs computed from the model.
    pub flops_per_inf: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyMetrics {
    pub e_total: f64,
    pub n_iters: u64,
    pub t_window: f64,
    pub flops_per_inf: f64,
    pub e_inf: f64,
    pub p_avg: f64,
    pub gflops_per_watt: f64,
    pub edp: f64,
    pub ed2p: f64,
}

pub fn energy_metrics(e_total: f64, n_iters: u64, t_window: f64, flops_per_inf: f64) -> Result<EnergyMetrics> {
    if !(e_total > 0.0) || !e_total.is_finite() {
        return Err(invalid("e_total", "must be positive and finite"));
    }
    if n_iters == 0 {
        return Err(invalid("n_iters", "must be at least 1"));
    }
    if !(t_window > 0.0) || !t_window.is_finite() {
        return Err(invalid("t_window", "must be positive and finite"));
    }
    if !(flops_per_inf >= 0.0) || !flops_per_inf.is_finite() {
        return Err(invalid("flops_per_inf", "must be non-negative and finite"));
    }
    let p_avg = e_total / t_window;
    Ok(EnergyMetrics {
        e_total,
        n_iters,
        t_window,
        flops_per_inf,
        e_inf: e_total / n_iters as f64,
        p_avg,
        gflops_per_watt: flops_per_inf / t_window / 1e9 / p_avg,
        edp: e_total * t_window,
        ed2p: e_total * t_window * t_window,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub split_index: usize,
    pub split_shape: Vec<usize>,
    pub edge_flops: u64,
    pub tx_bytes: Vec<(Precision, u64)>,
    pub act_peak_bytes: u64,
    pub edge_params: usize,
    pub total_params: usize,
    pub edge_share: f64,
    pub energy: Option<EnergyMetrics>,
}

pub fn cost_report(
    model: &MlpModel,
    split_index: usize,
    precisions: &[Precision],
    measurement: Option<&EnergyMeasurement>,
) -> Result<CostReport> {
    let params = model.count_params(split_index)?;
    let edge_flops = flops(model, split_index)?;
    let shape = split_shape(model, split_index)?;
    let tx = precisions
        .iter()
        .map(|&p| Ok((p, tx_bytes(&shape, p)?)))
        .collect::<Result<Vec<_>>>()?;
    let energy = measurement
        .map(|m| {
            let f = m.flops_per_inf.unwrap_or(edge_flops as f64);
            energy_metrics(m.e_total_j, m.n_iters, m.t_window_s, f)
        })
        .transpose()?;
    Ok(CostReport {
        split_index,
        split_shape: shape,
        edge_flops,
        tx_bytes: tx,
        act_peak_bytes: act_peak_bytes(model, split_index)?,
        edge_params: params.edge,
        total_params: params.total,
        edge_share: params.edge_share,
        energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::micronet::{init_model, Activation, Layer};
    use approx::assert_abs_diff_eq;

    #[test]
    fn payload_sizes() {
        assert_eq!(tx_bytes(&[256, 16, 16], Precision::Fp32).unwrap(), 262_144);
        assert_eq!(tx_bytes(&[512, 4, 4], Precision::Fp32).unwrap(), 32_768);
        assert_eq!(tx_bytes(&[512, 8, 8], Precision::Fp16).unwrap(), 65_536);
        assert_eq!(tx_bytes(&[7, 3], Precision::Int8).unwrap() * 4, tx_bytes(&[7, 3], Precision::Fp32).unwrap());
        assert!(tx_bytes(&[4, 0], Precision::Fp32).is_err());
        assert!(tx_bytes(&[], Precision::Fp32).is_err());
    }

    #[test]
    fn flop_counts() {
        let layer = Layer::new(64, 32, alloc::vec![0.0; 2048], alloc::vec![0.0; 32], Activation::Identity).unwrap();
        let m = MlpModel::new(alloc::vec![layer], 1).unwrap();
        assert_eq!(flops(&m, 1).unwrap(), 4096);
        assert_eq!(flops(&m, 0).unwrap(), 0);
        let m = init_model(4, &[8, 8], 3, 0).unwrap();
        assert_eq!(flops(&m, 3).unwrap(), 240);
        assert!(flops(&m, 1).unwrap() <= flops(&m, 2).unwrap());
        assert!(flops(&m, 4).is_err());
    }

    #[test]
    fn table_row_reproduction() {
        let t = 628.1730 / 498.6036;
        let e = energy_metrics(498.6036, 500, t, 1.826e9).unwrap();
        assert_abs_diff_eq!(e.e_inf, 0.9972, epsilon = 1e-4);
        assert_abs_diff_eq!(e.edp, 628.1730, epsilon = 1e-9);
        assert_abs_diff_eq!(e.ed2p, 791.4130, epsilon = 1e-2);
        assert_abs_diff_eq!(e.gflops_per_watt, 0.003662, epsilon = 1e-5);
        assert_eq!(e.e_inf * 500.0, e.e_total);
        assert!(energy_metrics(1.0, 0, 1.0, 1.0).is_err());
        assert!(energy_metrics(1.0, 1, 0.0, 1.0).is_err());
    }

    #[test]
    fn report_without_measurement() {
        let m = init_model(4, &[8, 8], 3, 0).unwrap();
        let r = cost_report(&m, 1, &Precision::ALL, None).unwrap();
        assert!(r.energy.is_none());
        assert_eq!(r.split_shape, alloc::vec![8]);
        assert_eq!(r.tx_bytes, alloc::vec![(Precision::Fp32, 32), (Precision::Fp16, 16), (Precision::Int8, 8)]);
        assert_eq!(r.edge_flops, 64);
        assert_eq!(r.act_peak_bytes, 32);
        assert_eq!(r.edge_params, 40);
        assert_eq!(r.total_params, 139);
    }

    #[test]
    fn precision_parsing() {
        for p in Precision::ALL {
            assert_eq!(p.name().parse::<Precision>().unwrap(), p);
        }
        assert!("bf16".parse::<Precision>().is_err());
    }
}
