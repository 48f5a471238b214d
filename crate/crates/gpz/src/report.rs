//! Serializable reports with fixed key names.

use serde::Serialize;

use gpz_core::cost::{CostReport, EnergyMetrics};
use gpz_core::dynamics::{angle_stats, AngleStats, ClassDynamics, RegimeStats, ANGLE_BIN_WIDTH, RANK_TOLERANCE};
use gpz_core::entropy::LayerEntropy;
use gpz_core::gpz::{GpzReport, LayerRadiusProfile, Stability};
use gpz_core::inversion::{DecoderConfig, InversionReport};
use gpz_core::repr_stats::ClassStats;

use crate::json::Real;

#[derive(Debug, Clone, Serialize)]
pub struct PerClass {
    pub c: u32,
    pub n: usize,
    pub r2: Real,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsLayer {
    pub layer: usize,
    pub name: String,
    pub d: usize,
    pub samples: usize,
    pub per_class: Vec<PerClass>,
    /// Classes with fewer than two samples.
    pub skipped: Vec<u32>,
    pub sigma2_feat: Real,
    pub r2_avg: Real,
    pub r2_norm: Real,
}

impl StatsLayer {
    pub fn new(layer: usize, name: &str, s: &ClassStats) -> Self {
        Self {
            layer,
            name: name.to_owned(),
            d: s.dim,
            samples: s.samples,
            per_class: s
                .per_class
                .iter()
                .map(|c| PerClass {
                    c: c.class,
                    n: c.count,
                    r2: Real(c.r2),
                })
                .collect(),
            skipped: s.skipped.clone(),
            sigma2_feat: Real(s.sigma2_feat),
            r2_avg: Real(s.r2_class_avg),
            r2_norm: Real(s.r2_class_avg / s.dim as f64),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub layers: Vec<StatsLayer>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassSurrogate {
    pub c: u32,
    pub h: Real,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsLayer {
    pub layer: usize,
    pub name: String,
    pub d: usize,
    pub h_feat: Real,
    pub h_dec: Real,
    pub class_surrogates: Vec<ClassSurrogate>,
    pub gap: Option<Real>,
    #[serde(rename = "lnK")]
    pub ln_k: Real,
    #[serde(rename = "hY")]
    pub h_y: Real,
    pub kappa: Real,
    pub lb_subtrahend_feat: Real,
    pub lb_subtrahend_dec: Real,
    pub lb_feat: Option<Real>,
    pub lb_dec: Option<Real>,
    pub delta: Real,
}

impl From<&LayerEntropy> for BoundsLayer {
    fn from(e: &LayerEntropy) -> Self {
        Self {
            layer: e.layer,
            name: e.layer_name.clone(),
            d: e.d,
            h_feat: Real(e.h_feat),
            h_dec: Real(e.h_dec),
            class_surrogates: e
                .class_surrogates
                .iter()
                .map(|&(c, h)| ClassSurrogate { c, h: Real(h) })
                .collect(),
            gap: e.gap.map(Real),
            ln_k: Real(e.ln_k),
            h_y: Real(e.h_label),
            kappa: Real(e.kappa),
            lb_subtrahend_feat: Real(e.lb_subtrahend_feat),
            lb_subtrahend_dec: Real(e.lb_subtrahend_dec),
            lb_feat: e.lb_feat.map(Real),
            lb_dec: e.lb_dec.map(Real),
            delta: Real(e.delta),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub delta: Real,
    /// `H(X)` in nats used by the lower bounds; `null` leaves them undefined.
    #[serde(rename = "hX")]
    pub h_x: Option<Real>,
    /// `given`, `estimated` or `none`.
    #[serde(rename = "hX_source")]
    pub h_x_source: String,
    pub layers: Vec<BoundsLayer>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Drop {
    pub from: usize,
    pub to: usize,
    pub pct: Option<Real>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileEntry {
    pub layer: usize,
    pub name: String,
    pub d: usize,
    pub r2: Real,
    pub r2_norm: Real,
}

impl From<&LayerRadiusProfile> for ProfileEntry {
    fn from(p: &LayerRadiusProfile) -> Self {
        Self {
            layer: p.layer_index,
            name: p.layer_name.clone(),
            d: p.d,
            r2: Real(p.r2),
            r2_norm: Real(p.r2_norm),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityEntry {
    pub runs: usize,
    pub agreement: Real,
    pub mean_jaccard: Real,
    pub zones: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GpzJson {
    #[serde(rename = "l_TS")]
    pub l_ts: usize,
    #[serde(rename = "l_TP")]
    pub l_tp: usize,
    pub zone: Vec<usize>,
    pub localized: bool,
    pub no_precursor: bool,
    pub peak_above_tau: bool,
    pub tau: Real,
    pub drops: Vec<Drop>,
    pub profile: Vec<ProfileEntry>,
    pub stability: Option<StabilityEntry>,
}

impl GpzJson {
    pub fn new(r: &GpzReport, profiles: &[LayerRadiusProfile]) -> Self {
        Self {
            l_ts: r.l_ts,
            l_tp: r.l_tp,
            zone: r.zone.clone(),
            localized: r.localized,
            no_precursor: r.no_precursor,
            peak_above_tau: r.peak_above_tau,
            tau: Real(r.tau),
            drops: r
                .drops
                .iter()
                .map(|d| Drop {
                    from: d.from,
                    to: d.to,
                    pct: d.pct.map(Real),
                })
                .collect(),
            profile: profiles.iter().map(ProfileEntry::from).collect(),
            stability: None,
        }
    }

    pub fn with_stability(mut self, s: &Stability, reports: &[GpzReport]) -> Self {
        self.stability = Some(StabilityEntry {
            runs: reports.len(),
            agreement: Real(s.agreement),
            mean_jaccard: Real(s.mean_jaccard),
            zones: reports.iter().map(|r| r.zone.clone()).collect(),
        });
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: Real,
    pub min: Real,
    pub max: Real,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Self {
            count: n,
            mean: Real(if n == 0 { 0.0 } else { values.iter().sum::<f64>() / n as f64 }),
            min: Real(if n == 0 { 0.0 } else { min }),
            max: Real(if n == 0 { 0.0 } else { max }),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TCorrStats {
    #[serde(flatten)]
    pub summary: Summary,
    pub frac_negative: Real,
    pub frac_positive: Real,
}

#[derive(Debug, Clone, Serialize)]
pub struct Regime {
    pub count: usize,
    pub frac_negative: Real,
    pub frac_positive: Real,
}

impl From<&RegimeStats> for Regime {
    fn from(r: &RegimeStats) -> Self {
        Self {
            count: r.count,
            frac_negative: Real(r.frac_negative),
            frac_positive: Real(r.frac_positive),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AngleHist {
    pub bin_width_deg: Real,
    pub counts: Vec<usize>,
    pub undefined: usize,
    pub alpha: Real,
    /// `null` when no sample falls in the regime.
    pub under_confident: Option<Regime>,
    pub over_confident: Option<Regime>,
}

impl From<&AngleStats> for AngleHist {
    fn from(s: &AngleStats) -> Self {
        Self {
            bin_width_deg: Real(ANGLE_BIN_WIDTH),
            counts: s.histogram.clone(),
            undefined: s.undefined,
            alpha: Real(s.alpha),
            under_confident: s.under_confident.as_ref().map(Regime::from),
            over_confident: s.over_confident.as_ref().map(Regime::from),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleBounds {
    pub epsilon: Real,
    pub residual_norm: Real,
    pub ls_residual_lb: Real,
    pub onehot_residual_ub: Real,
    pub sigma_max: Option<Real>,
    pub sigma_min_nonzero: Option<Real>,
    pub rank: Option<usize>,
    pub proj_retention: Option<Real>,
    pub feature_grad_lb: Option<Real>,
    pub feature_grad_ub: Option<Real>,
    pub feature_grad: Option<Real>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsBlock {
    pub rank_tolerance: Real,
    /// Samples whose Jacobian has rank below `min(K, d)` under the tolerance.
    pub rank_deficient: usize,
    /// Samples with an all-zero Jacobian; no gradient bounds are emitted.
    pub zero_jacobian: usize,
    pub residual_sandwich_holds: bool,
    pub feature_sandwich_holds: bool,
    pub samples: Vec<SampleBounds>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DynamicsClass {
    pub class: usize,
    pub layer: usize,
    pub scheme: String,
    pub gamma: Real,
    pub samples: usize,
    pub r2: Real,
    pub pred: Real,
    pub pred_from_gradients: Real,
    pub pred_onehot: Real,
    pub extra: Real,
    pub oracle: Real,
    pub oracle_fixed_center: Real,
    pub abs_err: Real,
    pub t_corr_stats: TCorrStats,
    pub angle_hist: AngleHist,
    pub bounds: BoundsBlock,
}

impl DynamicsClass {
    /// `alpha` sets the confidence regimes; `k` and `d` are the output and
    /// layer widths.
    pub fn new(r: &ClassDynamics, layer: usize, scheme: &str, alpha: f64, k: usize, d: usize) -> Self {
        let n = r.t_corr.len().max(1) as f64;
        let t_corr_stats = TCorrStats {
            summary: Summary::of(&r.t_corr),
            frac_negative: Real(r.t_corr.iter().filter(|&&t| t < 0.0).count() as f64 / n),
            frac_positive: Real(r.t_corr.iter().filter(|&&t| t > 0.0).count() as f64 / n),
        };
        let angle_hist = AngleHist::from(&angle_stats(&r.angles, alpha));

        let zero_jacobian = r.grad_bounds.iter().filter(|g| g.is_none()).count();
        let full_rank = k.min(d);
        let mut samples = Vec::with_capacity(r.samples);
        let mut residual_ok = true;
        let mut feature_ok = true;
        for ((rb, &norm), g) in r.residual_bounds.iter().zip(&r.residual_norms).zip(&r.grad_bounds) {
            let g = g.as_ref();
            if scheme == "onehot" && norm > rb.onehot_ub * (1.0 + 1e-9) + 1e-12 {
                residual_ok = false;
            }
            if scheme.starts_with("ls:") && norm < rb.ls_lb * (1.0 - 1e-9) - 1e-12 {
                residual_ok = false;
            }
            if let Some(g) = g {
                let slack = 1e-9 * g.upper.max(1.0);
                if g.lower > g.measured + slack || g.measured > g.upper + slack {
                    feature_ok = false;
                }
            }
            samples.push(SampleBounds {
                epsilon: Real(rb.epsilon),
                residual_norm: Real(norm),
                ls_residual_lb: Real(rb.ls_lb),
                onehot_residual_ub: Real(rb.onehot_ub),
                sigma_max: g.map(|g| Real(g.sigma_max)),
                sigma_min_nonzero: g.map(|g| Real(g.sigma_min_nonzero)),
                rank: g.map(|g| g.rank),
                proj_retention: g.map(|g| Real(g.proj_retention)),
                feature_grad_lb: g.map(|g| Real(g.lower)),
                feature_grad_ub: g.map(|g| Real(g.upper)),
                feature_grad: g.map(|g| Real(g.measured)),
            });
        }
        Self {
            class: r.class,
            layer,
            scheme: scheme.to_owned(),
            gamma: Real(r.gamma),
            samples: r.samples,
            r2: Real(r.r2),
            pred: Real(r.pred),
            pred_from_gradients: Real(r.pred_from_gradients),
            pred_onehot: Real(r.pred_onehot),
            extra: Real(r.extra),
            oracle: Real(r.oracle),
            oracle_fixed_center: Real(r.oracle_fixed_center),
            abs_err: Real(r.abs_err),
            t_corr_stats,
            angle_hist,
            bounds: BoundsBlock {
                rank_tolerance: Real(RANK_TOLERANCE),
                rank_deficient: r.grad_bounds.iter().flatten().filter(|g| g.rank < full_rank).count(),
                zero_jacobian,
                residual_sandwich_holds: residual_ok,
                feature_sandwich_holds: feature_ok,
                samples,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DynamicsReport {
    pub classes: Vec<DynamicsClass>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AngleRun {
    pub layer: usize,
    pub scheme: String,
    pub every: usize,
    pub records: usize,
    pub angle_hist: AngleHist,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecoderJson {
    pub arch: Vec<usize>,
    pub epochs: usize,
    pub lr: Real,
    pub batch: usize,
    pub seed: u64,
    pub aux_fraction: Real,
}

impl From<&DecoderConfig> for DecoderJson {
    fn from(c: &DecoderConfig) -> Self {
        Self {
            arch: c.hidden.clone(),
            epochs: c.epochs,
            lr: Real(c.lr),
            batch: c.batch,
            seed: c.seed,
            aux_fraction: Real(c.aux_fraction),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InversionLayer {
    pub layer: usize,
    pub name: String,
    pub d: usize,
    pub train_mse: Real,
    pub test_mse: Real,
    pub test_psnr: Real,
}

#[derive(Debug, Clone, Serialize)]
pub struct InversionJson {
    pub config: DecoderJson,
    pub aux_samples: usize,
    pub test_samples: usize,
    pub layers: Vec<InversionLayer>,
}

impl From<&InversionReport> for InversionJson {
    fn from(r: &InversionReport) -> Self {
        Self {
            config: DecoderJson::from(&r.config),
            aux_samples: r.aux_samples,
            test_samples: r.test_samples,
            layers: r
                .layers
                .iter()
                .map(|l| InversionLayer {
                    layer: l.layer,
                    name: l.layer_name.clone(),
                    d: l.d,
                    train_mse: Real(l.train_mse),
                    test_mse: Real(l.test_mse),
                    test_psnr: Real(l.test_psnr),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TxEntry {
    pub precision: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyJson {
    pub e_total: Real,
    pub n_iters: u64,
    pub t_window: Real,
    pub flops_per_inf: Real,
    pub e_inf: Real,
    pub p_avg: Real,
    pub gflops_per_watt: Real,
    pub edp: Real,
    pub ed2p: Real,
}

impl From<&EnergyMetrics> for EnergyJson {
    fn from(e: &EnergyMetrics) -> Self {
        Self {
            e_total: Real(e.e_total),
            n_iters: e.n_iters,
            t_window: Real(e.t_window),
            flops_per_inf: Real(e.flops_per_inf),
            e_inf: Real(e.e_inf),
            p_avg: Real(e.p_avg),
            gflops_per_watt: Real(e.gflops_per_watt),
            edp: Real(e.edp),
            ed2p: Real(e.ed2p),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CostJson {
    pub split_index: usize,
    pub split_shape: Vec<usize>,
    pub edge_flops: u64,
    pub tx_bytes: Vec<TxEntry>,
    pub act_peak_bytes: u64,
    pub edge_params: usize,
    pub total_params: usize,
    pub edge_share: Real,
    pub energy: Option<EnergyJson>,
}

impl From<&CostReport> for CostJson {
    fn from(r: &CostReport) -> Self {
        Self {
            split_index: r.split_index,
            split_shape: r.split_shape.clone(),
            edge_flops: r.edge_flops,
            tx_bytes: r
                .tx_bytes
                .iter()
                .map(|&(p, bytes)| TxEntry {
                    precision: p.name().to_owned(),
                    bytes,
                })
                .collect(),
            act_peak_bytes: r.act_peak_bytes,
            edge_params: r.edge_params,
            total_params: r.total_params,
            edge_share: Real(r.edge_share),
            energy: r.energy.as_ref().map(EnergyJson::from),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainJson {
    pub scheme: String,
    pub arch: Vec<usize>,
    pub epochs: usize,
    pub lr: Real,
    pub batch: usize,
    pub seed: u64,
    pub accuracy: Real,
    pub losses: Vec<Real>,
}
