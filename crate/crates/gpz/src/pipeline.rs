//! Stage functions shared by the subcommands, and the chained pipeline.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use gpz_core::cost::{cost_report, CostReport, Precision};
use gpz_core::datagen::{gaussian_mixture, Dataset, MixtureSpec};
use gpz_core::dynamics::{analyze_class, ClassDynamics};
use gpz_core::entropy::{input_entropy_estimate, layer_entropy, DEFAULT_DELTA};
use gpz_core::gpz::{locate, GpzReport, LayerRadiusProfile, DEFAULT_TAU};
use gpz_core::inversion::{sweep_layers, DecoderConfig, InversionReport};
use gpz_core::micronet::{extract, init_model, train, MlpModel, SgdConfig, TrainOutcome};
use gpz_core::repr_stats::{class_stats, layer_profiles, ActivationSet};

use crate::format;
use crate::json::{self, reals, Real};
use crate::params::SchemeSpec;
use crate::report::{
    BoundsLayer, BoundsReport, CostJson, DecoderJson, DynamicsClass, DynamicsReport, GpzJson, InversionJson,
    StatsLayer, StatsReport, TrainJson,
};

/// Where the `H(X)` estimate for the lower bounds comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HxSource {
    Given(f64),
    /// Quantized estimate from these inputs, when narrow enough.
    Estimate,
    None,
}

pub fn train_model(dataset: &Dataset, arch: &[usize], scheme: &SchemeSpec, sgd: SgdConfig) -> Result<TrainOutcome> {
    let model = init_model(dataset.dim(), arch, dataset.classes(), sgd.seed)?;
    Ok(train(model, dataset, &scheme.resolve(dataset), sgd)?)
}

pub fn train_json(outcome: &TrainOutcome, arch: &[usize], scheme: &SchemeSpec, sgd: &SgdConfig) -> TrainJson {
    TrainJson {
        scheme: scheme.to_string(),
        arch: arch.to_vec(),
        epochs: sgd.epochs,
        lr: Real(sgd.lr),
        batch: sgd.batch,
        seed: sgd.seed,
        accuracy: Real(outcome.accuracy),
        losses: reals(&outcome.losses),
    }
}

pub fn stats_report(acts: &ActivationSet) -> Result<StatsReport> {
    let layers = acts
        .batches
        .iter()
        .enumerate()
        .map(|(i, b)| Ok(StatsLayer::new(i, &b.layer_name, &class_stats(b)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(StatsReport { layers })
}

pub fn locate_report(acts: &ActivationSet, tau: f64) -> Result<(GpzReport, Vec<LayerRadiusProfile>)> {
    let profiles = layer_profiles(acts)?;
    let report = locate(&profiles, tau)?;
    Ok((report, profiles))
}

pub fn bounds_report(acts: &ActivationSet, delta: f64, hx: HxSource, inputs: Option<&Dataset>) -> Result<BoundsReport> {
    let (h_x, source) = match hx {
        HxSource::Given(v) => (Some(v), "given"),
        HxSource::Estimate => {
            let ds = inputs.context("an H(X) estimate needs the dataset")?;
            match input_entropy_estimate(ds.inputs(), ds.dim(), delta)? {
                Some(v) => (Some(v), "estimated"),
                None => (None, "none"),
            }
        }
        HxSource::None => (None, "none"),
    };
    let layers = acts
        .batches
        .iter()
        .enumerate()
        .map(|(i, b)| Ok(BoundsLayer::from(&layer_entropy(i, b, acts.classes, delta, h_x)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundsReport {
        delta: Real(delta),
        h_x: h_x.map(Real),
        h_x_source: source.to_owned(),
        layers,
    })
}

/// Classes with fewer than two samples are skipped when `classes` is `None`.
pub fn dynamics_report(
    model: &MlpModel,
    dataset: &Dataset,
    layer: usize,
    scheme: &SchemeSpec,
    gamma: f64,
    classes: Option<&[usize]>,
) -> Result<(Vec<ClassDynamics>, DynamicsReport)> {
    let target = scheme.resolve(dataset);
    let d = model.width(layer)?;
    let k = model.output_dim();
    let counts: Vec<usize> = (0..k)
        .map(|c| dataset.labels().iter().filter(|&&y| y as usize == c).count())
        .collect();
    let selected: Vec<usize> = match classes {
        Some(list) => list.to_vec(),
        None => (0..k).filter(|&c| counts[c] >= 2).collect(),
    };
    let mut raw = Vec::with_capacity(selected.len());
    let mut out = Vec::with_capacity(selected.len());
    for c in selected {
        let r = analyze_class(model, dataset, layer, c, &target, gamma).with_context(|| format!("class {c}"))?;
        out.push(DynamicsClass::new(&r, layer, &scheme.to_string(), scheme.alpha(), k, d));
        raw.push(r);
    }
    Ok((raw, DynamicsReport { classes: out }))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = json::to_string(value)?;
    format::write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub spread: f64,
    pub arch: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub scheme: SchemeSpec,
    pub tau: f64,
    pub delta: f64,
    pub gamma: f64,
    /// Layer for the dynamics analysis; the located `l_TP` when `None`.
    pub dyn_layer: Option<usize>,
    /// Edge/cloud split for the cost report; `l_TP + 1` when `None`.
    pub split: Option<usize>,
    pub decoder: DecoderConfig,
    pub precisions: Vec<Precision>,
}

impl PipelineConfig {
    /// K = 4, dim 16, spread 0.05, hidden 32-32-16-8, 200 epochs.
    pub fn standard(seed: u64) -> Self {
        Self {
            seed,
            classes: 4,
            per_class: 100,
            dim: 16,
            spread: 0.05,
            arch: vec![32, 32, 16, 8],
            epochs: 200,
            lr: 0.01,
            batch: 16,
            scheme: SchemeSpec::OneHot,
            tau: DEFAULT_TAU,
            delta: DEFAULT_DELTA,
            gamma: 0.01,
            dyn_layer: None,
            split: None,
            decoder: DecoderConfig {
                seed,
                ..DecoderConfig::default()
            },
            precisions: Precision::ALL.to_vec(),
        }
    }

    pub fn mixture(&self) -> MixtureSpec {
        MixtureSpec {
            classes: self.classes,
            per_class: self.per_class,
            dim: self.dim,
            spread: self.spread,
            seed: self.seed,
        }
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch: self.batch,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub dataset: Dataset,
    pub model: MlpModel,
    pub train: TrainJson,
    pub acts: ActivationSet,
    pub profiles: Vec<LayerRadiusProfile>,
    pub stats: StatsReport,
    pub gpz: GpzReport,
    pub bounds: BoundsReport,
    pub dyn_layer: usize,
    pub dynamics: Vec<ClassDynamics>,
    pub dynamics_json: DynamicsReport,
    pub inversion: InversionReport,
    pub cost: CostReport,
}

pub fn run(cfg: &PipelineConfig) -> Result<PipelineRun> {
    let dataset = gaussian_mixture(cfg.mixture()).context("generating data")?;
    let sgd = cfg.sgd();
    let outcome = train_model(&dataset, &cfg.arch, &cfg.scheme, sgd).context("training")?;
    let train = train_json(&outcome, &cfg.arch, &cfg.scheme, &sgd);
    let layers: Vec<usize> = (0..outcome.model.num_layers()).collect();
    let acts = extract(&outcome.model, &dataset, &layers)?;
    let stats = stats_report(&acts)?;
    let (gpz, profiles) = locate_report(&acts, cfg.tau).context("locating the transition zone")?;
    let bounds = bounds_report(&acts, cfg.delta, HxSource::Estimate, Some(&dataset))?;
    let dyn_layer = cfg.dyn_layer.unwrap_or(gpz.l_tp);
    let (dynamics, dynamics_json) = dynamics_report(&outcome.model, &dataset, dyn_layer, &cfg.scheme, cfg.gamma, None)
        .context("dynamics analysis")?;
    let decoder = DecoderConfig {
        seed: cfg.seed,
        ..cfg.decoder.clone()
    };
    let inversion = sweep_layers(&outcome.model, &dataset, &layers, &decoder).context("inversion probe")?;
    let split = cfg.split.unwrap_or(gpz.l_tp + 1);
    let model = outcome.model.with_split(split)?;
    let cost = cost_report(&model, split, &cfg.precisions, None)?;
    Ok(PipelineRun {
        dataset,
        model,
        train,
        acts,
        profiles,
        stats,
        gpz,
        bounds,
        dyn_layer,
        dynamics,
        dynamics_json,
        inversion,
        cost,
    })
}

#[derive(Debug, Clone, Serialize)]
struct PipelineSummary<'a> {
    seed: u64,
    scheme: String,
    arch: &'a [usize],
    accuracy: Real,
    #[serde(rename = "l_TS")]
    l_ts: usize,
    #[serde(rename = "l_TP")]
    l_tp: usize,
    zone: &'a [usize],
    dynamics_layer: usize,
    split_index: usize,
    decoder: DecoderJson,
    files: &'a [&'a str],
}

pub const OUTPUT_FILES: [&str; 11] = [
    "data.gpzd",
    "model.gpzm",
    "acts.gpza",
    "train.json",
    "stats.json",
    "gpz.json",
    "bounds.json",
    "dynamics.json",
    "inversion.json",
    "cost.json",
    "pipeline.json",
];

pub fn write_outputs(dir: &Path, cfg: &PipelineConfig, run: &PipelineRun) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    format::write_dataset(&dir.join("data.gpzd"), &run.dataset)?;
    format::write_model(&dir.join("model.gpzm"), &run.model)?;
    format::write_activations(&dir.join("acts.gpza"), &run.acts)?;
    write_json(&dir.join("train.json"), &run.train)?;
    write_json(&dir.join("stats.json"), &run.stats)?;
    write_json(&dir.join("gpz.json"), &GpzJson::new(&run.gpz, &run.profiles))?;
    write_json(&dir.join("bounds.json"), &run.bounds)?;
    write_json(&dir.join("dynamics.json"), &run.dynamics_json)?;
    write_json(&dir.join("inversion.json"), &InversionJson::from(&run.inversion))?;
    write_json(&dir.join("cost.json"), &CostJson::from(&run.cost))?;
    let summary = PipelineSummary {
        seed: cfg.seed,
        scheme: cfg.scheme.to_string(),
        arch: &cfg.arch,
        accuracy: run.train.accuracy,
        l_ts: run.gpz.l_ts,
        l_tp: run.gpz.l_tp,
        zone: &run.gpz.zone,
        dynamics_layer: run.dyn_layer,
        split_index: run.cost.split_index,
        decoder: DecoderJson::from(&run.inversion.config),
        files: &OUTPUT_FILES,
    };
    write_json(&dir.join("pipeline.json"), &summary)
}
