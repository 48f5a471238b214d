//! Command-line front-end. Exit codes: 0 success, 1 runtime failure, 2 usage
//! error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use gpz_core::cost::{cost_report, EnergyMeasurement, Precision};
use gpz_core::datagen::{gaussian_mixture, MixtureSpec};
use gpz_core::dynamics::{angle_stats, angle_trajectory};
use gpz_core::gpz::stability_check;
use gpz_core::inversion::{sweep_layers, DecoderConfig};
use gpz_core::micronet::{accuracy, extract, init_model, SgdConfig, TrainOutcome};

use crate::format;
use crate::params::{parse_arch, parse_decoder_arch, LayerSelector, SchemeSpec};
use crate::pipeline::{self, write_json, HxSource, PipelineConfig};
use crate::report::{AngleHist, AngleRun, CostJson, GpzJson, InversionJson};

fn tau_value(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err("must lie in (0, 1]".into())
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err("must be positive and finite".into())
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err("must be non-negative and finite".into())
    }
}

fn finite(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err("must be finite".into())
    }
}

fn open_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err("must lie in (0, 1)".into())
    }
}

fn at_least_one(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err("must be an integer of at least 1".into()),
    }
}

fn at_least_two(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 2 => Ok(v),
        _ => Err("must be an integer of at least 2".into()),
    }
}

fn precisions(s: &str) -> Result<Vec<Precision>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<Precision>().map_err(|e| e.to_string()))
        .collect()
}

fn class_list(s: &str) -> Result<Vec<usize>, String> {
    if s == "all" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|c| c.trim().parse().map_err(|_| format!("invalid class `{c}`")))
        .collect()
}

#[derive(Debug, Parser)]
#[command(name = "gpz", version, about = "Split-point analysis for collaborative inference")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a Gaussian-mixture dataset (GPZD).
    GenData(GenDataArgs),
    /// Train a classifier (GPZM).
    Train(TrainArgs),
    /// Capture layer activations (GPZA).
    Dump(DumpArgs),
    /// Per-layer class statistics (JSON).
    Stats(StatsArgs),
    /// Locate the transition zone (JSON).
    Locate(LocateArgs),
    /// Entropy surrogates and conditional-entropy bounds (JSON).
    Bounds(BoundsArgs),
    /// First-order radius dynamics against the exact oracle (JSON).
    Dynamics(DynamicsArgs),
    /// Per-layer reconstruction probe (JSON).
    Invert(InvertArgs),
    /// Deployment cost of a split (JSON).
    Cost(CostArgs),
    /// Run every stage with one seed.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct DataShape {
    /// Number of classes.
    #[arg(long, default_value_t = 4, value_parser = at_least_one)]
    classes: usize,
    /// Samples per class.
    #[arg(long, default_value_t = 100, value_parser = at_least_two)]
    per_class: usize,
    /// Input dimension.
    #[arg(long, default_value_t = 16, value_parser = at_least_one)]
    dim: usize,
    /// Per-coordinate standard deviation around each class centre.
    #[arg(long, default_value_t = 0.05, value_parser = non_negative)]
    spread: f64,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[command(flatten)]
    shape: DataShape,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Training {
    /// Hidden widths, comma separated.
    #[arg(long, default_value = "32,32,16,8", value_parser = parse_arch)]
    arch: std::vec::Vec<usize>,
    /// onehot | ls:<alpha> | prior:<alpha>
    #[arg(long, default_value = "onehot")]
    scheme: SchemeSpec,
    #[arg(long, default_value_t = 200, value_parser = at_least_one)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01, value_parser = positive)]
    lr: f64,
    #[arg(long, default_value_t = 16, value_parser = at_least_one)]
    batch: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    training: Training,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of layers placed on the edge.
    #[arg(long, default_value_t = 0)]
    split: usize,
    #[arg(long)]
    out: PathBuf,
    /// Loss curve and accuracy (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Angle statistics over the training run (JSON).
    #[arg(long)]
    angles_out: Option<PathBuf>,
    /// Layer for the angle statistics.
    #[arg(long, default_value_t = 0)]
    angles_layer: usize,
    /// Record angles after every this many epochs.
    #[arg(long, default_value_t = 10, value_parser = at_least_one)]
    angles_every: usize,
}

#[derive(Debug, Args)]
struct DumpArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// `all` or a comma list of layer indices.
    #[arg(long, default_value = "all")]
    layers: LayerSelector,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    acts: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LocateArgs {
    /// Activation dump; repeat to add stability runs over other evaluation sets.
    #[arg(long, required = true)]
    acts: Vec<PathBuf>,
    /// Drop threshold as a fraction.
    #[arg(long, default_value_t = 0.20, value_parser = tau_value)]
    tau: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(long)]
    acts: PathBuf,
    /// Quantization step.
    #[arg(long, default_value_t = 1.0 / 1024.0, value_parser = positive)]
    delta: f64,
    /// H(X) in nats.
    #[arg(long, value_parser = finite, conflicts_with = "data")]
    hx: Option<f64>,
    /// Dataset for a quantized H(X) estimate (inputs of at most 4 coordinates).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DynamicsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    layer: usize,
    /// onehot | ls:<alpha> | prior:<alpha>
    #[arg(long, default_value = "onehot")]
    scheme: SchemeSpec,
    /// Virtual step size.
    #[arg(long, default_value_t = 0.01, value_parser = non_negative)]
    gamma: f64,
    /// `all` or a comma list of classes.
    #[arg(long, default_value = "all", value_parser = class_list)]
    classes: std::vec::Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DecoderArgs {
    /// Decoder hidden widths; empty for a single affine layer.
    #[arg(long, default_value = "", value_parser = parse_decoder_arch)]
    dec_arch: std::vec::Vec<usize>,
    #[arg(long, default_value_t = 2000, value_parser = at_least_one)]
    dec_epochs: usize,
    #[arg(long, default_value_t = 0.2, value_parser = positive)]
    dec_lr: f64,
    #[arg(long, default_value_t = 16, value_parser = at_least_one)]
    dec_batch: usize,
    /// Share of the data used to train decoders.
    #[arg(long, default_value_t = 0.5, value_parser = open_fraction)]
    aux_fraction: f64,
}

impl DecoderArgs {
    fn config(&self, seed: u64) -> DecoderConfig {
        DecoderConfig {
            hidden: self.dec_arch.clone(),
            epochs: self.dec_epochs,
            lr: self.dec_lr,
            batch: self.dec_batch,
            seed,
            aux_fraction: self.aux_fraction,
        }
    }
}

#[derive(Debug, Args)]
struct InvertArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "all")]
    layers: LayerSelector,
    #[command(flatten)]
    decoder: DecoderArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CostArgs {
    #[arg(long)]
    model: PathBuf,
    /// Layers on the edge; defaults to the split stored in the model.
    #[arg(long)]
    split: Option<usize>,
    #[arg(long, default_value = "fp32,fp16,int8", value_parser = precisions)]
    precisions: std::vec::Vec<Precision>,
    /// Energy measurement (JSON with e_total_j, n_iters, t_window_s and an
    /// optional flops_per_inf).
    #[arg(long)]
    measurement: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    shape: DataShape,
    #[command(flatten)]
    training: Training,
    #[arg(long, default_value_t = 0.20, value_parser = tau_value)]
    tau: f64,
    #[arg(long, default_value_t = 1.0 / 1024.0, value_parser = positive)]
    delta: f64,
    #[arg(long, default_value_t = 0.01, value_parser = non_negative)]
    gamma: f64,
    /// Layer for the dynamics analysis; defaults to the located l_TP.
    #[arg(long)]
    dyn_layer: Option<usize>,
    /// Split for the cost report; defaults to l_TP + 1.
    #[arg(long)]
    split: Option<usize>,
    #[command(flatten)]
    decoder: DecoderArgs,
    #[arg(long, default_value = "fp32,fp16,int8", value_parser = precisions)]
    precisions: std::vec::Vec<Precision>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasurementFile {
    e_total_j: f64,
    n_iters: u64,
    t_window_s: f64,
    flops_per_inf: Option<f64>,
}

/// Runs the command line and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn sgd(t: &Training, seed: u64) -> SgdConfig {
    SgdConfig {
        epochs: t.epochs,
        lr: t.lr,
        batch: t.batch,
        seed,
    }
}

fn read_dataset(path: &Path) -> Result<gpz_core::datagen::Dataset> {
    format::read_dataset(path).context("--data")
}

fn read_model(path: &Path) -> Result<gpz_core::micronet::MlpModel> {
    format::read_model(path).context("--model")
}

fn read_acts(path: &Path) -> Result<gpz_core::repr_stats::ActivationSet> {
    format::read_activations(path).context("--acts")
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData(a) => {
            let ds = gaussian_mixture(MixtureSpec {
                classes: a.shape.classes,
                per_class: a.shape.per_class,
                dim: a.shape.dim,
                spread: a.shape.spread,
                seed: a.seed,
            })?;
            format::write_dataset(&a.out, &ds)?;
            println!("wrote {} samples to {}", ds.len(), a.out.display());
        }
        Command::Train(a) => {
            let ds = read_dataset(&a.data)?;
            let config = sgd(&a.training, a.seed);
            let scheme = a.training.scheme;
            let outcome = match &a.angles_out {
                Some(path) => {
                    let init = init_model(ds.dim(), &a.training.arch, ds.classes(), a.seed)?;
                    if a.angles_layer >= init.num_layers() {
                        bail!("--angles-layer {} out of range (model has {} layers)", a.angles_layer, init.num_layers());
                    }
                    let target = scheme.resolve(&ds);
                    let (fit, records) = angle_trajectory(init, &ds, &target, a.angles_layer, config, a.angles_every)?;
                    let run = AngleRun {
                        layer: a.angles_layer,
                        scheme: scheme.to_string(),
                        every: a.angles_every,
                        records: records.len(),
                        angle_hist: AngleHist::from(&angle_stats(&records, scheme.alpha())),
                    };
                    write_json(path, &run)?;
                    TrainOutcome {
                        accuracy: accuracy(&fit.model, &ds)?,
                        model: fit.model,
                        losses: fit.losses,
                    }
                }
                None => pipeline::train_model(&ds, &a.training.arch, &scheme, config)?,
            };
            let model = &outcome.model;
            if a.split > model.num_layers() {
                bail!("--split {} exceeds the layer count {}", a.split, model.num_layers());
            }
            let model = model.clone().with_split(a.split)?;
            format::write_model(&a.out, &model)?;
            if let Some(path) = &a.report {
                write_json(path, &pipeline::train_json(&outcome, &a.training.arch, &scheme, &config))?;
            }
            println!("trained {} layers, accuracy {:.4}", model.num_layers(), outcome.accuracy);
        }
        Command::Dump(a) => {
            let model = read_model(&a.model)?;
            let ds = read_dataset(&a.data)?;
            let layers = a.layers.resolve(model.num_layers()).map_err(anyhow::Error::msg).context("--layers")?;
            let set = extract(&model, &ds, &layers)?;
            format::write_activations(&a.out, &set)?;
            println!("dumped {} layers to {}", layers.len(), a.out.display());
        }
        Command::Stats(a) => {
            let acts = read_acts(&a.acts)?;
            write_json(&a.out, &pipeline::stats_report(&acts)?)?;
        }
        Command::Locate(a) => {
            let sets = a.acts.iter().map(|p| read_acts(p)).collect::<Result<Vec<_>>>()?;
            let mut reports = Vec::with_capacity(sets.len());
            let mut first_profiles = None;
            for set in &sets {
                let (r, p) = pipeline::locate_report(set, a.tau)?;
                first_profiles.get_or_insert(p);
                reports.push(r);
            }
            let profiles = first_profiles.expect("at least one --acts");
            let mut out = GpzJson::new(&reports[0], &profiles);
            if reports.len() > 1 {
                let s = stability_check(&reports)?;
                out = out.with_stability(&s, &reports);
            }
            write_json(&a.out, &out)?;
            println!(
                "l_TS {} l_TP {} zone {:?} localized {}",
                reports[0].l_ts, reports[0].l_tp, reports[0].zone, reports[0].localized
            );
        }
        Command::Bounds(a) => {
            let acts = read_acts(&a.acts)?;
            let ds = a.data.as_deref().map(read_dataset).transpose()?;
            let hx = match (a.hx, &ds) {
                (Some(v), _) => HxSource::Given(v),
                (None, Some(_)) => HxSource::Estimate,
                (None, None) => HxSource::None,
            };
            write_json(&a.out, &pipeline::bounds_report(&acts, a.delta, hx, ds.as_ref())?)?;
        }
        Command::Dynamics(a) => {
            let model = read_model(&a.model)?;
            let ds = read_dataset(&a.data)?;
            if a.layer >= model.num_layers() {
                bail!("--layer {} out of range (model has {} layers)", a.layer, model.num_layers());
            }
            if let Some(c) = a.classes.iter().find(|&&c| c >= model.output_dim()) {
                bail!("--classes: class {c} out of range");
            }
            let classes = (!a.classes.is_empty()).then_some(a.classes.as_slice());
            let (_, report) = pipeline::dynamics_report(&model, &ds, a.layer, &a.scheme, a.gamma, classes)?;
            write_json(&a.out, &report)?;
        }
        Command::Invert(a) => {
            let model = read_model(&a.model)?;
            let ds = read_dataset(&a.data)?;
            let layers = a.layers.resolve(model.num_layers()).map_err(anyhow::Error::msg).context("--layers")?;
            let report = sweep_layers(&model, &ds, &layers, &a.decoder.config(a.seed))?;
            write_json(&a.out, &InversionJson::from(&report))?;
        }
        Command::Cost(a) => {
            let model = read_model(&a.model)?;
            let split = a.split.unwrap_or(model.split_index());
            let measurement = match &a.measurement {
                Some(path) => {
                    let text = std::fs::read_to_string(path).with_context(|| format!("--measurement {}", path.display()))?;
                    let m: MeasurementFile =
                        serde_json::from_str(&text).with_context(|| format!("--measurement {}", path.display()))?;
                    Some(EnergyMeasurement {
                        e_total_j: m.e_total_j,
                        n_iters: m.n_iters,
                        t_window_s: m.t_window_s,
                        flops_per_inf: m.flops_per_inf,
                    })
                }
                None => None,
            };
            let report = cost_report(&model, split, &a.precisions, measurement.as_ref()).context("--split")?;
            write_json(&a.out, &CostJson::from(&report))?;
        }
        Command::Pipeline(a) => {
            let cfg = PipelineConfig {
                seed: a.seed,
                classes: a.shape.classes,
                per_class: a.shape.per_class,
                dim: a.shape.dim,
                spread: a.shape.spread,
                arch: a.training.arch.clone(),
                epochs: a.training.epochs,
                lr: a.training.lr,
                batch: a.training.batch,
                scheme: a.training.scheme,
                tau: a.tau,
                delta: a.delta,
                gamma: a.gamma,
                dyn_layer: a.dyn_layer,
                split: a.split,
                decoder: a.decoder.config(a.seed),
                precisions: a.precisions.clone(),
            };
            let run = pipeline::run(&cfg)?;
            pipeline::write_outputs(&a.out_dir, &cfg, &run)?;
            println!(
                "accuracy {:.4}; l_TS {} l_TP {} zone {:?}; outputs in {}",
                run.train.accuracy.0,
                run.gpz.l_ts,
                run.gpz.l_tp,
                run.gpz.zone,
                a.out_dir.display()
            );
        }
    }
    Ok(())
}
