//! Reconstruction probe: small MLP decoders trained to map a layer's
//! activations back to the inputs.
//!
//! Decoder inputs are centred per coordinate and divided by one layer-wide
//! scale, both estimated on the auxiliary split, so every layer is probed on
//! a comparable scale without inflating rarely active units.

use alloc::string::String;
use alloc::vec::Vec;

use crate::datagen::{split_indices, Dataset};
use crate::error::{ensure_len, invalid, Error, Result};
use crate::micronet::{extract, fit, init_with_stream as init_decoder, MlpModel, Objective, SgdConfig};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    /// Share of the dataset used to train decoders.
    pub aux_fraction: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            hidden: Vec::new(),
            epochs: 2000,
            lr: 0.2,
            batch: 16,
            seed: 0,
            aux_fraction: 0.5,
        }
    }
}

/// Affine map `(z − mean) / scale` with a per-coordinate mean and one scale
/// per layer, the root of the mean per-coordinate variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: f64,
}

impl Standardizer {
    pub fn fit(rows: &[f32], d: usize) -> Result<Self> {
        if d == 0 || rows.is_empty() || rows.len() % d != 0 {
            return Err(invalid("rows", "must hold a whole, non-zero number of rows"));
        }
        let n = (rows.len() / d) as f64;
        let mut mean = alloc::vec![0.0; d];
        for row in rows.chunks_exact(d) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut ss = 0.0;
        for row in rows.chunks_exact(d) {
            for (&v, m) in row.iter().zip(&mean) {
                ss += (v as f64 - m) * (v as f64 - m);
            }
        }
        let sd = libm::sqrt(ss / (n * d as f64));
        Ok(Self {
            mean,
            scale: if sd > 0.0 { sd } else { 1.0 },
        })
    }

    pub fn apply(&self, rows: &[f32]) -> Vec<f32> {
        let d = self.mean.len();
        rows.chunks_exact(d)
            .flat_map(|row| row.iter().zip(&self.mean).map(|(&v, m)| ((v as f64 - m) / self.scale) as f32))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub model: MlpModel,
    pub standardizer: Standardizer,
    pub losses: Vec<f64>,
}

/// Trains a decoder from `acts` (`n × d`) to `targets` (`n × d0`).
pub fn train_decoder(acts: &[f32], d: usize, targets: &[f32], d0: usize, config: &DecoderConfig) -> Result<Decoder> {
    if d0 == 0 || targets.len() % d0 != 0 {
        return Err(invalid("targets", "must hold a whole number of rows"));
    }
    let n = targets.len() / d0;
    ensure_len("decoder inputs", n * d, acts.len())?;
    let standardizer = Standardizer::fit(acts, d)?;
    let model = init_decoder(d, &config.hidden, d0, config.seed, stream::DECODER_INIT)?;
    let sgd = SgdConfig {
        epochs: config.epochs,
        lr: config.lr,
        batch: config.batch,
        seed: config.seed ^ stream::DECODER_TRAIN,
    };
    let outcome = fit(model, &standardizer.apply(acts), Objective::SquaredError(targets), sgd)?;
    Ok(Decoder {
        model: outcome.model,
        standardizer,
        losses: outcome.losses,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstruction {
    pub mse: f64,
    pub psnr: f64,
}

/// `10 log₁₀(1 / mse)` for data on `[0, 1]`; `+∞` when `mse = 0`.
pub fn psnr(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * libm::log10(mse)
    }
}

pub fn evaluate(decoder: &Decoder, acts: &[f32], inputs: &[f32]) -> Result<Reconstruction> {
    let d = decoder.model.input_dim();
    let d0 = decoder.model.output_dim();
    if inputs.is_empty() {
        return Err(Error::Empty("evaluation batch"));
    }
    if inputs.len() % d0 != 0 {
        return Err(invalid("inputs", "must hold a whole number of rows"));
    }
    let n = inputs.len() / d0;
    ensure_len("decoder inputs", n * d, acts.len())?;
    let z = decoder.standardizer.apply(acts);
    let mut sse = 0.0;
    for (zi, xi) in z.chunks_exact(d).zip(inputs.chunks_exact(d0)) {
        let out = decoder.model.forward(zi)?;
        sse += out
            .logits()
            .iter()
            .zip(xi)
            .map(|(o, &x)| (o - x as f64) * (o - x as f64))
            .sum::<f64>();
    }
    let mse = sse / (n * d0) as f64;
    Ok(Reconstruction { mse, psnr: psnr(mse) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerInversion {
    pub layer: usize,
    pub layer_name: String,
    pub d: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    pub test_psnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionReport {
    pub config: DecoderConfig,
    pub aux_samples: usize,
    pub test_samples: usize,
    pub layers: Vec<LayerInversion>,
}

/// Probes every layer in `layers` with the same decoder budget and the same
/// auxiliary/test partition.
pub fn sweep_layers(model: &MlpModel, dataset: &Dataset, layers: &[usize], config: &DecoderConfig) -> Result<InversionReport> {
    let (aux_idx, test_idx) = split_indices(dataset.len(), config.aux_fraction, config.seed)?;
    debug_assert!(aux_idx.iter().all(|i| test_idx.binary_search(i).is_err()));
    let aux = dataset.subset(&aux_idx)?;
    let test = dataset.subset(&test_idx)?;
    let aux_acts = extract(model, &aux, layers)?;
    let test_acts = extract(model, &test, layers)?;
    let d0 = dataset.dim();

    let mut out = Vec::with_capacity(layers.len());
    for ((&layer, a), t) in layers.iter().zip(&aux_acts.batches).zip(&test_acts.batches) {
        let d = a.dim();
        let decoder = train_decoder(&a.data, d, aux.inputs(), d0, config)?;
        let train = evaluate(&decoder, &a.data, aux.inputs())?;
        let held_out = evaluate(&decoder, &t.data, test.inputs())?;
        out.push(LayerInversion {
            layer,
            layer_name: a.layer_name.clone(),
            d,
            train_mse: train.mse,
            test_mse: held_out.mse,
            test_psnr: held_out.psnr,
        });
    }
    Ok(InversionReport {
        config: config.clone(),
        aux_samples: aux_idx.len(),
        test_samples: test_idx.len(),
        layers: out,
    })
}
