//! Masked-MSE training with Adam and early stopping, prediction, and the
//! four-stage teacher/student pipeline.

mod adam;
mod early_stop;
mod pipeline;

use std::hash::Hasher;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use adam::{adam_step, AdamConfig};
pub use early_stop::{EarlyStopper, StopDecision};
pub use pipeline::{run_pipeline, PipelineResult};

use crate::error::{invalid, shape_err, Error, Result};
use crate::grid::FieldSeries;
use crate::models::{flatten_grads, AnyModel, Architecture, MaunetLightModel, MaunetModel, Network};
use crate::nn::{masked_squared_error, DropoutCtx, ParamStore, Tensor4};

/// Checkpoint entry holding the input/output scale.
pub const DATA_SCALE_KEY: &str = "meta.data_scale";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Fraction of days, taken from the end of the series, held out for
    /// early stopping.
    pub val_fraction: f64,
    pub seed: u64,
    /// Inputs and targets are divided by this (mm/day) before entering the
    /// network, and predictions multiplied by it.
    pub data_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 16,
            max_epochs: 500,
            patience: 20,
            val_fraction: 0.1,
            seed: 7,
            data_scale: 10.0,
        }
    }
}

impl TrainConfig {
    /// Short budget for the standard synthetic benchmark: small batches and
    /// four epochs keep a full four-model pipeline within minutes on a CPU.
    pub fn benchmark(seed: u64) -> Self {
        TrainConfig { batch_size: 8, max_epochs: 4, seed, ..TrainConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return invalid(format!("{name} must be in [0, 1), got {b}"));
            }
        }
        if !(self.epsilon > 0.0) {
            return invalid(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return invalid("batch_size and max_epochs must be at least 1");
        }
        if self.patience == 0 {
            return invalid("patience must be at least 1");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 0.5) {
            return invalid(format!("val_fraction must be in (0, 0.5), got {}", self.val_fraction));
        }
        if !(self.data_scale > 0.0 && self.data_scale.is_finite()) {
            return invalid(format!("data_scale must be positive, got {}", self.data_scale));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }

    fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Teacher,
    Gt,
    Mp,
    Kr,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Teacher, Variant::Gt, Variant::Mp, Variant::Kr];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Teacher => "teacher",
            Variant::Gt => "gt",
            Variant::Mp => "mp",
            Variant::Kr => "kr",
        }
    }

    pub fn architecture(self) -> Architecture {
        match self {
            Variant::Teacher => Architecture::Maunet,
            _ => Architecture::MaunetLight,
        }
    }
}

/// Mean squared errors in (mm/day)².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub variant: Variant,
    /// Best-epoch weights.
    pub model: AnyModel,
    /// Weights before the first update.
    pub initial_params: ParamStore,
    pub history: Vec<EpochStats>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub data_scale: f64,
    /// Hash of the exact target values trained against.
    pub target_fingerprint: u64,
}

impl TrainedModel {
    pub fn predictor(&self) -> Predictor {
        Predictor { model: self.model.clone(), data_scale: self.data_scale }
    }

    pub fn params(&self) -> ParamStore {
        self.model.to_params()
    }

    /// Weights plus the data-scale entry, ready for MCK1.
    pub fn checkpoint(&self) -> ParamStore {
        self.predictor().checkpoint()
    }

    pub fn history_csv(&self) -> String {
        history_csv(&self.history)
    }
}

pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for h in history {
        out.push_str(&format!("{},{},{}\n", h.epoch, h.train_loss, h.val_loss));
    }
    out
}

/// A network and the scale its inputs and outputs are expressed in.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub model: AnyModel,
    pub data_scale: f64,
}

impl Predictor {
    pub fn checkpoint(&self) -> ParamStore {
        let mut store = self.model.to_params();
        store
            .push(DATA_SCALE_KEY, Tensor4::from_vec([1, 1, 1, 1], vec![self.data_scale]).expect("scalar"))
            .expect("meta key is not a layer name");
        store
    }

    /// Reads weights and the data scale (1 when absent).
    pub fn from_checkpoint(store: &ParamStore) -> Result<Self> {
        let data_scale = match store.get(DATA_SCALE_KEY) {
            Some(t) if t.len() == 1 && t.values()[0] > 0.0 && t.values()[0].is_finite() => t.values()[0],
            Some(_) => return Err(Error::Format(format!("`{DATA_SCALE_KEY}` must be one positive scalar"))),
            None => 1.0,
        };
        Ok(Predictor { model: AnyModel::from_params(store)?, data_scale })
    }
}

/// Eval-mode prediction for every day, clipped at 0, zero outside the
/// inputs' mask.
pub fn predict_series(p: &Predictor, inputs: &FieldSeries) -> Result<FieldSeries> {
    let spec = *inputs.spec();
    let (h, w) = (spec.n_lat, spec.n_lon);
    let m = p.model.architecture().spatial_multiple();
    if h % m != 0 || w % m != 0 {
        return shape_err(format!("{} needs grid dims divisible by {m}, got {h}x{w}", p.model.architecture()));
    }
    let days: Vec<Vec<f32>> = (0..inputs.n_days())
        .into_par_iter()
        .map(|t| {
            let x = day_tensor(inputs.day(t), h, w, p.data_scale);
            let y = p.model.predict(&x)?;
            Ok(y.values().iter().map(|&v| (v * p.data_scale) as f32).collect())
        })
        .collect::<Result<_>>()?;
    FieldSeries::from_raw_clipped(spec, inputs.mask().to_vec(), inputs.days().to_vec(), days.concat())
}

fn day_tensor(values: &[f32], h: usize, w: usize, scale: f64) -> Tensor4 {
    Tensor4::from_vec([1, 1, h, w], values.iter().map(|&v| v as f64 / scale).collect()).expect("day slice matches grid")
}

pub fn series_fingerprint(s: &FieldSeries) -> u64 {
    let mut h = std::hash::DefaultHasher::new();
    for v in s.data() {
        h.write_u32(v.to_bits());
    }
    h.finish()
}

/// SplitMix64 over a sequence of words: independent, reproducible seeds for
/// every (stage, epoch, batch, sample) stream.
pub(crate) fn mix_seed(words: &[u64]) -> u64 {
    let mut z = 0x9E37_79B9_7F4A_7C15u64;
    for &w in words {
        z = z.wrapping_add(w).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Trains a freshly initialised or given network.
pub fn train(
    variant: Variant,
    init: Option<&ParamStore>,
    inputs: &FieldSeries,
    targets: &FieldSeries,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    let init_seed = mix_seed(&[cfg.seed, 0xD1CE]);
    match variant.architecture() {
        Architecture::Maunet => {
            let mut m = MaunetModel::init_seeded(init_seed);
            if let Some(p) = init {
                m.load_params(p)?;
            }
            let (m, r) = fit(m, inputs, targets, cfg)?;
            Ok(r.finish(variant, AnyModel::Maunet(m), cfg, targets))
        }
        Architecture::MaunetLight => {
            let mut m = MaunetLightModel::init_seeded(init_seed);
            if let Some(p) = init {
                m.load_params(p)?;
            }
            let (m, r) = fit(m, inputs, targets, cfg)?;
            Ok(r.finish(variant, AnyModel::Light(m), cfg, targets))
        }
    }
}

struct FitRecord {
    initial_params: ParamStore,
    history: Vec<EpochStats>,
    best_epoch: usize,
}

impl FitRecord {
    fn finish(self, variant: Variant, model: AnyModel, cfg: &TrainConfig, targets: &FieldSeries) -> TrainedModel {
        TrainedModel {
            variant,
            model,
            initial_params: self.initial_params,
            history: self.history,
            best_epoch: self.best_epoch,
            data_scale: cfg.data_scale,
            target_fingerprint: series_fingerprint(targets),
        }
    }
}

/// Sum of squared errors, valid-cell count and flat parameter gradient of one
/// sample.
type SampleResult = (f64, usize, Vec<f64>);

fn fit<N: Network>(mut model: N, inputs: &FieldSeries, targets: &FieldSeries, cfg: &TrainConfig) -> Result<(N, FitRecord)> {
    cfg.validate()?;
    inputs.check_aligned(targets)?;
    let spec = *targets.spec();
    let (h, w) = (spec.n_lat, spec.n_lon);
    let m = N::ARCHITECTURE.spatial_multiple();
    if h % m != 0 || w % m != 0 {
        return shape_err(format!("{} needs grid dims divisible by {m}, got {h}x{w}", N::ARCHITECTURE));
    }
    let n = inputs.n_days();
    if n < 2 * cfg.batch_size {
        return Err(Error::InsufficientData(format!("{n} days is fewer than twice the batch size {}", cfg.batch_size)));
    }
    let mask = targets.mask();
    let n_valid = targets.n_valid();
    if n_valid == 0 {
        return invalid("targets have no valid cells");
    }
    let n_val = ((n as f64 * cfg.val_fraction).round() as usize).clamp(1, n - 1);
    let n_train = n - n_val;

    let xs: Vec<Tensor4> = (0..n).map(|t| day_tensor(inputs.day(t), h, w, cfg.data_scale)).collect();
    let ys: Vec<Tensor4> = (0..n).map(|t| day_tensor(targets.day(t), h, w, cfg.data_scale)).collect();
    let sq_scale = cfg.data_scale * cfg.data_scale;

    let mut store = model.to_params();
    let initial_params = store.clone();
    let mut best = store.clone();
    let mut stopper = EarlyStopper::new(cfg.patience);
    let adam = cfg.adam();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut step = 0u64;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, epoch as u64])));
        let (mut sse_sum, mut count_sum) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let denom = (chunk.len() * n_valid) as f64;
            let results: Vec<SampleResult> = chunk
                .par_iter()
                .enumerate()
                .map(|(i, &d)| {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, epoch as u64, b as u64, i as u64]));
                    let (pred, cache) = model.forward(&xs[d], &mut DropoutCtx::train(&mut rng))?;
                    let (sse, count, dy) = masked_squared_error(&pred, &ys[d], mask, 1.0 / denom)?;
                    let (_, grads) = model.backward(&cache, &dy)?;
                    Ok((sse, count, flatten_grads(&grads)))
                })
                .collect::<Result<_>>()?;
            let mut grad = vec![0.0; store.n_scalars()];
            for (sse, count, g) in &results {
                sse_sum += sse;
                count_sum += count;
                grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
            if !sse_sum.is_finite() {
                return Err(Error::Diverged(format!("training loss is {sse_sum} at epoch {epoch}, batch {}", b + 1)));
            }
            step += 1;
            adam_step(&mut store, &grad, &adam, step)?;
            model.load_params(&store)?;
        }
        let val = (n_train..n)
            .into_par_iter()
            .map(|d| {
                let pred = model.predict(&xs[d])?;
                let (sse, count, _) = masked_squared_error(&pred, &ys[d], mask, 0.0)?;
                Ok((sse, count))
            })
            .collect::<Result<Vec<_>>>()?;
        let (vs, vc) = val.iter().fold((0.0, 0usize), |(a, b), (s, c)| (a + s, b + c));
        let val_loss = vs / vc as f64 * sq_scale;
        if !val_loss.is_finite() {
            return Err(Error::Diverged(format!("validation loss is {val_loss} at epoch {epoch}")));
        }
        history.push(EpochStats { epoch, train_loss: sse_sum / count_sum as f64 * sq_scale, val_loss });
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => best = store.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    model.load_params(&best)?;
    Ok((model, FitRecord { initial_params, history, best_epoch: stopper.best_epoch() }))
}

#[cfg(test)]
mod tests;
