//! Skew-normal random inputs that keep a reference series' first two moments,
//! and the report comparing a model driven by them against real inputs.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::evaluation::gridwise_maps;
use crate::grid::FieldSeries;
use crate::training::{mix_seed, predict_series, Predictor};

pub const DEFAULT_SKEW_SHAPE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SkewMode {
    /// Each cell gets its own time series.
    Temporal,
    /// Each day gets its own 2-D field.
    Spatial,
}

impl SkewMode {
    pub fn name(self) -> &'static str {
        match self {
            SkewMode::Temporal => "temporal",
            SkewMode::Spatial => "spatial",
        }
    }
}

impl fmt::Display for SkewMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SkewMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temporal" => Ok(SkewMode::Temporal),
            "spatial" => Ok(SkewMode::Spatial),
            other => invalid(format!("unknown random-input mode {other:?} (temporal|spatial)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewNoiseConfig {
    pub shape: f64,
    pub mode: SkewMode,
    pub seed: u64,
}

impl SkewNoiseConfig {
    pub fn new(mode: SkewMode, seed: u64) -> Self {
        SkewNoiseConfig { shape: DEFAULT_SKEW_SHAPE, mode, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.shape.is_finite() {
            return invalid(format!("skew-normal shape must be finite, got {}", self.shape));
        }
        Ok(())
    }
}

/// Azzalini's construction: `δ|U0| + √(1−δ²)·U1`, `δ = a/√(1+a²)`.
pub fn skew_normal_sample<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let delta = a / (1.0 + a * a).sqrt();
    let u0: f64 = rng.sample(StandardNormal);
    let u1: f64 = rng.sample(StandardNormal);
    delta * u0.abs() + (1.0 - delta * delta).sqrt() * u1
}

/// Theoretical skewness of the skew-normal with shape `a`.
pub fn skew_normal_skewness(a: f64) -> f64 {
    let delta = a / (1.0 + a * a).sqrt();
    let b = delta * (2.0 / std::f64::consts::PI).sqrt();
    (4.0 - std::f64::consts::PI) / 2.0 * b.powi(3) / (1.0 - b * b).powf(1.5)
}

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len().max(1) as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Standardises `draws` with their own population moments and rescales to
/// `mean`/`std`. A zero `std` (or constant draws) gives a constant `mean`.
pub fn standardize_rescale(draws: &[f64], mean: f64, std: f64) -> Vec<f64> {
    let (m, s) = moments(draws);
    if std == 0.0 || s == 0.0 {
        return vec![mean; draws.len()];
    }
    draws.iter().map(|d| mean + std * (d - m) / s).collect()
}

/// Pre-clip values for the whole grid, time-major; zero outside the mask.
pub fn random_values(reference: &FieldSeries, cfg: &SkewNoiseConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let cells = reference.valid_cells();
    let (nt, nc) = (reference.n_days(), reference.n_cells());
    let mut out = vec![0.0; nt * nc];
    match cfg.mode {
        SkewMode::Temporal => {
            let cols: Vec<Vec<f64>> = cells
                .par_iter()
                .map(|&k| {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, 0, k as u64]));
                    let draws: Vec<f64> = (0..nt).map(|_| skew_normal_sample(cfg.shape, &mut rng)).collect();
                    let (m, s) = moments(&reference.cell_series(k));
                    standardize_rescale(&draws, m, s)
                })
                .collect();
            for (&k, col) in cells.iter().zip(&cols) {
                for (t, &v) in col.iter().enumerate() {
                    out[t * nc + k] = v;
                }
            }
        }
        SkewMode::Spatial => {
            let rows: Vec<Vec<f64>> = (0..nt)
                .into_par_iter()
                .map(|t| {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, 1, t as u64]));
                    let draws: Vec<f64> = cells.iter().map(|_| skew_normal_sample(cfg.shape, &mut rng)).collect();
                    let day = reference.day(t);
                    let vals: Vec<f64> = cells.iter().map(|&k| day[k] as f64).collect();
                    let (m, s) = moments(&vals);
                    standardize_rescale(&draws, m, s)
                })
                .collect();
            for (t, row) in rows.iter().enumerate() {
                for (&k, &v) in cells.iter().zip(row) {
                    out[t * nc + k] = v;
                }
            }
        }
    }
    Ok(out)
}

/// Random series clipped at zero, same grid, mask and days as `reference`.
pub fn random_series(reference: &FieldSeries, cfg: &SkewNoiseConfig) -> Result<FieldSeries> {
    let raw = random_values(reference, cfg)?;
    FieldSeries::from_raw_clipped(
        *reference.spec(),
        reference.mask().to_vec(),
        reference.days().to_vec(),
        raw.into_iter().map(|v| v as f32).collect(),
    )
}

pub fn temporal_random_series(reference: &FieldSeries, shape: f64, seed: u64) -> Result<FieldSeries> {
    random_series(reference, &SkewNoiseConfig { shape, mode: SkewMode::Temporal, seed })
}

pub fn spatial_random_series(reference: &FieldSeries, shape: f64, seed: u64) -> Result<FieldSeries> {
    random_series(reference, &SkewNoiseConfig { shape, mode: SkewMode::Spatial, seed })
}

/// Mean gridwise correlation against the observations for each input kind.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    /// Raw input itself, before any model.
    pub raw_input: Option<f64>,
    pub real: Option<f64>,
    pub random: Vec<(String, Option<f64>)>,
}

impl RobustnessReport {
    /// Every random-input correlation is strictly below the real-input one.
    pub fn random_is_worse(&self) -> bool {
        match self.real {
            Some(r) => self.random.iter().all(|(_, c)| c.is_none_or(|c| c < r)),
            None => false,
        }
    }

    /// `input_kind,mean_gridwise_corr`.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |v| v.to_string());
        let mut out = String::from("input_kind,mean_gridwise_corr\n");
        out.push_str(&format!("raw_input,{}\n", fmt(self.raw_input)));
        out.push_str(&format!("real,{}\n", fmt(self.real)));
        for (kind, c) in &self.random {
            out.push_str(&format!("{kind},{}\n", fmt(*c)));
        }
        out
    }
}

fn mean_corr(pred: &FieldSeries, obs: &FieldSeries) -> Result<Option<f64>> {
    Ok(gridwise_maps(pred, obs)?.corr.mean())
}

/// Runs the model on the real input and on each named random input.
pub fn robustness_report(
    model: &Predictor,
    real_in: &FieldSeries,
    random_in: &[(String, FieldSeries)],
    obs: &FieldSeries,
) -> Result<RobustnessReport> {
    let real = mean_corr(&predict_series(model, real_in)?, obs)?;
    let random = random_in
        .iter()
        .map(|(kind, input)| Ok((kind.clone(), mean_corr(&predict_series(model, input)?, obs)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RobustnessReport { raw_input: mean_corr(real_in, obs)?, real, random })
}
