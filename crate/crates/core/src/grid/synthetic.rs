//! Seeded synthetic rainfall: a smooth "truth", a gain/offset/noise biased
//! copy, and a 4× block-mean coarse copy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{block_mean_downsample, Calendar, FieldSeries, GridField, GridSpec};
use crate::error::{invalid, Result};

/// Coarsening factor between `truth` and `lowres`.
pub const LOWRES_FACTOR: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_days: usize,
    pub spec: GridSpec,
    /// Multiplicative bias `a` applied to truth.
    pub bias_gain: f64,
    /// Additive bias `b` in mm/day.
    pub bias_offset: f64,
    pub noise_sigma: f64,
    pub n_bumps: usize,
    /// Typical bump radius in grid cells.
    pub bump_scale: f64,
    pub calendar: Calendar,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 42,
            n_days: 500,
            spec: GridSpec::quarter_degree(64, 64),
            bias_gain: 1.3,
            bias_offset: 2.0,
            noise_sigma: 1.5,
            n_bumps: 6,
            bump_scale: 6.0,
            calendar: Calendar { start_year: 2000, first_doy: 152, days_per_year: 100 },
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return invalid(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if self.n_bumps == 0 {
            return invalid("n_bumps must be >= 1");
        }
        if !(self.bias_gain > 0.0 && self.bias_gain.is_finite()) {
            return invalid(format!("bias_gain must be > 0, got {}", self.bias_gain));
        }
        if !self.bias_offset.is_finite() {
            return invalid("bias_offset must be finite");
        }
        if !(self.bump_scale > 0.0) {
            return invalid(format!("bump_scale must be > 0, got {}", self.bump_scale));
        }
        if self.spec.n_lat % LOWRES_FACTOR != 0 || self.spec.n_lon % LOWRES_FACTOR != 0 {
            return invalid(format!(
                "grid {}x{} must be divisible by {LOWRES_FACTOR} to build the low-resolution copy",
                self.spec.n_lat, self.spec.n_lon
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub truth: FieldSeries,
    pub biased: FieldSeries,
    pub lowres: FieldSeries,
}

/// Elliptical "land" region inscribed in the grid with semi-axes 0.45·H and
/// 0.45·W (about 64% of cells).
pub fn synthetic_mask(spec: &GridSpec) -> Vec<bool> {
    let (h, w) = (spec.n_lat as f64, spec.n_lon as f64);
    let mut mask = Vec::with_capacity(spec.n_cells());
    for i in 0..spec.n_lat {
        for j in 0..spec.n_lon {
            let y = (i as f64 + 0.5 - h / 2.0) / (0.45 * h);
            let x = (j as f64 + 0.5 - w / 2.0) / (0.45 * w);
            mask.push(x * x + y * y <= 1.0);
        }
    }
    mask
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let spec = cfg.spec;
    let mask = synthetic_mask(&spec);
    let days = cfg.calendar.stamps(cfg.n_days);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");

    let cells = spec.n_cells();
    let mut truth = vec![0.0f32; cfg.n_days * cells];
    let mut biased = vec![0.0f32; cfg.n_days * cells];
    let mut field = vec![0.0f64; cells];
    for t in 0..cfg.n_days {
        field.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..cfg.n_bumps {
            let ci = rng.gen_range(0.0..spec.n_lat as f64);
            let cj = rng.gen_range(0.0..spec.n_lon as f64);
            let radius = cfg.bump_scale * rng.gen_range(0.6..1.4);
            // Mostly light rain, occasional heavy cells, some negative bumps that carve dry zones.
            let u: f64 = rng.gen();
            let amp = 40.0 * u * u - 8.0;
            let inv = 1.0 / (2.0 * radius * radius);
            for i in 0..spec.n_lat {
                let dy = i as f64 - ci;
                for j in 0..spec.n_lon {
                    let dx = j as f64 - cj;
                    field[i * spec.n_lon + j] += amp * (-(dx * dx + dy * dy) * inv).exp();
                }
            }
        }
        let out_t = &mut truth[t * cells..(t + 1) * cells];
        let out_b = &mut biased[t * cells..(t + 1) * cells];
        for k in 0..cells {
            let z: f64 = noise.sample(&mut rng);
            if !mask[k] {
                continue;
            }
            let tv = field[k].max(0.0) as f32;
            out_t[k] = tv;
            let e = if cfg.noise_sigma > 0.0 { z } else { 0.0 };
            out_b[k] = biased_value(tv, cfg.bias_gain, cfg.bias_offset, e);
        }
    }

    let truth = FieldSeries::new(spec, mask.clone(), days.clone(), truth)?;
    let biased = FieldSeries::new(spec, mask, days.clone(), biased)?;
    let lowres = if cfg.n_days == 0 {
        let f = block_mean_downsample(&GridField { spec, values: vec![0.0; cells], mask: truth.mask().to_vec() }, LOWRES_FACTOR)?;
        FieldSeries::new(f.spec, f.mask, vec![], vec![])?
    } else {
        truth.map_fields(|f: &GridField| block_mean_downsample(f, LOWRES_FACTOR))?
    };
    Ok(SyntheticData { truth, biased, lowres })
}

/// `clip(a·truth + b + noise, 0)` evaluated in f64, stored as f32.
pub fn biased_value(truth: f32, gain: f64, offset: f64, noise: f64) -> f32 {
    (gain * truth as f64 + offset + noise).max(0.0) as f32
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SyntheticConfig {
        SyntheticConfig { seed, n_days: 12, spec: GridSpec::quarter_degree(16, 16), ..SyntheticConfig::default() }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate_synthetic(&small(3)).unwrap(), generate_synthetic(&small(3)).unwrap());
        assert_ne!(generate_synthetic(&small(3)).unwrap().truth, generate_synthetic(&small(4)).unwrap().truth);
    }

    #[test]
    fn noiseless_bias_is_exact() {
        let cfg = SyntheticConfig { noise_sigma: 0.0, bias_gain: 1.3, bias_offset: 2.0, ..small(9) };
        let d = generate_synthetic(&cfg).unwrap();
        for (k, (&t, &b)) in d.truth.data().iter().zip(d.biased.data()).enumerate() {
            if d.truth.mask()[k % d.truth.n_cells()] {
                assert_eq!(b, (1.3 * t as f64 + 2.0).max(0.0) as f32);
            } else {
                assert_eq!(b, 0.0);
            }
        }
    }

    #[test]
    fn identity_bias_reproduces_truth() {
        let cfg = SyntheticConfig { noise_sigma: 0.0, bias_gain: 1.0, bias_offset: 0.0, ..small(5) };
        let d = generate_synthetic(&cfg).unwrap();
        assert_eq!(d.biased.data(), d.truth.data());
    }

    #[test]
    fn mask_covers_half_the_grid() {
        for n in [4, 8, 16, 64, 128, 140] {
            let m = synthetic_mask(&GridSpec::quarter_degree(n, n));
            let frac = m.iter().filter(|&&v| v).count() as f64 / (n * n) as f64;
            assert!(frac >= 0.5, "{n}: {frac}");
            assert!(frac < 1.0 || n < 4, "{n}: mask must leave ocean cells");
        }
    }

    #[test]
    fn lowres_is_block_mean_of_truth() {
        let d = generate_synthetic(&small(1)).unwrap();
        assert_eq!(d.lowres.spec().n_lat, 4);
        assert_eq!(d.lowres.n_days(), 12);
        let t0 = d.truth.field(0);
        let mut sum = 0.0f64;
        for r in 0..4 {
            for c in 4..8 {
                sum += t0.get(r, c) as f64;
            }
        }
        assert_eq!(d.lowres.value(0, 0, 1), (sum / 16.0) as f32);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(generate_synthetic(&SyntheticConfig { n_bumps: 0, ..small(1) }).is_err());
        assert!(generate_synthetic(&SyntheticConfig { noise_sigma: -1.0, ..small(1) }).is_err());
        assert!(generate_synthetic(&SyntheticConfig { bias_gain: 0.0, ..small(1) }).is_err());
        assert!(generate_synthetic(&SyntheticConfig { spec: GridSpec::quarter_degree(18, 16), ..small(1) }).is_err());
    }

    #[test]
    fn produces_wet_dry_and_heavy_days() {
        let d = generate_synthetic(&SyntheticConfig { n_days: 60, ..small(2) }).unwrap();
        let vals: Vec<f32> = d.truth.valid_cells().iter().flat_map(|&k| d.truth.cell_series(k)).map(|v| v as f32).collect();
        assert!(vals.contains(&0.0));
        assert!(vals.iter().any(|&v| v > 20.0));
    }
}
