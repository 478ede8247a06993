//! Flat `key = value` experiment configuration with `#` comments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use maunet_core::evaluation::{DEFAULT_KL_BINS, DEFAULT_KL_EPSILON};
use maunet_core::extremes::{DEFAULT_SKEW_SHAPE, DETECTION_THRESHOLD, DRY_THRESHOLD, HEAVY_THRESHOLD};
use maunet_core::grid::SyntheticConfig;
use maunet_core::{Calendar, GridSpec, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    BiasCorrection,
    Downscaling,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::BiasCorrection => "bias_correction",
            Task::Downscaling => "downscaling",
        }
    }
}

impl FromStr for Task {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bias_correction" => Ok(Task::BiasCorrection),
            "downscaling" => Ok(Task::Downscaling),
            _ => bail!("task must be bias_correction or downscaling, got {s:?}"),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upsample {
    Bilinear,
    Bicubic,
}

impl FromStr for Upsample {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bilinear" => Ok(Upsample::Bilinear),
            "bicubic" => Ok(Upsample::Bicubic),
            _ => bail!("upsample must be bilinear or bicubic, got {s:?}"),
        }
    }
}

impl fmt::Display for Upsample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Upsample::Bilinear => "bilinear",
            Upsample::Bicubic => "bicubic",
        })
    }
}

/// Explicit data files; when absent the generated files in `data_dir` are
/// split at `train_days`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataPaths {
    pub train_input: Option<PathBuf>,
    pub train_target: Option<PathBuf>,
    pub test_input: Option<PathBuf>,
    pub test_target: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub output_dir: PathBuf,
    pub data_dir: Option<PathBuf>,
    pub data_seed: u64,
    pub train_seed: u64,
    pub synthetic: SyntheticConfig,
    pub train_days: usize,
    pub paths: DataPaths,
    pub upsample: Upsample,
    pub train: TrainConfig,
    pub n_quantiles: usize,
    pub kl_bins: usize,
    pub kl_epsilon: f64,
    /// PSNR peak; the test-target maximum when unset.
    pub psnr_peak: Option<f64>,
    pub dry_threshold: f64,
    pub heavy_threshold: f64,
    pub detection_threshold: f64,
    pub skew_shape: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: Task::BiasCorrection,
            output_dir: PathBuf::from("out"),
            data_dir: None,
            data_seed: 42,
            train_seed: 7,
            synthetic: SyntheticConfig::default(),
            train_days: 400,
            paths: DataPaths::default(),
            upsample: Upsample::Bilinear,
            train: TrainConfig::default(),
            n_quantiles: 100,
            kl_bins: DEFAULT_KL_BINS,
            kl_epsilon: DEFAULT_KL_EPSILON,
            psnr_peak: None,
            dry_threshold: DRY_THRESHOLD,
            heavy_threshold: HEAVY_THRESHOLD,
            detection_threshold: DETECTION_THRESHOLD,
            skew_shape: DEFAULT_SKEW_SHAPE,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| anyhow!("bad value {v:?} for `{key}`: {e}"))
}

impl ExperimentConfig {
    /// Parses config text. Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`, got {raw:?}", i + 1))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                bail!("line {}: empty key or value in {raw:?}", i + 1);
            }
            if seen.insert(k.to_string(), v.to_string()).is_some() {
                bail!("line {}: duplicate key `{k}`", i + 1);
            }
        }
        let mut cfg = ExperimentConfig::default();
        let path = |v: &str| base.join(v);
        for (k, v) in &seen {
            let (k, v) = (k.as_str(), v.as_str());
            let s = &mut cfg.synthetic;
            let t = &mut cfg.train;
            match k {
                "task" => cfg.task = parse(k, v)?,
                "output_dir" => cfg.output_dir = path(v),
                "data_dir" => cfg.data_dir = Some(path(v)),
                "data_seed" => cfg.data_seed = parse(k, v)?,
                "train_seed" => cfg.train_seed = parse(k, v)?,
                "n_days" => s.n_days = parse(k, v)?,
                "n_lat" => s.spec.n_lat = parse(k, v)?,
                "n_lon" => s.spec.n_lon = parse(k, v)?,
                "lat0" => s.spec.lat0 = parse(k, v)?,
                "lon0" => s.spec.lon0 = parse(k, v)?,
                "d_lat" => s.spec.d_lat = parse(k, v)?,
                "d_lon" => s.spec.d_lon = parse(k, v)?,
                "bias_gain" => s.bias_gain = parse(k, v)?,
                "bias_offset" => s.bias_offset = parse(k, v)?,
                "noise_sigma" => s.noise_sigma = parse(k, v)?,
                "n_bumps" => s.n_bumps = parse(k, v)?,
                "bump_scale" => s.bump_scale = parse(k, v)?,
                "start_year" => s.calendar.start_year = parse(k, v)?,
                "first_doy" => s.calendar.first_doy = parse(k, v)?,
                "days_per_year" => s.calendar.days_per_year = parse(k, v)?,
                "train_days" => cfg.train_days = parse(k, v)?,
                "train_input" => cfg.paths.train_input = Some(path(v)),
                "train_target" => cfg.paths.train_target = Some(path(v)),
                "test_input" => cfg.paths.test_input = Some(path(v)),
                "test_target" => cfg.paths.test_target = Some(path(v)),
                "upsample" => cfg.upsample = parse(k, v)?,
                "learning_rate" => t.learning_rate = parse(k, v)?,
                "beta1" => t.beta1 = parse(k, v)?,
                "beta2" => t.beta2 = parse(k, v)?,
                "epsilon" => t.epsilon = parse(k, v)?,
                "batch_size" => t.batch_size = parse(k, v)?,
                "max_epochs" => t.max_epochs = parse(k, v)?,
                "patience" => t.patience = parse(k, v)?,
                "val_fraction" => t.val_fraction = parse(k, v)?,
                "data_scale" => t.data_scale = parse(k, v)?,
                "n_quantiles" => cfg.n_quantiles = parse(k, v)?,
                "kl_bins" => cfg.kl_bins = parse(k, v)?,
                "kl_epsilon" => cfg.kl_epsilon = parse(k, v)?,
                "psnr_peak" => cfg.psnr_peak = Some(parse(k, v)?),
                "dry_threshold" => cfg.dry_threshold = parse(k, v)?,
                "heavy_threshold" => cfg.heavy_threshold = parse(k, v)?,
                "detection_threshold" => cfg.detection_threshold = parse(k, v)?,
                "skew_shape" => cfg.skew_shape = parse(k, v)?,
                _ => bail!("unknown config key `{k}`"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        ExperimentConfig::parse(&text, base).with_context(|| format!("in config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic_config().validate()?;
        self.training_config().validate()?;
        if self.n_quantiles < 2 {
            bail!("n_quantiles must be at least 2");
        }
        if self.kl_bins < 2 || !(self.kl_epsilon > 0.0) {
            bail!("kl_bins must be >= 2 and kl_epsilon > 0");
        }
        if let Some(p) = self.psnr_peak {
            if !(p > 0.0 && p.is_finite()) {
                bail!("psnr_peak must be positive");
            }
        }
        if !self.skew_shape.is_finite() {
            bail!("skew_shape must be finite");
        }
        let p = &self.paths;
        let given = [&p.train_input, &p.train_target, &p.test_input, &p.test_target].iter().filter(|x| x.is_some()).count();
        if given != 0 && given != 4 {
            bail!("train_input, train_target, test_input and test_target must be given together");
        }
        if given == 0 && (self.train_days == 0 || self.train_days >= self.synthetic.n_days) {
            bail!("train_days must be in 1..n_days ({}), got {}", self.synthetic.n_days, self.train_days);
        }
        Ok(())
    }

    pub fn synthetic_config(&self) -> SyntheticConfig {
        SyntheticConfig { seed: self.data_seed, ..self.synthetic.clone() }
    }

    pub fn training_config(&self) -> TrainConfig {
        TrainConfig { seed: self.train_seed, ..self.train.clone() }
    }

    pub fn calendar(&self) -> Calendar {
        self.synthetic.calendar
    }

    pub fn grid(&self) -> GridSpec {
        self.synthetic.spec
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.output_dir.join("data"))
    }

    /// Canonical rendering of every resolved setting; its hash identifies a run.
    pub fn render(&self) -> String {
        let s = &self.synthetic;
        let t = &self.train;
        let opt = |p: &Option<PathBuf>| p.as_ref().map_or("-".to_string(), |p| p.display().to_string());
        let rows: Vec<(&str, String)> = vec![
            ("task", self.task.to_string()),
            ("data_dir", opt(&self.data_dir)),
            ("data_seed", self.data_seed.to_string()),
            ("train_seed", self.train_seed.to_string()),
            ("n_days", s.n_days.to_string()),
            ("n_lat", s.spec.n_lat.to_string()),
            ("n_lon", s.spec.n_lon.to_string()),
            ("lat0", s.spec.lat0.to_string()),
            ("lon0", s.spec.lon0.to_string()),
            ("d_lat", s.spec.d_lat.to_string()),
            ("d_lon", s.spec.d_lon.to_string()),
            ("bias_gain", s.bias_gain.to_string()),
            ("bias_offset", s.bias_offset.to_string()),
            ("noise_sigma", s.noise_sigma.to_string()),
            ("n_bumps", s.n_bumps.to_string()),
            ("bump_scale", s.bump_scale.to_string()),
            ("start_year", s.calendar.start_year.to_string()),
            ("first_doy", s.calendar.first_doy.to_string()),
            ("days_per_year", s.calendar.days_per_year.to_string()),
            ("train_days", self.train_days.to_string()),
            ("train_input", opt(&self.paths.train_input)),
            ("train_target", opt(&self.paths.train_target)),
            ("test_input", opt(&self.paths.test_input)),
            ("test_target", opt(&self.paths.test_target)),
            ("upsample", self.upsample.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("beta1", t.beta1.to_string()),
            ("beta2", t.beta2.to_string()),
            ("epsilon", t.epsilon.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("max_epochs", t.max_epochs.to_string()),
            ("patience", t.patience.to_string()),
            ("val_fraction", t.val_fraction.to_string()),
            ("data_scale", t.data_scale.to_string()),
            ("n_quantiles", self.n_quantiles.to_string()),
            ("kl_bins", self.kl_bins.to_string()),
            ("kl_epsilon", self.kl_epsilon.to_string()),
            ("psnr_peak", self.psnr_peak.map_or("-".to_string(), |p| p.to_string())),
            ("dry_threshold", self.dry_threshold.to_string()),
            ("heavy_threshold", self.heavy_threshold.to_string()),
            ("detection_threshold", self.detection_threshold.to_string()),
            ("skew_shape", self.skew_shape.to_string()),
        ];
        rows.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let text = "# demo\ntask = downscaling  # trailing\nn_lat = 32\nn_lon=32\nmax_epochs = 3\ntrain_days = 300\n";
        let cfg = ExperimentConfig::parse(text, Path::new("/base")).unwrap();
        assert_eq!(cfg.task, Task::Downscaling);
        assert_eq!(cfg.grid().n_lat, 32);
        assert_eq!(cfg.train.max_epochs, 3);
        assert_eq!(cfg.data_dir(), PathBuf::from("out/data"));
    }

    #[test]
    fn rejects_malformed_lines() {
        let base = Path::new(".");
        for bad in ["task", "bogus = 1", "n_lat = x", "n_lat = 4\nn_lat = 8", "task = other", "n_quantiles = 1", "train_input = a"] {
            assert!(ExperimentConfig::parse(bad, base).is_err(), "{bad}");
        }
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let cfg = ExperimentConfig::parse("output_dir = runs/a", Path::new("/cfg")).unwrap();
        assert_eq!(cfg.output_dir, PathBuf::from("/cfg/runs/a"));
        assert_eq!(cfg.data_dir(), PathBuf::from("/cfg/runs/a/data"));
    }

    #[test]
    fn rendering_is_stable_and_seed_sensitive() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.render(), b.render());
        b.train_seed = 8;
        assert_ne!(a.render(), b.render());
    }
}
