//! Loads the train/test splits a command works on.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use maunet_core::grid::{bicubic_resample, bilinear_resample, encode_series, read_series_with_calendar};
use maunet_core::{FieldSeries, GridSpec};

use crate::config::{ExperimentConfig, Task, Upsample};
use crate::fsio::sha256_hex;

pub const TRUTH_FILE: &str = "truth.gfb";
pub const BIASED_FILE: &str = "biased.gfb";
pub const LOWRES_FILE: &str = "lowres.gfb";

#[derive(Debug, Clone)]
pub struct TaskData {
    /// Network-ready inputs (upsampled to the target grid for downscaling).
    pub train_input: FieldSeries,
    pub train_target: FieldSeries,
    pub test_input: FieldSeries,
    pub test_target: FieldSeries,
    /// Coarse test input before upsampling, when the task has one.
    pub test_coarse: Option<FieldSeries>,
    /// `(name, sha256)` of the files read.
    pub sources: Vec<(String, String)>,
}

impl TaskData {
    /// Label of the uncorrected input in reports.
    pub fn raw_label(task: Task) -> &'static str {
        match task {
            Task::BiasCorrection => "bias_data",
            Task::Downscaling => "upsampled_input",
        }
    }
}

fn read(path: &Path, cfg: &ExperimentConfig, sources: &mut Vec<(String, String)>) -> Result<FieldSeries> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let series = maunet_core::grid::decode_series(&bytes, cfg.calendar())
        .with_context(|| format!("decoding {}", path.display()))?;
    let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    sources.push((format!("input {name}"), sha256_hex(&bytes)));
    Ok(series)
}

/// Resamples every day onto `target` and re-applies the target mask.
pub fn upsample(series: &FieldSeries, target: &FieldSeries, how: Upsample) -> Result<FieldSeries> {
    let spec: GridSpec = *target.spec();
    let up = series.map_fields(|f| match how {
        Upsample::Bilinear => bilinear_resample(f, &spec),
        Upsample::Bicubic => bicubic_resample(f, &spec),
    })?;
    let up = if series.n_days() == 0 {
        FieldSeries::new(spec, target.mask().to_vec(), series.days().to_vec(), Vec::new())?
    } else {
        up
    };
    Ok(up.with_mask(target.mask())?)
}

fn split(s: &FieldSeries, at: usize) -> Result<(FieldSeries, FieldSeries)> {
    if at == 0 || at >= s.n_days() {
        bail!("cannot split {} days at {at}", s.n_days());
    }
    Ok((s.slice_days(0..at)?, s.slice_days(at..s.n_days())?))
}

pub fn load_task_data(cfg: &ExperimentConfig) -> Result<TaskData> {
    let mut sources = Vec::new();
    let p = &cfg.paths;
    let (train_in, train_target, test_in, test_target) = match (&p.train_input, &p.train_target, &p.test_input, &p.test_target)
    {
        (Some(a), Some(b), Some(c), Some(d)) => (
            read(a, cfg, &mut sources)?,
            read(b, cfg, &mut sources)?,
            read(c, cfg, &mut sources)?,
            read(d, cfg, &mut sources)?,
        ),
        _ => {
            let dir = cfg.data_dir();
            let input_name = match cfg.task {
                Task::BiasCorrection => BIASED_FILE,
                Task::Downscaling => LOWRES_FILE,
            };
            let input = read(&dir.join(input_name), cfg, &mut sources)
                .context("run `maunet gen-data` first or set explicit data paths")?;
            let truth = read(&dir.join(TRUTH_FILE), cfg, &mut sources)?;
            let (a, c) = split(&input, cfg.train_days)?;
            let (b, d) = split(&truth, cfg.train_days)?;
            (a, b, c, d)
        }
    };
    for (name, a, b) in [("train", &train_in, &train_target), ("test", &test_in, &test_target)] {
        if a.n_days() != b.n_days() {
            bail!("{name} input has {} days but target has {}", a.n_days(), b.n_days());
        }
    }
    let coarse = !test_in.spec().same_shape(test_target.spec());
    let (train_input, test_input, test_coarse) = match (cfg.task, coarse) {
        (Task::BiasCorrection, true) => {
            bail!("bias correction needs inputs on the target grid; use task = downscaling for coarse inputs")
        }
        (Task::BiasCorrection, false) => {
            (train_in.with_mask(train_target.mask())?, test_in.with_mask(test_target.mask())?, None)
        }
        (Task::Downscaling, _) => {
            let up_train = upsample(&train_in, &train_target, cfg.upsample)?;
            let up_test = upsample(&test_in, &test_target, cfg.upsample)?;
            (up_train, up_test, coarse.then_some(test_in))
        }
    };
    Ok(TaskData { train_input, train_target, test_input, test_target, test_coarse, sources })
}

/// Reads a prediction or other series aligned with the test target.
pub fn read_aligned(path: &Path, cfg: &ExperimentConfig, target: &FieldSeries) -> Result<FieldSeries> {
    let s = read_series_with_calendar(path, cfg.calendar()).with_context(|| format!("reading {}", path.display()))?;
    s.check_aligned(target).with_context(|| format!("{} does not match the test target", path.display()))?;
    Ok(s.with_days(target.days().to_vec())?)
}

pub fn encode(series: &FieldSeries) -> Result<Vec<u8>> {
    Ok(encode_series(series)?)
}

pub fn predictions_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("predictions")
}

pub fn checkpoints_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("checkpoints")
}

const ORDER: [&str; 8] = ["teacher", "gt", "mp", "kr", "qm", "qdm", "bilinear", "bicubic"];

/// `(name, path)` of every `*.gfb` under the predictions directory, known
/// models first.
pub fn list_predictions(cfg: &ExperimentConfig) -> Result<Vec<(String, PathBuf)>> {
    let dir = predictions_dir(cfg);
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for e in std::fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = e?.path();
        if path.extension().and_then(|x| x.to_str()) == Some("gfb") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort_by_key(|(n, _)| (ORDER.iter().position(|o| o == n).unwrap_or(ORDER.len()), n.clone()));
    Ok(out)
}
