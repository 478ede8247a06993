//! One function per subcommand. Each computes everything in memory, then
//! commits its files and manifest atomically.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use maunet_core::baselines::{apply_qm_series, fit_apply_qdm, fit_qm, qm_tables_csv};
use maunet_core::evaluation::{climatology_map, comparison_csv, evaluate as eval_report, peak_of, PooledMetrics};
use maunet_core::extremes::{
    detection_csv, extreme_detection_scores, extreme_indices, random_series, robustness_report, SkewMode,
    SkewNoiseConfig,
};
use maunet_core::grid::{bicubic_resample, bilinear_resample, generate_synthetic};
use maunet_core::models::AnyModel;
use maunet_core::nn::ParamStore;
use maunet_core::{predict_series, run_pipeline, Architecture, FieldSeries, Predictor, Variant};

use crate::config::ExperimentConfig;
use crate::data::{
    checkpoints_dir, encode, list_predictions, load_task_data, read_aligned, TaskData, BIASED_FILE,
    LOWRES_FILE, TRUTH_FILE,
};
use crate::fsio::{sha256_hex, Manifest, Outputs};

fn manifest(cfg: &ExperimentConfig, command: &str, extra: Vec<(String, String)>) -> Manifest {
    Manifest {
        command: command.to_string(),
        config_sha256: sha256_hex(cfg.render().as_bytes()),
        data_seed: cfg.data_seed,
        train_seed: cfg.train_seed,
        extra,
    }
}

pub fn gen_data(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let data = generate_synthetic(&cfg.synthetic_config())?;
    let mut out = Outputs::new(cfg.data_dir());
    out.add(TRUTH_FILE, encode(&data.truth)?);
    out.add(BIASED_FILE, encode(&data.biased)?);
    out.add(LOWRES_FILE, encode(&data.lowres)?);
    out.commit(manifest(cfg, "gen-data", vec![]))
}

pub fn checkpoint_path(cfg: &ExperimentConfig, variant: Variant) -> PathBuf {
    checkpoints_dir(cfg).join(format!("{}.mck", variant.tag()))
}

/// Runs the teacher/student pipeline and writes four checkpoints and their
/// training histories.
pub fn train(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let data = load_task_data(cfg)?;
    let result = run_pipeline(&data.train_input, &data.train_target, &cfg.training_config())?;
    let mut out = Outputs::new(&cfg.output_dir);
    let mut summary = String::from("variant,architecture,epochs_run,best_epoch,best_val_loss\n");
    for v in result.variants() {
        let tag = v.variant.tag();
        out.add(format!("checkpoints/{tag}.mck"), v.checkpoint().to_mck1());
        out.add(format!("history/{tag}.csv"), v.history_csv());
        let best = v.history.iter().find(|h| h.epoch == v.best_epoch).map_or(f64::NAN, |h| h.val_loss);
        summary.push_str(&format!(
            "{tag},{},{},{},{best}\n",
            v.model.architecture(),
            v.history.len(),
            v.best_epoch
        ));
    }
    out.add("train_summary.csv", summary);
    out.commit(manifest(cfg, "train", data.sources))
}

pub fn load_predictor(path: &Path) -> Result<Predictor> {
    let store = ParamStore::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(Predictor::from_checkpoint(&store)?)
}

/// Predicts the test input with one checkpoint (`name` from the file stem)
/// or, when none is given, with every trained variant.
pub fn predict(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<Vec<PathBuf>> {
    let data = load_task_data(cfg)?;
    let jobs: Vec<(String, PathBuf)> = match checkpoint {
        Some(p) => {
            let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
            vec![(name, p.to_path_buf())]
        }
        None => {
            let found: Vec<_> = Variant::ALL
                .iter()
                .map(|&v| (v.tag().to_string(), checkpoint_path(cfg, v)))
                .filter(|(_, p)| p.exists())
                .collect();
            if found.is_empty() {
                bail!("no checkpoints in {}; run `maunet train` first", checkpoints_dir(cfg).display());
            }
            found
        }
    };
    let mut out = Outputs::new(&cfg.output_dir);
    let mut extra = data.sources.clone();
    for (name, path) in jobs {
        let predictor = load_predictor(&path)?;
        extra.push((format!("checkpoint {name}"), sha256_hex(&predictor.checkpoint().to_mck1())));
        let pred = predict_series(&predictor, &data.test_input)?;
        out.add(format!("predictions/{name}.gfb"), encode(&pred)?);
    }
    out.commit(manifest(cfg, "predict", extra))
}

/// QM and QDM calibrated on the training split; bilinear and bicubic
/// interpolation when the test input is coarse.
pub fn baseline(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let data = load_task_data(cfg)?;
    let mut out = Outputs::new(&cfg.output_dir);
    let fit = fit_qm(&data.train_input, &data.train_target, cfg.n_quantiles)?;
    out.add("predictions/qm.gfb", encode(&apply_qm_series(&fit, &data.test_input)?)?);
    out.add("baselines/qm_tables.csv", qm_tables_csv(&fit));
    let qdm = fit_apply_qdm(&data.train_input, &data.train_target, &data.test_input, cfg.n_quantiles)?;
    out.add("predictions/qdm.gfb", encode(&qdm)?);
    if let Some(coarse) = &data.test_coarse {
        let spec = *data.test_target.spec();
        let mask = data.test_target.mask();
        let bl = coarse.map_fields(|f| bilinear_resample(f, &spec))?.with_mask(mask)?;
        let bc = coarse.map_fields(|f| bicubic_resample(f, &spec))?.with_mask(mask)?;
        out.add("predictions/bilinear.gfb", encode(&bl)?);
        out.add("predictions/bicubic.gfb", encode(&bc)?);
    }
    out.commit(manifest(cfg, "baseline", data.sources))
}

/// Every series to report on: the raw input first, then saved predictions
/// and any extra file.
fn candidates(cfg: &ExperimentConfig, data: &TaskData, extra: Option<&Path>) -> Result<Vec<(String, FieldSeries)>> {
    let mut rows = vec![(TaskData::raw_label(cfg.task).to_string(), data.test_input.clone())];
    for (name, path) in list_predictions(cfg)? {
        rows.push((name, read_aligned(&path, cfg, &data.test_target)?));
    }
    if let Some(p) = extra {
        let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("extra").to_string();
        rows.push((name, read_aligned(p, cfg, &data.test_target)?));
    }
    Ok(rows)
}

pub fn evaluate(cfg: &ExperimentConfig, extra: Option<&Path>) -> Result<Vec<PathBuf>> {
    let data = load_task_data(cfg)?;
    let obs = &data.test_target;
    let peak = cfg.psnr_peak.unwrap_or_else(|| peak_of(obs));
    if !(peak > 0.0) {
        bail!("test target is all zero; set psnr_peak explicitly");
    }
    let mut out = Outputs::new(&cfg.output_dir);
    let mut table: Vec<(String, PooledMetrics)> = Vec::new();
    for (name, pred) in candidates(cfg, &data, extra)? {
        let r = eval_report(&pred, obs, peak, cfg.kl_bins, cfg.kl_epsilon)?;
        let dir = format!("eval/{name}");
        out.add(format!("{dir}/metrics.csv"), r.metrics_csv());
        out.add(format!("{dir}/daily.csv"), r.daily_csv());
        for (map, m) in [("rmse_map", &r.rmse_map), ("corr_map", &r.corr_map), ("kl_map", &r.kl_map)] {
            out.add(format!("{dir}/{map}.csv"), m.to_csv());
            out.add(format!("{dir}/{map}.pgm"), m.to_pgm());
        }
        out.add(format!("{dir}/climatology.csv"), climatology_map(&pred).to_csv());
        table.push((name, r.pooled));
    }
    out.add("eval/obs_climatology.csv", climatology_map(obs).to_csv());
    out.add("eval/comparison.csv", comparison_csv(&table));
    let extra_src = vec![("psnr_peak".to_string(), peak.to_string())];
    out.commit(manifest(cfg, "evaluate", [data.sources, extra_src].concat()))
}

pub fn extremes(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let data = load_task_data(cfg)?;
    let obs = &data.test_target;
    let mut out = Outputs::new(&cfg.output_dir);
    let mut rows = vec![("obs".to_string(), obs.clone())];
    rows.extend(candidates(cfg, &data, None)?);
    let mut csv = String::from("model,index,spatial_mean\n");
    let mut detection = Vec::new();
    for (name, series) in &rows {
        let x = extreme_indices(series, cfg.dry_threshold, cfg.heavy_threshold)?;
        for (index, map) in x.maps() {
            let mean = map.mean().map_or("undefined".to_string(), |v| v.to_string());
            csv.push_str(&format!("{name},{index},{mean}\n"));
            out.add(format!("extremes/{name}/{index}.csv"), map.to_csv());
            out.add(format!("extremes/{name}/{index}.pgm"), map.to_pgm());
        }
        if name != "obs" {
            detection.push((name.clone(), extreme_detection_scores(series, obs, cfg.detection_threshold)?));
        }
    }
    out.add("extremes/indices.csv", csv);
    out.add("extremes/detection.csv", detection_csv(&detection));
    out.commit(manifest(cfg, "extremes", data.sources))
}

/// Drives one trained variant with its real test input and with temporal and
/// spatial skew-normal inputs matched to it.
pub fn robustness(cfg: &ExperimentConfig, variant: Variant) -> Result<Vec<PathBuf>> {
    let data = load_task_data(cfg)?;
    let path = checkpoint_path(cfg, variant);
    let model = load_predictor(&path)?;
    let mut random = Vec::new();
    for mode in [SkewMode::Temporal, SkewMode::Spatial] {
        let sc = SkewNoiseConfig { shape: cfg.skew_shape, mode, seed: cfg.data_seed };
        random.push((mode.name().to_string(), random_series(&data.test_input, &sc)?));
    }
    let report = robustness_report(&model, &data.test_input, &random, &data.test_target)?;
    let mut out = Outputs::new(&cfg.output_dir);
    out.add("robustness/robustness.csv", report.to_csv());
    for (kind, series) in &random {
        out.add(format!("robustness/{kind}_climatology.csv"), climatology_map(series).to_csv());
    }
    out.add("robustness/real_climatology.csv", climatology_map(&data.test_input).to_csv());
    let mut extra = data.sources;
    extra.push(("variant".into(), variant.tag().into()));
    extra.push(("random_below_real".into(), report.random_is_worse().to_string()));
    out.commit(manifest(cfg, "robustness", extra))
}

/// `model,total_params,bytes64,bytes32,flops_at_HxW` for both architectures.
pub fn count_params_csv(h: usize, w: usize) -> String {
    let mut csv = format!("model,total_params,bytes64,bytes32,flops_at_{h}x{w}\n");
    for arch in Architecture::ALL {
        let m = AnyModel::init_seeded(arch, 0);
        let p = m.param_count();
        csv.push_str(&format!("{arch},{},{},{},{}\n", p.total, p.bytes64, p.bytes32, m.flops(h, w).total()));
    }
    csv
}

pub fn count_params(cfg: &ExperimentConfig) -> Result<(String, Vec<PathBuf>)> {
    let g = cfg.grid();
    let csv = count_params_csv(g.n_lat, g.n_lon);
    let mut out = Outputs::new(&cfg.output_dir);
    out.add("count_params.csv", csv.clone());
    Ok((csv, out.commit(manifest(cfg, "count-params", vec![]))?))
}
