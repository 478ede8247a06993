//! Skill metrics over valid cells: pooled scores, per-cell maps, KL
//! divergences and climatological summaries.

pub mod ssim;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::grid::{cells_to_csv, FieldSeries, GridField, GridSpec};

pub const DEFAULT_KL_BINS: usize = 50;
pub const DEFAULT_KL_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledMetrics {
    pub mse: f64,
    pub rmse: f64,
    /// dB; +∞ for a perfect match.
    pub psnr: f64,
    pub mssim: f64,
    /// Pearson r over all valid cell-days; `None` when either side is constant.
    pub corr: Option<f64>,
}

pub fn psnr(peak: f64, mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * peak.log10() - 10.0 * mse.log10()
    }
}

/// Pearson correlation; `None` for fewer than two points or zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    if n < 2 || b.len() != n {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Aligns `pred` to the observation mask and clips it at zero.
fn prepare(pred: &FieldSeries, obs: &FieldSeries) -> Result<FieldSeries> {
    pred.check_aligned(obs)?;
    if obs.n_days() == 0 || obs.n_valid() == 0 {
        return invalid("no valid cell-days to evaluate");
    }
    pred.with_mask(obs.mask())
}

fn valid_pairs(pred: &FieldSeries, obs: &FieldSeries) -> (Vec<f64>, Vec<f64>) {
    let cells = obs.valid_cells();
    let mut p = Vec::with_capacity(cells.len() * obs.n_days());
    let mut o = Vec::with_capacity(p.capacity());
    for t in 0..obs.n_days() {
        let (dp, d_o) = (pred.day(t), obs.day(t));
        for &k in &cells {
            p.push(dp[k] as f64);
            o.push(d_o[k] as f64);
        }
    }
    (p, o)
}

/// Largest observed value: the PSNR peak used throughout.
pub fn peak_of(obs: &FieldSeries) -> f64 {
    obs.data().iter().fold(0.0f64, |m, &v| m.max(v as f64))
}

pub fn pooled_metrics(pred: &FieldSeries, obs: &FieldSeries, peak: f64) -> Result<PooledMetrics> {
    let pred = &prepare(pred, obs)?;
    if !(peak > 0.0 && peak.is_finite()) {
        return invalid(format!("PSNR peak must be positive, got {peak}"));
    }
    let (p, o) = valid_pairs(pred, obs);
    let mse = p.iter().zip(&o).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
    let spec = obs.spec();
    let mask = obs.mask();
    let days: Vec<f64> = (0..obs.n_days())
        .into_par_iter()
        .filter_map(|t| {
            let a: Vec<f64> = pred.day(t).iter().map(|&v| v as f64).collect();
            let b: Vec<f64> = obs.day(t).iter().map(|&v| v as f64).collect();
            ssim::masked_ssim(&a, &b, mask, spec.n_lat, spec.n_lon, peak)
        })
        .collect();
    Ok(PooledMetrics {
        mse,
        rmse: mse.sqrt(),
        psnr: psnr(peak, mse),
        mssim: days.iter().sum::<f64>() / days.len() as f64,
        corr: pearson(&p, &o),
    })
}

/// Per-cell scalar over a grid; `defined` is false outside the mask and where
/// the statistic does not exist.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMap {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub defined: Vec<bool>,
}

impl CellMap {
    fn from_cells(spec: GridSpec, cells: Vec<(usize, Option<f64>)>) -> Self {
        let mut values = vec![0.0; spec.n_cells()];
        let mut defined = vec![false; spec.n_cells()];
        for (k, v) in cells {
            if let Some(v) = v {
                values[k] = v;
                defined[k] = true;
            }
        }
        CellMap { spec, values, defined }
    }

    pub fn n_defined(&self) -> usize {
        self.defined.iter().filter(|&&d| d).count()
    }

    /// Mean over defined cells.
    pub fn mean(&self) -> Option<f64> {
        let n = self.n_defined();
        (n > 0).then(|| self.values.iter().zip(&self.defined).filter(|(_, &d)| d).map(|(v, _)| v).sum::<f64>() / n as f64)
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let k = row * self.spec.n_lon + col;
        self.defined[k].then(|| self.values[k])
    }

    /// `lat,lon,value` for every defined cell.
    pub fn to_csv(&self) -> String {
        cells_to_csv(&self.spec, &self.defined, |k| self.values[k])
    }

    /// 8-bit binary PGM, northernmost row first. Defined values are scaled
    /// linearly onto 1..=255; undefined cells are 0.
    pub fn to_pgm(&self) -> Vec<u8> {
        let (h, w) = (self.spec.n_lat, self.spec.n_lon);
        let (lo, hi) = self
            .values
            .iter()
            .zip(&self.defined)
            .filter(|(_, &d)| d)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (&v, _)| (a.min(v), b.max(v)));
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        for row in (0..h).rev() {
            for col in 0..w {
                let k = row * w + col;
                let byte = if !self.defined[k] {
                    0
                } else if hi > lo {
                    1 + ((self.values[k] - lo) / (hi - lo) * 254.0).round() as u8
                } else {
                    128
                };
                out.push(byte);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridwiseMaps {
    pub rmse: CellMap,
    pub corr: CellMap,
}

pub fn gridwise_maps(pred: &FieldSeries, obs: &FieldSeries) -> Result<GridwiseMaps> {
    let pred = &prepare(pred, obs)?;
    let stats: Vec<(usize, Option<f64>, Option<f64>)> = obs
        .valid_cells()
        .into_par_iter()
        .map(|k| {
            let (p, o) = (pred.cell_series(k), obs.cell_series(k));
            let mse = p.iter().zip(&o).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
            (k, Some(mse.sqrt()), pearson(&p, &o))
        })
        .collect();
    let spec = *obs.spec();
    Ok(GridwiseMaps {
        rmse: CellMap::from_cells(spec, stats.iter().map(|&(k, r, _)| (k, r)).collect()),
        corr: CellMap::from_cells(spec, stats.iter().map(|&(k, _, c)| (k, c)).collect()),
    })
}

/// `D(p‖q) = Σ p·ln(p/q)` in nats; terms with `p = 0` contribute nothing.
pub fn kl_from_probs(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(&a, _)| a > 0.0).map(|(&a, &b)| a * (a / b).ln()).sum()
}

/// Histogram over `n_bins` equal bins spanning `[0, max]` (the top edge is
/// inclusive), smoothed by `epsilon` and renormalised.
pub fn histogram_probs(values: &[f64], max: f64, n_bins: usize, epsilon: f64) -> Vec<f64> {
    let mut counts = vec![0.0; n_bins];
    for &v in values {
        let bin = if max > 0.0 { ((v / max) * n_bins as f64).floor() as usize } else { 0 };
        counts[bin.min(n_bins - 1)] += 1.0;
    }
    let n = values.len().max(1) as f64;
    let probs: Vec<f64> = counts.iter().map(|c| c / n + epsilon).collect();
    let total: f64 = probs.iter().sum();
    probs.into_iter().map(|p| p / total).collect()
}

/// KL(obs‖pred) between the histograms of two samples on shared bins.
pub fn kl_samples(pred: &[f64], obs: &[f64], n_bins: usize, epsilon: f64) -> f64 {
    let max = pred.iter().chain(obs).fold(0.0f64, |m, &v| m.max(v));
    kl_from_probs(&histogram_probs(obs, max, n_bins, epsilon), &histogram_probs(pred, max, n_bins, epsilon))
}

fn check_kl(n_bins: usize, epsilon: f64) -> Result<()> {
    if n_bins < 2 {
        return invalid(format!("KL needs at least 2 bins, got {n_bins}"));
    }
    if !(epsilon > 0.0) {
        return invalid(format!("KL smoothing must be positive, got {epsilon}"));
    }
    Ok(())
}

/// Per-cell KL(obs‖pred) along time.
pub fn kl_gridwise(pred: &FieldSeries, obs: &FieldSeries, n_bins: usize, epsilon: f64) -> Result<CellMap> {
    let pred = &prepare(pred, obs)?;
    check_kl(n_bins, epsilon)?;
    let cells = obs
        .valid_cells()
        .into_par_iter()
        .map(|k| (k, Some(kl_samples(&pred.cell_series(k), &obs.cell_series(k), n_bins, epsilon))))
        .collect();
    Ok(CellMap::from_cells(*obs.spec(), cells))
}

/// Per-day KL(obs‖pred) over the valid cells of each day.
pub fn kl_daily(pred: &FieldSeries, obs: &FieldSeries, n_bins: usize, epsilon: f64) -> Result<Vec<f64>> {
    let pred = &prepare(pred, obs)?;
    check_kl(n_bins, epsilon)?;
    let cells = obs.valid_cells();
    Ok((0..obs.n_days())
        .into_par_iter()
        .map(|t| {
            let p: Vec<f64> = cells.iter().map(|&k| pred.day(t)[k] as f64).collect();
            let o: Vec<f64> = cells.iter().map(|&k| obs.day(t)[k] as f64).collect();
            kl_samples(&p, &o, n_bins, epsilon)
        })
        .collect())
}

/// Per-cell temporal mean, as f64.
pub fn climatology_map(series: &FieldSeries) -> CellMap {
    let n = series.n_days();
    let cells = series
        .valid_cells()
        .into_iter()
        .map(|k| (k, (n > 0).then(|| series.cell_series(k).iter().sum::<f64>() / n as f64)))
        .collect();
    CellMap::from_cells(*series.spec(), cells)
}

pub fn climatology(series: &FieldSeries) -> Result<GridField> {
    let m = climatology_map(series);
    GridField::from_raw_clipped(m.spec, m.values.iter().map(|&v| v as f32).collect(), series.mask().to_vec())
}

/// Mean over valid cells of each day.
pub fn daily_spatial_mean(series: &FieldSeries) -> Vec<f64> {
    let cells = series.valid_cells();
    (0..series.n_days())
        .map(|t| {
            let d = series.day(t);
            cells.iter().map(|&k| d[k] as f64).sum::<f64>() / cells.len().max(1) as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub pooled: PooledMetrics,
    pub rmse_map: CellMap,
    pub corr_map: CellMap,
    pub kl_map: CellMap,
    pub spatial_mean_pred: Vec<f64>,
    pub spatial_mean_obs: Vec<f64>,
    pub kl_daily: Vec<f64>,
}

impl EvalReport {
    /// Mean of the per-cell correlation map (the alternative to pooled r).
    pub fn mean_gridwise_corr(&self) -> Option<f64> {
        self.corr_map.mean()
    }

    /// `name,value` rows; non-existent values are written as `undefined`.
    pub fn metrics_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |v| v.to_string());
        let kl_daily_mean =
            (!self.kl_daily.is_empty()).then(|| self.kl_daily.iter().sum::<f64>() / self.kl_daily.len() as f64);
        let rows = [
            ("rmse", Some(self.pooled.rmse)),
            ("psnr", Some(self.pooled.psnr)),
            ("mssim", Some(self.pooled.mssim)),
            ("corr_pooled", self.pooled.corr),
            ("corr_gridwise_mean", self.corr_map.mean()),
            ("rmse_gridwise_mean", self.rmse_map.mean()),
            ("kl_gridwise_mean", self.kl_map.mean()),
            ("kl_daily_mean", kl_daily_mean),
        ];
        let mut out = String::from("name,value\n");
        for (name, v) in rows {
            out.push_str(&format!("{name},{}\n", fmt(v)));
        }
        out
    }

    /// `day,spatial_mean_pred,spatial_mean_obs,kl_daily`.
    pub fn daily_csv(&self) -> String {
        let mut out = String::from("day,spatial_mean_pred,spatial_mean_obs,kl_daily\n");
        for (t, ((p, o), k)) in self.spatial_mean_pred.iter().zip(&self.spatial_mean_obs).zip(&self.kl_daily).enumerate() {
            out.push_str(&format!("{t},{p},{o},{k}\n"));
        }
        out
    }
}

/// Full battery. Predictions are re-masked to the observations and clipped at
/// zero before any metric is taken.
pub fn evaluate(pred: &FieldSeries, obs: &FieldSeries, peak: f64, kl_bins: usize, kl_epsilon: f64) -> Result<EvalReport> {
    let pred = &prepare(pred, obs)?;
    let pooled = pooled_metrics(pred, obs, peak)?;
    let maps = gridwise_maps(pred, obs)?;
    Ok(EvalReport {
        pooled,
        rmse_map: maps.rmse,
        corr_map: maps.corr,
        kl_map: kl_gridwise(pred, obs, kl_bins, kl_epsilon)?,
        spatial_mean_pred: daily_spatial_mean(pred),
        spatial_mean_obs: daily_spatial_mean(obs),
        kl_daily: kl_daily(pred, obs, kl_bins, kl_epsilon)?,
    })
}

/// `model,rmse,psnr,mssim,corr` comparison table.
pub fn comparison_csv(rows: &[(String, PooledMetrics)]) -> String {
    let mut out = String::from("model,rmse,psnr,mssim,corr\n");
    for (name, m) in rows {
        let corr = m.corr.map_or("undefined".to_string(), |c| c.to_string());
        out.push_str(&format!("{name},{},{},{},{corr}\n", m.rmse, m.psnr, m.mssim));
    }
    out
}

#[cfg(test)]
mod tests;
