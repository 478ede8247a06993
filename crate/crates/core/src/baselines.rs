//! Per-cell empirical quantile mapping (QM) and quantile delta mapping (QDM).
//!
//! Quantiles use linear interpolation between order statistics
//! (`h = (n − 1)·p`). QM knots sit at probabilities `(k − 0.5)/n_q`.

use rayon::prelude::*;

use crate::error::{invalid, shape_err, Error, Result};
use crate::grid::{FieldSeries, GridSpec};

pub const DEFAULT_N_QUANTILES: usize = 100;

/// Lower bound on the calibration quantile in the QDM ratio, mm/day.
pub const QDM_DENOMINATOR_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    /// (row, col)
    pub cell: (usize, usize),
    pub probabilities: Vec<f64>,
    pub model_quantiles: Vec<f64>,
    pub obs_quantiles: Vec<f64>,
}

/// One table per valid cell, in row-major cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct QmFit {
    pub spec: GridSpec,
    pub mask: Vec<bool>,
    pub tables: Vec<QuantileTable>,
}

pub fn knot_probabilities(n_quantiles: usize) -> Vec<f64> {
    (1..=n_quantiles).map(|k| (k as f64 - 0.5) / n_quantiles as f64).collect()
}

/// Quantile of ascending `sorted` at `p ∈ [0, 1]`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Inverse of [`quantile_sorted`]: the probability at which the interpolated
/// quantile equals `x`. Ties resolve to their mid-rank; values outside the
/// sample map to 0 or 1.
pub fn inverse_quantile_sorted(sorted: &[f64], x: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "inverse quantile of an empty sample");
    if n == 1 {
        return 0.5;
    }
    let lo = sorted.partition_point(|&v| v < x);
    let hi = sorted.partition_point(|&v| v <= x);
    let rank = if hi > lo {
        (lo + hi - 1) as f64 / 2.0
    } else if lo == 0 {
        0.0
    } else if lo == n {
        (n - 1) as f64
    } else {
        let (a, b) = (sorted[lo - 1], sorted[lo]);
        (lo - 1) as f64 + (x - a) / (b - a)
    };
    rank / (n - 1) as f64
}

fn sorted_cell(series: &FieldSeries, cell: usize) -> Vec<f64> {
    let mut v = series.cell_series(cell);
    v.sort_by(f64::total_cmp);
    v
}

fn check_pair(a: &FieldSeries, b: &FieldSeries, what: &str) -> Result<()> {
    a.check_aligned(b)?;
    if a.mask() != b.mask() {
        return shape_err(format!("{what}: masks differ"));
    }
    Ok(())
}

pub fn fit_qm(model_calib: &FieldSeries, obs_calib: &FieldSeries, n_quantiles: usize) -> Result<QmFit> {
    check_pair(model_calib, obs_calib, "QM calibration")?;
    if n_quantiles < 2 {
        return invalid(format!("n_quantiles must be at least 2, got {n_quantiles}"));
    }
    if model_calib.n_days() < n_quantiles {
        return Err(Error::InsufficientData(format!(
            "calibration has {} days, fewer than {n_quantiles} quantiles",
            model_calib.n_days()
        )));
    }
    let probs = knot_probabilities(n_quantiles);
    let n_lon = model_calib.spec().n_lon;
    let tables = model_calib
        .valid_cells()
        .into_par_iter()
        .map(|k| {
            let m = sorted_cell(model_calib, k);
            let o = sorted_cell(obs_calib, k);
            QuantileTable {
                cell: (k / n_lon, k % n_lon),
                probabilities: probs.clone(),
                model_quantiles: probs.iter().map(|&p| quantile_sorted(&m, p)).collect(),
                obs_quantiles: probs.iter().map(|&p| quantile_sorted(&o, p)).collect(),
            }
        })
        .collect();
    Ok(QmFit { spec: *model_calib.spec(), mask: model_calib.mask().to_vec(), tables })
}

/// Maps `x` through a table. Dry values (≤ 0) stay dry. Between knots the map
/// is linear; a value equal to several tied model knots maps to the mean of
/// their observed quantiles; outside the knot range the ratio of the end
/// knots is applied.
pub fn apply_qm(table: &QuantileTable, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mq = &table.model_quantiles;
    let oq = &table.obs_quantiles;
    let n = mq.len();
    let lo = mq.partition_point(|&q| q < x);
    let hi = mq.partition_point(|&q| q <= x);
    let y = if hi > lo {
        oq[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
    } else if lo == 0 {
        x * (oq[0] / mq[0])
    } else if lo == n {
        if mq[n - 1] > 0.0 {
            x * (oq[n - 1] / mq[n - 1])
        } else {
            x + oq[n - 1]
        }
    } else {
        let (a, b) = (mq[lo - 1], mq[lo]);
        oq[lo - 1] + (x - a) / (b - a) * (oq[lo] - oq[lo - 1])
    };
    y.max(0.0)
}

/// Applies a fitted QM to every day of `proj`, which must share the fit's grid
/// and mask.
pub fn apply_qm_series(fit: &QmFit, proj: &FieldSeries) -> Result<FieldSeries> {
    if !proj.spec().same_shape(&fit.spec) || proj.mask() != fit.mask.as_slice() {
        return shape_err("projection grid or mask differs from the QM calibration");
    }
    let cells = proj.n_cells();
    let mut data = vec![0.0f32; proj.data().len()];
    let n_lon = fit.spec.n_lon;
    for t in 0..proj.n_days() {
        let day = proj.day(t);
        for table in &fit.tables {
            let k = table.cell.0 * n_lon + table.cell.1;
            data[t * cells + k] = apply_qm(table, day[k] as f64) as f32;
        }
    }
    FieldSeries::from_raw_clipped(*proj.spec(), proj.mask().to_vec(), proj.days().to_vec(), data)
}

/// QDM of one cell. `proj` holds the raw projection values; the other two are
/// sorted calibration samples.
pub fn qdm_cell(model_calib_sorted: &[f64], obs_calib_sorted: &[f64], proj: &[f64]) -> Vec<f64> {
    let mut proj_sorted = proj.to_vec();
    proj_sorted.sort_by(f64::total_cmp);
    let n = proj.len() as f64;
    let (lo, hi) = (0.5 / n, 1.0 - 0.5 / n);
    proj.iter()
        .map(|&x| {
            if x <= 0.0 {
                return 0.0;
            }
            let tau = inverse_quantile_sorted(&proj_sorted, x).clamp(lo, hi);
            let cal = quantile_sorted(model_calib_sorted, tau).max(QDM_DENOMINATOR_FLOOR);
            let obs = quantile_sorted(obs_calib_sorted, tau);
            (x * (obs / cal)).max(0.0)
        })
        .collect()
}

pub fn fit_apply_qdm(
    model_calib: &FieldSeries,
    obs_calib: &FieldSeries,
    model_proj: &FieldSeries,
    n_quantiles: usize,
) -> Result<FieldSeries> {
    check_pair(model_calib, obs_calib, "QDM calibration")?;
    if !model_proj.spec().same_shape(model_calib.spec()) || model_proj.mask() != model_calib.mask() {
        return shape_err("QDM projection grid or mask differs from calibration");
    }
    if model_proj.n_days() == 0 {
        return Err(Error::InsufficientData("empty QDM projection window".into()));
    }
    if n_quantiles < 2 || model_calib.n_days() < n_quantiles {
        return Err(Error::InsufficientData(format!(
            "calibration has {} days for {n_quantiles} quantiles",
            model_calib.n_days()
        )));
    }
    let cells = model_proj.n_cells();
    let columns: Vec<(usize, Vec<f64>)> = model_proj
        .valid_cells()
        .into_par_iter()
        .map(|k| {
            let out = qdm_cell(&sorted_cell(model_calib, k), &sorted_cell(obs_calib, k), &model_proj.cell_series(k));
            (k, out)
        })
        .collect();
    let mut data = vec![0.0f32; model_proj.data().len()];
    for (k, col) in columns {
        for (t, v) in col.into_iter().enumerate() {
            data[t * cells + k] = v as f32;
        }
    }
    FieldSeries::from_raw_clipped(*model_proj.spec(), model_proj.mask().to_vec(), model_proj.days().to_vec(), data)
}

/// `cell_i,cell_j,p,model_q,obs_q`, one row per knot.
pub fn qm_tables_csv(fit: &QmFit) -> String {
    let mut out = String::from("cell_i,cell_j,p,model_q,obs_q\n");
    for t in &fit.tables {
        for ((p, m), o) in t.probabilities.iter().zip(&t.model_quantiles).zip(&t.obs_quantiles) {
            out.push_str(&format!("{},{},{p},{m},{o}\n", t.cell.0, t.cell.1));
        }
    }
    out
}
