//! ETCCDI-style extreme indices, threshold detection scores, and the
//! skew-normal random-input probes in [`robustness`].

pub mod robustness;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::evaluation::CellMap;
use crate::grid::FieldSeries;

pub use robustness::{
    random_series, random_values, robustness_report, skew_normal_sample, skew_normal_skewness, spatial_random_series,
    standardize_rescale, temporal_random_series, RobustnessReport, SkewMode, SkewNoiseConfig, DEFAULT_SKEW_SHAPE,
};

pub const DRY_THRESHOLD: f64 = 1.0;
pub const HEAVY_THRESHOLD: f64 = 20.0;
pub const DETECTION_THRESHOLD: f64 = 20.0;

/// Per-year scan of one cell. Dry days are strictly below `dry`, heavy days
/// strictly above `heavy`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct YearIndices {
    pub cdd: usize,
    pub r20: usize,
    pub rx1day: f64,
}

pub fn scan_year(values: &[f64], dry: f64, heavy: f64) -> YearIndices {
    let (mut run, mut out) = (0usize, YearIndices::default());
    for &v in values {
        run = if v < dry { run + 1 } else { 0 };
        out.cdd = out.cdd.max(run);
        out.r20 += (v > heavy) as usize;
        out.rx1day = out.rx1day.max(v);
    }
    out
}

/// Interannual means of CDD, R20mm and Rx1day on valid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremeIndices {
    pub cdd: CellMap,
    pub r20: CellMap,
    pub rx1day: CellMap,
    pub n_years: usize,
}

impl ExtremeIndices {
    pub fn maps(&self) -> [(&'static str, &CellMap); 3] {
        [("cdd", &self.cdd), ("r20mm", &self.r20), ("rx1day", &self.rx1day)]
    }
}

/// Contiguous index ranges of each year in a chronologically ordered series.
pub fn year_ranges(series: &FieldSeries) -> Vec<std::ops::Range<usize>> {
    let days = series.days();
    let mut out = Vec::new();
    let mut start = 0;
    for t in 1..=days.len() {
        if t == days.len() || days[t].year != days[start].year {
            out.push(start..t);
            start = t;
        }
    }
    out
}

pub fn extreme_indices(series: &FieldSeries, dry: f64, heavy: f64) -> Result<ExtremeIndices> {
    let years = year_ranges(series);
    if years.is_empty() {
        return invalid("extreme indices need at least one day");
    }
    let ny = years.len() as f64;
    let per_cell: Vec<(usize, [f64; 3])> = series
        .valid_cells()
        .into_par_iter()
        .map(|k| {
            let s = series.cell_series(k);
            let mut acc = [0.0; 3];
            for r in &years {
                let y = scan_year(&s[r.clone()], dry, heavy);
                acc[0] += y.cdd as f64;
                acc[1] += y.r20 as f64;
                acc[2] += y.rx1day;
            }
            (k, acc.map(|v| v / ny))
        })
        .collect();
    let spec = *series.spec();
    let map = |i: usize| {
        let mut values = vec![0.0; spec.n_cells()];
        let mut defined = vec![false; spec.n_cells()];
        for &(k, acc) in &per_cell {
            values[k] = acc[i];
            defined[k] = true;
        }
        CellMap { spec, values, defined }
    };
    Ok(ExtremeIndices { cdd: map(0), r20: map(1), rx1day: map(2), n_years: years.len() })
}

/// Pooled confusion counts for `value >= threshold` over valid cell-days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total().max(1) as f64
    }

    /// `None` when the observations hold no positive label.
    pub fn f1(&self) -> Option<f64> {
        (self.tp + self.fn_ > 0).then(|| 2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionScores {
    pub confusion: Confusion,
    pub f1: Option<f64>,
    pub accuracy: f64,
}

pub fn extreme_detection_scores(pred: &FieldSeries, obs: &FieldSeries, threshold: f64) -> Result<DetectionScores> {
    pred.check_aligned(obs)?;
    let cells = obs.valid_cells();
    let mut c = Confusion::default();
    for t in 0..obs.n_days() {
        let (p, o) = (pred.day(t), obs.day(t));
        for &k in &cells {
            match (p[k] as f64 >= threshold, o[k] as f64 >= threshold) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(DetectionScores { confusion: c, f1: c.f1(), accuracy: c.accuracy() })
}

/// `model,f1,accuracy,tp,fp,fn,tn`.
pub fn detection_csv(rows: &[(String, DetectionScores)]) -> String {
    let mut out = String::from("model,f1,accuracy,tp,fp,fn,tn\n");
    for (name, s) in rows {
        let c = s.confusion;
        let f1 = s.f1.map_or("undefined".to_string(), |v| v.to_string());
        out.push_str(&format!("{name},{f1},{},{},{},{},{}\n", s.accuracy, c.tp, c.fp, c.fn_, c.tn));
    }
    out
}

#[cfg(test)]
mod tests;
