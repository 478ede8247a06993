//! Deterministic fixtures for the criterion benchmarks.

use maunet_core::grid::{generate_synthetic, SyntheticConfig};
use maunet_core::nn::Tensor4;
use maunet_core::{FieldSeries, GridSpec};

/// Tensor of `dims` filled with a cheap deterministic pattern in [-1, 1).
pub fn pattern_tensor(dims: [usize; 4]) -> Tensor4 {
    let n = dims.iter().product();
    let values = (0..n).map(|k| ((k * 7919) % 2000) as f64 / 1000.0 - 1.0).collect();
    Tensor4::from_vec(dims, values).expect("dims match")
}

/// Synthetic truth and biased series on an `n`×`n` grid.
pub fn synthetic_pair(n: usize, days: usize) -> (FieldSeries, FieldSeries) {
    let cfg = SyntheticConfig { n_days: days, spec: GridSpec::quarter_degree(n, n), ..SyntheticConfig::default() };
    let d = generate_synthetic(&cfg).expect("valid synthetic config");
    (d.truth, d.biased)
}
