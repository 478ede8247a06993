//! Gridded rainfall fields, their on-disk layout, resampling and the
//! synthetic generator.
//!
//! Values are stored as `f32` (mm/day) to match the GFB1 file layout
//! bit-for-bit; analysis code widens to `f64`.

mod gfb;
mod resample;
mod synthetic;

pub use gfb::{decode_series, encode_series, read_series, read_series_with_calendar, write_series, GFB1_HEADER_BYTES};
pub use resample::{bicubic_resample, bilinear_resample, block_mean_downsample};
pub use synthetic::{generate_synthetic, synthetic_mask, SyntheticConfig, SyntheticData};

use std::fmt::Write as _;

use crate::error::{invalid, shape_err, Error, Result};

/// Regular lat/lon grid geometry. Coordinates are cell centres in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_lat: usize,
    pub n_lon: usize,
    pub lat0: f32,
    pub lon0: f32,
    pub d_lat: f32,
    pub d_lon: f32,
}

impl GridSpec {
    pub fn new(n_lat: usize, n_lon: usize, lat0: f32, lon0: f32, d_lat: f32, d_lon: f32) -> Result<Self> {
        let spec = GridSpec { n_lat, n_lon, lat0, lon0, d_lat, d_lon };
        spec.validate()?;
        Ok(spec)
    }

    /// A 0.25° grid anchored at the south-west corner of the Indian mainland box.
    pub fn quarter_degree(n_lat: usize, n_lon: usize) -> Self {
        GridSpec { n_lat, n_lon, lat0: 6.75, lon0: 66.5, d_lat: 0.25, d_lon: 0.25 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_lat == 0 || self.n_lon == 0 {
            return invalid(format!("grid must have at least one cell per axis, got {}x{}", self.n_lat, self.n_lon));
        }
        if !(self.d_lat > 0.0 && self.d_lon > 0.0) {
            return invalid(format!("grid spacing must be positive, got d_lat={} d_lon={}", self.d_lat, self.d_lon));
        }
        if !(self.lat0.is_finite() && self.lon0.is_finite()) {
            return invalid("grid origin must be finite");
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_lat * self.n_lon
    }

    pub fn lat(&self, row: usize) -> f64 {
        self.lat0 as f64 + row as f64 * self.d_lat as f64
    }

    pub fn lon(&self, col: usize) -> f64 {
        self.lon0 as f64 + col as f64 * self.d_lon as f64
    }

    pub fn same_shape(&self, other: &GridSpec) -> bool {
        self.n_lat == other.n_lat && self.n_lon == other.n_lon
    }
}

/// A (year, day-of-year) stamp. Ordering is chronological.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DayStamp {
    pub year: i32,
    pub doy: u16,
}

/// Maps a time index to a [`DayStamp`]. GFB1 files carry no calendar, so
/// readers and the generator share one of these.
///
/// `days_per_year` is the number of stored days per year (e.g. 122 for a
/// June–September monsoon season); stamps restart at `first_doy` each year.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Calendar {
    pub start_year: i32,
    pub first_doy: u16,
    pub days_per_year: u16,
}

impl Default for Calendar {
    fn default() -> Self {
        Calendar { start_year: 2000, first_doy: 1, days_per_year: 365 }
    }
}

impl Calendar {
    pub fn stamps(&self, n_days: usize) -> Vec<DayStamp> {
        let per = self.days_per_year.max(1) as usize;
        (0..n_days)
            .map(|t| DayStamp {
                year: self.start_year + (t / per) as i32,
                doy: self.first_doy + (t % per) as u16,
            })
            .collect()
    }
}

/// One masked 2-D field (row-major, `n_lat` rows).
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub spec: GridSpec,
    pub values: Vec<f32>,
    pub mask: Vec<bool>,
}

impl GridField {
    pub fn new(spec: GridSpec, values: Vec<f32>, mask: Vec<bool>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.n_cells() || mask.len() != spec.n_cells() {
            return shape_err(format!(
                "field expects {} cells, got {} values and {} mask entries",
                spec.n_cells(),
                values.len(),
                mask.len()
            ));
        }
        check_slice(&values, &mask, spec.n_lon, 0)?;
        Ok(GridField { spec, values, mask })
    }

    /// Builds a field, forcing masked-out cells to zero and negative values to zero.
    pub fn from_raw_clipped(spec: GridSpec, mut values: Vec<f32>, mask: Vec<bool>) -> Result<Self> {
        for (v, &m) in values.iter_mut().zip(&mask) {
            if !m || *v < 0.0 {
                *v = 0.0;
            }
        }
        GridField::new(spec, values, mask)
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.spec.n_lon + col]
    }

    pub fn n_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// `lat,lon,value` with one row per valid cell.
    pub fn to_csv(&self) -> String {
        cells_to_csv(&self.spec, &self.mask, |k| self.values[k] as f64)
    }
}

pub(crate) fn cells_to_csv(spec: &GridSpec, mask: &[bool], value: impl Fn(usize) -> f64) -> String {
    let mut out = String::from("lat,lon,value\n");
    for row in 0..spec.n_lat {
        for col in 0..spec.n_lon {
            let k = row * spec.n_lon + col;
            if mask[k] {
                let _ = writeln!(out, "{},{},{}", spec.lat(row), spec.lon(col), value(k));
            }
        }
    }
    out
}

fn check_slice(values: &[f32], mask: &[bool], n_lon: usize, day: usize) -> Result<()> {
    for (k, (&v, &m)) in values.iter().zip(mask).enumerate() {
        let (row, col) = (k / n_lon, k % n_lon);
        if !m {
            if v != 0.0 {
                return Err(Error::InvalidCell { day, row, col, value: v as f64, reason: "masked-out cell must hold 0" });
            }
        } else if !v.is_finite() {
            return Err(Error::InvalidCell { day, row, col, value: v as f64, reason: "non-finite rainfall" });
        } else if v < 0.0 {
            return Err(Error::InvalidCell { day, row, col, value: v as f64, reason: "negative rainfall" });
        }
    }
    Ok(())
}

/// Time-ordered stack of fields sharing one grid and mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    spec: GridSpec,
    mask: Vec<bool>,
    days: Vec<DayStamp>,
    data: Vec<f32>,
}

impl FieldSeries {
    /// Validates every invariant: shapes, strictly increasing days, zero
    /// outside the mask, finite non-negative values inside it.
    pub fn new(spec: GridSpec, mask: Vec<bool>, days: Vec<DayStamp>, data: Vec<f32>) -> Result<Self> {
        spec.validate()?;
        let cells = spec.n_cells();
        if mask.len() != cells {
            return shape_err(format!("mask has {} entries, grid has {cells} cells", mask.len()));
        }
        let expected = days
            .len()
            .checked_mul(cells)
            .ok_or_else(|| Error::Shape("series size overflows".into()))?;
        if data.len() != expected {
            return shape_err(format!("series data has {} values, expected {expected}", data.len()));
        }
        if let Some(w) = days.windows(2).find(|w| w[0] >= w[1]) {
            return invalid(format!("days must be strictly increasing: {:?} then {:?}", w[0], w[1]));
        }
        for (t, slice) in data.chunks_exact(cells.max(1)).enumerate() {
            check_slice(slice, &mask, spec.n_lon, t)?;
        }
        Ok(FieldSeries { spec, mask, days, data })
    }

    /// Builds a series from raw values, zeroing masked-out cells and clipping
    /// negatives. Non-finite values are still rejected.
    pub fn from_raw_clipped(spec: GridSpec, mask: Vec<bool>, days: Vec<DayStamp>, mut data: Vec<f32>) -> Result<Self> {
        let cells = spec.n_cells().max(1);
        for slice in data.chunks_mut(cells) {
            for (v, &m) in slice.iter_mut().zip(&mask) {
                if !m || *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        FieldSeries::new(spec, mask, days, data)
    }

    pub fn from_fields(fields: &[GridField], days: Vec<DayStamp>) -> Result<Self> {
        let first = fields.first().ok_or_else(|| Error::InsufficientData("no fields".into()))?;
        if fields.len() != days.len() {
            return shape_err(format!("{} fields but {} day stamps", fields.len(), days.len()));
        }
        let mut data = Vec::with_capacity(fields.len() * first.spec.n_cells());
        for f in fields {
            if f.spec != first.spec || f.mask != first.mask {
                return shape_err("fields do not share one grid and mask");
            }
            data.extend_from_slice(&f.values);
        }
        FieldSeries::new(first.spec, first.mask.clone(), days, data)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn days(&self) -> &[DayStamp] {
        &self.days
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn n_cells(&self) -> usize {
        self.spec.n_cells()
    }

    pub fn n_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Indices of valid cells in row-major order.
    pub fn valid_cells(&self) -> Vec<usize> {
        (0..self.n_cells()).filter(|&k| self.mask[k]).collect()
    }

    pub fn day(&self, t: usize) -> &[f32] {
        let n = self.n_cells();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn field(&self, t: usize) -> GridField {
        GridField { spec: self.spec, values: self.day(t).to_vec(), mask: self.mask.clone() }
    }

    pub fn value(&self, t: usize, row: usize, col: usize) -> f32 {
        self.data[t * self.n_cells() + row * self.spec.n_lon + col]
    }

    /// Time series of one cell (flat index), widened to f64.
    pub fn cell_series(&self, cell: usize) -> Vec<f64> {
        let n = self.n_cells();
        (0..self.n_days()).map(|t| self.data[t * n + cell] as f64).collect()
    }

    /// Days `range` as a new series.
    pub fn slice_days(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.n_days() || range.start > range.end {
            return invalid(format!("day range {range:?} outside series of {} days", self.n_days()));
        }
        let n = self.n_cells();
        Ok(FieldSeries {
            spec: self.spec,
            mask: self.mask.clone(),
            days: self.days[range.clone()].to_vec(),
            data: self.data[range.start * n..range.end * n].to_vec(),
        })
    }

    /// Same values with new day stamps.
    pub fn with_days(&self, days: Vec<DayStamp>) -> Result<Self> {
        FieldSeries::new(self.spec, self.mask.clone(), days, self.data.clone())
    }

    /// Same values re-masked: cells outside `mask` become 0.
    pub fn with_mask(&self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.n_cells() {
            return shape_err("mask size differs from grid");
        }
        FieldSeries::from_raw_clipped(self.spec, mask.to_vec(), self.days.clone(), self.data.clone())
    }

    /// Applies `f` to every day's field and stacks the results.
    pub fn map_fields(&self, mut f: impl FnMut(&GridField) -> Result<GridField>) -> Result<Self> {
        let fields = (0..self.n_days()).map(|t| f(&self.field(t))).collect::<Result<Vec<_>>>()?;
        if fields.is_empty() {
            return Ok(self.clone());
        }
        FieldSeries::from_fields(&fields, self.days.clone())
    }

    /// Checks that two series can be compared cell-by-cell and day-by-day.
    pub fn check_aligned(&self, other: &FieldSeries) -> Result<()> {
        if !self.spec.same_shape(&other.spec) {
            return shape_err(format!(
                "grids differ: {}x{} vs {}x{}",
                self.spec.n_lat, self.spec.n_lon, other.spec.n_lat, other.spec.n_lon
            ));
        }
        if self.n_days() != other.n_days() {
            return shape_err(format!("series lengths differ: {} vs {} days", self.n_days(), other.n_days()));
        }
        Ok(())
    }
}
