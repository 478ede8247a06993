//! Align-corners interpolation and block-mean coarsening.

use super::{GridField, GridSpec};
use crate::error::{invalid, Result};

/// Source coordinate of output index `i` under the align-corners convention.
fn source_coord(i: usize, n_in: usize, n_out: usize) -> f64 {
    if n_out <= 1 || n_in <= 1 {
        0.0
    } else {
        (i * (n_in - 1)) as f64 / (n_out - 1) as f64
    }
}

fn check_axes(field: &GridField, out: &GridSpec) -> Result<()> {
    out.validate()?;
    let s = &field.spec;
    if (s.n_lat == 1 && out.n_lat > 1) || (s.n_lon == 1 && out.n_lon > 1) {
        return invalid(format!(
            "cannot interpolate a {}x{} field up to {}x{}: need at least 2 cells on every enlarged axis",
            s.n_lat, s.n_lon, out.n_lat, out.n_lon
        ));
    }
    Ok(())
}

fn nearest_mask(field: &GridField, out: &GridSpec) -> Vec<bool> {
    let s = &field.spec;
    let mut mask = Vec::with_capacity(out.n_cells());
    for i in 0..out.n_lat {
        let r = source_coord(i, s.n_lat, out.n_lat).round() as usize;
        for j in 0..out.n_lon {
            let c = source_coord(j, s.n_lon, out.n_lon).round() as usize;
            mask.push(field.mask[r.min(s.n_lat - 1) * s.n_lon + c.min(s.n_lon - 1)]);
        }
    }
    mask
}

fn finish(out: GridSpec, values: Vec<f64>, mask: Vec<bool>) -> Result<GridField> {
    let values = values
        .into_iter()
        .zip(&mask)
        .map(|(v, &m)| if m { v.max(0.0) as f32 } else { 0.0 })
        .collect();
    GridField::new(out, values, mask)
}

pub fn bilinear_resample(field: &GridField, out: &GridSpec) -> Result<GridField> {
    check_axes(field, out)?;
    let s = &field.spec;
    if s.same_shape(out) {
        return GridField::new(*out, field.values.clone(), field.mask.clone());
    }
    let axis = |i: usize, n_in: usize, n_out: usize| {
        let x = source_coord(i, n_in, n_out);
        let i0 = (x.floor() as usize).min(n_in.saturating_sub(2));
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, x - i0 as f64)
    };
    let at = |r: usize, c: usize| field.values[r * s.n_lon + c] as f64;
    let mut values = Vec::with_capacity(out.n_cells());
    for i in 0..out.n_lat {
        let (r0, r1, ty) = axis(i, s.n_lat, out.n_lat);
        for j in 0..out.n_lon {
            let (c0, c1, tx) = axis(j, s.n_lon, out.n_lon);
            let top = at(r0, c0) * (1.0 - tx) + at(r0, c1) * tx;
            let bottom = at(r1, c0) * (1.0 - tx) + at(r1, c1) * tx;
            values.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    finish(*out, values, nearest_mask(field, out))
}

/// Catmull-Rom (a = -0.5) cubic convolution weights for fractional offset `t`.
pub(crate) fn cubic_weights(t: f64) -> [f64; 4] {
    const A: f64 = -0.5;
    let near = |x: f64| ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0;
    let far = |x: f64| ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A;
    [far(1.0 + t), near(t), near(1.0 - t), far(2.0 - t)]
}

/// Sample indices and weights along one axis. Taps falling outside the grid
/// read linearly extrapolated ghost cells (`v[-1] = 2 v[0] - v[1]`), folded
/// back onto the two nearest real cells so linear ramps are reproduced up to
/// the border.
fn cubic_taps(i: usize, n_in: usize, n_out: usize) -> ([usize; 4], [f64; 4]) {
    let x = source_coord(i, n_in, n_out);
    let base = (x.floor() as isize).min(n_in as isize - 1);
    let w = cubic_weights(x - base as f64);
    let last = n_in as isize - 1;
    let mut idx = [0usize; 4];
    let mut wt = [0.0f64; 4];
    // slots: 0..4 hold the taps at base-1..=base+2; ghosts are redistributed
    let mut extra: Vec<(usize, f64)> = Vec::new();
    for (k, d) in (-1isize..=2).enumerate() {
        let p = base + d;
        if (0..=last).contains(&p) {
            idx[k] = p as usize;
            wt[k] += w[k];
        } else {
            let (edge, inner) = if p < 0 { (0, 1.min(last)) } else { (last, (last - 1).max(0)) };
            let dist = if p < 0 { -p } else { p - last } as f64;
            extra.push((edge as usize, w[k] * (1.0 + dist)));
            extra.push((inner as usize, -w[k] * dist));
        }
    }
    for (p, weight) in extra {
        let slot = (p as isize - base + 1) as usize;
        idx[slot] = p;
        wt[slot] += weight;
    }
    (idx, wt)
}

pub fn bicubic_resample(field: &GridField, out: &GridSpec) -> Result<GridField> {
    check_axes(field, out)?;
    let s = &field.spec;
    if s.same_shape(out) {
        return GridField::new(*out, field.values.clone(), field.mask.clone());
    }
    let rows: Vec<_> = (0..out.n_lat).map(|i| cubic_taps(i, s.n_lat, out.n_lat)).collect();
    let cols: Vec<_> = (0..out.n_lon).map(|j| cubic_taps(j, s.n_lon, out.n_lon)).collect();
    let mut values = Vec::with_capacity(out.n_cells());
    for (rows, wr) in &rows {
        for (cols, wc) in &cols {
            let mut acc = 0.0;
            for (r, &a) in rows.iter().zip(wr) {
                let row = &field.values[r * s.n_lon..(r + 1) * s.n_lon];
                let mut line = 0.0;
                for (c, &b) in cols.iter().zip(wc) {
                    line += b * row[*c] as f64;
                }
                acc += a * line;
            }
            values.push(acc);
        }
    }
    finish(*out, values, nearest_mask(field, out))
}

/// Averages non-overlapping `factor`×`factor` blocks (masked-out cells count
/// as their stored zeros). A block with any valid cell is valid.
pub fn block_mean_downsample(field: &GridField, factor: usize) -> Result<GridField> {
    let s = &field.spec;
    if factor == 0 || s.n_lat % factor != 0 || s.n_lon % factor != 0 {
        return invalid(format!("grid {}x{} is not divisible by factor {factor}", s.n_lat, s.n_lon));
    }
    let f = factor as f32;
    let out = GridSpec {
        n_lat: s.n_lat / factor,
        n_lon: s.n_lon / factor,
        lat0: s.lat0 + (f - 1.0) / 2.0 * s.d_lat,
        lon0: s.lon0 + (f - 1.0) / 2.0 * s.d_lon,
        d_lat: s.d_lat * f,
        d_lon: s.d_lon * f,
    };
    let mut values = Vec::with_capacity(out.n_cells());
    let mut mask = Vec::with_capacity(out.n_cells());
    for bi in 0..out.n_lat {
        for bj in 0..out.n_lon {
            let mut sum = 0.0f64;
            let mut any = false;
            for r in bi * factor..(bi + 1) * factor {
                for c in bj * factor..(bj + 1) * factor {
                    let k = r * s.n_lon + c;
                    sum += field.values[k] as f64;
                    any |= field.mask[k];
                }
            }
            values.push(sum / (factor * factor) as f64);
            mask.push(any);
        }
    }
    finish(out, values, mask)
}
