//! Structural similarity restricted to a validity mask.
//!
//! The usual 11×11 Gaussian window (σ = 1.5) is centred on every valid cell;
//! window weights are renormalised over the valid cells that fall inside the
//! grid, so land/sea edges and the grid border do not bias the statistics.

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;

fn gaussian_1d() -> [f64; WINDOW] {
    let r = (WINDOW / 2) as f64;
    let mut g = [0.0; WINDOW];
    for (k, v) in g.iter_mut().enumerate() {
        let d = k as f64 - r;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    g
}

/// Mean SSIM over the valid cells of one `h`×`w` field pair; `None` when no
/// cell is valid.
pub fn masked_ssim(x: &[f64], y: &[f64], mask: &[bool], h: usize, w: usize, peak: f64) -> Option<f64> {
    let g = gaussian_1d();
    let c1 = (K1 * peak).powi(2);
    let c2 = (K2 * peak).powi(2);
    let r = (WINDOW / 2) as isize;
    let mut total = 0.0;
    let mut centres = 0usize;
    for i in 0..h {
        for j in 0..w {
            if !mask[i * w + j] {
                continue;
            }
            let (mut sw, mut mx, mut my) = (0.0, 0.0, 0.0);
            let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
            for di in -r..=r {
                let ii = i as isize + di;
                if ii < 0 || ii >= h as isize {
                    continue;
                }
                for dj in -r..=r {
                    let jj = j as isize + dj;
                    if jj < 0 || jj >= w as isize {
                        continue;
                    }
                    let k = ii as usize * w + jj as usize;
                    if !mask[k] {
                        continue;
                    }
                    let wt = g[(di + r) as usize] * g[(dj + r) as usize];
                    let (a, b) = (x[k], y[k]);
                    sw += wt;
                    mx += wt * a;
                    my += wt * b;
                    sxx += wt * a * a;
                    syy += wt * b * b;
                    sxy += wt * a * b;
                }
            }
            let (mx, my) = (mx / sw, my / sw);
            let vx = (sxx / sw - mx * mx).max(0.0);
            let vy = (syy / sw - my * my).max(0.0);
            let cxy = sxy / sw - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            centres += 1;
        }
    }
    (centres > 0).then(|| total / centres as f64)
}
