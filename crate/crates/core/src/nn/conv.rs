//! 3×3, stride 1, zero-pad 1 convolution via im2col + GEMM.

use std::cell::RefCell;

use rand::Rng;

use super::Tensor4;
use crate::error::{shape_err, Result};

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    /// (out, in, 3, 3)
    pub weight: Tensor4,
    /// (1, out, 1, 1)
    pub bias: Tensor4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub dx: Tensor4,
    pub dweight: Tensor4,
    pub dbias: Tensor4,
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        ConvLayer {
            in_channels,
            out_channels,
            weight: Tensor4::zeros([out_channels, in_channels, KERNEL, KERNEL]),
            bias: Tensor4::zeros([1, out_channels, 1, 1]),
        }
    }

    /// Kaiming-uniform (fan-in, ReLU gain) kernel, zero bias.
    pub fn kaiming<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, rng: &mut R) -> Self {
        let mut layer = ConvLayer::zeros(in_channels, out_channels);
        let bound = (6.0 / (in_channels * TAPS) as f64).sqrt();
        for w in layer.weight.values_mut() {
            *w = rng.gen_range(-bound..bound);
        }
        layer
    }

    pub fn parameter_count(&self) -> usize {
        TAPS * self.in_channels * self.out_channels + self.out_channels
    }

    fn check_input(&self, x: &Tensor4) -> Result<()> {
        if x.c() != self.in_channels {
            return shape_err(format!("conv expects {} input channels, got {}", self.in_channels, x.c()));
        }
        Ok(())
    }
}

/// Operand of [`gemm`]: row-major storage with leading dimension `ld`,
/// optionally read transposed.
#[derive(Clone, Copy)]
struct Mat<'a> {
    data: &'a [f64],
    ld: usize,
    transposed: bool,
}

impl<'a> Mat<'a> {
    fn new(data: &'a [f64], ld: usize) -> Self {
        Mat { data, ld, transposed: false }
    }

    fn t(data: &'a [f64], ld: usize) -> Self {
        Mat { data, ld, transposed: true }
    }

    /// Row and column strides of the logical (possibly transposed) matrix.
    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.ld as isize)
        } else {
            (self.ld as isize, 1)
        }
    }

    fn fits(&self, rows: usize, cols: usize) -> bool {
        let (r, c) = if self.transposed { (cols, rows) } else { (rows, cols) };
        r == 0 || c == 0 || self.data.len() >= (r - 1) * self.ld + c
    }
}

/// `c (m × n, leading dim ldc) = a (m × k) · b (k × n) + beta·c`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: Mat, b: Mat, beta: f64, c: &mut [f64], ldc: usize) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.fits(m, k) && b.fits(k, n), "gemm operand too small");
    assert!(c.len() >= (m - 1) * ldc + n, "gemm output too small");
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: every address touched lies inside the slices checked above.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.data.as_ptr(), rsa, csa, b.data.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), ldc as isize, 1);
    }
}

/// Unfolds output rows `y0..y1` of one (c, h, w) sample into a
/// (c·9, (y1−y0)·w) patch matrix.
fn im2col_rows(x: &[f64], c: usize, h: usize, w: usize, y0: usize, y1: usize, cols: &mut [f64]) {
    let hw = h * w;
    let band = (y1 - y0) * w;
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut cols[(ch * TAPS + ky * KERNEL + kx) * band..][..band];
                for y in y0..y1 {
                    let dst = &mut row[(y - y0) * w..(y - y0 + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = 0.0;
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col_rows`]: accumulates patch gradients back into `dx`.
fn col2im_rows(cols: &[f64], c: usize, h: usize, w: usize, y0: usize, y1: usize, dx: &mut [f64]) {
    let hw = h * w;
    let band = (y1 - y0) * w;
    for ch in 0..c {
        let plane = &mut dx[ch * hw..(ch + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &cols[(ch * TAPS + ky * KERNEL + kx) * band..][..band];
                for y in y0..y1 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[(y - y0) * w..(y - y0 + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, s)| *d += s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d += s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, s)| *d += s),
                    }
                }
            }
        }
    }
}

/// Patch-matrix budget per band, in scalars (about 1 MiB), so a band stays
/// cache resident between unfolding and multiplication.
const BAND_SCALARS: usize = 1 << 17;

fn band_rows(c: usize, h: usize, w: usize) -> usize {
    (BAND_SCALARS / (c * TAPS * w).max(1)).clamp(1, h.max(1))
}

thread_local! {
    static SCRATCH: RefCell<(Vec<f64>, Vec<f64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

fn with_scratch<T>(len: usize, f: impl FnOnce(&mut [f64], &mut [f64]) -> T) -> T {
    SCRATCH.with(|s| {
        let mut s = s.borrow_mut();
        let (a, b) = &mut *s;
        if a.len() < len {
            a.resize(len, 0.0);
            b.resize(len, 0.0);
        }
        f(&mut a[..len], &mut b[..len])
    })
}

pub fn conv2d_forward(x: &Tensor4, layer: &ConvLayer) -> Result<Tensor4> {
    layer.check_input(x)?;
    let [n, c, h, w] = x.dims();
    let hw = h * w;
    let o = layer.out_channels;
    let mut y = Tensor4::zeros([n, o, h, w]);
    if hw == 0 {
        return Ok(y);
    }
    let rows = band_rows(c, h, w);
    with_scratch(c * TAPS * rows * w, |cols, _| {
        for s in 0..n {
            let xs = x.sample(s);
            let out = y.sample_mut(s);
            for (ch, plane) in out.chunks_exact_mut(hw).enumerate() {
                plane.fill(layer.bias.values()[ch]);
            }
            for y0 in (0..h).step_by(rows) {
                let y1 = (y0 + rows).min(h);
                let band = (y1 - y0) * w;
                im2col_rows(xs, c, h, w, y0, y1, cols);
                gemm(o, c * TAPS, band, Mat::new(layer.weight.values(), c * TAPS), Mat::new(cols, band), 1.0, &mut out[y0 * w..], hw);
            }
        }
    });
    Ok(y)
}

pub fn conv2d_backward(x: &Tensor4, layer: &ConvLayer, upstream: &Tensor4) -> Result<ConvGrads> {
    layer.check_input(x)?;
    let [n, c, h, w] = x.dims();
    let o = layer.out_channels;
    if upstream.dims() != [n, o, h, w] {
        return shape_err(format!("conv upstream gradient {:?}, expected {:?}", upstream.dims(), [n, o, h, w]));
    }
    let hw = h * w;
    let mut dx = Tensor4::zeros(x.dims());
    let mut dweight = Tensor4::zeros(layer.weight.dims());
    let mut dbias = Tensor4::zeros(layer.bias.dims());
    if hw == 0 {
        return Ok(ConvGrads { dx, dweight, dbias });
    }
    let rows = band_rows(c, h, w);
    with_scratch(c * TAPS * rows * w, |cols, dcols| {
        for s in 0..n {
            let dy = upstream.sample(s);
            for (ch, plane) in dy.chunks_exact(hw).enumerate() {
                dbias.values_mut()[ch] += plane.iter().sum::<f64>();
            }
            let xs = x.sample(s);
            for y0 in (0..h).step_by(rows) {
                let y1 = (y0 + rows).min(h);
                let band = (y1 - y0) * w;
                let dy_band = &dy[y0 * w..];
                im2col_rows(xs, c, h, w, y0, y1, cols);
                // dW (o × c9) += dY_band (o × band) · colsᵀ
                gemm(o, band, c * TAPS, Mat::new(dy_band, hw), Mat::t(cols, band), 1.0, dweight.values_mut(), c * TAPS);
                // dcols (c9 × band) = Wᵀ · dY_band
                gemm(c * TAPS, o, band, Mat::t(layer.weight.values(), c * TAPS), Mat::new(dy_band, hw), 0.0, dcols, band);
                col2im_rows(dcols, c, h, w, y0, y1, dx.sample_mut(s));
            }
        }
    });
    Ok(ConvGrads { dx, dweight, dbias })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Direct 7-loop convolution, independent of im2col/GEMM.
    fn naive_conv(x: &Tensor4, l: &ConvLayer) -> Tensor4 {
        let [n, c, h, w] = x.dims();
        let mut y = Tensor4::zeros([n, l.out_channels, h, w]);
        for s in 0..n {
            for o in 0..l.out_channels {
                for yy in 0..h {
                    for xx in 0..w {
                        let mut acc = l.bias.values()[o];
                        for ci in 0..c {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let sy = yy as isize + ky as isize - 1;
                                    let sx = xx as isize + kx as isize - 1;
                                    if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                        acc += l.weight.get(o, ci, ky, kx) * x.get(s, ci, sy as usize, sx as usize);
                                    }
                                }
                            }
                        }
                        y.set(s, o, yy, xx, acc);
                    }
                }
            }
        }
        y
    }

    #[test]
    fn all_ones_kernel_on_ones() {
        let x = Tensor4::filled([1, 1, 3, 3], 1.0);
        let mut l = ConvLayer::zeros(1, 1);
        l.weight.values_mut().fill(1.0);
        let y = conv2d_forward(&x, &l).unwrap();
        assert_eq!(y.get(0, 0, 1, 1), 9.0);
        for (a, b) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_eq!(y.get(0, 0, a, b), 4.0);
        }
        assert_eq!(y.get(0, 0, 0, 1), 6.0);
    }

    #[test]
    fn identity_kernel_copies_channel() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x = Tensor4::from_vec([2, 2, 4, 5], (0..80).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let mut l = ConvLayer::zeros(2, 1);
        l.weight.set(0, 1, 1, 1, 1.0);
        let y = conv2d_forward(&x, &l).unwrap();
        for s in 0..2 {
            for yy in 0..4 {
                for xx in 0..5 {
                    assert_eq!(y.get(s, 0, yy, xx), x.get(s, 1, yy, xx));
                }
            }
        }
    }

    #[test]
    fn parameter_count() {
        assert_eq!(ConvLayer::zeros(1, 64).parameter_count(), 640);
        assert_eq!(ConvLayer::zeros(64, 32).parameter_count(), 18464);
    }

    #[test]
    fn matches_naive_convolution() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for &(n, c, o, h, w) in &[(1, 1, 1, 1, 1), (2, 3, 4, 5, 6), (1, 5, 2, 2, 7), (3, 2, 3, 8, 1)] {
            let x = Tensor4::from_vec([n, c, h, w], (0..n * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let mut l = ConvLayer::kaiming(c, o, &mut rng);
            l.bias.values_mut().iter_mut().for_each(|b| *b = rng.gen_range(-1.0..1.0));
            let fast = conv2d_forward(&x, &l).unwrap();
            let slow = naive_conv(&x, &l);
            for (a, b) in fast.values().iter().zip(slow.values()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x = Tensor4::from_vec([1, 2, 3, 3], (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let l = ConvLayer::kaiming(2, 3, &mut rng);
        let g = conv2d_backward(&x, &l, &Tensor4::zeros([1, 3, 3, 3])).unwrap();
        assert!(g.dx.values().iter().chain(g.dweight.values()).chain(g.dbias.values()).all(|&v| v == 0.0));
    }

    #[test]
    fn bias_gradient_on_single_cell() {
        let l = ConvLayer::zeros(2, 3);
        let g = conv2d_backward(&Tensor4::filled([1, 2, 1, 1], 0.5), &l, &Tensor4::filled([1, 3, 1, 1], 1.0)).unwrap();
        assert_eq!(g.dbias.values(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn channel_mismatch_rejected() {
        let l = ConvLayer::zeros(2, 3);
        assert!(conv2d_forward(&Tensor4::zeros([1, 1, 3, 3]), &l).is_err());
        assert!(conv2d_backward(&Tensor4::zeros([1, 2, 3, 3]), &l, &Tensor4::zeros([1, 2, 3, 3])).is_err());
    }
}
