//! Pooling, upsampling, channel concatenation, pairwise averaging and ReLU,
//! each with its adjoint.

use super::Tensor4;
use crate::error::{shape_err, Result};

fn check_even(x: &Tensor4, what: &str) -> Result<()> {
    if x.h() % 2 != 0 || x.w() % 2 != 0 {
        return shape_err(format!("{what} needs even spatial dims, got {}x{}", x.h(), x.w()));
    }
    Ok(())
}

/// 2×2 stride-2 max pooling. The returned map holds, for every output
/// element, the flat input offset of its maximum (first in row-major order
/// on ties).
pub fn maxpool2(x: &Tensor4) -> Result<(Tensor4, Vec<usize>)> {
    check_even(x, "maxpool2")?;
    let [n, c, h, w] = x.dims();
    let (ho, wo) = (h / 2, w / 2);
    let mut y = Tensor4::zeros([n, c, ho, wo]);
    let mut argmax = Vec::with_capacity(y.len());
    let xs = x.values();
    let mut k = 0;
    for s in 0..n {
        for ch in 0..c {
            for i in 0..ho {
                for j in 0..wo {
                    let base = x.offset(s, ch, 2 * i, 2 * j);
                    let mut best = base;
                    for cand in [base + 1, base + w, base + w + 1] {
                        if xs[cand] > xs[best] {
                            best = cand;
                        }
                    }
                    y.values_mut()[k] = xs[best];
                    argmax.push(best);
                    k += 1;
                }
            }
        }
    }
    Ok((y, argmax))
}

pub fn maxpool2_backward(argmax: &[usize], input_dims: [usize; 4], upstream: &Tensor4) -> Result<Tensor4> {
    if argmax.len() != upstream.len() {
        return shape_err(format!("argmax map has {} entries, upstream has {}", argmax.len(), upstream.len()));
    }
    let mut dx = Tensor4::zeros(input_dims);
    for (&idx, &g) in argmax.iter().zip(upstream.values()) {
        dx.values_mut()[idx] += g;
    }
    Ok(dx)
}

pub fn avgpool2(x: &Tensor4) -> Result<Tensor4> {
    check_even(x, "avgpool2")?;
    let [n, c, h, w] = x.dims();
    let (ho, wo) = (h / 2, w / 2);
    let mut y = Tensor4::zeros([n, c, ho, wo]);
    let xs = x.values();
    let mut k = 0;
    for s in 0..n {
        for ch in 0..c {
            for i in 0..ho {
                for j in 0..wo {
                    let b = x.offset(s, ch, 2 * i, 2 * j);
                    y.values_mut()[k] = 0.25 * (xs[b] + xs[b + 1] + xs[b + w] + xs[b + w + 1]);
                    k += 1;
                }
            }
        }
    }
    Ok(y)
}

pub fn avgpool2_backward(input_dims: [usize; 4], upstream: &Tensor4) -> Result<Tensor4> {
    let [n, c, h, w] = input_dims;
    if upstream.dims() != [n, c, h / 2, w / 2] || h % 2 != 0 || w % 2 != 0 {
        return shape_err(format!("avgpool2 backward: upstream {:?} for input {:?}", upstream.dims(), input_dims));
    }
    let mut dx = Tensor4::zeros(input_dims);
    let mut k = 0;
    for s in 0..n {
        for ch in 0..c {
            for i in 0..h / 2 {
                for j in 0..w / 2 {
                    let g = 0.25 * upstream.values()[k];
                    let b = dx.offset(s, ch, 2 * i, 2 * j);
                    let d = dx.values_mut();
                    d[b] += g;
                    d[b + 1] += g;
                    d[b + w] += g;
                    d[b + w + 1] += g;
                    k += 1;
                }
            }
        }
    }
    Ok(dx)
}

/// Nearest-neighbour 2× spatial upsampling.
pub fn upsample_nearest2(x: &Tensor4) -> Tensor4 {
    let [n, c, h, w] = x.dims();
    let mut y = Tensor4::zeros([n, c, 2 * h, 2 * w]);
    let w2 = 2 * w;
    for s in 0..n {
        for ch in 0..c {
            for i in 0..h {
                let src = &x.values()[x.offset(s, ch, i, 0)..][..w];
                let top = y.offset(s, ch, 2 * i, 0);
                let row = &mut y.values_mut()[top..top + 2 * w2];
                for (j, &v) in src.iter().enumerate() {
                    row[2 * j] = v;
                    row[2 * j + 1] = v;
                    row[w2 + 2 * j] = v;
                    row[w2 + 2 * j + 1] = v;
                }
            }
        }
    }
    y
}

/// Adjoint of [`upsample_nearest2`]: sums each 2×2 block.
pub fn upsample_nearest2_backward(upstream: &Tensor4) -> Result<Tensor4> {
    let [n, c, h2, w2] = upstream.dims();
    if h2 % 2 != 0 || w2 % 2 != 0 {
        return shape_err(format!("upsample backward needs even dims, got {h2}x{w2}"));
    }
    let mut dx = Tensor4::zeros([n, c, h2 / 2, w2 / 2]);
    let u = upstream.values();
    let mut k = 0;
    for s in 0..n {
        for ch in 0..c {
            for i in 0..h2 / 2 {
                for j in 0..w2 / 2 {
                    let b = upstream.offset(s, ch, 2 * i, 2 * j);
                    dx.values_mut()[k] = u[b] + u[b + 1] + u[b + w2] + u[b + w2 + 1];
                    k += 1;
                }
            }
        }
    }
    Ok(dx)
}

/// Stacks tensors along the channel axis.
pub fn concat_channels(parts: &[&Tensor4]) -> Result<Tensor4> {
    let first = parts.first().ok_or_else(|| crate::Error::Shape("concat of zero tensors".into()))?;
    let [n, _, h, w] = first.dims();
    for p in parts {
        if p.n() != n || p.h() != h || p.w() != w {
            return shape_err(format!("concat: {:?} does not match (n, h, w) of {:?}", p.dims(), first.dims()));
        }
    }
    let c: usize = parts.iter().map(|p| p.c()).sum();
    let mut out = Vec::with_capacity(n * c * h * w);
    for s in 0..n {
        for p in parts {
            out.extend_from_slice(p.sample(s));
        }
    }
    Tensor4::from_vec([n, c, h, w], out)
}

/// Inverse of [`concat_channels`] (and its adjoint).
pub fn split_channels(x: &Tensor4, sizes: &[usize]) -> Result<Vec<Tensor4>> {
    let [n, c, h, w] = x.dims();
    if sizes.iter().sum::<usize>() != c {
        return shape_err(format!("split sizes {sizes:?} do not sum to {c} channels"));
    }
    let hw = h * w;
    let mut parts: Vec<Vec<f64>> = sizes.iter().map(|&s| Vec::with_capacity(n * s * hw)).collect();
    for s in 0..n {
        let mut off = 0;
        let sample = x.sample(s);
        for (part, &sz) in parts.iter_mut().zip(sizes) {
            part.extend_from_slice(&sample[off * hw..(off + sz) * hw]);
            off += sz;
        }
    }
    parts
        .into_iter()
        .zip(sizes)
        .map(|(v, &sz)| Tensor4::from_vec([n, sz, h, w], v))
        .collect()
}

/// `0.5·(a + b)`; the backward pass hands `0.5·upstream` to each input.
pub fn average_pair(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    a.same_dims(b, "average_pair")?;
    let v = a.values().iter().zip(b.values()).map(|(x, y)| 0.5 * (x + y)).collect();
    Tensor4::from_vec(a.dims(), v)
}

pub fn average_pair_backward(upstream: &Tensor4) -> Tensor4 {
    upstream.map(|g| 0.5 * g)
}

pub fn relu(x: &Tensor4) -> Tensor4 {
    x.map(|v| v.max(0.0))
}

/// Gradient through ReLU given its input; the subgradient at 0 is 0.
pub fn relu_backward(x: &Tensor4, upstream: &Tensor4) -> Result<Tensor4> {
    x.same_dims(upstream, "relu backward")?;
    let v = x.values().iter().zip(upstream.values()).map(|(&a, &g)| if a > 0.0 { g } else { 0.0 }).collect();
    Tensor4::from_vec(x.dims(), v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dims: [usize; 4], v: &[f64]) -> Tensor4 {
        Tensor4::from_vec(dims, v.to_vec()).unwrap()
    }

    #[test]
    fn maxpool_unique_max_routes_gradient() {
        let x = t([1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let (y, arg) = maxpool2(&x).unwrap();
        assert_eq!(y.values(), &[4.0]);
        let dx = maxpool2_backward(&arg, x.dims(), &t([1, 1, 1, 1], &[1.0])).unwrap();
        assert_eq!(dx.values(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn maxpool_ties_pick_first() {
        let x = Tensor4::filled([1, 1, 2, 2], 7.0);
        let (_, arg) = maxpool2(&x).unwrap();
        let dx = maxpool2_backward(&arg, x.dims(), &t([1, 1, 1, 1], &[1.0])).unwrap();
        assert_eq!(dx.values(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn maxpool_ramp() {
        let x = t([1, 1, 4, 4], &(0..16).map(|v| v as f64).collect::<Vec<_>>());
        let (y, _) = maxpool2(&x).unwrap();
        assert_eq!(y.values(), &[5.0, 7.0, 13.0, 15.0]);
    }

    #[test]
    fn odd_dims_rejected() {
        assert!(maxpool2(&Tensor4::zeros([1, 1, 3, 4])).is_err());
        assert!(avgpool2(&Tensor4::zeros([1, 1, 4, 5])).is_err());
    }

    #[test]
    fn avgpool_examples() {
        assert_eq!(avgpool2(&t([1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0])).unwrap().values(), &[2.5]);
        let c = avgpool2(&Tensor4::filled([2, 3, 4, 6], 1.5)).unwrap();
        assert!(c.values().iter().all(|&v| v == 1.5));
        let dx = avgpool2_backward([1, 1, 2, 2], &t([1, 1, 1, 1], &[1.0])).unwrap();
        assert_eq!(dx.values(), &[0.25; 4]);
    }

    #[test]
    fn upsample_examples() {
        let y = upsample_nearest2(&t([1, 1, 1, 2], &[1.0, 2.0]));
        assert_eq!(y.values(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
        let dx = upsample_nearest2_backward(&Tensor4::filled([1, 1, 2, 2], 1.0)).unwrap();
        assert_eq!(dx.values(), &[4.0]);
        let c = Tensor4::filled([1, 2, 4, 4], 3.0);
        assert_eq!(upsample_nearest2(&avgpool2(&c).unwrap()), c);
    }

    #[test]
    fn concat_and_split() {
        let a = Tensor4::filled([2, 16, 3, 3], 1.0);
        let b = Tensor4::filled([2, 16, 3, 3], 2.0);
        let c = Tensor4::filled([2, 32, 3, 3], 3.0);
        let cat = concat_channels(&[&a, &b, &c]).unwrap();
        assert_eq!(cat.dims(), [2, 64, 3, 3]);
        let parts = split_channels(&cat, &[16, 16, 32]).unwrap();
        assert_eq!(parts, vec![a.clone(), b, c]);
        assert!(concat_channels(&[&a, &Tensor4::zeros([2, 1, 4, 3])]).is_err());
    }

    #[test]
    fn average_pair_examples() {
        let x = t([1, 1, 1, 2], &[1.0, -3.0]);
        assert_eq!(average_pair(&x, &x).unwrap(), x);
        assert_eq!(average_pair(&t([1, 1, 1, 1], &[2.0]), &t([1, 1, 1, 1], &[4.0])).unwrap().values(), &[3.0]);
        assert_eq!(average_pair_backward(&t([1, 1, 1, 1], &[1.0])).values(), &[0.5]);
    }

    #[test]
    fn relu_examples() {
        let x = t([1, 1, 1, 3], &[-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).values(), &[0.0, 0.0, 2.0]);
        assert_eq!(relu_backward(&x, &Tensor4::filled([1, 1, 1, 3], 1.0)).unwrap().values(), &[0.0, 0.0, 1.0]);
    }
}
