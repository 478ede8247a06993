use super::Tensor4;
use crate::error::{invalid, shape_err, Result};

/// Squared error summed over valid cells (mask over h×w, broadcast across
/// batch and channels), with gradient `scale · 2(pred − target)` on valid
/// cells and 0 elsewhere. Returns `(sse, n_valid, grad)`.
pub fn masked_squared_error(pred: &Tensor4, target: &Tensor4, mask: &[bool], scale: f64) -> Result<(f64, usize, Tensor4)> {
    pred.same_dims(target, "loss target")?;
    let hw = pred.h() * pred.w();
    if mask.len() != hw {
        return shape_err(format!("loss mask has {} cells, tensors have {hw}", mask.len()));
    }
    let mut grad = Tensor4::zeros(pred.dims());
    let mut sse = 0.0;
    let mut count = 0;
    for (k, ((g, &p), &t)) in grad.values_mut().iter_mut().zip(pred.values()).zip(target.values()).enumerate() {
        if mask[k % hw] {
            let d = p - t;
            sse += d * d;
            count += 1;
            *g = scale * 2.0 * d;
        }
    }
    Ok((sse, count, grad))
}

/// Mean squared error over valid cells and its gradient `2(pred − target)/N_valid`.
pub fn mse_loss(pred: &Tensor4, target: &Tensor4, mask: &[bool]) -> Result<(f64, Tensor4)> {
    let n_valid = mask.iter().filter(|&&m| m).count() * pred.n() * pred.c();
    if n_valid == 0 {
        return invalid("loss over an all-masked batch");
    }
    let (sse, count, grad) = masked_squared_error(pred, target, mask, 1.0 / n_valid as f64)?;
    debug_assert_eq!(count, n_valid);
    Ok((sse / n_valid as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let p = Tensor4::from_vec([1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
        let z = Tensor4::zeros([1, 1, 1, 2]);
        assert_eq!(mse_loss(&p, &p, &[true, true]).unwrap().0, 0.0);
        let (l, g) = mse_loss(&p, &z, &[true, true]).unwrap();
        assert_eq!(l, 2.5);
        assert_eq!(g.values(), &[1.0, 2.0]);
        let (l, g) = mse_loss(&p, &z, &[false, true]).unwrap();
        assert_eq!(l, 4.0);
        assert_eq!(g.values(), &[0.0, 4.0]);
    }

    #[test]
    fn all_masked_rejected() {
        let p = Tensor4::zeros([1, 1, 1, 2]);
        assert!(mse_loss(&p, &p, &[false, false]).is_err());
    }
}
