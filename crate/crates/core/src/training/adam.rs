use crate::error::{invalid, shape_err, Error, Result};
use crate::nn::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// One bias-corrected Adam update. `grads` is laid out entry by entry in
/// store order; `t` counts steps from 1. Nothing is modified when any
/// gradient is non-finite.
pub fn adam_step(store: &mut ParamStore, grads: &[f64], cfg: &AdamConfig, t: u64) -> Result<()> {
    if t == 0 {
        return invalid("Adam step index starts at 1");
    }
    if grads.len() != store.n_scalars() {
        return shape_err(format!("{} gradients for {} parameters", grads.len(), store.n_scalars()));
    }
    let mut pos = 0;
    for e in store.entries() {
        let n = e.tensor.len();
        if let Some(k) = grads[pos..pos + n].iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(format!("`{}` at index {k}: {}", e.name, grads[pos + k])));
        }
        pos += n;
    }
    let c1 = 1.0 - cfg.beta1.powf(t as f64);
    let c2 = 1.0 - cfg.beta2.powf(t as f64);
    let mut pos = 0;
    for e in store.entries_mut() {
        let n = e.tensor.len();
        let g = &grads[pos..pos + n];
        for (((p, m), v), &g) in e.tensor.values_mut().iter_mut().zip(&mut e.adam_m).zip(&mut e.adam_v).zip(g) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        pos += n;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor4;

    fn scalar_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.push("theta", Tensor4::from_vec([1, 1, 1, 1], vec![v]).unwrap()).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = scalar_store(0.7);
        for t in 1..=5 {
            adam_step(&mut s, &[0.0], &AdamConfig::default(), t).unwrap();
        }
        assert_eq!(s.get("theta").unwrap().values(), &[0.7]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = scalar_store(0.0);
        let cfg = AdamConfig { learning_rate: 0.1, ..AdamConfig::default() };
        adam_step(&mut s, &[1.0], &cfg, 1).unwrap();
        let theta = s.get("theta").unwrap().values()[0];
        assert!((theta + 0.1).abs() < 1e-8, "{theta}");
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = scalar_store(0.0);
        let err = adam_step(&mut s, &[f64::NAN], &AdamConfig::default(), 1).unwrap_err();
        assert!(err.to_string().contains("theta"), "{err}");
        assert_eq!(s.get("theta").unwrap().values(), &[0.0]);
        assert!(adam_step(&mut s, &[1.0, 2.0], &AdamConfig::default(), 1).is_err());
        assert!(adam_step(&mut s, &[1.0], &AdamConfig::default(), 0).is_err());
    }
}
