//! Inverted dropout: kept entries are scaled by 1/(1-rate) at training time,
//! so evaluation is the identity.

use rand::{Rng, RngCore};

use super::Tensor4;
use crate::error::{invalid, shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutSpec {
    pub rate: f64,
}

impl DropoutSpec {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return invalid(format!("dropout rate must be in [0, 1), got {rate}"));
        }
        Ok(DropoutSpec { rate })
    }
}

/// Per-entry multipliers (0 or 1/(1-rate)); `None` means identity.
pub type DropMask = Option<Vec<f64>>;

pub fn sample_mask<R: Rng + ?Sized>(len: usize, spec: DropoutSpec, rng: &mut R) -> DropMask {
    if spec.rate == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - spec.rate);
    Some((0..len).map(|_| if rng.gen::<f64>() >= spec.rate { keep } else { 0.0 }).collect())
}

pub fn apply_mask(x: &Tensor4, mask: &DropMask) -> Result<Tensor4> {
    match mask {
        None => Ok(x.clone()),
        Some(m) => {
            if m.len() != x.len() {
                return shape_err(format!("dropout mask has {} entries, tensor has {}", m.len(), x.len()));
            }
            Tensor4::from_vec(x.dims(), x.values().iter().zip(m).map(|(v, k)| v * k).collect())
        }
    }
}

/// Dropout is linear given its mask, so the backward pass reuses it.
pub fn dropout_backward(mask: &DropMask, upstream: &Tensor4) -> Result<Tensor4> {
    apply_mask(upstream, mask)
}

enum Source<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
    Replay(&'a [DropMask]),
}

/// Supplies dropout masks to a network forward pass: none (evaluation),
/// freshly sampled (training), or replayed from an earlier pass so that a
/// stochastic network becomes a deterministic function for gradient checks.
pub struct DropoutCtx<'a> {
    source: Source<'a>,
    cursor: usize,
}

impl<'a> DropoutCtx<'a> {
    pub fn eval() -> Self {
        DropoutCtx { source: Source::Eval, cursor: 0 }
    }

    pub fn train(rng: &'a mut dyn RngCore) -> Self {
        DropoutCtx { source: Source::Train(rng), cursor: 0 }
    }

    pub fn replay(masks: &'a [DropMask]) -> Self {
        DropoutCtx { source: Source::Replay(masks), cursor: 0 }
    }

    pub fn is_training(&self) -> bool {
        !matches!(self.source, Source::Eval)
    }

    pub fn apply(&mut self, x: &Tensor4, spec: DropoutSpec) -> Result<(Tensor4, DropMask)> {
        let mask = match &mut self.source {
            Source::Eval => None,
            Source::Train(rng) => sample_mask(x.len(), spec, &mut **rng),
            Source::Replay(masks) => masks
                .get(self.cursor)
                .cloned()
                .ok_or_else(|| crate::Error::Shape(format!("no recorded dropout mask for site {}", self.cursor)))?,
        };
        self.cursor += 1;
        Ok((apply_mask(x, &mask)?, mask))
    }
}
