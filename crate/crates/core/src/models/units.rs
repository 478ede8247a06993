//! Max-Average Unit (encoder) and Upsampler Unit (decoder).

use rand::Rng;

use crate::error::{shape_err, Result};
use crate::nn::{
    average_pair, avgpool2, avgpool2_backward, concat_channels, conv2d_backward, conv2d_forward, dropout_backward,
    maxpool2, maxpool2_backward, relu, relu_backward, split_channels, upsample_nearest2, upsample_nearest2_backward,
    ConvLayer, DropMask, DropoutCtx, DropoutSpec, PatternHasher, Tensor4,
};

/// Weight and bias gradients of one convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub dweight: Tensor4,
    pub dbias: Tensor4,
}

/// `relu(conv_b(relu(conv_a(x))))` with its intermediates kept for backward.
#[derive(Debug, Clone)]
pub(crate) struct ConvPairCache {
    x: Tensor4,
    a_pre: Tensor4,
    a: Tensor4,
    b_pre: Tensor4,
}

pub(crate) fn conv_pair_forward(conv_a: &ConvLayer, conv_b: &ConvLayer, x: &Tensor4) -> Result<(Tensor4, ConvPairCache)> {
    let a_pre = conv2d_forward(x, conv_a)?;
    let a = relu(&a_pre);
    let b_pre = conv2d_forward(&a, conv_b)?;
    let b = relu(&b_pre);
    Ok((b, ConvPairCache { x: x.clone(), a_pre, a, b_pre }))
}

pub(crate) fn conv_pair_backward(
    conv_a: &ConvLayer,
    conv_b: &ConvLayer,
    cache: &ConvPairCache,
    dy: &Tensor4,
) -> Result<(Tensor4, [LayerGrad; 2])> {
    let db = relu_backward(&cache.b_pre, dy)?;
    let gb = conv2d_backward(&cache.a, conv_b, &db)?;
    let da = relu_backward(&cache.a_pre, &gb.dx)?;
    let ga = conv2d_backward(&cache.x, conv_a, &da)?;
    Ok((
        ga.dx,
        [LayerGrad { dweight: ga.dweight, dbias: ga.dbias }, LayerGrad { dweight: gb.dweight, dbias: gb.dbias }],
    ))
}

impl ConvPairCache {
    fn fingerprint(&self, h: &mut PatternHasher) {
        h.positives(self.a_pre.values());
        h.positives(self.b_pre.values());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MauUnit {
    pub conv_a: ConvLayer,
    pub conv_b: ConvLayer,
    pub dropout: DropoutSpec,
}

/// Outputs of a MAU: the half-resolution forward stream and two skips.
#[derive(Debug, Clone, PartialEq)]
pub struct MauOutput {
    /// `average_pair(maxpool2(F), avgpool2(F))`
    pub f_out: Tensor4,
    /// Full-resolution features `F`.
    pub d_skip: Tensor4,
    /// `maxpool2(F)`
    pub m_skip: Tensor4,
}

#[derive(Debug, Clone)]
pub struct MauCache {
    convs: ConvPairCache,
    mask: DropMask,
    f_dims: [usize; 4],
    argmax: Vec<usize>,
}

impl MauCache {
    pub(crate) fn fingerprint(&self, h: &mut PatternHasher) {
        self.convs.fingerprint(h);
        h.indices(&self.argmax);
    }

    pub(crate) fn mask(&self) -> &DropMask {
        &self.mask
    }
}

impl MauUnit {
    pub fn new<R: Rng + ?Sized>(in_channels: usize, width: usize, dropout: DropoutSpec, rng: &mut R) -> Self {
        MauUnit { conv_a: ConvLayer::kaiming(in_channels, width, rng), conv_b: ConvLayer::kaiming(width, width, rng), dropout }
    }

    pub fn width(&self) -> usize {
        self.conv_b.out_channels
    }

    pub fn forward(&self, x: &Tensor4, drop: &mut DropoutCtx) -> Result<(MauOutput, MauCache)> {
        if x.h() % 2 != 0 || x.w() % 2 != 0 {
            return shape_err(format!("MAU input must have even spatial dims, got {}x{}", x.h(), x.w()));
        }
        let (dropped, mask) = drop.apply(x, self.dropout)?;
        let (f, convs) = conv_pair_forward(&self.conv_a, &self.conv_b, &dropped)?;
        let (m_skip, argmax) = maxpool2(&f)?;
        let avg = avgpool2(&f)?;
        let f_out = average_pair(&m_skip, &avg)?;
        let cache = MauCache { convs, mask, f_dims: f.dims(), argmax };
        Ok((MauOutput { f_out, d_skip: f, m_skip }, cache))
    }

    /// Returns the input gradient and the (conv_a, conv_b) parameter gradients.
    pub fn backward(
        &self,
        cache: &MauCache,
        d_f_out: &Tensor4,
        d_d_skip: Option<&Tensor4>,
        d_m_skip: Option<&Tensor4>,
    ) -> Result<(Tensor4, [LayerGrad; 2])> {
        let mut d_max = d_f_out.map(|g| 0.5 * g);
        if let Some(dm) = d_m_skip {
            d_max.add_assign(dm)?;
        }
        let d_avg = d_f_out.map(|g| 0.5 * g);
        let mut df = maxpool2_backward(&cache.argmax, cache.f_dims, &d_max)?;
        df.add_assign(&avgpool2_backward(cache.f_dims, &d_avg)?)?;
        if let Some(dd) = d_d_skip {
            df.add_assign(dd)?;
        }
        let (d_dropped, grads) = conv_pair_backward(&self.conv_a, &self.conv_b, &cache.convs, &df)?;
        Ok((dropout_backward(&cache.mask, &d_dropped)?, grads))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UsuUnit {
    pub conv_a: ConvLayer,
    pub conv_b: ConvLayer,
    pub dropout: DropoutSpec,
}

#[derive(Debug, Clone)]
pub struct UsuCache {
    sizes: Vec<usize>,
    mask: DropMask,
    convs: ConvPairCache,
}

impl UsuCache {
    pub(crate) fn fingerprint(&self, h: &mut PatternHasher) {
        self.convs.fingerprint(h);
    }

    pub(crate) fn mask(&self) -> &DropMask {
        &self.mask
    }
}

impl UsuUnit {
    /// `input_channels` is the channel sum of everything concatenated.
    pub fn new<R: Rng + ?Sized>(input_channels: usize, width: usize, dropout: DropoutSpec, rng: &mut R) -> Self {
        UsuUnit { conv_a: ConvLayer::kaiming(input_channels, width, rng), conv_b: ConvLayer::kaiming(width, width, rng), dropout }
    }

    pub fn width(&self) -> usize {
        self.conv_b.out_channels
    }

    /// `inputs[0]` is the coarse stream (upsampled 2×); the rest are skips at
    /// the output resolution.
    pub fn forward(&self, inputs: &[&Tensor4], drop: &mut DropoutCtx) -> Result<(Tensor4, UsuCache)> {
        let (coarse, skips) = inputs.split_first().ok_or_else(|| crate::Error::Shape("USU needs at least one input".into()))?;
        let up = upsample_nearest2(coarse);
        for s in skips {
            if s.h() != up.h() || s.w() != up.w() {
                return shape_err(format!(
                    "USU skip is {}x{} but upsampled stream is {}x{}",
                    s.h(),
                    s.w(),
                    up.h(),
                    up.w()
                ));
            }
        }
        let mut parts: Vec<&Tensor4> = Vec::with_capacity(inputs.len());
        parts.push(&up);
        parts.extend_from_slice(skips);
        let cat = concat_channels(&parts)?;
        let sizes = parts.iter().map(|p| p.c()).collect();
        let (dropped, mask) = drop.apply(&cat, self.dropout)?;
        let (y, convs) = conv_pair_forward(&self.conv_a, &self.conv_b, &dropped)?;
        Ok((y, UsuCache { sizes, mask, convs }))
    }

    /// Returns one gradient per input (in input order) and the conv gradients.
    pub fn backward(&self, cache: &UsuCache, dy: &Tensor4) -> Result<(Vec<Tensor4>, [LayerGrad; 2])> {
        let (d_dropped, grads) = conv_pair_backward(&self.conv_a, &self.conv_b, &cache.convs, dy)?;
        let d_cat = dropout_backward(&cache.mask, &d_dropped)?;
        let mut parts = split_channels(&d_cat, &cache.sizes)?;
        parts[0] = upsample_nearest2_backward(&parts[0])?;
        Ok((parts, grads))
    }
}
