use rand::Rng;

use super::accounting::FlopCount;
use super::maunet::{INPUT_DROPOUT, MAU_DROPOUT, USU_DROPOUT};
use super::units::{LayerGrad, MauCache, MauUnit, UsuCache, UsuUnit};
use super::{Architecture, Network, Trace};
use crate::error::{shape_err, Result};
use crate::nn::{
    conv2d_backward, conv2d_forward, dropout_backward, relu, relu_backward, ConvLayer, DropMask, DropoutCtx, DropoutSpec,
    PatternHasher, Tensor4,
};

/// One MAU and one USU around a 32→16 bottleneck conv, with the raw input as
/// a long skip into the USU.
#[derive(Debug, Clone, PartialEq)]
pub struct MaunetLightModel {
    pub conv0: ConvLayer,
    pub drop0: DropoutSpec,
    pub mau1: MauUnit,
    pub conv_q: ConvLayer,
    pub usu1: UsuUnit,
    pub conv_out: ConvLayer,
}

#[derive(Debug, Clone)]
pub struct LightCache {
    x: Tensor4,
    p_pre: Tensor4,
    drop0: DropMask,
    mau1: MauCache,
    f1: Tensor4,
    q_pre: Tensor4,
    usu1: UsuCache,
    u: Tensor4,
}

impl MaunetLightModel {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        MaunetLightModel {
            conv0: ConvLayer::kaiming(1, 64, rng),
            drop0: DropoutSpec { rate: INPUT_DROPOUT },
            mau1: MauUnit::new(64, 32, DropoutSpec { rate: MAU_DROPOUT }, rng),
            conv_q: ConvLayer::kaiming(32, 16, rng),
            usu1: UsuUnit::new(16 + 32 + 1, 16, DropoutSpec { rate: USU_DROPOUT }, rng),
            conv_out: ConvLayer::kaiming(16, 1, rng),
        }
    }

    fn run(&self, x: &Tensor4, drop: &mut DropoutCtx, mut trace: Option<&mut Trace>) -> Result<(Tensor4, LightCache)> {
        if x.c() != 1 || x.h() % 2 != 0 || x.w() % 2 != 0 || x.h() == 0 || x.w() == 0 {
            return shape_err(format!("MAUNet-Light needs (n,1,h,w) with h, w even, got {:?}", x.dims()));
        }
        let mut record = |name: &'static str, t: &Tensor4| {
            if let Some(tr) = trace.as_deref_mut() {
                tr.push((name, t.clone()));
            }
        };
        record("X*", x);
        let p_pre = conv2d_forward(x, &self.conv0)?;
        let (p, drop0) = drop.apply(&relu(&p_pre), self.drop0)?;
        record("P", &p);
        let (o1, mau1) = self.mau1.forward(&p, drop)?;
        record("f1", &o1.f_out);
        record("D1", &o1.d_skip);
        let q_pre = conv2d_forward(&o1.f_out, &self.conv_q)?;
        let q = relu(&q_pre);
        record("Q", &q);
        let (u, usu1) = self.usu1.forward(&[&q, &o1.d_skip, x], drop)?;
        record("U", &u);
        let y = conv2d_forward(&u, &self.conv_out)?;
        record("Y*", &y);
        Ok((y, LightCache { x: x.clone(), p_pre, drop0, mau1, f1: o1.f_out, q_pre, usu1, u }))
    }
}

impl Network for MaunetLightModel {
    type Cache = LightCache;

    const ARCHITECTURE: Architecture = Architecture::MaunetLight;

    fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        MaunetLightModel::new(rng)
    }

    fn forward(&self, x: &Tensor4, drop: &mut DropoutCtx) -> Result<(Tensor4, LightCache)> {
        self.run(x, drop, None)
    }

    fn trace(&self, x: &Tensor4) -> Result<Trace> {
        let mut t = Vec::new();
        self.run(x, &mut DropoutCtx::eval(), Some(&mut t))?;
        Ok(t)
    }

    fn backward(&self, cache: &LightCache, dy: &Tensor4) -> Result<(Tensor4, Vec<LayerGrad>)> {
        let g_out = conv2d_backward(&cache.u, &self.conv_out, dy)?;
        let (d_usu, g_usu) = self.usu1.backward(&cache.usu1, &g_out.dx)?;
        let [d_q, d_d1, d_x_skip]: [Tensor4; 3] = d_usu.try_into().expect("three USU inputs");
        let d_q_pre = relu_backward(&cache.q_pre, &d_q)?;
        let g_q = conv2d_backward(&cache.f1, &self.conv_q, &d_q_pre)?;
        let (d_p, g_mau) = self.mau1.backward(&cache.mau1, &g_q.dx, Some(&d_d1), None)?;
        let d_p_pre = relu_backward(&cache.p_pre, &dropout_backward(&cache.drop0, &d_p)?)?;
        let g0 = conv2d_backward(&cache.x, &self.conv0, &d_p_pre)?;
        let mut dx = g0.dx;
        dx.add_assign(&d_x_skip)?;
        let [ma, mb] = g_mau;
        let [ua, ub] = g_usu;
        let grads = vec![
            LayerGrad { dweight: g0.dweight, dbias: g0.dbias },
            ma,
            mb,
            LayerGrad { dweight: g_q.dweight, dbias: g_q.dbias },
            ua,
            ub,
            LayerGrad { dweight: g_out.dweight, dbias: g_out.dbias },
        ];
        Ok((dx, grads))
    }

    fn layers(&self) -> Vec<(&'static str, &ConvLayer)> {
        vec![
            ("conv0", &self.conv0),
            ("mau1.conv_a", &self.mau1.conv_a),
            ("mau1.conv_b", &self.mau1.conv_b),
            ("conv_q", &self.conv_q),
            ("usu1.conv_a", &self.usu1.conv_a),
            ("usu1.conv_b", &self.usu1.conv_b),
            ("conv_out", &self.conv_out),
        ]
    }

    fn layers_mut(&mut self) -> Vec<&mut ConvLayer> {
        vec![
            &mut self.conv0,
            &mut self.mau1.conv_a,
            &mut self.mau1.conv_b,
            &mut self.conv_q,
            &mut self.usu1.conv_a,
            &mut self.usu1.conv_b,
            &mut self.conv_out,
        ]
    }

    fn dropout_masks(cache: &LightCache) -> Vec<DropMask> {
        vec![cache.drop0.clone(), cache.mau1.mask().clone(), cache.usu1.mask().clone()]
    }

    fn pattern(cache: &LightCache) -> u64 {
        let mut h = PatternHasher::default();
        h.positives(cache.p_pre.values());
        cache.mau1.fingerprint(&mut h);
        h.positives(cache.q_pre.values());
        cache.usu1.fingerprint(&mut h);
        h.finish()
    }

    fn flops(&self, h: usize, w: usize) -> FlopCount {
        let mut f = FlopCount::default();
        f.conv(&self.conv0, h, w);
        f.elementwise(64, h, w);
        f.mau(&self.mau1, h, w);
        f.conv(&self.conv_q, h / 2, w / 2);
        f.elementwise(16, h / 2, w / 2);
        f.usu(&self.usu1, 16, h, w);
        f.conv(&self.conv_out, h, w);
        f
    }
}
