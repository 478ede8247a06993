use rand::Rng;

use super::accounting::FlopCount;
use super::units::{LayerGrad, MauCache, MauUnit, UsuCache, UsuUnit};
use super::{Architecture, Network, Trace};
use crate::error::{shape_err, Result};
use crate::nn::{
    conv2d_backward, conv2d_forward, dropout_backward, relu, relu_backward, ConvLayer, DropMask, DropoutCtx, DropoutSpec,
    PatternHasher, Tensor4,
};

pub(crate) const MAU_DROPOUT: f64 = 0.20;
pub(crate) const USU_DROPOUT: f64 = 0.10;
pub(crate) const INPUT_DROPOUT: f64 = 0.30;

/// Two MAUs (32 and 16 channels) down, a 16-channel bottleneck conv, two USUs
/// (32 and 16 channels) up, and a single-map output conv. The raw input
/// re-enters at the last USU as a long skip.
#[derive(Debug, Clone, PartialEq)]
pub struct MaunetModel {
    pub conv0: ConvLayer,
    pub drop0: DropoutSpec,
    pub mau1: MauUnit,
    pub mau2: MauUnit,
    pub conv_q: ConvLayer,
    pub usu1: UsuUnit,
    pub usu2: UsuUnit,
    pub conv_out: ConvLayer,
}

#[derive(Debug, Clone)]
pub struct MaunetCache {
    x: Tensor4,
    p_pre: Tensor4,
    drop0: DropMask,
    mau1: MauCache,
    mau2: MauCache,
    f2: Tensor4,
    q_pre: Tensor4,
    usu1: UsuCache,
    usu2: UsuCache,
    u2: Tensor4,
}

impl MaunetModel {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mau = DropoutSpec { rate: MAU_DROPOUT };
        let usu = DropoutSpec { rate: USU_DROPOUT };
        MaunetModel {
            conv0: ConvLayer::kaiming(1, 64, rng),
            drop0: DropoutSpec { rate: INPUT_DROPOUT },
            mau1: MauUnit::new(64, 32, mau, rng),
            mau2: MauUnit::new(32, 16, mau, rng),
            conv_q: ConvLayer::kaiming(16, 16, rng),
            usu1: UsuUnit::new(16 + 16 + 32, 32, usu, rng),
            usu2: UsuUnit::new(32 + 32 + 1, 16, usu, rng),
            conv_out: ConvLayer::kaiming(16, 1, rng),
        }
    }

    fn run(&self, x: &Tensor4, drop: &mut DropoutCtx, mut trace: Option<&mut Trace>) -> Result<(Tensor4, MaunetCache)> {
        if x.c() != 1 || x.h() % 4 != 0 || x.w() % 4 != 0 || x.h() == 0 || x.w() == 0 {
            return shape_err(format!("MAUNet needs (n,1,h,w) with h, w divisible by 4, got {:?}", x.dims()));
        }
        let mut record = |name: &'static str, t: &Tensor4| {
            if let Some(tr) = trace.as_deref_mut() {
                tr.push((name, t.clone()));
            }
        };
        record("X", x);
        let p_pre = conv2d_forward(x, &self.conv0)?;
        let (p, drop0) = drop.apply(&relu(&p_pre), self.drop0)?;
        record("P", &p);
        let (o1, mau1) = self.mau1.forward(&p, drop)?;
        record("f1", &o1.f_out);
        record("D1", &o1.d_skip);
        record("M1", &o1.m_skip);
        let (o2, mau2) = self.mau2.forward(&o1.f_out, drop)?;
        record("f2", &o2.f_out);
        record("D2", &o2.d_skip);
        let q_pre = conv2d_forward(&o2.f_out, &self.conv_q)?;
        let q = relu(&q_pre);
        record("Q", &q);
        let (u1, usu1) = self.usu1.forward(&[&q, &o2.d_skip, &o1.m_skip], drop)?;
        record("U1", &u1);
        let (u2, usu2) = self.usu2.forward(&[&u1, &o1.d_skip, x], drop)?;
        record("U2", &u2);
        let y = conv2d_forward(&u2, &self.conv_out)?;
        record("Y", &y);
        let cache = MaunetCache { x: x.clone(), p_pre, drop0, mau1, mau2, f2: o2.f_out, q_pre, usu1, usu2, u2 };
        Ok((y, cache))
    }
}

impl Network for MaunetModel {
    type Cache = MaunetCache;

    const ARCHITECTURE: Architecture = Architecture::Maunet;

    fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        MaunetModel::new(rng)
    }

    fn forward(&self, x: &Tensor4, drop: &mut DropoutCtx) -> Result<(Tensor4, MaunetCache)> {
        self.run(x, drop, None)
    }

    fn trace(&self, x: &Tensor4) -> Result<Trace> {
        let mut t = Vec::new();
        self.run(x, &mut DropoutCtx::eval(), Some(&mut t))?;
        Ok(t)
    }

    fn backward(&self, cache: &MaunetCache, dy: &Tensor4) -> Result<(Tensor4, Vec<LayerGrad>)> {
        let g_out = conv2d_backward(&cache.u2, &self.conv_out, dy)?;
        let (d_usu2, g_usu2) = self.usu2.backward(&cache.usu2, &g_out.dx)?;
        let [d_u1, d_d1, d_x_skip]: [Tensor4; 3] = d_usu2.try_into().expect("three USU2 inputs");
        let (d_usu1, g_usu1) = self.usu1.backward(&cache.usu1, &d_u1)?;
        let [d_q, d_d2, d_m1]: [Tensor4; 3] = d_usu1.try_into().expect("three USU1 inputs");
        let d_q_pre = relu_backward(&cache.q_pre, &d_q)?;
        let g_q = conv2d_backward(&cache.f2, &self.conv_q, &d_q_pre)?;
        let (d_f1, g_mau2) = self.mau2.backward(&cache.mau2, &g_q.dx, Some(&d_d2), None)?;
        let (d_p, g_mau1) = self.mau1.backward(&cache.mau1, &d_f1, Some(&d_d1), Some(&d_m1))?;
        let d_p_pre = relu_backward(&cache.p_pre, &dropout_backward(&cache.drop0, &d_p)?)?;
        let g0 = conv2d_backward(&cache.x, &self.conv0, &d_p_pre)?;
        let mut dx = g0.dx;
        dx.add_assign(&d_x_skip)?;
        let [m1a, m1b] = g_mau1;
        let [m2a, m2b] = g_mau2;
        let [u1a, u1b] = g_usu1;
        let [u2a, u2b] = g_usu2;
        let grads = vec![
            LayerGrad { dweight: g0.dweight, dbias: g0.dbias },
            m1a,
            m1b,
            m2a,
            m2b,
            LayerGrad { dweight: g_q.dweight, dbias: g_q.dbias },
            u1a,
            u1b,
            u2a,
            u2b,
            LayerGrad { dweight: g_out.dweight, dbias: g_out.dbias },
        ];
        Ok((dx, grads))
    }

    fn layers(&self) -> Vec<(&'static str, &ConvLayer)> {
        vec![
            ("conv0", &self.conv0),
            ("mau1.conv_a", &self.mau1.conv_a),
            ("mau1.conv_b", &self.mau1.conv_b),
            ("mau2.conv_a", &self.mau2.conv_a),
            ("mau2.conv_b", &self.mau2.conv_b),
            ("conv_q", &self.conv_q),
            ("usu1.conv_a", &self.usu1.conv_a),
            ("usu1.conv_b", &self.usu1.conv_b),
            ("usu2.conv_a", &self.usu2.conv_a),
            ("usu2.conv_b", &self.usu2.conv_b),
            ("conv_out", &self.conv_out),
        ]
    }

    fn layers_mut(&mut self) -> Vec<&mut ConvLayer> {
        vec![
            &mut self.conv0,
            &mut self.mau1.conv_a,
            &mut self.mau1.conv_b,
            &mut self.mau2.conv_a,
            &mut self.mau2.conv_b,
            &mut self.conv_q,
            &mut self.usu1.conv_a,
            &mut self.usu1.conv_b,
            &mut self.usu2.conv_a,
            &mut self.usu2.conv_b,
            &mut self.conv_out,
        ]
    }

    fn dropout_masks(cache: &MaunetCache) -> Vec<DropMask> {
        vec![
            cache.drop0.clone(),
            cache.mau1.mask().clone(),
            cache.mau2.mask().clone(),
            cache.usu1.mask().clone(),
            cache.usu2.mask().clone(),
        ]
    }

    fn pattern(cache: &MaunetCache) -> u64 {
        let mut h = PatternHasher::default();
        h.positives(cache.p_pre.values());
        cache.mau1.fingerprint(&mut h);
        cache.mau2.fingerprint(&mut h);
        h.positives(cache.q_pre.values());
        cache.usu1.fingerprint(&mut h);
        cache.usu2.fingerprint(&mut h);
        h.finish()
    }

    fn flops(&self, h: usize, w: usize) -> FlopCount {
        let mut f = FlopCount::default();
        f.conv(&self.conv0, h, w);
        f.elementwise(64, h, w);
        f.mau(&self.mau1, h, w);
        f.mau(&self.mau2, h / 2, w / 2);
        f.conv(&self.conv_q, h / 4, w / 4);
        f.elementwise(16, h / 4, w / 4);
        f.usu(&self.usu1, 16, h / 2, w / 2);
        f.usu(&self.usu2, 32, h, w);
        f.conv(&self.conv_out, h, w);
        f
    }
}
