//! MAU/USU building blocks and the two network assemblies.
//!
//! Both networks map a single-channel `(n,1,h,w)` field to a field of the
//! same shape. Each non-final convolution is followed by a ReLU; the output
//! convolution is linear.

mod accounting;
mod light;
mod maunet;
mod units;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use accounting::{conv_flops, count_flops, count_params, FlopCount, ParamCount};
pub use light::{LightCache, MaunetLightModel};
pub use maunet::{MaunetCache, MaunetModel};
pub use units::{LayerGrad, MauCache, MauOutput, MauUnit, UsuCache, UsuUnit};

use crate::error::{invalid, shape_err, Error, Result};
use crate::nn::{gradient_check_steps, ConvLayer, DropMask, DropoutCtx, GradCheckReport, ParamStore, Probe, Tensor4, STEP_LADDER};

/// Named intermediate tensors of one forward pass, in evaluation order.
pub type Trace = Vec<(&'static str, Tensor4)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    Maunet,
    MaunetLight,
}

impl Architecture {
    pub const ALL: [Architecture; 2] = [Architecture::Maunet, Architecture::MaunetLight];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Maunet => "maunet",
            Architecture::MaunetLight => "maunet-light",
        }
    }

    /// Input height and width must be multiples of this.
    pub fn spatial_multiple(self) -> usize {
        match self {
            Architecture::Maunet => 4,
            Architecture::MaunetLight => 2,
        }
    }

    /// Infers the architecture from checkpoint entry names.
    pub fn detect(store: &ParamStore) -> Result<Self> {
        let has = |n: &str| store.get(n).is_some();
        match (has("mau1.conv_a.weight"), has("mau2.conv_a.weight")) {
            (true, true) => Ok(Architecture::Maunet),
            (true, false) => Ok(Architecture::MaunetLight),
            _ => Err(Error::Format("checkpoint does not describe a MAUNet variant".into())),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maunet" | "full" => Ok(Architecture::Maunet),
            "maunet-light" | "maunet_light" | "light" => Ok(Architecture::MaunetLight),
            other => invalid(format!("unknown architecture `{other}` (expected maunet or maunet-light)")),
        }
    }
}

pub trait Network: Clone + Send + Sync + fmt::Debug {
    type Cache: Send;

    const ARCHITECTURE: Architecture;

    /// Kaiming-uniform kernels, zero biases.
    fn init<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn forward(&self, x: &Tensor4, drop: &mut DropoutCtx) -> Result<(Tensor4, Self::Cache)>;

    /// Returns the input gradient and one [`LayerGrad`] per entry of [`Network::layers`].
    fn backward(&self, cache: &Self::Cache, dy: &Tensor4) -> Result<(Tensor4, Vec<LayerGrad>)>;

    /// Eval-mode forward that keeps every named intermediate.
    fn trace(&self, x: &Tensor4) -> Result<Trace>;

    fn layers(&self) -> Vec<(&'static str, &ConvLayer)>;

    fn layers_mut(&mut self) -> Vec<&mut ConvLayer>;

    /// Masks drawn at each dropout site, for replay.
    fn dropout_masks(cache: &Self::Cache) -> Vec<DropMask>;

    /// Fingerprint of ReLU signs and pooling choices.
    fn pattern(cache: &Self::Cache) -> u64;

    fn flops(&self, h: usize, w: usize) -> FlopCount;

    fn init_seeded(seed: u64) -> Self {
        Self::init(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn predict(&self, x: &Tensor4) -> Result<Tensor4> {
        Ok(self.forward(x, &mut DropoutCtx::eval())?.0)
    }

    fn to_params(&self) -> ParamStore {
        let mut store = ParamStore::new();
        for (name, layer) in self.layers() {
            store.push(format!("{name}.weight"), layer.weight.clone()).expect("layer names are unique");
            store.push(format!("{name}.bias"), layer.bias.clone()).expect("layer names are unique");
        }
        store
    }

    /// Copies weights from a store. Extra entries are ignored; missing or
    /// misshapen ones are errors.
    fn load_params(&mut self, store: &ParamStore) -> Result<()> {
        let names: Vec<&'static str> = self.layers().iter().map(|(n, _)| *n).collect();
        for (name, layer) in names.into_iter().zip(self.layers_mut()) {
            for (suffix, target) in [("weight", &mut layer.weight), ("bias", &mut layer.bias)] {
                let key = format!("{name}.{suffix}");
                let src = store.get(&key).ok_or_else(|| Error::Format(format!("checkpoint lacks `{key}`")))?;
                if src.dims() != target.dims() {
                    return shape_err(format!("`{key}` has dims {:?}, expected {:?}", src.dims(), target.dims()));
                }
                *target = src.clone();
            }
        }
        Ok(())
    }

    fn from_params(store: &ParamStore) -> Result<Self> {
        let mut model = Self::init_seeded(0);
        model.load_params(store)?;
        Ok(model)
    }

    /// All parameters as one vector, layer by layer, weight before bias.
    fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (_, l) in self.layers() {
            out.extend_from_slice(l.weight.values());
            out.extend_from_slice(l.bias.values());
        }
        out
    }

    fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let expect: usize = self.layers().iter().map(|(_, l)| l.parameter_count()).sum();
        if flat.len() != expect {
            return shape_err(format!("{} flat parameters for a model with {expect}", flat.len()));
        }
        let mut pos = 0;
        for l in self.layers_mut() {
            for t in [&mut l.weight, &mut l.bias] {
                let n = t.len();
                t.values_mut().copy_from_slice(&flat[pos..pos + n]);
                pos += n;
            }
        }
        Ok(())
    }
}

pub fn flatten_grads(grads: &[LayerGrad]) -> Vec<f64> {
    let mut out = Vec::new();
    for g in grads {
        out.extend_from_slice(g.dweight.values());
        out.extend_from_slice(g.dbias.values());
    }
    out
}

/// Either network, for code that picks the architecture at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Maunet(MaunetModel),
    Light(MaunetLightModel),
}

impl AnyModel {
    pub fn init_seeded(arch: Architecture, seed: u64) -> Self {
        match arch {
            Architecture::Maunet => AnyModel::Maunet(MaunetModel::init_seeded(seed)),
            Architecture::MaunetLight => AnyModel::Light(MaunetLightModel::init_seeded(seed)),
        }
    }

    pub fn from_params(store: &ParamStore) -> Result<Self> {
        Ok(match Architecture::detect(store)? {
            Architecture::Maunet => AnyModel::Maunet(MaunetModel::from_params(store)?),
            Architecture::MaunetLight => AnyModel::Light(MaunetLightModel::from_params(store)?),
        })
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            AnyModel::Maunet(_) => Architecture::Maunet,
            AnyModel::Light(_) => Architecture::MaunetLight,
        }
    }

    pub fn predict(&self, x: &Tensor4) -> Result<Tensor4> {
        match self {
            AnyModel::Maunet(m) => m.predict(x),
            AnyModel::Light(m) => m.predict(x),
        }
    }

    pub fn to_params(&self) -> ParamStore {
        match self {
            AnyModel::Maunet(m) => m.to_params(),
            AnyModel::Light(m) => m.to_params(),
        }
    }

    pub fn param_count(&self) -> ParamCount {
        match self {
            AnyModel::Maunet(m) => count_params(m),
            AnyModel::Light(m) => count_params(m),
        }
    }

    pub fn flops(&self, h: usize, w: usize) -> FlopCount {
        match self {
            AnyModel::Maunet(m) => m.flops(h, w),
            AnyModel::Light(m) => m.flops(h, w),
        }
    }
}

/// Gradient check of a whole network under the linear loss `Σ weights ⊙ y`,
/// with dropout frozen to `masks` (an empty slice means evaluation mode). Parameter coordinates are sampled at random,
/// `per_layer` from each layer; every input coordinate is checked when
/// `check_input` is set.
pub fn network_gradient_check<N: Network>(
    model: &N,
    x: &Tensor4,
    masks: &[DropMask],
    per_layer: usize,
    check_input: bool,
    seed: u64,
) -> Result<GradCheckReport> {
    let ctx = || if masks.is_empty() { DropoutCtx::eval() } else { DropoutCtx::replay(masks) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (y, cache) = model.forward(x, &mut ctx())?;
    let weights = Tensor4::from_vec(y.dims(), (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let (dx, grads) = model.backward(&cache, &weights)?;
    let objective = |y: &Tensor4| y.values().iter().zip(weights.values()).map(|(a, b)| a * b).sum::<f64>();

    let flat = model.flat_params();
    let analytic = flatten_grads(&grads);
    let mut coords = Vec::new();
    let mut start = 0;
    for (_, l) in model.layers() {
        let n = l.parameter_count();
        for _ in 0..per_layer.min(n) {
            coords.push(start + rng.gen_range(0..n));
        }
        // The bias block sits at the end of each layer's slice.
        coords.push(start + n - 1);
        start += n;
    }
    let mut probe_model = model.clone();
    let mut report = gradient_check_steps(
        |theta| {
            probe_model.set_flat_params(theta).expect("same length");
            match probe_model.forward(x, &mut ctx()) {
                Ok((y, c)) => Probe { value: objective(&y), pattern: N::pattern(&c) },
                Err(_) => Probe { value: f64::NAN, pattern: u64::MAX },
            }
        },
        &flat,
        &analytic,
        &coords,
        &STEP_LADDER,
    );
    if check_input {
        let all: Vec<usize> = (0..x.len()).collect();
        let r = gradient_check_steps(
            |xv| {
                let xt = Tensor4::from_vec(x.dims(), xv.to_vec()).expect("same dims");
                match model.forward(&xt, &mut ctx()) {
                    Ok((y, c)) => Probe { value: objective(&y), pattern: N::pattern(&c) },
                    Err(_) => Probe { value: f64::NAN, pattern: u64::MAX },
                }
            },
            x.values(),
            dx.values(),
            &all,
            &STEP_LADDER,
        );
        report.merge(&r);
    }
    Ok(report)
}

/// Masks from one training-mode forward pass, for [`network_gradient_check`].
pub fn sample_dropout_masks<N: Network>(model: &N, x: &Tensor4, seed: u64) -> Result<Vec<DropMask>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, cache) = model.forward(x, &mut DropoutCtx::train(&mut rng))?;
    Ok(N::dropout_masks(&cache))
}
