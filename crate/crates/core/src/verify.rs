//! Randomised finite-difference checks of every layer adjoint and of both
//! networks, shared by the test suites and the acceptance runner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::models::{network_gradient_check, sample_dropout_masks, MaunetLightModel, MaunetModel, Network};
use crate::nn::{
    apply_mask, average_pair, average_pair_backward, avgpool2, avgpool2_backward, concat_channels, conv2d_backward,
    conv2d_forward, dropout_backward, gradient_check_steps, maxpool2, maxpool2_backward, mse_loss, relu, relu_backward,
    sample_mask, split_channels, upsample_nearest2, upsample_nearest2_backward, ConvLayer, DropoutSpec,
    GradCheckReport, PatternHasher, Probe, Tensor4, STEP_LADDER,
};

/// Worst-case result of one component over all sampled shapes.
#[derive(Debug, Clone)]
pub struct CheckSummary {
    pub name: &'static str,
    pub shapes: usize,
    pub report: GradCheckReport,
}

impl CheckSummary {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.report.passed(tolerance)
    }
}

fn random_tensor(dims: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4 {
    let n = dims.iter().product();
    Tensor4::from_vec(dims, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("dims match")
}

fn dot(a: &Tensor4, b: &Tensor4) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum()
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn tensor(dims: [usize; 4], v: &[f64]) -> Tensor4 {
    Tensor4::from_vec(dims, v.to_vec()).expect("dims match")
}

/// (n, c, h, w) with h and w even.
fn even_dims(rng: &mut ChaCha8Rng) -> [usize; 4] {
    [rng.gen_range(1..=2), rng.gen_range(1..=4), 2 * rng.gen_range(1..=4), 2 * rng.gen_range(1..=4)]
}

fn any_dims(rng: &mut ChaCha8Rng) -> [usize; 4] {
    [rng.gen_range(1..=2), rng.gen_range(1..=4), rng.gen_range(1..=7), rng.gen_range(1..=7)]
}

fn check_conv(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let (cin, cout) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
    let [n, _, h, w] = any_dims(rng);
    let mut layer = ConvLayer::kaiming(cin, cout, rng);
    for b in layer.bias.values_mut() {
        *b = rng.gen_range(-0.5..0.5);
    }
    let x = random_tensor([n, cin, h, w], rng);
    let wy = random_tensor([n, cout, h, w], rng);
    let g = conv2d_backward(&x, &layer, &wy)?;

    let mut report = gradient_check_steps(
        |xv| Probe::smooth(dot(&conv2d_forward(&tensor(x.dims(), xv), &layer).expect("shape"), &wy)),
        x.values(),
        g.dx.values(),
        &all(x.len()),
        &STEP_LADDER,
    );
    let mut probe = layer.clone();
    report.merge(&gradient_check_steps(
        |wv| {
            probe.weight.values_mut().copy_from_slice(wv);
            Probe::smooth(dot(&conv2d_forward(&x, &probe).expect("shape"), &wy))
        },
        layer.weight.values(),
        g.dweight.values(),
        &all(layer.weight.len()),
        &STEP_LADDER,
    ));
    let mut probe = layer.clone();
    report.merge(&gradient_check_steps(
        |bv| {
            probe.bias.values_mut().copy_from_slice(bv);
            Probe::smooth(dot(&conv2d_forward(&x, &probe).expect("shape"), &wy))
        },
        layer.bias.values(),
        g.dbias.values(),
        &all(layer.bias.len()),
        &STEP_LADDER,
    ));
    Ok(report)
}

/// Checks `dx` of a single-input layer under the objective `Σ wy ⊙ f(x)`.
fn check_unary(
    x: &Tensor4,
    f: impl Fn(&Tensor4) -> (Tensor4, u64),
    backward: impl Fn(&Tensor4) -> Result<Tensor4>,
    rng: &mut ChaCha8Rng,
) -> Result<GradCheckReport> {
    let (y, _) = f(x);
    let wy = random_tensor(y.dims(), rng);
    let dx = backward(&wy)?;
    Ok(gradient_check_steps(
        |xv| {
            let (y, pattern) = f(&tensor(x.dims(), xv));
            Probe { value: dot(&y, &wy), pattern }
        },
        x.values(),
        dx.values(),
        &all(x.len()),
        &STEP_LADDER,
    ))
}

fn check_relu(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let x = random_tensor(any_dims(rng), rng);
    let f = |t: &Tensor4| {
        let mut h = PatternHasher::default();
        h.positives(t.values());
        (relu(t), h.finish())
    };
    check_unary(&x, f, |wy| relu_backward(&x, wy), rng)
}

fn check_maxpool(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let x = random_tensor(even_dims(rng), rng);
    let (_, argmax) = maxpool2(&x)?;
    let f = |t: &Tensor4| {
        let (y, idx) = maxpool2(t).expect("even dims");
        let mut h = PatternHasher::default();
        h.indices(&idx);
        (y, h.finish())
    };
    check_unary(&x, f, |wy| maxpool2_backward(&argmax, x.dims(), wy), rng)
}

fn check_avgpool(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let x = random_tensor(even_dims(rng), rng);
    check_unary(&x, |t| (avgpool2(t).expect("even dims"), 0), |wy| avgpool2_backward(x.dims(), wy), rng)
}

fn check_upsample(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let x = random_tensor(any_dims(rng), rng);
    check_unary(&x, |t| (upsample_nearest2(t), 0), upsample_nearest2_backward, rng)
}

fn check_dropout(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let x = random_tensor(any_dims(rng), rng);
    let mask = sample_mask(x.len(), DropoutSpec::new(rng.gen_range(0.1..0.6))?, rng);
    check_unary(&x, |t| (apply_mask(t, &mask).expect("len"), 0), |wy| dropout_backward(&mask, wy), rng)
}

/// Concatenation and its inverse checked together: the joint input is the
/// flat concatenation of both parts.
fn check_concat_split(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let [n, ca, h, w] = any_dims(rng);
    let cb = rng.gen_range(1..=3);
    let a = random_tensor([n, ca, h, w], rng);
    let b = random_tensor([n, cb, h, w], rng);
    let joined = concat_channels(&[&a, &b])?;
    let wy = random_tensor(joined.dims(), rng);
    // concat's adjoint is a split of the upstream gradient
    let parts = split_channels(&wy, &[ca, cb])?;
    let analytic: Vec<f64> = parts.iter().flat_map(|p| p.values().to_vec()).collect();
    let x: Vec<f64> = a.values().iter().chain(b.values()).copied().collect();
    let mut report = gradient_check_steps(
        |v| {
            let (va, vb) = v.split_at(a.len());
            Probe::smooth(dot(&concat_channels(&[&tensor(a.dims(), va), &tensor(b.dims(), vb)]).expect("dims"), &wy))
        },
        &x,
        &analytic,
        &all(x.len()),
        &STEP_LADDER,
    );
    // split's adjoint is a concatenation of the part gradients
    let wa = random_tensor(a.dims(), rng);
    let wb = random_tensor(b.dims(), rng);
    let dj = concat_channels(&[&wa, &wb])?;
    report.merge(&gradient_check_steps(
        |v| {
            let p = split_channels(&tensor(joined.dims(), v), &[ca, cb]).expect("sizes");
            Probe::smooth(dot(&p[0], &wa) + dot(&p[1], &wb))
        },
        joined.values(),
        dj.values(),
        &all(joined.len()),
        &STEP_LADDER,
    ));
    Ok(report)
}

fn check_average_pair(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let dims = any_dims(rng);
    let a = random_tensor(dims, rng);
    let b = random_tensor(dims, rng);
    let wy = random_tensor(dims, rng);
    let half = average_pair_backward(&wy);
    let analytic: Vec<f64> = half.values().iter().chain(half.values()).copied().collect();
    let x: Vec<f64> = a.values().iter().chain(b.values()).copied().collect();
    Ok(gradient_check_steps(
        |v| {
            let (va, vb) = v.split_at(a.len());
            Probe::smooth(dot(&average_pair(&tensor(dims, va), &tensor(dims, vb)).expect("dims"), &wy))
        },
        &x,
        &analytic,
        &all(x.len()),
        &STEP_LADDER,
    ))
}

fn check_loss(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let dims = any_dims(rng);
    let pred = random_tensor(dims, rng);
    let target = random_tensor(dims, rng);
    let mut mask: Vec<bool> = (0..dims[2] * dims[3]).map(|_| rng.gen_bool(0.7)).collect();
    mask[0] = true;
    let (_, grad) = mse_loss(&pred, &target, &mask)?;
    Ok(gradient_check_steps(
        |v| Probe::smooth(mse_loss(&tensor(dims, v), &target, &mask).expect("dims").0),
        pred.values(),
        grad.values(),
        &all(pred.len()),
        &STEP_LADDER,
    ))
}

type LayerCheck = fn(&mut ChaCha8Rng) -> Result<GradCheckReport>;

const LAYERS: [(&str, LayerCheck); 10] = [
    ("conv2d", check_conv),
    ("relu", check_relu),
    ("maxpool2", check_maxpool),
    ("avgpool2", check_avgpool),
    ("upsample_nearest2", check_upsample),
    ("dropout", check_dropout),
    ("concat_split", check_concat_split),
    ("average_pair", check_average_pair),
    ("mse_loss", check_loss),
    ("relu_after_conv", check_relu_after_conv),
];

/// ReLU fed by a convolution, so kinks are hit at realistic pre-activations.
fn check_relu_after_conv(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let [n, c, h, w] = any_dims(rng);
    let layer = ConvLayer::kaiming(c, 2, rng);
    let x = random_tensor([n, c, h, w], rng);
    let f = |t: &Tensor4| {
        let z = conv2d_forward(t, &layer).expect("channels");
        let mut hsh = PatternHasher::default();
        hsh.positives(z.values());
        (relu(&z), hsh.finish())
    };
    let z = conv2d_forward(&x, &layer)?;
    check_unary(&x, f, |wy| Ok(conv2d_backward(&x, &layer, &relu_backward(&z, wy)?)?.dx), rng)
}

/// Every layer adjoint on `n_shapes` random shapes each.
pub fn layer_suite(n_shapes: usize, seed: u64) -> Result<Vec<CheckSummary>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LAYERS
        .iter()
        .map(|&(name, check)| {
            let mut report = GradCheckReport::default();
            for _ in 0..n_shapes {
                report.merge(&check(&mut rng)?);
            }
            Ok(CheckSummary { name, shapes: n_shapes, report })
        })
        .collect()
}

fn network_case<N: Network>(
    model: &N,
    rng: &mut ChaCha8Rng,
    multiple: usize,
    per_layer: usize,
) -> Result<GradCheckReport> {
    let dims = [rng.gen_range(1..=2), 1, multiple * rng.gen_range(1..=3), multiple * rng.gen_range(1..=3)];
    let x = random_tensor(dims, rng).map(|v| v + 0.5);
    let masks = sample_dropout_masks(model, &x, rng.gen())?;
    network_gradient_check(model, &x, &masks, per_layer, true, rng.gen())
}

/// Both networks with dropout frozen to one sampled training-mode pattern,
/// `n_shapes` random input shapes each and a fresh initialisation per shape.
pub fn network_suite(n_shapes: usize, per_layer: usize, seed: u64) -> Result<Vec<CheckSummary>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut full = GradCheckReport::default();
    let mut light = GradCheckReport::default();
    for _ in 0..n_shapes {
        let m = MaunetModel::init_seeded(rng.gen());
        full.merge(&network_case(&m, &mut rng, 4, per_layer)?);
        let l = MaunetLightModel::init_seeded(rng.gen());
        light.merge(&network_case(&l, &mut rng, 2, per_layer)?);
    }
    Ok(vec![
        CheckSummary { name: "maunet", shapes: n_shapes, report: full },
        CheckSummary { name: "maunet-light", shapes: n_shapes, report: light },
    ])
}
