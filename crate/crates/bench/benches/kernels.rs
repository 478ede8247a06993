use criterion::{black_box, criterion_group, criterion_main, Criterion};
use maunet_bench::{pattern_tensor, synthetic_pair};
use maunet_core::baselines::fit_qm;
use maunet_core::evaluation::{kl_gridwise, pooled_metrics, DEFAULT_KL_BINS, DEFAULT_KL_EPSILON};
use maunet_core::nn::{conv2d_backward, conv2d_forward, ConvLayer, DropoutCtx};
use maunet_core::{MaunetLightModel, MaunetModel, Network};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let layer = ConvLayer::kaiming(64, 32, &mut rng);
    let x = pattern_tensor([8, 64, 64, 64]);
    let dy = pattern_tensor([8, 32, 64, 64]);
    c.bench_function("conv3x3 64->32 forward, batch 8 at 64x64", |b| b.iter(|| conv2d_forward(black_box(&x), &layer)));
    c.bench_function("conv3x3 64->32 backward, batch 8 at 64x64", |b| {
        b.iter(|| conv2d_backward(black_box(&x), &layer, &dy))
    });
}

fn models(c: &mut Criterion) {
    let x = pattern_tensor([8, 1, 64, 64]).map(|v| v + 1.0);
    let full = MaunetModel::init_seeded(1);
    let light = MaunetLightModel::init_seeded(1);
    c.bench_function("maunet forward+backward, batch 8", |b| {
        b.iter(|| {
            let (y, cache) = full.forward(black_box(&x), &mut DropoutCtx::eval()).unwrap();
            full.backward(&cache, &y).unwrap()
        })
    });
    c.bench_function("maunet-light forward+backward, batch 8", |b| {
        b.iter(|| {
            let (y, cache) = light.forward(black_box(&x), &mut DropoutCtx::eval()).unwrap();
            light.backward(&cache, &y).unwrap()
        })
    });
}

fn metrics(c: &mut Criterion) {
    let (truth, biased) = synthetic_pair(64, 100);
    c.bench_function("pooled metrics, 100 days at 64x64", |b| b.iter(|| pooled_metrics(black_box(&biased), &truth, 100.0)));
    c.bench_function("gridwise KL, 100 days at 64x64", |b| {
        b.iter(|| kl_gridwise(black_box(&biased), &truth, DEFAULT_KL_BINS, DEFAULT_KL_EPSILON))
    });
    c.bench_function("QM fit, 100 days at 64x64", |b| b.iter(|| fit_qm(black_box(&biased), &truth, 100)));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = conv, models, metrics
}
criterion_main!(benches);
