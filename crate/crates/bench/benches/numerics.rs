use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use intent_core::numerics::{
    categorical_cross_entropy_labels, conv1d_backward, conv1d_forward, maxpool1d_forward, softmax, FeatureMap,
    KernelBank,
};

fn ramp(channels: usize, frames: usize) -> FeatureMap<f32> {
    let data = (0..channels * frames).map(|i| ((i * 7919) % 1000) as f32 / 500.0 - 1.0).collect();
    FeatureMap::new(channels, frames, data).unwrap()
}

fn bank(out: usize, input: usize, width: usize) -> KernelBank<f32> {
    let weights = (0..out * input * width).map(|i| ((i * 31) % 17) as f32 / 17.0 - 0.5).collect();
    KernelBank::new(out, input, width, weights, vec![0.1; out]).unwrap()
}

fn conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv1d");
    // first and last stage of the standard network on a 24 x 2000 input
    for (label, in_ch, out_ch, frames) in [("24x2000->16", 24, 16, 2000), ("64x121->64", 64, 64, 121)] {
        let x = ramp(in_ch, frames);
        let k = bank(out_ch, in_ch, 5);
        let y = conv1d_forward(&x, &k).unwrap();
        group.bench_with_input(BenchmarkId::new("forward", label), &x, |b, x| {
            b.iter(|| conv1d_forward(x, &k).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("backward", label), &x, |b, x| {
            b.iter(|| conv1d_backward(x, &k, &y).unwrap())
        });
    }
    group.finish();
}

fn pool(c: &mut Criterion) {
    let x = ramp(16, 1996);
    c.bench_function("maxpool1d 16x1996", |b| b.iter(|| maxpool1d_forward(&x, 2, 2).unwrap()));
}

fn loss(c: &mut Criterion) {
    let logits: Vec<Vec<f32>> = (0..32).map(|i| (0..6).map(|k| ((i + k) % 5) as f32).collect()).collect();
    let labels: Vec<usize> = (0..32).map(|i| i % 6).collect();
    c.bench_function("softmax + cce, 32 x 6", |b| {
        b.iter(|| {
            let probs: Vec<Vec<f32>> = logits.iter().map(|l| softmax(l).unwrap()).collect();
            categorical_cross_entropy_labels(&probs, &labels).unwrap()
        })
    });
}

criterion_group!(benches, conv, pool, loss);
criterion_main!(benches);
