use criterion::{criterion_group, criterion_main, Criterion};
use intent_bench::{network_for, prepared_dataset};
use intent_core::dataset::{standardize_fit, synth_generate};
use intent_core::model::{params_to_bytes, Mode};
use intent_core::numerics::FeatureMap;
use intent_core::online::StreamClassifier;
use intent_core::{SynthSpec, WindowConfig};

fn network(c: &mut Criterion) {
    let (data, _) = prepared_dataset(2, 4, 24);
    let params = network_for(&data);
    let batch: Vec<FeatureMap<f32>> = data.samples().iter().map(|s| s.trace.to_feature_map()).collect();
    let labels = data.labels();
    let mut group = c.benchmark_group("network, batch of 8, 24 x 2000");
    group.sample_size(10);
    group.bench_function("infer", |b| b.iter(|| params.forward(&batch, Mode::Infer).unwrap()));
    group.bench_function("loss and gradient", |b| {
        b.iter(|| params.loss_and_gradient(&batch, &labels).unwrap())
    });
    group.bench_function("serialize", |b| b.iter(|| params_to_bytes(&params)));
    group.finish();
}

fn preprocessing(c: &mut Criterion) {
    let spec = SynthSpec::default();
    let mut group = c.benchmark_group("dataset");
    group.sample_size(10);
    group.bench_function("synthesize 6 x 20", |b| b.iter(|| synth_generate(&spec).unwrap()));
    let raw = synth_generate(&spec).unwrap();
    group.bench_function("fit standardization", |b| b.iter(|| standardize_fit(&raw).unwrap()));
    group.finish();
}

fn streaming(c: &mut Criterion) {
    let (data, stats) = prepared_dataset(2, 3, 24);
    let cfg = WindowConfig::new(network_for(&data), stats).unwrap();
    let frames: Vec<Vec<f64>> = (0..100).map(|t| data.samples()[0].trace.frame(t)).collect();
    let mut group = c.benchmark_group("stream");
    group.sample_size(10);
    group.bench_function("one hop of 100 frames", |b| {
        b.iter(|| {
            let mut s = StreamClassifier::new(&cfg).unwrap();
            frames.iter().filter_map(|f| s.push_frame(f).unwrap()).count()
        })
    });
    group.finish();
}

criterion_group!(benches, network, preprocessing, streaming);
criterion_main!(benches);
