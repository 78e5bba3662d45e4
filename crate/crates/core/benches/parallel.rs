use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use presched::datagen::{
    european_dataset, european_fixture, sample_dataset, three_bus_fixture, EuropeanDataConfig,
    ThreeBusVariant, THREE_BUS_LOAD_NODE,
};
use presched::evaluate::forecast_prescriber;
use presched::exec::with_sequential;
use presched::{evaluate_method, train_partitioned, TrainConfig};

fn balancing(c: &mut Criterion) {
    let system = european_fixture(0);
    let data = european_dataset(
        &system,
        &EuropeanDataConfig {
            n: 200,
            ..Default::default()
        },
    )
    .unwrap();
    let mut group = c.benchmark_group("evaluate_europe_200");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("mode", "parallel"), |b| {
        b.iter(|| evaluate_method(&system, forecast_prescriber(&system), &data))
    });
    group.bench_function(BenchmarkId::new("mode", "sequential"), |b| {
        b.iter(|| with_sequential(|| evaluate_method(&system, forecast_prescriber(&system), &data)))
    });
    group.finish();
}

fn training(c: &mut Criterion) {
    let (system, mut config) = three_bus_fixture(ThreeBusVariant::Base);
    config.n = 200;
    let data = sample_dataset(&system, THREE_BUS_LOAD_NODE, &config).unwrap();
    let train = TrainConfig::default();
    let mut group = c.benchmark_group("train_three_bus_k4");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("mode", "parallel"), |b| {
        b.iter(|| train_partitioned(&system, &data, 4, 20.0, &train).unwrap())
    });
    group.bench_function(BenchmarkId::new("mode", "sequential"), |b| {
        b.iter(|| with_sequential(|| train_partitioned(&system, &data, 4, 20.0, &train).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, balancing, training);
criterion_main!(benches);
