use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use splatlift_bench::fixture;
use splatlift_core::rasterizer::{self, ProjectionParams, RenderOptions};
use splatlift_core::uplift::{self, UpliftConfig};

fn bench_uplift(c: &mut Criterion) {
    let config = UpliftConfig::default();
    let mut group = c.benchmark_group("uplift");
    group.sample_size(20);
    for &total in &[10_000usize, 100_000, 1_000_000] {
        let fx = fixture(total);
        group.throughput(Throughput::Elements(total as u64));
        group.bench_with_input(BenchmarkId::new("uplift_mask", total), &fx, |b, fx| {
            b.iter(|| uplift::uplift_mask(&fx.scene, &fx.front, &fx.mask, &config).unwrap())
        });
    }
    group.finish();
}

fn bench_stages(c: &mut Criterion) {
    let config = UpliftConfig::default();
    let fx = fixture(100_000);
    let gate = uplift::project_and_gate(&fx.scene, &fx.front, &fx.mask, &config).unwrap();
    let (accepted, _) = uplift::zbuffer_select(&gate.gated, &fx.mask, &config).unwrap();

    let mut group = c.benchmark_group("stages_100k");
    group.sample_size(20);
    group.bench_function("project_and_gate", |b| {
        b.iter(|| uplift::project_and_gate(&fx.scene, &fx.front, &fx.mask, &config).unwrap())
    });
    group.bench_function("zbuffer_select", |b| {
        b.iter(|| uplift::zbuffer_select(&gate.gated, &fx.mask, &config).unwrap())
    });
    group.bench_function("statistical_filter", |b| {
        b.iter(|| uplift::statistical_filter(&gate.gated, &accepted, config.sigma_k))
    });
    group.finish();
}

fn bench_raster(c: &mut Criterion) {
    let fx = fixture(10_000);
    let config = UpliftConfig::default();
    let result = uplift::uplift_mask(&fx.scene, &fx.front, &fx.mask, &config).unwrap();

    let mut group = c.benchmark_group("raster_10k");
    group.sample_size(10);
    group.bench_function("render", |b| {
        b.iter(|| rasterizer::render(&fx.scene, &fx.front, &RenderOptions::default()).unwrap())
    });
    group.bench_function("backproject_mask", |b| {
        b.iter(|| {
            rasterizer::backproject_mask(
                &fx.scene,
                &fx.front,
                &result.selected,
                2.0,
                &ProjectionParams::default(),
            )
            .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, bench_uplift, bench_stages, bench_raster);
criterion_main!(benches);
