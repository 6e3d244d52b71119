use criterion::{criterion_group, criterion_main, Criterion};
use probe_core::mesh::triangulate;
use probe_core::special::{bessel_jn_series, bessel_y0, hankel1_0};
use probe_core::{FitContext, ForwardModel, Needle, Point, Scene, Schedule, Shape};
use std::hint::black_box;

fn scene() -> Scene {
    Scene::new(Shape::disc([0.0, 0.0], 1.0), vec![Shape::disc([0.0, 0.0], 0.3)], 1.0).unwrap()
}

fn bench_mesh(c: &mut Criterion) {
    let s = scene();
    c.bench_function("triangulate h=0.05", |b| b.iter(|| triangulate(black_box(&s), 0.05).unwrap()));
}

fn bench_dtn(c: &mut Criterion) {
    let s = scene();
    let model = ForwardModel::new(&s, 0.05).unwrap();
    c.bench_function("dtn pair h=0.05 modes 16", |b| b.iter(|| model.dtn_pair(black_box(16)).unwrap()));
}

fn bench_fit(c: &mut Criterion) {
    let s = scene();
    let ctx = FitContext::new(&s, &Schedule { n_max: 4, ..Schedule::default() }).unwrap();
    let needle = Needle::straight(Point::new(1.0, 0.0), Point::new(0.15, 0.0), &s.outer).unwrap();
    c.bench_function("needle fit n_max 4", |b| b.iter(|| ctx.fit(black_box(&needle)).unwrap()));
}

fn bench_bessel(c: &mut Criterion) {
    let xs: Vec<f64> = (1..=200).map(|i| i as f64 * 0.1).collect();
    c.bench_function("J_5 series 200 points", |b| b.iter(|| xs.iter().map(|&x| bessel_jn_series(5, black_box(x))).sum::<f64>()));
    c.bench_function("Y_0 200 points", |b| b.iter(|| xs.iter().map(|&x| bessel_y0(black_box(x))).sum::<f64>()));
    c.bench_function("H_0 200 points", |b| b.iter(|| xs.iter().map(|&x| hankel1_0(black_box(x)).re).sum::<f64>()));
}

criterion_group!(benches, bench_mesh, bench_dtn, bench_fit, bench_bessel);
criterion_main!(benches);
