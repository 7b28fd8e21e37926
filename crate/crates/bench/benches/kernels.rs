use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use geoflow_bench::{frame_point, north_pole, polar_point, shrinking_sphere, small_mc};
use geoflow_core::coupling::{simulate_coupling, CouplingMode, CouplingOptions};
use geoflow_core::damped::evolve_q;
use geoflow_core::frame_sde::{horizontal_step, simulate_path};
use geoflow_core::gradient::{bismut_pair, HProfile};
use geoflow_core::inequalities::grigoryan_integral;
use geoflow_core::inequalities::Profile;
use geoflow_core::{NoiseStream, ScalarField};
use nalgebra::DVector;

fn frame_step(c: &mut Criterion) {
    let flow = shrinking_sphere();
    let fp = frame_point(&flow, 0.1, north_pole());
    let db = DVector::from_vec(vec![0.03, -0.02]);
    c.bench_function("horizontal_step/sphere", |b| b.iter(|| horizontal_step(&flow, black_box(&fp), &db, 1e-3).unwrap()));
}

fn path(c: &mut Criterion) {
    let flow = shrinking_sphere();
    let x = north_pole();
    let noise = NoiseStream::new(1, 0);
    c.bench_function("simulate_path/400_steps", |b| {
        b.iter(|| simulate_path(&flow, &x, None, 0.0, 0.4, 1e-3, &noise, &[]).unwrap())
    });
    let sample = simulate_path(&flow, &x, None, 0.0, 0.4, 1e-3, &noise, &[]).unwrap();
    c.bench_function("evolve_q/400_steps", |b| b.iter(|| evolve_q(&flow, black_box(&sample)).unwrap()));
}

fn estimators(c: &mut Criterion) {
    let flow = shrinking_sphere();
    let f = ScalarField::coordinate(2);
    let x = polar_point(0.7);
    let mut group = c.benchmark_group("estimators");
    group.sample_size(10);
    group.bench_function("bismut_pair/256_paths", |b| {
        b.iter(|| bismut_pair(&flow, &f, 0.0, 0.2, &x, None, &HProfile::Linear, &small_mc(3)).unwrap())
    });
    group.bench_function("mirror_coupling/256_paths", |b| {
        b.iter_batched(
            || (north_pole(), polar_point(0.5)),
            |(x, y)| simulate_coupling(&flow, &x, &y, 0.0, 0.2, CouplingOptions::new(CouplingMode::Mirror), &small_mc(5)).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn growth(c: &mut Criterion) {
    let psi = Profile::LinearLog { coef: 1.0 };
    c.bench_function("grigoryan_integral/1e5", |b| b.iter(|| grigoryan_integral(|r| black_box(&psi).eval(r), 1000.0, 100_000)));
}

criterion_group!(benches, frame_step, path, estimators, growth);
criterion_main!(benches);
