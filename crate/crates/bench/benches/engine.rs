use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use pnl_bench::noisy_heat;
use pnl_core::ensemble::{run_ensemble, EnsembleOptions};
use pnl_core::sde::{sample_brownian, simulate, DriftOperator, Stepper};

fn operator_apply(c: &mut Criterion) {
    let mut group = c.benchmark_group("operator_apply");
    for cells in [32, 128] {
        let cfg = noisy_heat(cells, 1, 0.5).unwrap();
        let op = DriftOperator::assemble(&cfg.grid, &cfg.model, 0.0, None).unwrap();
        group.bench_function(format!("{cells}x{cells}"), |b| b.iter(|| op.apply(black_box(&cfg.u0)).unwrap()));
    }
    group.finish();
}

fn single_step(c: &mut Criterion) {
    let cfg = noisy_heat(64, 1, 0.5).unwrap();
    let db = [0.01, -0.02];
    let mut stepper = Stepper::new(&cfg.grid, cfg.model.clone(), cfg.noise.clone(), cfg.u0.values(), 1e-10).unwrap();
    c.bench_function("step_64x64", |b| {
        b.iter_batched(
            || cfg.u0.values().to_vec(),
            |mut u| stepper.step(&mut u, 0.0, cfg.dt(), &db).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn path_and_ensemble(c: &mut Criterion) {
    let cfg = noisy_heat(32, 20, 0.5).unwrap();
    let path = sample_brownian(1, 0, 2, &cfg.times()).unwrap();
    c.bench_function("simulate_32x32_20_steps", |b| b.iter(|| simulate(&cfg, &path).unwrap()));
    let opts = EnsembleOptions { observables: false, ..Default::default() };
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    group.bench_function("32x32_20_steps_16_paths", |b| b.iter(|| run_ensemble(&cfg, 16, 1, opts).unwrap()));
    group.finish();
}

criterion_group!(benches, operator_apply, single_step, path_and_ensemble);
criterion_main!(benches);
