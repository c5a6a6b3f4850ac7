use criterion::{criterion_group, criterion_main, Criterion};
use phaselab_bench::{mod_desk, mod_fixture, ts_desk, ts_fixture};
use phaselab_core::langevin::{langevin_step, LangevinModel, LangevinSettings, ModModel, TsModel};
use phaselab_core::mod_theory::{solve_a, ModSolverOptions};
use phaselab_core::models::{mod_dataset, ts_sample_dataset};
use phaselab_core::numerics::{integrate_weighted, stream_rng};
use phaselab_core::ts_theory::{qtilde_matrix, DiscrepancyTs, TsSolverOptions};
use std::hint::black_box;

fn quadrature(c: &mut Criterion) {
    c.bench_function("integrate_weighted/deep_double_well", |b| {
        b.iter(|| {
            let lw = |q: f64| -300.0 * (q * q - 0.5).powi(2);
            integrate_weighted(|q| q * q, lw, -3.0, 3.0, 1e-10).unwrap()
        })
    });
}

fn theory(c: &mut Criterion) {
    let cfg = ts_fixture();
    let opts = TsSolverOptions::default();
    let disc = DiscrepancyTs { b: 0.3, c: -0.29 };
    c.bench_function("qtilde_matrix/reference", |b| b.iter(|| qtilde_matrix(black_box(&disc), &cfg, &opts).unwrap()));
    let m = mod_fixture();
    let mopts = ModSolverOptions::default();
    c.bench_function("solve_a/reference", |b| b.iter(|| solve_a(black_box(&m), &mopts)));
}

fn sampler(c: &mut Criterion) {
    let settings =
        LangevinSettings { step_size: 0.008, n_steps: 1, burn_in: 0, thin: 1, seed: 1, precondition: true, noise: 1.0 };
    let ts = TsModel(ts_desk());
    let data = ts_sample_dataset(&ts.0, 1);
    let mut rng = stream_rng(1, 0);
    let mut net = ts.sample_prior(&mut rng);
    c.bench_function("langevin_step/ts_d30_n600_N112", |b| {
        b.iter(|| langevin_step(&ts, &mut net, &data, &settings, &mut rng).unwrap())
    });
    let md = ModModel(mod_desk());
    let table = mod_dataset(md.0.p).unwrap();
    let mut net = md.sample_prior(&mut rng);
    c.bench_function("langevin_step/mod_P23_N200", |b| {
        b.iter(|| langevin_step(&md, &mut net, &table, &settings, &mut rng).unwrap())
    });
}

criterion_group!(benches, quadrature, theory, sampler);
criterion_main!(benches);
