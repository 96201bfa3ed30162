use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fraglab_core::brownian::{excursion_lengths, simulate_until_last_hit};
use fraglab_core::deteq::{generator_residual, Bump};
use fraglab_core::seed::stream;
use fraglab_core::tagged::{intensity_estimate, SubordinatorSpec};
use fraglab_core::*;

fn binary() -> DislocationSpec {
    DislocationSpec::binary_uniform(0.0)
}

fn phi(c: &mut Criterion) {
    let d = binary();
    c.bench_function("phi_quadrature_binary", |b| b.iter(|| d.phi_by_quadrature(black_box(2.5))));
    let nu = DislocationSpec::brownian_nu();
    c.bench_function("phi_brownian_nu", |b| b.iter(|| nu.phi(black_box(2.5))));
}

fn particles(c: &mut Criterion) {
    let dynamics = Dynamics::new(0.0, &binary()).unwrap();
    let opts = SimOptions::cutoff(1e-3);
    c.bench_function("evolve_unit_mass_to_dust_1e-3", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            let mut sys = ParticleSystem::new(&[1.0], &dynamics, &opts, seed).unwrap();
            sys.evolve(black_box(10.0)).unwrap();
            sys.len()
        })
    });
}

fn stationary(c: &mut Criterion) {
    let cfg = FiConfig::new(0.0, binary(), ImmigrationSpec::exponential(1.0), 0.01);
    let sampler = StationarySampler::new(&cfg, 1).unwrap();
    let mut r = 0;
    c.bench_function("stationary_sample_eps_0.01", |b| {
        b.iter(|| {
            r += 1;
            sampler.sample(r).unwrap().masses.len()
        })
    });
}

fn tagged(c: &mut Criterion) {
    let spec = SubordinatorSpec::from_dislocation(&binary()).unwrap();
    c.bench_function("tagged_second_moment_1e3", |b| {
        b.iter(|| intensity_estimate(&spec, -0.5, 1.0, &|x| x * x, (0.0, 2.0), 1000, black_box(3)).unwrap())
    });
}

fn residual(c: &mut Criterion) {
    let form = ClosedForm::brownian(1.0).unwrap();
    c.bench_function("generator_residual_brownian", |b| b.iter(|| generator_residual(&form, &Bump::new(0.5, black_box(2.0)))));
}

fn paths(c: &mut Criterion) {
    c.bench_function("brownian_path_excursions", |b| {
        let mut i = 0;
        b.iter(|| {
            i += 1;
            let path = simulate_until_last_hit(1.0, 1.0, 1e-3, 7.0, 1 << 24, &mut stream(1, 0, i)).unwrap();
            excursion_lengths(&path, 1.0, 0.1).len()
        })
    });
}

criterion_group!(benches, phi, particles, stationary, tagged, residual, paths);
criterion_main!(benches);
