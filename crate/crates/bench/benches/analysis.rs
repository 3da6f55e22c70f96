use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use lpmbrw::perturb::{c_phi, g_phi, TestFunction};
use lpmbrw::rng::Stream;
use lpmbrw::{theta0, TailLaw, Perturbation};
use lpmbrw_bench::law;

fn cumulant(c: &mut Criterion) {
    let law = law();
    c.bench_function("theta0 bisection", |b| b.iter(|| theta0(black_box(&law)).unwrap()));
}

fn kernels(c: &mut Criterion) {
    let phi = TestFunction::tent(0.0, 1.0, 1.0).unwrap();
    let nu = Perturbation::Tail(TailLaw::new(1.0, -1.0, 1.0).unwrap());
    c.bench_function("c_phi quadrature", |b| b.iter(|| c_phi(black_box(&phi), 0.8).unwrap()));
    c.bench_function("g_phi at -10", |b| b.iter(|| g_phi(&nu, &phi, black_box(-10.0))));
}

fn sampling(c: &mut Criterion) {
    let tail = TailLaw::new(1.0, -1.0, 1.0).unwrap();
    let mut rng = Stream::new(1);
    c.bench_function("regularly varying tail sample", |b| b.iter(|| tail.sample(&mut rng)));
}

criterion_group!(benches, cumulant, kernels, sampling);
criterion_main!(benches);
