use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use homog_bench::{cosine_profile, dense_series, golden_shear};
use homog_core::averaging::{delta_of_eps, Domain, FastSlowField, SampledAverage};
use homog_core::field::{builtin, Builtin, Params};
use homog_core::fit_rate;
use homog_core::integrate::{oracle_solve, solve_oscillatory};
use homog_core::planar::solve_liouville;
use homog_core::shear::{build_corrector, diophantine_badness};
use homog_core::transport::characteristic_foot;
use homog_core::PeriodicVectorField;

fn integrators(c: &mut Criterion) {
    let f = PeriodicVectorField::from_scalar(&cosine_profile().reciprocal());
    let mut group = c.benchmark_group("integrate");
    for k in [4, 6, 8] {
        let eps = 2f64.powi(-k);
        group.bench_with_input(BenchmarkId::new("dopri_1d", k), &eps, |b, &eps| {
            b.iter(|| solve_oscillatory(&f, eps, (0.0, 1.0), &[0.0], 1e-10).unwrap())
        });
    }
    group.bench_function("rk4_oracle_eps64", |b| {
        b.iter(|| oracle_solve(&f, 1.0 / 64.0, (0.0, 1.0), &[0.0], 1.0 / 64.0 / 2000.0).unwrap())
    });
    let (_, _, shear) = golden_shear();
    group.bench_function("dopri_shear_2d_eps256", |b| {
        b.iter(|| solve_oscillatory(&shear, 1.0 / 256.0, (0.0, 1.0), &[0.0, 0.0], 1e-10).unwrap())
    });
    group.finish();
}

fn shear(c: &mut Criterion) {
    let (a, _, _) = golden_shear();
    let series = dense_series(8);
    c.bench_function("diophantine_badness_m50", |b| b.iter(|| diophantine_badness(black_box(&a), 0.5, 50).unwrap()));
    c.bench_function("corrector_degree8", |b| b.iter(|| build_corrector(black_box(&series), &a, 1e-10).unwrap()));
}

fn liouville(c: &mut Criterion) {
    let (_, _, f) = golden_shear();
    let mut group = c.benchmark_group("liouville");
    group.sample_size(10);
    // log G is not band limited; low degrees return a residual error, which
    // costs the same solve
    for degree in [8, 16] {
        group.bench_with_input(BenchmarkId::from_parameter(degree), &degree, |b, &d| {
            b.iter(|| black_box(solve_liouville(&f, d, 1e-8)))
        });
    }
    group.finish();
}

fn averaging(c: &mut Criterion) {
    let g = FastSlowField::fast_only("1+sin", |tau| 1.0 + (2.0 * std::f64::consts::PI * tau).sin());
    let d = Domain::point(0.0);
    let g0 = SampledAverage::constant(&g, &d, 1.0);
    c.bench_function("delta_of_eps_2^-8", |b| b.iter(|| delta_of_eps(&g, &g0, &d, 1.0, black_box(2f64.powi(-8))).unwrap()));
}

fn transport(c: &mut Criterion) {
    let h = match builtin("example4_transport_H", &Params::new()).unwrap() {
        Builtin::Scalar(h) => h,
        Builtin::Vector(_) => unreachable!(),
    };
    c.bench_function("characteristic_foot_eps128", |b| {
        b.iter(|| characteristic_foot(&h, 1.0 / 128.0, black_box(0.37), 1.0, 1e-10).unwrap())
    });
}

fn rate_fit(c: &mut Criterion) {
    let eps: Vec<f64> = (4..16).map(|k| 2f64.powi(-k)).collect();
    let err: Vec<f64> = eps.iter().map(|e| 0.3 * e * (1.0 + 0.1 * (1.0 / e).sin())).collect();
    c.bench_function("fit_rate_12", |b| b.iter(|| fit_rate(black_box(&eps), black_box(&err)).unwrap()));
}

criterion_group!(benches, integrators, shear, liouville, averaging, transport, rate_fit);
criterion_main!(benches);
