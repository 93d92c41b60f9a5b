use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cgmix::estimators::e_step;
use cgmix::gating::{CurveEstimator, GridSpec, KernelSpec};
use cgmix::{fit, ModelConfig, ModelKind};
use cgmix_bench::contaminated_sample;

fn bench_e_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("e_step");
    for n in [500, 2000] {
        let d = contaminated_sample(n);
        let f =
            fit(&d, &ModelConfig::new(ModelKind::Cgmoe, 2).with_restarts(1)).expect("fit succeeds");
        group.bench_with_input(BenchmarkId::from_parameter(n), &d, |b, d| {
            b.iter(|| e_step(d, &f.params, &f.gating).expect("e-step succeeds"))
        });
    }
    group.finish();
}

fn bench_smoothing(c: &mut Criterion) {
    let mut group = c.benchmark_group("curve_estimate");
    for n in [500, 2000] {
        let d = contaminated_sample(n);
        let t = d.t().as_slice().to_vec();
        let f =
            fit(&d, &ModelConfig::new(ModelKind::Cgmoe, 2).with_restarts(1)).expect("fit succeeds");
        let z = e_step(&d, &f.params, &f.gating)
            .expect("e-step succeeds")
            .posteriors
            .z;
        let smoother = CurveEstimator::new(
            &t,
            GridSpec::for_covariate(&t).expect("grid"),
            KernelSpec::gaussian(0.1).expect("bandwidth"),
        )
        .expect("smoother builds");
        group.bench_with_input(BenchmarkId::from_parameter(n), &z, |b, z| {
            b.iter(|| smoother.estimate(z).expect("curves"))
        });
    }
    group.finish();
}

fn bench_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_single_start");
    group.sample_size(10);
    let d = contaminated_sample(500);
    for kind in [ModelKind::Cgmlr, ModelKind::Cgmoe, ModelKind::Scgmoe] {
        let mut cfg = ModelConfig::new(kind, 2).with_restarts(1);
        if kind == ModelKind::Scgmoe {
            cfg = cfg.with_bandwidth(0.1).expect("bandwidth");
        }
        group.bench_with_input(BenchmarkId::from_parameter(kind), &cfg, |b, cfg| {
            b.iter(|| fit(&d, cfg).expect("fit succeeds"))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_e_step, bench_smoothing, bench_fit);
criterion_main!(benches);
