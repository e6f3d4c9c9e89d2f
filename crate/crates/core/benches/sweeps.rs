//! Sequential against rayon execution of the hot sweeps on S1.

use std::hint::black_box;
use std::time::Duration;

use basisdiag::basis;
use basisdiag::detfun::{self, DetFunction, Rect};
use basisdiag::exec::{self, Mode};
use basisdiag::harness::{self, ModelSpec};
use basisdiag::model::PerturbedModel;
use basisdiag::weights;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn s1() -> PerturbedModel {
    let ModelSpec::Operator(op) = harness::builtin("S1").unwrap().model else { unreachable!() };
    harness::build_model(&op).unwrap()
}

fn modes() -> [(&'static str, Mode); 2] {
    [("sequential", Mode::Sequential), ("parallel", Mode::Parallel)]
}

fn sweeps(c: &mut Criterion) {
    let model = s1();
    let window = Rect::new(-60.0, 60.0, -2.0, 2.0).unwrap();
    let spec = detfun::find_spectrum(&DetFunction::new(&model), window).unwrap();
    let family = basis::EigenFamily::from_model(&model, &spec, None).unwrap();
    let probes = basis::probe_grid(30.0, -1.0, 1.0, 61, 5);

    let mut g = c.benchmark_group("s1");
    g.sample_size(10).measurement_time(Duration::from_secs(5)).warm_up_time(Duration::from_secs(1));
    for (name, mode) in modes() {
        exec::set_mode(mode);
        g.bench_with_input(BenchmarkId::new("spectrum", name), &window, |b, w| {
            b.iter(|| detfun::find_spectrum(&DetFunction::new(&model), *w).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("trace_w_sq", name), &1000usize, |b, &m| {
            b.iter(|| weights::trace_w(&model, black_box(50.0), m).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("lrg", name), &probes, |b, p| {
            b.iter(|| basis::lrg_sample(&model, &spec.points(), p).unwrap())
        });
        g.bench_function(BenchmarkId::new("frame_g", name), |b| {
            b.iter(|| basis::frame_report(&family, basis::FamilySide::G).unwrap())
        });
    }
    g.finish();
    exec::set_mode(Mode::Parallel);
}

criterion_group!(benches, sweeps);
criterion_main!(benches);
