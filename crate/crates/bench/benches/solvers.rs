use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use shapemed::cone::DEFAULT_TOL;
use shapemed::effects::expected_f_parts;
use shapemed::simulation::Pattern;
use shapemed::spline::basis_matrix;
use shapemed::{project_onto_cone, BasisKind, KnotSequence, QuadratureSpec, SplineKind};
use shapemed_bench::{cohort, cone_problem};

fn cone(c: &mut Criterion) {
    let mut group = c.benchmark_group("cone_projection");
    for q in [4, 10, 16] {
        let problem = cone_problem(500, 15, q, 1);
        group.bench_with_input(BenchmarkId::from_parameter(q), &problem, |b, p| {
            b.iter(|| project_onto_cone(black_box(p), DEFAULT_TOL).unwrap())
        });
    }
    group.finish();
}

fn basis(c: &mut Criterion) {
    let data = cohort(Pattern::One, 500, 2);
    let m = data.mediator().as_slice();
    let knots = KnotSequence::from_quantiles(m, 5).unwrap();
    let mut group = c.benchmark_group("basis_matrix");
    for kind in [SplineKind::IQuadratic, SplineKind::CCubic] {
        group.bench_function(format!("{kind:?}"), |b| {
            b.iter(|| basis_matrix(black_box(m), BasisKind::new(kind, false), &knots))
        });
    }
    group.finish();
}

fn expectation(c: &mut Criterion) {
    let knots = KnotSequence::new(vec![-1.0, -1.0, 0.0, 0.5, 1.5, 2.0, 2.0]).unwrap();
    let quad = QuadratureSpec::default();
    let coefs = [0.5, 1.0, 0.2, 0.8, 1.5, 0.3];
    c.bench_function("expected_f/ccubic", |b| {
        b.iter(|| {
            expected_f_parts(
                black_box(&coefs),
                SplineKind::CCubic,
                &knots,
                0.4,
                0.09,
                &quad,
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, cone, basis, expectation);
criterion_main!(benches);
