//! Fixtures shared by the benchmarks.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use shapemed::simulation::{gen_dataset, GeneratorCoefficients, Pattern};
use shapemed::{fit_mediator, fit_outcome, ConeProblem, Dataset, MediatorFit, OutcomeFit};

/// Random cone problem: intercept plus `p − 1` Gaussian columns in `V`,
/// `q` Gaussian columns in `Z`, and a response that activates about half
/// of them.
pub fn cone_problem(n: usize, p: usize, q: usize, seed: u64) -> ConeProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal =
        |rows, cols| DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
    let mut v: DMatrix<f64> = normal(n, p);
    if p > 0 {
        v.column_mut(0).fill(1.0);
    }
    let z = normal(n, q);
    let noise = normal(n, 1);
    let truth = DVector::from_fn(q, |j, _| if j % 2 == 0 { 1.0 } else { -0.5 });
    let y = &z * truth + noise.column(0);
    ConeProblem::new(y, v, z).expect("consistent shapes")
}

/// Simulated cohort with constant confounder columns removed.
pub fn cohort(pattern: Pattern, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_dataset(
        pattern,
        &GeneratorCoefficients::default(),
        n,
        20.0,
        0.3,
        &mut rng,
    )
    .expect("default generator is valid")
    .without_constant_confounders()
}

pub fn fitted(pattern: Pattern, n: usize, seed: u64) -> (Dataset, OutcomeFit, MediatorFit) {
    let data = cohort(pattern, n, seed);
    let outcome = fit_outcome(&data, pattern.shapes(), 5).expect("simulated cohorts fit");
    let mediator = fit_mediator(&data).expect("simulated cohorts fit");
    (data, outcome, mediator)
}
