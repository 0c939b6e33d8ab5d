//! Fitted models on simulated cohorts: curve recovery, sign constraints,
//! mediator variance, and interpolation of noiseless data.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shapemed::simulation::{gen_dataset, GeneratorCoefficients, Pattern};
use shapemed::{fit_mediator, fit_outcome, Shape, ShapeSpec};

fn cohort(pattern: Pattern, seed: u64, n: usize, sigma1: f64) -> shapemed::Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_dataset(
        pattern,
        &GeneratorCoefficients::default(),
        n,
        sigma1,
        0.3,
        &mut rng,
    )
    .unwrap()
    .without_constant_confounders()
}

fn centered(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

#[test]
fn pattern_one_curves_are_recovered() {
    // Curves are identified up to an additive constant (absorbed by β₀ and
    // β₁), so both sides are centered on a grid over the central 90% of the
    // mediator. Over these 20 cohorts the worst centered RMSE is about 5.4
    // (seed 12); the bound is 10.
    for seed in 0..20 {
        let data = cohort(Pattern::One, seed, 500, 10.0);
        let fit = fit_outcome(&data, Pattern::One.shapes(), 5).unwrap();
        let mut m: Vec<f64> = data.mediator().iter().copied().collect();
        m.sort_by(f64::total_cmp);
        let (lo, hi) = (m[m.len() / 20], m[m.len() - m.len() / 20]);
        let grid: Vec<f64> = (0..=100)
            .map(|i| lo + (hi - lo) * i as f64 / 100.0)
            .collect();
        let f1: Vec<f64> = grid.iter().map(|&x| fit.exposed_curve(x)).collect();
        let f2: Vec<f64> = grid.iter().map(|&x| fit.unexposed_curve(x)).collect();
        let t1: Vec<f64> = grid.iter().map(|&x| Pattern::One.f1(x)).collect();
        let t2: Vec<f64> = grid.iter().map(|&x| Pattern::One.f2(x)).collect();
        let e1 = rmse(&centered(&f1), &centered(&t1));
        let e2 = rmse(&centered(&f2), &centered(&t2));
        assert!(e1 < 10.0 && e2 < 10.0, "seed {seed}: rmse {e1} {e2}");
    }
}

#[test]
fn mediator_variance_is_unbiased_over_replicates() {
    let reps = 200;
    let avg = (0..reps)
        .map(|seed| {
            fit_mediator(&cohort(Pattern::Two, 10_000 + seed, 500, 10.0))
                .unwrap()
                .sigma2_sq
        })
        .sum::<f64>()
        / reps as f64;
    assert!((avg - 0.09).abs() < 0.009, "{avg}");
}

#[test]
fn noiseless_linear_pattern_is_interpolated() {
    // quadratic I-splines plus an intercept contain every increasing line
    let data = cohort(Pattern::Linear, 3, 300, 1e-10);
    let fit = fit_outcome(&data, Pattern::Linear.shapes(), 5).unwrap();
    assert!(fit.residual_ss < 1e-12, "{}", fit.residual_ss);
    let (lo, hi) = (fit.knots.lower(), fit.knots.upper());
    let slope = |f: &dyn Fn(f64) -> f64| (f(hi) - f(lo)) / (hi - lo);
    assert!((slope(&|x| fit.exposed_curve(x)) - 5.5).abs() < 1e-6);
    assert!((slope(&|x| fit.unexposed_curve(x)) - 9.5).abs() < 1e-6);
}

fn shape_strategy() -> impl Strategy<Value = Shape> {
    prop_oneof![
        Just(Shape::Increasing),
        Just(Shape::Decreasing),
        Just(Shape::Convex),
        Just(Shape::Concave)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn fitted_coefficients_respect_declared_signs(
        seed in any::<u64>(),
        exposed in shape_strategy(),
        unexposed in shape_strategy(),
        pattern in 0usize..4,
    ) {
        let data = cohort(Pattern::ALL[pattern], seed, 200, 20.0);
        let shapes = ShapeSpec::new(exposed, unexposed);
        let fit = fit_outcome(&data, shapes, 5).unwrap();
        for (coefs, shape) in [(&fit.beta2, exposed), (&fit.beta3, unexposed)] {
            let spline = match shape {
                Shape::Convex | Shape::Concave => &coefs[1..],
                _ => &coefs[..],
            };
            let sign = match shape {
                Shape::Increasing | Shape::Convex => 1.0,
                Shape::Decreasing | Shape::Concave => -1.0,
            };
            prop_assert!(spline.iter().all(|b| sign * b >= 0.0), "{shape}: {coefs:?}");
        }
        // the fitted curves have the declared shape on a grid
        let (lo, hi) = (fit.knots.lower(), fit.knots.upper());
        let h = (hi - lo) / 200.0;
        for (curve, shape) in [
            (&(|x| fit.exposed_curve(x)) as &dyn Fn(f64) -> f64, exposed),
            (&|x| fit.unexposed_curve(x), unexposed),
        ] {
            let vals: Vec<f64> = (0..=200).map(|i| curve(lo + h * i as f64)).collect();
            let tol = 1e-9 * vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for w in vals.windows(3) {
                let (d1, d2) = (w[1] - w[0], w[2] - 2.0 * w[1] + w[0]);
                let ok = match shape {
                    Shape::Increasing => d1 >= -tol,
                    Shape::Decreasing => d1 <= tol,
                    Shape::Convex => d2 >= -tol,
                    Shape::Concave => d2 <= tol,
                };
                prop_assert!(ok, "{shape} violated");
            }
        }
    }
}
