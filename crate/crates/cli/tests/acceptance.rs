//! Acceptance suite: runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each. Exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use shapemed::cone::DEFAULT_TOL;
use shapemed::effects::{
    cde_with_gradient, curve_len, eval_f, expected_f, expected_f_parts, nde_with_gradient,
    nie_with_gradient, total_with_gradient, EffectGradient,
};
use shapemed::simulation::{
    gen_dataset, run_study, GeneratorCoefficients, Method, Pattern, StudyConfig, StudyResult,
    EFFECTS,
};
use shapemed::spline::{cspline_eval, ispline_eval, mspline_eval};
use shapemed::{
    fit_mediator, fit_outcome, project_onto_cone, ConeProblem, EffectKind, EffectQuery,
    KnotSequence, MediatorFit, OutcomeFit, QuadratureSpec, SplineKind,
};

const SEED: u64 = 20240101;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn random_knots(rng: &mut ChaCha8Rng) -> KnotSequence {
    let interior = rng.random_range(1..7);
    let lo = rng.random_range(-5.0..5.0);
    let mut t = vec![lo, lo];
    let mut x = lo;
    for _ in 0..interior {
        x += rng.random_range(0.05..2.0);
        t.push(x);
    }
    t.push(x);
    KnotSequence::new(t).unwrap()
}

/// Three-point Gauss–Legendre on each knot interval of `[a, b]`: exact for
/// polynomials up to degree five and never evaluated on a knot, where the
/// half-open support convention breaks left continuity.
fn piecewise_gauss(f: &dyn Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64]) -> f64 {
    let nodes = [
        (-(0.6f64).sqrt(), 5.0 / 9.0),
        (0.0, 8.0 / 9.0),
        ((0.6f64).sqrt(), 5.0 / 9.0),
    ];
    let mut points = vec![a];
    points.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
    points.push(b);
    points
        .windows(2)
        .map(|w| {
            let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            half * nodes
                .iter()
                .map(|&(x, wt)| wt * f(mid + half * x))
                .sum::<f64>()
        })
        .sum()
}

fn ac1_spline_integrals() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let knots = random_knots(&mut rng);
        let (lo, hi) = (knots.lower(), knots.upper());
        for g in 0..200 {
            // grid runs past the upper knot to cover the linear C-spline tail
            let x = lo + (hi - lo) * 1.2 * g as f64 / 199.0;
            for i in 0..knots.num_bases() {
                let m2 = |s: f64| mspline_eval(s, i, 2, &knots).unwrap();
                let i2 = |s: f64| ispline_eval(s, i, &knots).unwrap();
                let ie = (ispline_eval(x, i, &knots).unwrap()
                    - piecewise_gauss(&m2, lo, x.min(hi), knots.knots()))
                .abs();
                let ce = (cspline_eval(x, i, &knots).unwrap()
                    - piecewise_gauss(&i2, lo, x, knots.knots()))
                .abs();
                worst = worst.max(ie).max(ce);
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= 1e-6 && elapsed < Duration::from_secs(1),
        format!("max abs error {worst:.2e} (≤ 1e-6), {elapsed:.2?} (< 1 s)"),
    )
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Minimum objective and distinct optimal supports over all `2^q` subsets.
fn exhaustive(problem: &ConeProblem) -> (f64, Vec<Vec<usize>>) {
    let (p, q) = (problem.p(), problem.q());
    let mut feasible = Vec::new();
    for mask in 0u32..(1 << q) {
        let subset: Vec<usize> = (0..q).filter(|j| mask & (1 << j) != 0).collect();
        let cols: Vec<DVector<f64>> = problem
            .unconstrained
            .column_iter()
            .map(|c| c.into_owned())
            .chain(
                subset
                    .iter()
                    .map(|&j| problem.constrained.column(j).into_owned()),
            )
            .collect();
        let (beta, rss) = if cols.is_empty() {
            (DVector::zeros(0), problem.response.norm_squared())
        } else {
            let x = DMatrix::from_columns(&cols);
            let Some(chol) = (x.transpose() * &x).cholesky() else {
                continue;
            };
            let b = chol.solve(&(x.transpose() * &problem.response));
            let rss = (&problem.response - &x * &b).norm_squared();
            (b, rss)
        };
        if beta.iter().skip(p).all(|&b| b >= -1e-12) {
            let support: Vec<usize> = subset
                .iter()
                .zip(beta.iter().skip(p))
                .filter(|(_, &b)| b > 1e-9)
                .map(|(&j, _)| j)
                .collect();
            feasible.push((rss, support));
        }
    }
    let best = feasible.iter().map(|f| f.0).fold(f64::INFINITY, f64::min);
    let scale = problem.response.norm_squared().max(1.0);
    let mut supports: Vec<Vec<usize>> = Vec::new();
    for (rss, support) in feasible {
        if rss - best <= 1e-9 * scale && !supports.contains(&support) {
            supports.push(support);
        }
    }
    (best, supports)
}

fn ac2_cone_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut worst, mut mismatched, mut unique) = (0.0f64, 0, 0);
    for trial in 0..200 {
        let (p, q) = (trial % 4, 1 + trial % 8);
        let mut v = gaussian(&mut rng, 50, p);
        if p > 0 {
            v.column_mut(0).fill(1.0);
        }
        let z = gaussian(&mut rng, 50, q);
        let truth = DVector::from_fn(q, |_, _| rng.random_range(-1.0..1.5));
        let y = &z * truth + gaussian(&mut rng, 50, 1).column(0) * 0.7;
        let problem = ConeProblem::new(y, v, z).unwrap();
        let sol = project_onto_cone(&problem, DEFAULT_TOL).unwrap();
        let (best, supports) = exhaustive(&problem);
        let scale = problem.response.norm_squared().max(1.0);
        worst = worst.max((sol.residual_ss - best).abs() / scale);
        if supports.len() == 1 {
            unique += 1;
            let hinge: Vec<usize> = (0..q).filter(|&j| sol.beta[j] > 1e-9).collect();
            if hinge != supports[0] {
                mismatched += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= 1e-8 && mismatched == 0 && elapsed < Duration::from_secs(30),
        format!(
            "max relative objective gap {worst:.2e} (≤ 1e-8), {mismatched}/{unique} unique-optimum active sets differ, {elapsed:.2?} (< 30 s)"
        ),
    )
}

fn fitted(
    pattern: Pattern,
    seed: u64,
    n: usize,
    sigma1: f64,
) -> (shapemed::Dataset, OutcomeFit, MediatorFit) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = gen_dataset(
        pattern,
        &GeneratorCoefficients::default(),
        n,
        sigma1,
        0.3,
        &mut rng,
    )
    .unwrap()
    .without_constant_confounders();
    let outcome = fit_outcome(&data, pattern.shapes(), 5).unwrap();
    let mediator = fit_mediator(&data).unwrap();
    (data, outcome, mediator)
}

/// CDE, NDE and NIE recomputed from the curves and `expected_f`, with no
/// gradient code involved.
fn point_estimates(o: &OutcomeFit, m: &MediatorFit, q: &EffectQuery) -> [f64; 3] {
    let quad = QuadratureSpec::default();
    let k = &o.knots;
    let f1 = |x| eval_f(&o.beta2, o.exposed_kind(), k, x).unwrap();
    let f2 = |x| eval_f(&o.beta3, o.unexposed_kind(), k, x).unwrap();
    let e1 = |a| expected_f(&o.beta2, o.exposed_kind(), k, m, a, &q.c, &quad).unwrap();
    let e2 = |a| expected_f(&o.beta3, o.unexposed_kind(), k, m, a, &q.c, &quad).unwrap();
    let (a, s) = (q.a, q.a_star);
    [
        (o.beta1 + f1(q.m) - f2(q.m)) * (a - s),
        (o.beta1 + e1(s) - e2(s)) * (a - s),
        a * (e1(a) - e1(s)) + (1.0 - a) * (e2(a) - e2(s)),
    ]
}

/// Largest relative disagreement between analytic and central-difference
/// gradient components; components where both sides are below 1e-7 in
/// absolute value count as agreeing.
fn gradient_error(
    o: &OutcomeFit,
    m: &MediatorFit,
    q: &EffectQuery,
    which: usize,
    g: &EffectGradient,
) -> f64 {
    let po = o.num_parameters();
    let theta: Vec<f64> = o
        .parameter_vector()
        .into_iter()
        .chain(m.parameter_vector())
        .collect();
    let mut worst = 0.0f64;
    for j in 0..g.gradient.len() {
        let h = 1e-5 * theta[j].abs().max(1.0);
        let eval = |delta: f64| {
            let mut t = theta.clone();
            t[j] += delta;
            let (mut o2, mut m2) = (o.clone(), m.clone());
            o2.set_parameter_vector(&t[..po]).unwrap();
            m2.set_parameter_vector(&t[po..]).unwrap();
            point_estimates(&o2, &m2, q)[which]
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        let an = g.gradient[j];
        let diff = (an - fd).abs();
        if diff > 1e-7 {
            worst = worst.max(diff / an.abs().max(fd.abs()));
        }
    }
    worst
}

fn ac3_gradients() -> Verdict {
    let start = Instant::now();
    let quad = QuadratureSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for config in 0..50 {
        let pattern = Pattern::ALL[config % 4];
        let sigma1 = if config % 2 == 0 { 10.0 } else { 40.0 };
        let (data, o, m) = fitted(pattern, SEED + config as u64, 300, sigma1);
        let mut q = EffectQuery::at_means(&data, 0.95);
        if config % 3 == 0 {
            std::mem::swap(&mut q.a, &mut q.a_star);
        }
        q.m += rng.random_range(-1.0..1.0);
        let grads = [
            cde_with_gradient(&o, &q).unwrap(),
            nde_with_gradient(&o, &m, &q, &quad).unwrap(),
            nie_with_gradient(&o, &m, &q, &quad).unwrap(),
        ];
        for (which, g) in grads.iter().enumerate() {
            worst = worst.max(gradient_error(&o, &m, &q, which, g));
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= 1e-4 && elapsed < Duration::from_secs(60),
        format!("max relative gradient error {worst:.2e} (≤ 1e-4), {elapsed:.2?} (< 1 min)"),
    )
}

fn ac4_expected_value() -> Verdict {
    let start = Instant::now();
    let quad = QuadratureSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for config in 0..20 {
        let knots = random_knots(&mut rng);
        let kind = if config % 2 == 0 {
            SplineKind::IQuadratic
        } else {
            SplineKind::CCubic
        };
        let coefs: Vec<f64> = (0..curve_len(kind, &knots))
            .map(|_| rng.random_range(-3.0..3.0))
            .collect();
        let mean = rng.random_range(knots.lower() - 0.5..knots.upper() + 0.5);
        let sd = rng.random_range(0.1..1.5);
        let exact = expected_f_parts(&coefs, kind, &knots, mean, sd * sd, &quad)
            .unwrap()
            .value;
        let dist = Normal::new(mean, sd).unwrap();
        let draws = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let f = eval_f(&coefs, kind, &knots, dist.sample(&mut rng)).unwrap();
            s += f;
            s2 += f * f;
        }
        let avg = s / draws as f64;
        let se = ((s2 / draws as f64 - avg * avg) / draws as f64).sqrt();
        worst = worst.max((exact - avg).abs() / se);
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= 3.0 && elapsed < Duration::from_secs(60),
        format!(
            "max |quadrature − MC| = {worst:.2} MC standard errors (≤ 3), {elapsed:.2?} (< 1 min)"
        ),
    )
}

fn study(pattern: Pattern, sigma1: &[f64]) -> StudyResult {
    let mut config = StudyConfig::new(pattern);
    config.reps = 500;
    config.n = 500;
    config.sigma1 = sigma1.to_vec();
    config.seed = SEED;
    run_study(&config).unwrap()
}

fn coverage(result: &StudyResult, method: Method, effect: EffectKind, sigma1: f64) -> f64 {
    result.summary(method, effect, sigma1).unwrap().coverage
}

fn no_failures(results: &[&StudyResult]) -> bool {
    results.iter().all(|r| r.failures.is_empty())
}

fn ac5_shape_restricted_coverage(
    studies: &[(Pattern, &StudyResult)],
    elapsed: Duration,
) -> Verdict {
    let mut cells = Vec::new();
    let mut pass = no_failures(&studies.iter().map(|s| s.1).collect::<Vec<_>>());
    for (pattern, result) in studies {
        for sigma1 in [10.0, 40.0] {
            for effect in EFFECTS {
                let c = coverage(result, Method::ShapeRestricted, effect, sigma1);
                pass &= (0.90..=0.98).contains(&c);
                cells.push(format!("{pattern} σ{sigma1} {}={c:.3}", effect.label()));
            }
        }
    }
    pass &= elapsed < Duration::from_secs(600);
    verdict(
        pass,
        format!(
            "{} (all in [0.90, 0.98]), {elapsed:.2?} (< 10 min)",
            cells.join(", ")
        ),
    )
}

fn ac6_linear_collapse(result: &StudyResult) -> Verdict {
    let mut pass = no_failures(&[result]);
    let mut parts = Vec::new();
    for effect in [EffectKind::Cde, EffectKind::Nde] {
        let cov: Vec<f64> = [10.0, 20.0, 30.0, 40.0]
            .iter()
            .map(|&s| coverage(result, Method::LinearBaseline, effect, s))
            .collect();
        pass &= cov[0] < 0.05;
        // coverage at a smaller σ₁ may exceed the next larger one by MC error only
        pass &= cov.windows(2).all(|w| w[0] <= w[1] + 0.04);
        parts.push(format!(
            "{} σ10/20/30/40 = {:.3}/{:.3}/{:.3}/{:.3}",
            effect.label(),
            cov[0],
            cov[1],
            cov[2],
            cov[3]
        ));
    }
    verdict(
        pass,
        format!(
            "{} (σ10 < 0.05, non-increasing as σ₁ falls ±0.04)",
            parts.join("; ")
        ),
    )
}

fn ac7_linear_parity(result: &StudyResult) -> Verdict {
    let mut pass = no_failures(&[result]);
    let mut parts = Vec::new();
    for method in Method::ALL {
        for effect in EFFECTS {
            let c = coverage(result, method, effect, 10.0);
            pass &= (0.90..=0.98).contains(&c);
            parts.push(format!("{} {}={c:.3}", method.label(), effect.label()));
        }
    }
    let mse = |method| {
        result
            .summary(method, EffectKind::Cde, 10.0)
            .unwrap()
            .avg_mse
    };
    let (lm, sr) = (mse(Method::LinearBaseline), mse(Method::ShapeRestricted));
    pass &= lm <= sr;
    verdict(
        pass,
        format!(
            "{} (all in [0.90, 0.98]); CDE MSE linear {lm:.3} ≤ shape-restricted {sr:.3}",
            parts.join(", ")
        ),
    )
}

fn ac8_decomposition() -> Verdict {
    let quad = QuadratureSpec::default();
    let mut worst = 0.0f64;
    for config in 0..100u64 {
        let pattern = Pattern::ALL[(config % 4) as usize];
        let (data, o, m) = fitted(pattern, SEED + 1000 + config, 200, 20.0);
        let q = EffectQuery::at_means(&data, 0.95);
        let nde = nde_with_gradient(&o, &m, &q, &quad).unwrap().estimate;
        let nie = nie_with_gradient(&o, &m, &q, &quad).unwrap().estimate;
        let te = total_with_gradient(&o, &m, &q, &quad).unwrap().estimate;
        worst = worst.max((nde + nie - te).abs());
    }
    verdict(
        worst <= 1e-8,
        format!("max |NDE + NIE − TE| = {worst:.2e} (≤ 1e-8)"),
    )
}

fn ac9_determinism() -> Verdict {
    let dir = tempfile::TempDir::new().unwrap();
    let config = dir.path().join("study.json");
    std::fs::write(
        &config,
        format!(r#"{{"pattern": "pattern1", "reps": 100, "sigma1": [10, 40], "seed": {SEED}}}"#),
    )
    .unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_shapemed"))
            .args([
                "simulate",
                "--config",
                config.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .env("SHAPEMED_THREADS", threads)
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        std::fs::read(out).unwrap()
    };
    let first = run("first.csv", "1");
    let second = run("second.csv", "1");
    let threaded = run("threaded.csv", "4");
    verdict(
        first == second && first == threaded && !first.is_empty(),
        format!(
            "{} bytes; repeat run identical: {}, 4-thread run identical: {}",
            first.len(),
            first == second,
            first == threaded
        ),
    )
}

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        verdict(false, format!("panicked: {msg}"))
    })
}

fn main() {
    let mut verdicts: Vec<(&str, Verdict)> = vec![
        ("AC1 spline integrals", guarded(ac1_spline_integrals)),
        (
            "AC2 cone projection vs exhaustive search",
            guarded(ac2_cone_oracle),
        ),
        (
            "AC3 delta-method gradients vs finite differences",
            guarded(ac3_gradients),
        ),
        ("AC4 expected_f vs Monte Carlo", guarded(ac4_expected_value)),
    ];

    let start = Instant::now();
    let studies = guarded_studies();
    let elapsed = start.elapsed();
    match &studies {
        Some((p1, p2, p3, linear)) => {
            let sr = [(Pattern::One, p1), (Pattern::Two, p2), (Pattern::Three, p3)];
            verdicts.push((
                "AC5 shape-restricted coverage",
                guarded(|| ac5_shape_restricted_coverage(&sr, elapsed)),
            ));
            verdicts.push((
                "AC6 linear-baseline coverage collapse",
                guarded(|| ac6_linear_collapse(p1)),
            ));
            verdicts.push((
                "AC7 linear-pattern parity",
                guarded(|| ac7_linear_parity(linear)),
            ));
        }
        None => {
            for name in [
                "AC5 shape-restricted coverage",
                "AC6 linear-baseline coverage collapse",
                "AC7 linear-pattern parity",
            ] {
                verdicts.push((name, verdict(false, "simulation study failed to run")));
            }
        }
    }
    verdicts.push(("AC8 decomposition identity", guarded(ac8_decomposition)));
    verdicts.push(("AC9 simulate determinism", guarded(ac9_determinism)));

    println!();
    for (name, v) in &verdicts {
        println!(
            "{} {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    let failed = verdicts.iter().filter(|(_, v)| !v.pass).count();
    println!(
        "\n{} of {} acceptance criteria passed",
        verdicts.len() - failed,
        verdicts.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

/// Pattern 1 over all four σ₁ levels, Patterns 2 and 3 at σ₁ ∈ {10, 40},
/// Linear at σ₁ = 10, all with 500 replicates of n = 500.
fn guarded_studies() -> Option<(StudyResult, StudyResult, StudyResult, StudyResult)> {
    catch_unwind(|| {
        (
            study(Pattern::One, &[10.0, 20.0, 30.0, 40.0]),
            study(Pattern::Two, &[10.0, 40.0]),
            study(Pattern::Three, &[10.0, 40.0]),
            study(Pattern::Linear, &[10.0]),
        )
    })
    .ok()
}
