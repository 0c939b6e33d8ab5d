//! Monte Carlo study of the shape-restricted estimator against the linear
//! interaction baseline.
//!
//! Each replicate draws a birth-weight style cohort (seven confounders, a
//! binary exposure, a normal mediator and an outcome built from one of four
//! mediator–outcome patterns), fits both methods, and compares the
//! estimated CDE, NDE and NIE with the truth at the replicate's mediator and
//! confounder means.
//!
//! Replicate `r` always draws from stream `r` of a ChaCha8 generator seeded
//! with the study seed, so results do not depend on scheduling. The outcome
//! noise is drawn as a standard normal and scaled by σ₁, which means every σ₁
//! level sees the same cohorts.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::effects::{
    fit_linear_outcome, linear_effects, mediation_effects, EffectEstimate, EffectKind, EffectQuery,
};
use crate::models::{fit_mediator, fit_outcome, Dataset, Shape, ShapeSpec};
use crate::quadrature::QuadratureSpec;
use crate::{Error, Result};

/// Mediator–outcome curves used to generate data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pattern {
    #[serde(rename = "pattern1", alias = "Pattern1")]
    One,
    #[serde(rename = "pattern2", alias = "Pattern2")]
    Two,
    #[serde(rename = "pattern3", alias = "Pattern3")]
    Three,
    #[serde(rename = "linear", alias = "Linear")]
    Linear,
}

fn logistic_curve(m: f64) -> f64 {
    let e = (1.2 * m).exp();
    50.0 * e / (2.0 + e) + 50.0
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [Pattern::One, Pattern::Two, Pattern::Three, Pattern::Linear];

    /// Curve for exposed subjects.
    pub fn f1(self, m: f64) -> f64 {
        match self {
            Pattern::One => -6.0 * (m - 5.0 / 3.0).powi(2) / 5.0 + 100.0,
            Pattern::Two => (-m.exp() - 100.0 * m * m) / 50.0 + 100.0,
            Pattern::Three => logistic_curve(m),
            Pattern::Linear => 5.5 * m + 70.0,
        }
    }

    /// Curve for unexposed subjects.
    pub fn f2(self, m: f64) -> f64 {
        match self {
            Pattern::One => logistic_curve(m),
            Pattern::Two => -6.0 * (m + 5.0 / 3.0).powi(2) / 5.0 + 100.0,
            Pattern::Three => 300.0 * (-(m / 2.0).exp() + m + 40.0).ln() - 1000.0,
            Pattern::Linear => 9.5 * m + 60.0,
        }
    }

    /// Shapes the curves satisfy, used when fitting.
    pub fn shapes(self) -> ShapeSpec {
        match self {
            Pattern::One => ShapeSpec::new(Shape::Concave, Shape::Increasing),
            Pattern::Two => ShapeSpec::new(Shape::Concave, Shape::Concave),
            Pattern::Three => ShapeSpec::new(Shape::Increasing, Shape::Concave),
            Pattern::Linear => ShapeSpec::new(Shape::Increasing, Shape::Increasing),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Pattern::One => "pattern1",
            Pattern::Two => "pattern2",
            Pattern::Three => "pattern3",
            Pattern::Linear => "linear",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pattern1" | "1" => Ok(Pattern::One),
            "pattern2" | "2" => Ok(Pattern::Two),
            "pattern3" | "3" => Ok(Pattern::Three),
            "linear" => Ok(Pattern::Linear),
            _ => Err(Error::InvalidArgument(format!("unknown pattern `{s}`"))),
        }
    }
}

/// Encoded confounder columns, first level of each factor dropped.
pub const CONFOUNDER_NAMES: [&str; 12] = [
    "age",
    "inv_weight",
    "race2",
    "race3",
    "race4",
    "race5",
    "season2",
    "season3",
    "season4",
    "smoking",
    "ovum_donor",
    "diabetes",
];

pub const RACE_PROBS: [f64; 5] = [0.46, 0.28, 0.13, 0.10, 0.03];

/// Population means of the encoded confounder columns.
pub fn confounder_expectation() -> [f64; 12] {
    [
        29.0, 0.00815, 0.28, 0.13, 0.10, 0.03, 0.25, 0.25, 0.25, 0.05, 0.02, 0.05,
    ]
}

/// Raw confounders, one entry per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfounderTable {
    /// Years, on the half-year grid 18..=40.
    pub age: Vec<f64>,
    /// Inverse maternal weight on the grid 0.0020..=0.0143, step 0.0001.
    pub inverse_weight: Vec<f64>,
    /// Race level in 0..5.
    pub race: Vec<usize>,
    /// Season level in 0..4.
    pub season: Vec<usize>,
    pub smoking: Vec<bool>,
    pub ovum_donor: Vec<bool>,
    pub diabetes: Vec<bool>,
}

impl ConfounderTable {
    pub fn len(&self) -> usize {
        self.age.len()
    }

    pub fn is_empty(&self) -> bool {
        self.age.is_empty()
    }

    /// Design columns in [`CONFOUNDER_NAMES`] order.
    pub fn encode(&self) -> DMatrix<f64> {
        let n = self.len();
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        DMatrix::from_fn(n, CONFOUNDER_NAMES.len(), |i, j| match j {
            0 => self.age[i],
            1 => self.inverse_weight[i],
            2..=5 => flag(self.race[i] == j - 1),
            6..=8 => flag(self.season[i] == j - 5),
            9 => flag(self.smoking[i]),
            10 => flag(self.ovum_donor[i]),
            _ => flag(self.diabetes[i]),
        })
    }
}

pub fn gen_confounders<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ConfounderTable {
    let race_dist = WeightedIndex::new(RACE_PROBS).expect("valid race weights");
    let mut t = ConfounderTable {
        age: Vec::with_capacity(n),
        inverse_weight: Vec::with_capacity(n),
        race: Vec::with_capacity(n),
        season: Vec::with_capacity(n),
        smoking: Vec::with_capacity(n),
        ovum_donor: Vec::with_capacity(n),
        diabetes: Vec::with_capacity(n),
    };
    for _ in 0..n {
        t.age.push(18.0 + 0.5 * rng.random_range(0..=44u32) as f64);
        t.inverse_weight
            .push(rng.random_range(20..=143u32) as f64 / 10_000.0);
        t.race.push(race_dist.sample(rng));
        t.season.push(rng.random_range(0..4usize));
        t.smoking.push(rng.random_bool(0.05));
        t.ovum_donor.push(rng.random_bool(0.02));
        t.diabetes.push(rng.random_bool(0.05));
    }
    t
}

/// Linear parts of the generating outcome and mediator models.
///
/// ```text
/// M = γ₀ + γ₁A + γ₂ᵀC + ε₂
/// Y = β₀ + β₁A + f₁(M)A + f₂(M)(1 − A) + β₄ᵀC + ε₁
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorCoefficients {
    pub beta0: f64,
    pub beta1: f64,
    pub beta4: Vec<f64>,
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: Vec<f64>,
}

impl Default for GeneratorCoefficients {
    /// `γ₀` centers the unexposed mediator at zero for the population
    /// confounder means. Age carries most of the mediator's spread
    /// (standard deviation about 1.8), which keeps Pattern 3 inside its
    /// domain and gives the linear baseline a visible misspecification bias.
    fn default() -> Self {
        let gamma2 = vec![
            0.275, 50.0, 0.1, -0.1, 0.05, -0.05, 0.05, 0.1, -0.05, -0.2, 0.1, 0.15,
        ];
        let ec = confounder_expectation();
        let gamma0 = -gamma2.iter().zip(ec).map(|(g, c)| g * c).sum::<f64>();
        Self {
            beta0: 3200.0,
            beta1: 16.0,
            beta4: vec![
                5.0, -20_000.0, -60.0, -40.0, -20.0, -30.0, 10.0, -5.0, 5.0, -150.0, -50.0, 80.0,
            ],
            gamma0,
            gamma1: 0.3,
            gamma2,
        }
    }
}

impl GeneratorCoefficients {
    fn validate(&self) -> Result<()> {
        let d = CONFOUNDER_NAMES.len();
        if self.beta4.len() != d || self.gamma2.len() != d {
            return Err(Error::InvalidArgument(format!(
                "generator needs {d} confounder coefficients per model, got β₄ {} and γ₂ {}",
                self.beta4.len(),
                self.gamma2.len()
            )));
        }
        let all = [self.beta0, self.beta1, self.gamma0, self.gamma1];
        if all
            .iter()
            .chain(&self.beta4)
            .chain(&self.gamma2)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument(
                "generator coefficients must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn mediator_mean(&self, a: f64, c: &[f64]) -> f64 {
        self.gamma0 + self.gamma1 * a + dot(&self.gamma2, c)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn deserialize_sigma1<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

fn default_n() -> usize {
    500
}
fn default_reps() -> usize {
    500
}
fn default_sigma1() -> Vec<f64> {
    vec![10.0, 20.0, 30.0, 40.0]
}
fn default_sigma2() -> f64 {
    0.3
}
fn default_num_bases() -> usize {
    5
}
fn default_level() -> f64 {
    0.95
}

/// Study settings. `sigma1` accepts a single value or a list in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub pattern: Pattern,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_sigma1", deserialize_with = "deserialize_sigma1")]
    pub sigma1: Vec<f64>,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default)]
    pub generator_coefficients: GeneratorCoefficients,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_num_bases")]
    pub num_bases: usize,
    #[serde(default = "default_level")]
    pub level: f64,
}

impl StudyConfig {
    pub fn new(pattern: Pattern) -> Self {
        Self {
            pattern,
            n: default_n(),
            reps: default_reps(),
            sigma1: default_sigma1(),
            sigma2: default_sigma2(),
            generator_coefficients: GeneratorCoefficients::default(),
            seed: 0,
            num_bases: default_num_bases(),
            level: default_level(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma1.is_empty() || self.sigma1.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(
                "sigma1 values must be positive".into(),
            ));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidArgument("sigma2 must be positive".into()));
        }
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if self.n < 30 {
            return Err(Error::InvalidArgument("n must be at least 30".into()));
        }
        if self.num_bases < 2 {
            return Err(Error::InvalidArgument(
                "num_bases must be at least 2".into(),
            ));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument("level must lie in (0, 1)".into()));
        }
        self.generator_coefficients.validate()
    }

    /// Generator for replicate `replicate`.
    pub fn replicate_rng(&self, replicate: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replicate as u64);
        rng
    }
}

/// One simulated cohort with its encoded confounders.
pub fn gen_dataset<R: Rng + ?Sized>(
    pattern: Pattern,
    coefs: &GeneratorCoefficients,
    n: usize,
    sigma1: f64,
    sigma2: f64,
    rng: &mut R,
) -> Result<Dataset> {
    coefs.validate()?;
    let c = gen_confounders(n, rng).encode();
    let a: Vec<f64> = (0..n)
        .map(|_| f64::from(u8::from(rng.random_bool(0.5))))
        .collect();
    let mut m = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for (i, &ai) in a.iter().enumerate() {
        let row: Vec<f64> = c.row(i).iter().copied().collect();
        let e2: f64 = StandardNormal.sample(rng);
        let e1: f64 = StandardNormal.sample(rng);
        let mi = coefs.mediator_mean(ai, &row) + sigma2 * e2;
        let curve = if ai == 1.0 {
            pattern.f1(mi)
        } else {
            pattern.f2(mi)
        };
        y.push(coefs.beta0 + coefs.beta1 * ai + curve + dot(&coefs.beta4, &row) + sigma1 * e1);
        m.push(mi);
    }
    Dataset::new(
        DVector::from_vec(y),
        DVector::from_vec(a),
        DVector::from_vec(m),
        c,
        CONFOUNDER_NAMES.iter().map(|s| s.to_string()).collect(),
    )
}

/// True CDE, NDE and NIE for `a = 1, a* = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueEffects {
    pub cde: f64,
    pub nde: f64,
    pub nie: f64,
}

impl TrueEffects {
    pub fn get(&self, kind: EffectKind) -> f64 {
        match kind {
            EffectKind::Cde => self.cde,
            EffectKind::Nde => self.nde,
            EffectKind::Nie => self.nie,
            EffectKind::Total => self.nde + self.nie,
        }
    }
}

/// Effects implied by the generating model at confounders `c_bar`, with
/// the CDE taken at mediator value `m_bar`.
pub fn true_effects(
    pattern: Pattern,
    coefs: &GeneratorCoefficients,
    sigma2: f64,
    c_bar: &[f64],
    m_bar: f64,
) -> Result<TrueEffects> {
    if c_bar.len() != coefs.gamma2.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} confounder values for {} coefficients",
            c_bar.len(),
            coefs.gamma2.len()
        )));
    }
    let quad = QuadratureSpec::default();
    let var = sigma2 * sigma2;
    let mu1 = coefs.mediator_mean(1.0, c_bar);
    let mu0 = coefs.mediator_mean(0.0, c_bar);
    let e1 = |mu| quad.normal_expectation(|m| pattern.f1(m), mu, var, &[]);
    let e2 = |mu| quad.normal_expectation(|m| pattern.f2(m), mu, var, &[]);
    let e1_at_0 = e1(mu0)?;
    Ok(TrueEffects {
        cde: coefs.beta1 + pattern.f1(m_bar) - pattern.f2(m_bar),
        nde: coefs.beta1 + e1_at_0 - e2(mu0)?,
        nie: e1(mu1)? - e1_at_0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "shape_restricted")]
    ShapeRestricted,
    #[serde(rename = "linear")]
    LinearBaseline,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::ShapeRestricted, Method::LinearBaseline];

    pub fn label(self) -> &'static str {
        match self {
            Method::ShapeRestricted => "shape_restricted",
            Method::LinearBaseline => "linear",
        }
    }
}

pub const EFFECTS: [EffectKind; 3] = [EffectKind::Cde, EffectKind::Nde, EffectKind::Nie];

/// One estimate from one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub sigma1: f64,
    pub replicate: usize,
    pub method: Method,
    pub effect: EffectKind,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub truth: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub sigma1: f64,
    pub replicate: usize,
    pub message: String,
}

/// One row of the study table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub pattern: Pattern,
    pub method: Method,
    pub effect: EffectKind,
    pub sigma1: f64,
    pub coverage: f64,
    pub avg_abs_rel_bias: f64,
    pub avg_mse: f64,
    /// Average signed error, used for the bias–variance check.
    pub avg_bias: f64,
    pub replicates: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub summaries: Vec<SummaryRow>,
    pub records: Vec<ReplicateRecord>,
    pub failures: Vec<ReplicateFailure>,
}

impl StudyResult {
    pub fn summary(&self, method: Method, effect: EffectKind, sigma1: f64) -> Option<&SummaryRow> {
        self.summaries
            .iter()
            .find(|s| s.method == method && s.effect == effect && s.sigma1 == sigma1)
    }
}

/// Fit both methods to one cohort and score them against the truth.
pub fn run_replicate(
    config: &StudyConfig,
    sigma1: f64,
    replicate: usize,
) -> Result<Vec<ReplicateRecord>> {
    let mut rng = config.replicate_rng(replicate);
    let coefs = &config.generator_coefficients;
    let full = gen_dataset(
        config.pattern,
        coefs,
        config.n,
        sigma1,
        config.sigma2,
        &mut rng,
    )?;
    let truth = true_effects(
        config.pattern,
        coefs,
        config.sigma2,
        &full.confounder_means(),
        full.mediator_mean(),
    )?;

    let data = full.without_constant_confounders();
    let query = EffectQuery::at_means(&data, config.level);
    let mediator = fit_mediator(&data)?;
    let outcome = fit_outcome(&data, config.pattern.shapes(), config.num_bases)?;
    let shape = mediation_effects(&outcome, &mediator, &query, &QuadratureSpec::default())?;
    let linear = linear_effects(&fit_linear_outcome(&data)?, &mediator, &query)?;

    let record = |method, e: &EffectEstimate| {
        let truth = truth.get(e.kind);
        ReplicateRecord {
            sigma1,
            replicate,
            method,
            effect: e.kind,
            estimate: e.estimate,
            std_error: e.std_error,
            ci_lower: e.ci_lower,
            ci_upper: e.ci_upper,
            truth,
            covered: e.covers(truth),
        }
    };
    Ok(shape
        .iter()
        .map(|e| record(Method::ShapeRestricted, e))
        .chain(linear.iter().map(|e| record(Method::LinearBaseline, e)))
        .collect())
}

/// Run every replicate at every σ₁ level and tabulate.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let jobs: Vec<(f64, usize)> = config
        .sigma1
        .iter()
        .flat_map(|&s| (0..config.reps).map(move |r| (s, r)))
        .collect();
    let outcomes: Vec<Result<Vec<ReplicateRecord>>> = jobs
        .par_iter()
        .map(|&(s, r)| run_replicate(config, s, r))
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (&(sigma1, replicate), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(r) => records.extend(r),
            Err(e) => failures.push(ReplicateFailure {
                sigma1,
                replicate,
                message: e.to_string(),
            }),
        }
    }

    let mut summaries = Vec::new();
    for &sigma1 in &config.sigma1 {
        let failed = failures.iter().filter(|f| f.sigma1 == sigma1).count();
        for method in Method::ALL {
            for effect in EFFECTS {
                let rows: Vec<&ReplicateRecord> = records
                    .iter()
                    .filter(|r| r.sigma1 == sigma1 && r.method == method && r.effect == effect)
                    .collect();
                summaries.push(summarize(
                    config.pattern,
                    method,
                    effect,
                    sigma1,
                    &rows,
                    failed,
                ));
            }
        }
    }
    Ok(StudyResult {
        config: config.clone(),
        summaries,
        records,
        failures,
    })
}

fn summarize(
    pattern: Pattern,
    method: Method,
    effect: EffectKind,
    sigma1: f64,
    rows: &[&ReplicateRecord],
    failures: usize,
) -> SummaryRow {
    let n = rows.len();
    let mean = |f: &dyn Fn(&ReplicateRecord) -> f64| {
        if n == 0 {
            f64::NAN
        } else {
            rows.iter().map(|r| f(r)).sum::<f64>() / n as f64
        }
    };
    SummaryRow {
        pattern,
        method,
        effect,
        sigma1,
        coverage: mean(&|r| f64::from(u8::from(r.covered))),
        avg_abs_rel_bias: mean(&|r| ((r.estimate - r.truth) / r.truth).abs()),
        avg_mse: mean(&|r| (r.estimate - r.truth).powi(2)),
        avg_bias: mean(&|r| r.estimate - r.truth),
        replicates: n,
        failures,
    }
}
