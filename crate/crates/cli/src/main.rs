//! `shapemed`: fit shape-restricted mediation models to CSV data, run
//! simulation studies and dump spline bases.

mod basis;
mod error;
mod fit;
mod ingest;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shapemed::{Shape, ShapeSpec, SplineKind};

use crate::error::{CliError, CliResult, EXIT_REPLICATES};
use crate::ingest::ColumnMapping;

#[derive(Parser)]
#[command(
    name = "shapemed",
    version,
    about = "Shape-restricted causal mediation analysis"
)]
struct Cli {
    /// Worker threads for simulation studies (all cores when unset).
    #[arg(long, global = true, env = simulate::THREADS_ENV)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the mediator and outcome models to a CSV file and report effects as JSON.
    Fit(FitArgs),
    /// Run a simulation study from a JSON config and write the summary table as CSV.
    Simulate(SimulateArgs),
    /// Evaluate an I-spline or C-spline basis on a grid and write CSV.
    Basis(BasisArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    outcome: String,
    /// Binary exposure column coded 0/1.
    #[arg(long)]
    exposure: String,
    #[arg(long)]
    mediator: String,
    /// Comma-separated confounder columns; non-numeric columns are one-hot encoded.
    #[arg(long, value_delimiter = ',')]
    confounders: Vec<String>,
    /// Shape of the outcome curve among the exposed.
    #[arg(long)]
    shape_exposed: Shape,
    /// Shape of the outcome curve among the unexposed.
    #[arg(long)]
    shape_unexposed: Shape,
    /// Spline basis functions per curve.
    #[arg(long, default_value_t = 5)]
    bases: usize,
    /// Confidence level of the intervals.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Exposure level `a` of the contrast.
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    /// Reference exposure level `a*`.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    a_star: f64,
    /// Mediator value for the controlled direct effect (default: sample mean).
    #[arg(long, allow_negative_numbers = true)]
    at_mediator: Option<f64>,
    /// Comma-separated confounder values, one per design column (default: sample means).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    at_confounders: Option<Vec<f64>>,
    /// JSON report path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Study configuration in JSON.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Summary CSV path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional per-replicate CSV.
    #[arg(long)]
    replicates_out: Option<PathBuf>,
}

#[derive(Args)]
struct BasisArgs {
    /// Basis family: `ispline` (quadratic I-splines) or `cspline` (cubic C-splines).
    #[arg(long, value_parser = basis::parse_kind)]
    kind: SplineKind,
    /// Full knot sequence with doubled boundary knots, e.g. `0,0,1,2,2`.
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_hyphen_values = true
    )]
    knots: Vec<f64>,
    /// Grid start (default: lower boundary knot).
    #[arg(long, allow_negative_numbers = true)]
    from: Option<f64>,
    /// Grid end (default: upper boundary knot).
    #[arg(long, allow_negative_numbers = true)]
    to: Option<f64>,
    /// Number of grid points.
    #[arg(long, default_value_t = 101)]
    points: usize,
    /// CSV path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::input(format!(
                "{} must be at least 1",
                simulate::THREADS_ENV
            )));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(CliError::other)?;
    }
    Ok(())
}

fn cmd_fit(args: FitArgs) -> CliResult<()> {
    let req = fit::FitRequest {
        input: args.input,
        columns: ColumnMapping {
            outcome: args.outcome,
            exposure: args.exposure,
            mediator: args.mediator,
            confounders: args
                .confounders
                .into_iter()
                .filter(|c| !c.is_empty())
                .collect(),
        },
        shapes: ShapeSpec::new(args.shape_exposed, args.shape_unexposed),
        num_bases: args.bases,
        a: args.a,
        a_star: args.a_star,
        m: args.at_mediator,
        c: args.at_confounders,
        level: args.level,
    };
    let report = fit::run_fit(&req)?;
    fit::write_report(&report, args.out.as_deref())?;
    if args.out.is_some() {
        print!("{}", fit::describe(&report));
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let config = simulate::load_config(&args.config, args.seed)?;
    let result = simulate::run(&config)?;
    simulate::write_output(&simulate::summary_csv(&result)?, args.out.as_deref())?;
    if let Some(path) = &args.replicates_out {
        simulate::write_output(&simulate::replicates_csv(&result)?, Some(path))?;
    }
    let summary = simulate::describe(&result);
    if args.out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    if !result.failures.is_empty() {
        return Err(CliError::new(
            EXIT_REPLICATES,
            anyhow::anyhow!("{} replicate(s) failed", result.failures.len()),
        ));
    }
    Ok(())
}

fn cmd_basis(args: BasisArgs) -> CliResult<()> {
    let knots = basis::knots_from_args(&args.knots)?;
    let from = args.from.unwrap_or(knots.lower());
    let to = args.to.unwrap_or(knots.upper());
    if !(from.is_finite() && to.is_finite()) {
        return Err(CliError::input("grid bounds must be finite"));
    }
    let xs = basis::grid(from, to, args.points);
    basis::write_output(
        &basis::basis_csv(args.kind, &knots, &xs)?,
        args.out.as_deref(),
    )
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Basis(args) => cmd_basis(args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("shapemed: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
