use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

use commands::{CliError, Outcome};

/// Divided differences without cancellation: demos and accuracy tables.
#[derive(Parser, Debug)]
#[command(name = "divdiff", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate an expression at a point.
    Eval(PointArgs),
    /// Compare naive subtraction, divided differencing and the oracle for one step.
    Delta(StepArgs),
    /// Sweep the step size over a log grid and tabulate the errors of each method.
    Sweep(SweepArgs),
    /// Spline difference across knots versus the oracle.
    SplineDemo(SplineArgs),
    /// Perturbed linear solve versus two extended-precision solves.
    SolveDemo(SolveArgs),
    /// Objective-value versus divided-difference stagnation on a quadratic.
    StagnationDemo(StagnationArgs),
}

#[derive(Args, Debug)]
struct Output {
    /// Write the table here instead of standard output.
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PointArgs {
    /// Expression over x0, x1, ...
    #[arg(short = 'e', long = "expr")]
    expr: String,
    /// Comma-separated input values.
    #[arg(short = 'x', value_delimiter = ',', allow_negative_numbers = true, required = true)]
    x: Vec<f64>,
    #[command(flatten)]
    out: Output,
}

#[derive(Args, Debug)]
struct StepArgs {
    #[arg(short = 'e', long = "expr")]
    expr: String,
    #[arg(short = 'x', value_delimiter = ',', allow_negative_numbers = true, required = true)]
    x: Vec<f64>,
    /// Comma-separated step components, one per input.
    #[arg(short = 's', value_delimiter = ',', allow_negative_numbers = true, required = true)]
    s: Vec<f64>,
    #[command(flatten)]
    out: Output,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(short = 'e', long = "expr")]
    expr: String,
    #[arg(short = 'x', value_delimiter = ',', allow_negative_numbers = true, required = true)]
    x: Vec<f64>,
    /// Step direction; scaled by each grid magnitude. Defaults to all ones.
    #[arg(short = 's', value_delimiter = ',', allow_negative_numbers = true)]
    s: Option<Vec<f64>>,
    #[arg(long = "sweep-hi", default_value_t = 1e-1)]
    hi: f64,
    #[arg(long = "sweep-lo", default_value_t = 1e-20)]
    lo: f64,
    #[arg(long = "points", default_value_t = 20)]
    points: usize,
    #[command(flatten)]
    out: Output,
}

#[derive(Args, Debug)]
struct SplineArgs {
    /// Spline file; the cube spline on knots 0, 1, 2 when omitted.
    #[arg(long = "spline")]
    spline: Option<PathBuf>,
    #[arg(short = 'x', value_delimiter = ',', allow_negative_numbers = true, required = true)]
    x: Vec<f64>,
    #[arg(short = 's', value_delimiter = ',', allow_negative_numbers = true, required = true)]
    s: Vec<f64>,
    #[command(flatten)]
    out: Output,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Matrix file holding A and optionally ΔA.
    #[arg(long = "matrix")]
    matrix: PathBuf,
    /// Right-hand side b; all ones when omitted.
    #[arg(short = 'x', value_delimiter = ',', allow_negative_numbers = true)]
    x: Option<Vec<f64>>,
    /// Perturbation Δb; zero when omitted.
    #[arg(short = 's', value_delimiter = ',', allow_negative_numbers = true)]
    s: Option<Vec<f64>>,
    #[command(flatten)]
    out: Output,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MethodArg {
    Sd,
    Newton,
}

#[derive(Args, Debug)]
struct StagnationArgs {
    #[arg(long = "dim", default_value_t = 10)]
    dim: usize,
    #[arg(long = "cond", default_value_t = 1e4, allow_negative_numbers = true)]
    cond: f64,
    #[arg(long = "method", value_enum, default_value_t = MethodArg::Sd)]
    method: MethodArg,
    #[arg(long = "seed", default_value_t = 0)]
    seed: u64,
    #[arg(long = "max-iters", default_value_t = 1_000_000)]
    max_iters: usize,
    #[command(flatten)]
    out: Output,
}

fn dispatch(cmd: Command) -> (Result<Outcome, CliError>, Option<PathBuf>) {
    match cmd {
        Command::Eval(a) => (commands::eval(&a.expr, &a.x), a.out.output),
        Command::Delta(a) => (commands::delta(&a.expr, &a.x, &a.s), a.out.output),
        Command::Sweep(a) => {
            let grid = commands::SweepGrid {
                hi: a.hi,
                lo: a.lo,
                points: a.points,
            };
            (commands::sweep(&a.expr, &a.x, a.s.as_deref(), grid), a.out.output)
        }
        Command::SplineDemo(a) => {
            let src = match a.spline.as_ref().map(fs::read_to_string).transpose() {
                Ok(src) => src,
                Err(e) => return (Err(CliError::Io(e.to_string())), a.out.output),
            };
            (commands::spline_demo(src.as_deref(), &a.x, &a.s), a.out.output)
        }
        Command::SolveDemo(a) => {
            let src = match fs::read_to_string(&a.matrix) {
                Ok(src) => src,
                Err(e) => return (Err(CliError::Io(format!("{}: {e}", a.matrix.display()))), a.out.output),
            };
            (commands::solve_demo(&src, a.x.as_deref(), a.s.as_deref()), a.out.output)
        }
        Command::StagnationDemo(a) => {
            let method = match a.method {
                MethodArg::Sd => divdiff::stagnation::Method::SteepestDescent,
                MethodArg::Newton => divdiff::stagnation::Method::Newton,
            };
            (
                commands::stagnation_demo(a.dim, a.cond, method, a.seed, a.max_iters),
                a.out.output,
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, output) = dispatch(cli.command);
    match result {
        Ok(outcome) => {
            let written = match output {
                Some(path) => fs::write(&path, &outcome.table).map_err(|e| format!("{}: {e}", path.display())),
                None => {
                    print!("{}", outcome.table);
                    Ok(())
                }
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            ExitCode::from(outcome.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
