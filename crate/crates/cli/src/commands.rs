//! Each command builds a complete TSV table in memory; `main` decides where it goes.

use std::fmt::{self, Write as _};

use divdiff::expr::{eval_delta, eval_plain, parse, Expr};
use divdiff::linalg::{parse_matrix_text, solve_delta_report, DeltaVector, SolveBranch};
use divdiff::oracle::{
    oracle_delta, oracle_eval, oracle_gradient, oracle_solve_delta, oracle_spline_delta, wide_point,
};
use divdiff::spline::{from_left_pieces, spline_eval_delta, Cubic, CubicSpline};
use divdiff::stagnation::{run_quadratic_experiment, ExperimentConfig, Method};
use divdiff::suite::stagnation_problem;
use divdiff::{DeltaError, DeltaScalar};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// A finished table and the exit status that goes with it.
pub struct Outcome {
    pub table: String,
    pub code: u8,
}

impl Outcome {
    fn ok(table: String) -> Self {
        Self { table, code: 0 }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Delta(DeltaError),
}

impl From<DeltaError> for CliError {
    fn from(e: DeltaError) -> Self {
        CliError::Delta(e)
    }
}

impl From<divdiff::expr::ParseError> for CliError {
    fn from(e: divdiff::expr::ParseError) -> Self {
        CliError::Delta(e.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Io(m) => f.write_str(m),
            CliError::Delta(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Delta(e) if !e.is_input_error() => EXIT_NUMERICAL,
            _ => EXIT_INPUT,
        }
    }
}

type CmdResult = Result<Outcome, CliError>;

/// Shortest round-trip form; plain `0` for zero.
pub fn num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.is_finite() {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// `|v − reference| / |reference|`, or the absolute error when the reference is zero.
pub fn rel_err(v: f64, reference: f64) -> f64 {
    let abs = (v - reference).abs();
    if reference == 0.0 {
        abs
    } else {
        abs / reference.abs()
    }
}

fn row(cols: &[String]) -> String {
    let mut line = cols.join("\t");
    line.push('\n');
    line
}

fn header(cols: &[&str]) -> String {
    format!("# {}\n", cols.join("\t"))
}

fn parse_expr(src: &str, x: &[f64]) -> Result<Expr, CliError> {
    Ok(parse(src, x.len())?)
}

fn check_same_len(what: &str, a: &[f64], b: &[f64]) -> Result<(), CliError> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what}: {} values but {} step components",
            a.len(),
            b.len()
        )))
    }
}

fn naive_delta(e: &Expr, x: &[f64], s: &[f64]) -> Result<f64, DeltaError> {
    let shifted: Vec<f64> = x.iter().zip(s).map(|(a, b)| a + b).collect();
    Ok(eval_plain(e, &shifted)? - eval_plain(e, x)?)
}

pub fn eval(src: &str, x: &[f64]) -> CmdResult {
    let e = parse_expr(src, x)?;
    let v = eval_plain(&e, x)?;
    Ok(Outcome::ok(header(&["value"]) + &row(&[num(v)])))
}

pub fn delta(src: &str, x: &[f64], s: &[f64]) -> CmdResult {
    check_same_len("-x/-s", x, s)?;
    let e = parse_expr(src, x)?;
    let (_, cdd) = eval_delta(&e, x, s)?;
    let naive = naive_delta(&e, x, s)?;
    let oracle = oracle_delta(&e, x, s)?;
    let mut out = header(&[
        "naive",
        "cdd",
        "oracle",
        "naive_abs_err",
        "naive_rel_err",
        "cdd_abs_err",
        "cdd_rel_err",
    ]);
    out += &row(&[
        num(naive),
        num(cdd),
        num(oracle),
        num((naive - oracle).abs()),
        num(rel_err(naive, oracle)),
        num((cdd - oracle).abs()),
        num(rel_err(cdd, oracle)),
    ]);
    Ok(Outcome::ok(out))
}

#[derive(Debug, Clone, Copy)]
pub struct SweepGrid {
    pub hi: f64,
    pub lo: f64,
    pub points: usize,
}

impl SweepGrid {
    /// Log-spaced magnitudes from `hi` down to `lo`. Integer exponents are
    /// produced by parsing `1eN`, so powers of ten are correctly rounded.
    pub fn magnitudes(&self) -> Result<Vec<f64>, CliError> {
        let SweepGrid { hi, lo, points } = *self;
        if !(hi.is_finite() && lo.is_finite() && lo > 0.0 && hi > lo) {
            return Err(CliError::Usage(format!(
                "sweep bounds must satisfy sweep-hi > sweep-lo > 0 (got {hi}, {lo})"
            )));
        }
        if points < 2 {
            return Err(CliError::Usage("--points must be at least 2".into()));
        }
        let (a, b) = (hi.log10(), lo.log10());
        Ok((0..points)
            .map(|k| {
                if k == 0 {
                    return hi;
                }
                if k == points - 1 {
                    return lo;
                }
                let t = a + (b - a) * k as f64 / (points - 1) as f64;
                let r = t.round();
                if (t - r).abs() < 1e-9 {
                    format!("1e{}", r as i64).parse().expect("valid literal")
                } else {
                    10f64.powf(t)
                }
            })
            .collect())
    }
}

pub fn sweep(src: &str, x: &[f64], direction: Option<&[f64]>, grid: SweepGrid) -> CmdResult {
    let ones = vec![1.0; x.len()];
    let dir = direction.unwrap_or(&ones);
    check_same_len("-x/-s", x, dir)?;
    let e = parse_expr(src, x)?;
    let mags = grid.magnitudes()?;
    let grad = oracle_gradient(&e, x)?;
    let stepped: Vec<bool> = dir.iter().map(|&v| v != 0.0).collect();
    let base = oracle_eval(&e, &wide_point(x, &vec![0.0; x.len()]), &stepped)?;
    let mut out = header(&["s", "oracle", "naive_rel_err", "cdd_rel_err", "taylor_rel_err"]);
    for t in mags {
        let s: Vec<f64> = dir.iter().map(|v| v * t).collect();
        let (_, cdd) = eval_delta(&e, x, &s)?;
        let naive = naive_delta(&e, x, &s)?;
        let oracle = (oracle_eval(&e, &wide_point(x, &s), &stepped)? - base.clone()).to_f64();
        let taylor: f64 = grad.iter().zip(&s).map(|(g, si)| g * si).sum();
        out += &row(&[
            num(t),
            num(oracle),
            num(rel_err(naive, oracle)),
            num(rel_err(cdd, oracle)),
            num(rel_err(taylor, oracle)),
        ]);
    }
    Ok(Outcome::ok(out))
}

/// `x³` on knots 0, 1, 2, every piece exact.
pub fn cube_spline() -> CubicSpline {
    let at = |xi: f64| Cubic::new(1.0, 3.0 * xi, 3.0 * xi * xi, xi * xi * xi);
    from_left_pieces(vec![0.0, 1.0, 2.0], at(0.0), vec![at(0.0), at(1.0), at(2.0)]).expect("valid spline")
}

pub fn spline_demo(src: Option<&str>, x: &[f64], s: &[f64]) -> CmdResult {
    check_same_len("-x/-s", x, s)?;
    let sp = match src {
        Some(text) => CubicSpline::parse(text)?,
        None => cube_spline(),
    };
    let mut out = header(&["x", "dx", "naive", "cdd", "oracle", "cdd_abs_err", "cdd_rel_err"]);
    for (&xi, &si) in x.iter().zip(s) {
        let cdd = spline_eval_delta(&sp, DeltaScalar::seed(xi, si)?)?.delta();
        let naive = sp.eval(xi + si) - sp.eval(xi);
        let oracle = oracle_spline_delta(&sp, xi, si)?;
        out += &row(&[
            num(xi),
            num(si),
            num(naive),
            num(cdd),
            num(oracle),
            num((cdd - oracle).abs()),
            num(rel_err(cdd, oracle)),
        ]);
    }
    Ok(Outcome::ok(out))
}

pub fn solve_demo(src: &str, b: Option<&[f64]>, db: Option<&[f64]>) -> CmdResult {
    let a = parse_matrix_text(src)?;
    let n = a.dim();
    let b = b.map(<[f64]>::to_vec).unwrap_or_else(|| vec![1.0; n]);
    let db = db.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    if b.len() != n || db.len() != n {
        return Err(CliError::Usage(format!(
            "{n}x{n} matrix needs {n} values for -x and -s (got {} and {})",
            b.len(),
            db.len()
        )));
    }
    let rhs = DeltaVector::new(b, db)?;
    let report = solve_delta_report(&a, &rhs)?;
    let oracle = oracle_solve_delta(&a, &rhs)?;
    let branch = match report.branch {
        SolveBranch::Series { terms } => format!("series:{terms}"),
        SolveBranch::Direct => "direct".to_string(),
    };
    let mut out = header(&["i", "x", "dx", "oracle", "abs_err", "branch"]);
    let sol = &report.solution;
    for i in 0..n {
        out += &row(&[
            i.to_string(),
            num(sol.values()[i]),
            num(sol.deltas()[i]),
            num(oracle[i]),
            num((sol.deltas()[i] - oracle[i]).abs()),
            branch.clone(),
        ]);
    }
    Ok(Outcome::ok(out))
}

pub fn stagnation_demo(dim: usize, cond: f64, method: Method, seed: u64, max_iters: usize) -> CmdResult {
    if !(cond.is_finite() && cond >= 1.0) {
        return Err(CliError::Usage(format!("--cond must be at least 1 (got {cond})")));
    }
    if dim == 0 {
        return Err(CliError::Usage("--dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = stagnation_problem(&mut rng, dim, cond)?;
    let cfg = ExperimentConfig {
        method,
        max_iters,
        ..ExperimentConfig::default()
    };
    let rep = run_quadratic_experiment(&q, &vec![0.0; dim], &cfg)?;
    let mut out = header(&["rule", "iterations", "stop", "final_rel_error"]);
    for (name, run) in [
        ("objective", &rep.objective_run),
        ("divided-difference", &rep.delta_run),
    ] {
        out += &row(&[
            name.to_string(),
            run.iterations.to_string(),
            run.stop.label().to_string(),
            num(run.final_error),
        ]);
    }
    writeln!(out, "ratio\t-\t-\t{}", num(rep.ratio)).expect("string write");
    let code = if rep.delta_run.final_error <= rep.objective_run.final_error {
        0
    } else {
        EXIT_CHECK_FAILED
    };
    Ok(Outcome { table: out, code })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_hits_powers_of_ten_exactly() {
        let g = SweepGrid {
            hi: 1e-1,
            lo: 1e-20,
            points: 20,
        }
        .magnitudes()
        .unwrap();
        assert_eq!(g.len(), 20);
        for (k, v) in g.iter().enumerate() {
            let want: f64 = format!("1e-{}", k + 1).parse().unwrap();
            assert_eq!(*v, want);
        }
    }

    #[test]
    fn grid_validation() {
        let bad = |hi, lo, points| SweepGrid { hi, lo, points }.magnitudes().is_err();
        assert!(bad(1e-20, 1e-1, 20));
        assert!(bad(1.0, 0.0, 20));
        assert!(bad(1.0, 1e-3, 1));
        assert!(bad(f64::INFINITY, 1e-3, 5));
    }

    #[test]
    fn numbers_round_trip() {
        for v in [2e-18, 1.0 / 3.0, -7.25, 1e300] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(0.0), "0");
        assert_eq!(num(-0.0), "0");
    }

    #[test]
    fn relative_error_handles_zero_reference() {
        assert_eq!(rel_err(0.0, 0.0), 0.0);
        assert_eq!(rel_err(1e-30, 0.0), 1e-30);
        assert_eq!(rel_err(2.0, 4.0), 0.5);
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_INPUT);
        assert_eq!(
            CliError::Delta(DeltaError::Singular("A".into())).exit_code(),
            EXIT_INPUT
        );
        assert_eq!(
            CliError::Delta(DeltaError::Numerical("d".into())).exit_code(),
            EXIT_NUMERICAL
        );
        assert_eq!(
            CliError::Delta(DeltaError::Overflow { op: "exp" }).exit_code(),
            EXIT_NUMERICAL
        );
    }
}
