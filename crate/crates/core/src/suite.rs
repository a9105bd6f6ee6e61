//! Random problem generators shared by the accuracy tests and the CLI.
//!
//! Expressions are filtered to a "safe domain": intermediate values stay
//! moderate, singular points stay at a distance, and intermediate slopes stay
//! bounded across the whole step. Inside that domain the divided-difference
//! rules are expected to meet the accuracy bound; outside it the bound itself
//! says nothing useful.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::expr::{Expr, Func};
use crate::linalg::{DeltaMatrix, DeltaVector, Matrix};
use crate::optim::QuadraticObjective;
use crate::scalar::DeltaScalar;
use crate::spline::{from_left_pieces, Cubic, CubicSpline};

/// Largest tree depth produced by [`random_expr`].
pub const MAX_EXPR_DEPTH: usize = 8;

/// Limits that define the safe domain of an expression around a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeDomain {
    /// Bound on `|u|` and `|u + Δu|` at every node.
    pub max_magnitude: f64,
    /// Minimum `|u|` for arguments of `log`, `recip`, `sqrt`, division and `pow` bases.
    pub min_pole_distance: f64,
    /// Bound on `|Δu| / |s|` at every node.
    pub max_slope: f64,
    /// Lower bound on `|Δu| / |s|` for nodes whose difference is not exactly
    /// zero. Rejects subtrees such as `x0 / x0` that are constant in exact
    /// arithmetic but carry rounding residue into their parents.
    pub min_slope: f64,
    /// Bound on cancellation at sums and products: operand magnitudes of a sum
    /// against its value at either endpoint, and the terms of the difference
    /// rule against `|r| + |r + Δr|`, and `|r| + |Δr|` against the rebuilt
    /// shifted value `|r + Δr|` at every node. The relative condition numbers
    /// of `log` and `exp` are held to the same bound. Infinite disables the check.
    pub max_cancellation: f64,
}

impl Default for SafeDomain {
    fn default() -> Self {
        Self {
            max_magnitude: 1e3,
            min_pole_distance: 0.05,
            max_slope: 30.0,
            min_slope: 1e-3,
            max_cancellation: f64::INFINITY,
        }
    }
}

impl SafeDomain {
    /// The default domain with sums and products limited to 8-fold cancellation,
    /// for steps large enough that the endpoint values themselves set the error scale.
    pub fn well_conditioned() -> Self {
        Self {
            max_cancellation: 8.0,
            ..Self::default()
        }
    }
}

const LITERALS: [f64; 8] = [0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 0.25];
const EXPONENTS: [f64; 8] = [2.0, 0.5, -1.0, 3.0, 1.5, -0.5, 2.5, 0.25];

fn random_leaf<R: Rng + ?Sized>(rng: &mut R, arity: usize) -> Expr {
    if arity > 0 && rng.gen_bool(0.7) {
        Expr::Var(rng.gen_range(0..arity))
    } else if rng.gen_bool(0.5) {
        Expr::Literal(*LITERALS.choose(rng).expect("nonempty"))
    } else {
        // Random literal on a 1/64 grid in [0.25, 4].
        Expr::Literal(rng.gen_range(16..=256) as f64 / 64.0)
    }
}

fn random_node<R: Rng + ?Sized>(rng: &mut R, depth: usize, arity: usize) -> Expr {
    if depth <= 1 || rng.gen_bool(0.2) {
        return random_leaf(rng, arity);
    }
    let sub = |rng: &mut R| Box::new(random_node(rng, depth - 1, arity));
    match rng.gen_range(0..13) {
        0 | 1 => Expr::Add(sub(rng), sub(rng)),
        2 | 3 => Expr::Sub(sub(rng), sub(rng)),
        4 | 5 => Expr::Mul(sub(rng), sub(rng)),
        6 => Expr::Div(sub(rng), sub(rng)),
        7 => Expr::Neg(sub(rng)),
        8 => {
            let base = sub(rng);
            Expr::Pow(base, Box::new(Expr::Literal(*EXPONENTS.choose(rng).expect("nonempty"))))
        }
        _ => {
            let f = *Func::ALL.choose(rng).expect("nonempty");
            Expr::Call(f, sub(rng))
        }
    }
}

/// An unfiltered random tree of depth at most `max_depth` over `x0..x{arity-1}`.
pub fn random_expr<R: Rng + ?Sized>(rng: &mut R, max_depth: usize, arity: usize) -> Expr {
    random_node(rng, max_depth.clamp(1, MAX_EXPR_DEPTH), arity)
}

/// Walks `e` over `(x, s)` and checks every node against `dom`.
pub fn within_safe_domain(e: &Expr, x: &[f64], s: &[f64], dom: &SafeDomain) -> bool {
    let step = s.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let seeds: Option<Vec<DeltaScalar>> = x.iter().zip(s).map(|(&a, &b)| DeltaScalar::seed(a, b).ok()).collect();
    match seeds {
        Some(seeds) => check_node(e, &seeds, step, dom).is_some(),
        None => false,
    }
}

fn away_from_pole(u: DeltaScalar, dom: &SafeDomain) -> bool {
    let (a, b) = (u.value(), u.shifted_value());
    a.abs() >= dom.min_pole_distance && b.abs() >= dom.min_pole_distance && (a > 0.0) == (b > 0.0)
}

fn positive(u: DeltaScalar, dom: &SafeDomain) -> bool {
    u.value() >= dom.min_pole_distance && u.shifted_value() >= dom.min_pole_distance
}

fn scale(u: DeltaScalar) -> f64 {
    u.value().abs().max(u.shifted_value().abs())
}

fn check_node(e: &Expr, inputs: &[DeltaScalar], step: f64, dom: &SafeDomain) -> Option<DeltaScalar> {
    let r = match e {
        Expr::Literal(v) => DeltaScalar::parameter(*v).ok()?,
        Expr::Var(i) => *inputs.get(*i)?,
        Expr::Neg(a) => check_node(a, inputs, step, dom)?.neg(),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
            let u = check_node(a, inputs, step, dom)?;
            let v = check_node(b, inputs, step, dom)?;
            let r = match e {
                Expr::Add(..) => u.add(v),
                Expr::Sub(..) => u.sub(v),
                _ => u.mul(v),
            }
            .ok()?;
            let ends = |t: DeltaScalar| [t.value().abs(), t.shifted_value().abs()];
            let (eu, ev, er) = (ends(u), ends(v), ends(r));
            let (du, dv) = (u.delta().abs(), v.delta().abs());
            let terms = match e {
                Expr::Mul(..) => eu[0] * dv + ev[0] * du + du * dv,
                _ => du + dv,
            };
            let mut cancels = terms > dom.max_cancellation * (er[0] + er[1]);
            if !matches!(e, Expr::Mul(..)) {
                cancels |= (0..2).any(|i| eu[i] + ev[i] > dom.max_cancellation * er[i]);
            }
            if cancels {
                return None;
            }
            r
        }
        Expr::Div(a, b) => {
            let u = check_node(a, inputs, step, dom)?;
            let v = check_node(b, inputs, step, dom)?;
            if !away_from_pole(v, dom) {
                return None;
            }
            u.div(v).ok()?
        }
        Expr::Pow(a, b) => {
            let u = check_node(a, inputs, step, dom)?;
            let v = check_node(b, inputs, step, dom)?;
            let special = v.delta() == 0.0 && [2.0, 0.5, -1.0].contains(&v.value());
            if !(special && v.value() == 2.0) && !positive(u, dom) {
                return None;
            }
            u.pow(v).ok()?
        }
        Expr::Call(f, a) => {
            let u = check_node(a, inputs, step, dom)?;
            match f {
                Func::Log | Func::Sqrt => {
                    if !positive(u, dom) {
                        return None;
                    }
                }
                Func::Recip => {
                    if !away_from_pole(u, dom) {
                        return None;
                    }
                }
                _ => {}
            }
            // Relative condition numbers of log and exp, bounded like cancellation.
            let ill = match f {
                Func::Log => [u.value(), u.shifted_value()]
                    .iter()
                    .any(|&a| dom.max_cancellation * a.ln().abs() < 1.0),
                Func::Exp => scale(u) > dom.max_cancellation,
                _ => false,
            };
            if ill {
                return None;
            }
            match f {
                Func::Exp => u.exp(),
                Func::Log => u.ln(),
                Func::Sqrt => u.sqrt(),
                Func::Sq => u.square(),
                Func::Recip => u.recip(),
                Func::Penalty => crate::branch::penalty_delta(u),
            }
            .ok()?
        }
    };
    // The shifted value is rebuilt as u + Δu; bound the cancellation there too.
    let rebuilt = r.value().abs() + r.delta().abs() <= dom.max_cancellation * r.shifted_value().abs()
        || dom.max_cancellation.is_infinite();
    let ok = rebuilt
        && r.value().abs() <= dom.max_magnitude
        && r.shifted_value().abs() <= dom.max_magnitude
        && r.delta().abs() <= dom.max_slope * step.max(f64::MIN_POSITIVE)
        && (r.delta() == 0.0 || r.delta().abs() >= dom.min_slope * step);
    ok.then_some(r)
}

/// A random expression together with a base point and a unit-scale step direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprCase {
    pub expr: Expr,
    pub x: Vec<f64>,
    /// Components in `[0.5, 1]` in magnitude with random signs.
    pub direction: Vec<f64>,
}

impl ExprCase {
    pub fn step(&self, magnitude: f64) -> Vec<f64> {
        self.direction.iter().map(|v| v * magnitude).collect()
    }
}

/// Draws expressions over two inputs until one is safe for the step
/// `t·direction` at every magnitude `t` in `magnitudes`.
pub fn safe_expr_case<R: Rng + ?Sized>(
    rng: &mut R,
    max_depth: usize,
    magnitudes: &[f64],
    dom: &SafeDomain,
) -> ExprCase {
    const ARITY: usize = 2;
    loop {
        let depth = rng.gen_range(2..=max_depth.clamp(2, MAX_EXPR_DEPTH));
        let expr = random_expr(rng, depth, ARITY);
        if expr.min_arity() == 0 {
            continue;
        }
        let x: Vec<f64> = (0..ARITY).map(|_| rng.gen_range(0.5..2.0)).collect();
        let direction: Vec<f64> = (0..ARITY)
            .map(|_| {
                let m = rng.gen_range(0.5..=1.0);
                if rng.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect();
        let case = ExprCase { expr, x, direction };
        let ok = magnitudes
            .iter()
            .all(|&t| within_safe_domain(&case.expr, &case.x, &case.step(t), dom));
        if ok {
            return case;
        }
    }
}

fn dyadic<R: Rng + ?Sized>(rng: &mut R, bound: f64, denom: f64) -> f64 {
    let n = (bound * denom) as i64;
    rng.gen_range(-n..=n) as f64 / denom
}

/// A random valid spline with `knots` knots whose left and right forms agree
/// exactly: knot gaps are multiples of 1/8 and coefficients multiples of 1/16
/// in `[−10, 10]`.
pub fn random_spline<R: Rng + ?Sized>(rng: &mut R, knots: usize) -> CubicSpline {
    let knots = knots.max(1);
    let mut xs = Vec::with_capacity(knots);
    let mut at = dyadic(rng, 4.0, 8.0);
    for _ in 0..knots {
        xs.push(at);
        at += rng.gen_range(1..=16) as f64 / 8.0;
    }
    let below = Cubic::new(
        dyadic(rng, 10.0, 16.0),
        dyadic(rng, 10.0, 16.0),
        dyadic(rng, 10.0, 16.0),
        dyadic(rng, 10.0, 16.0),
    );
    let mut left = Vec::with_capacity(knots);
    let mut value = below.c0;
    for j in 0..knots {
        let piece = Cubic::new(
            dyadic(rng, 10.0, 16.0),
            dyadic(rng, 10.0, 16.0),
            dyadic(rng, 10.0, 16.0),
            value,
        );
        if j + 1 < knots {
            let h = xs[j + 1] - xs[j];
            value = piece.eval(h);
        }
        left.push(piece);
    }
    from_left_pieces(xs, below, left).expect("generated spline is valid")
}

/// Orthogonal Householder reflector `I − 2vvᵀ/vᵀv` for a random `v`.
fn random_reflector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix {
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let vv: f64 = v.iter().map(|a| a * a).sum();
    let mut q = Matrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            q[(i, j)] -= 2.0 * v[i] * v[j] / vv;
        }
    }
    q
}

/// A random nonsymmetric `n×n` matrix `Q₁ΣQ₂` with singular values spaced
/// geometrically between `1/cond` and 1.
pub fn random_conditioned_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize, cond: f64) -> Matrix {
    let sigma: Vec<f64> = (0..n)
        .map(|i| {
            let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            cond.powf(-t)
        })
        .collect();
    let q1 = random_reflector(rng, n);
    let q2 = random_reflector(rng, n);
    q1.matmul(&Matrix::diagonal(&sigma)).matmul(&q2)
}

/// A random system `(A, ΔA)`, `(b, Δb)` with `‖ΔA‖` and `‖Δb‖` of order `h`.
pub fn random_system<R: Rng + ?Sized>(rng: &mut R, n: usize, cond: f64, h: f64) -> Result<(DeltaMatrix, DeltaVector)> {
    let a = random_conditioned_matrix(rng, n, cond);
    let da: Vec<f64> = (0..n * n).map(|_| h * rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let db: Vec<f64> = (0..n).map(|_| h * rng.gen_range(-1.0..1.0)).collect();
    Ok((
        DeltaMatrix::new(a, Matrix::from_row_major(n, da)?)?,
        DeltaVector::new(b, db)?,
    ))
}

/// [`random_system`], redrawn until `A + ΔA` is also well conditioned:
/// `κ∞(A + ΔA) ≤ n·cond`, the ∞-norm image of a 2-norm bound of `cond`.
pub fn random_well_posed_system<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    cond: f64,
    h: f64,
) -> Result<(DeltaMatrix, DeltaVector)> {
    loop {
        let (a, b) = random_system(rng, n, cond, h)?;
        let shifted = a.values().add(a.deltas());
        let Ok(lu) = shifted.lu() else { continue };
        if shifted.inf_norm() * lu.inverse().inf_norm() <= n as f64 * cond {
            return Ok((a, b));
        }
    }
}

/// `M = diag(1, …, cond)` with log-spaced entries and `d` uniform in `[−1, 1]`.
pub fn stagnation_problem<R: Rng + ?Sized>(rng: &mut R, dim: usize, cond: f64) -> Result<QuadraticObjective> {
    let diag: Vec<f64> = (0..dim)
        .map(|i| {
            if dim > 1 {
                cond.powf(i as f64 / (dim - 1) as f64)
            } else {
                1.0
            }
        })
        .collect();
    let d: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    QuadraticObjective::new(Matrix::diagonal(&diag), d)
}
