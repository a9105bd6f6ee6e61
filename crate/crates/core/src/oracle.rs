//! Extended-precision reference evaluation.
//!
//! Everything here evaluates the function at both points in 192-bit binary
//! floating point, subtracts there, and rounds once to `f64`. At that
//! precision the subtraction is harmless for any step the accuracy tests use,
//! so the result serves as ground truth for the divided-difference rules.

use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;

use crate::error::{DeltaError, Result};
use crate::expr::{Expr, Func};
use crate::linalg::{DeltaMatrix, DeltaVector, Matrix};
use crate::spline::{Cubic, CubicSpline};

/// Significand bits carried by [`WideReal`].
pub const WIDE_PRECISION: usize = 192;

// exp overflows f64 above this.
const EXP_LIMIT: f64 = 709.8;

/// A binary float with [`WIDE_PRECISION`] significand bits, rounded to nearest even.
#[derive(Clone, Debug, PartialEq, PartialOrd)]
pub struct WideReal(FBig<HalfEven, 2>);

impl WideReal {
    pub fn zero() -> Self {
        Self::from_f64(0.0)
    }

    /// Exact conversion. Panics on NaN or infinity.
    pub fn from_f64(v: f64) -> Self {
        let big = FBig::<HalfEven, 2>::try_from(v).expect("finite f64");
        WideReal(big.with_precision(WIDE_PRECISION).value())
    }

    /// Rounds once to the nearest `f64`.
    pub fn to_f64(&self) -> f64 {
        let v = self.0.to_f64().value();
        if v == 0.0 {
            0.0
        } else {
            v
        }
    }

    pub fn is_zero(&self) -> bool {
        self.cmp_zero() == Ordering::Equal
    }

    pub fn cmp_zero(&self) -> Ordering {
        self.partial_cmp(&Self::zero()).expect("total order")
    }

    pub fn abs(&self) -> Self {
        if self.cmp_zero() == Ordering::Less {
            -self.clone()
        } else {
            self.clone()
        }
    }

    // An exact zero carries unlimited precision, which the transcendental
    // routines reject, so zero arguments are answered directly.
    pub fn sqrt(&self) -> Self {
        if self.is_zero() {
            Self::zero()
        } else {
            WideReal(self.0.sqrt())
        }
    }

    pub fn exp(&self) -> Self {
        if self.is_zero() {
            Self::from_f64(1.0)
        } else {
            WideReal(self.0.exp())
        }
    }

    pub fn exp_m1(&self) -> Self {
        if self.is_zero() {
            Self::zero()
        } else {
            WideReal(self.0.exp_m1())
        }
    }

    pub fn ln(&self) -> Self {
        WideReal(self.0.ln())
    }

    pub fn square(&self) -> Self {
        self * self
    }
}

macro_rules! wide_binop {
    ($trait:ident, $method:ident) => {
        impl $trait<&WideReal> for &WideReal {
            type Output = WideReal;
            fn $method(self, rhs: &WideReal) -> WideReal {
                WideReal($trait::$method(&self.0, &rhs.0))
            }
        }
        impl $trait<WideReal> for WideReal {
            type Output = WideReal;
            fn $method(self, rhs: WideReal) -> WideReal {
                WideReal($trait::$method(self.0, rhs.0))
            }
        }
    };
}

wide_binop!(Add, add);
wide_binop!(Sub, sub);
wide_binop!(Mul, mul);
wide_binop!(Div, div);

impl Neg for WideReal {
    type Output = WideReal;
    fn neg(self) -> WideReal {
        WideReal(-self.0)
    }
}

impl From<f64> for WideReal {
    fn from(v: f64) -> Self {
        Self::from_f64(v)
    }
}

fn in_range(op: &'static str, v: WideReal) -> Result<WideReal> {
    if v.to_f64().is_finite() {
        Ok(v)
    } else {
        Err(DeltaError::Overflow { op })
    }
}

/// Exact `x + s` for each component.
pub fn wide_point(x: &[f64], s: &[f64]) -> Vec<WideReal> {
    x.iter()
        .zip(s)
        .map(|(&a, &b)| WideReal::from_f64(a) + WideReal::from_f64(b))
        .collect()
}

/// Evaluates `e` at `point`. `stepped[i]` says whether input `i` differs
/// between the two points being compared; exponents that depend on no
/// stepped input take the same special-case dispatch as the lifted rules.
pub fn oracle_eval(e: &Expr, point: &[WideReal], stepped: &[bool]) -> Result<WideReal> {
    if e.min_arity() > point.len() || point.len() != stepped.len() {
        return Err(DeltaError::Shape("oracle input length mismatch".into()));
    }
    eval_wide(e, point, stepped)
}

fn depends_on_step(e: &Expr, stepped: &[bool]) -> bool {
    match e {
        Expr::Literal(_) => false,
        Expr::Var(i) => stepped[*i],
        Expr::Neg(a) | Expr::Call(_, a) => depends_on_step(a, stepped),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
            depends_on_step(a, stepped) || depends_on_step(b, stepped)
        }
    }
}

fn wide_recip(u: &WideReal) -> Result<WideReal> {
    if u.is_zero() {
        return Err(DeltaError::domain("recip", "division by zero"));
    }
    in_range("recip", &WideReal::from_f64(1.0) / u)
}

fn wide_sqrt(u: &WideReal) -> Result<WideReal> {
    if u.cmp_zero() == Ordering::Less {
        return Err(DeltaError::domain("sqrt", "negative radicand"));
    }
    Ok(u.sqrt())
}

fn wide_ln(u: &WideReal) -> Result<WideReal> {
    if u.cmp_zero() != Ordering::Greater {
        return Err(DeltaError::domain("log", "nonpositive argument"));
    }
    Ok(u.ln())
}

fn wide_exp(u: &WideReal) -> Result<WideReal> {
    if u.to_f64() > EXP_LIMIT {
        return Err(DeltaError::Overflow { op: "exp" });
    }
    in_range("exp", u.exp())
}

fn eval_wide(e: &Expr, p: &[WideReal], stepped: &[bool]) -> Result<WideReal> {
    match e {
        Expr::Literal(v) => Ok(WideReal::from_f64(*v)),
        Expr::Var(i) => Ok(p[*i].clone()),
        Expr::Neg(a) => Ok(-eval_wide(a, p, stepped)?),
        Expr::Add(a, b) => in_range("add", eval_wide(a, p, stepped)? + eval_wide(b, p, stepped)?),
        Expr::Sub(a, b) => in_range("sub", eval_wide(a, p, stepped)? - eval_wide(b, p, stepped)?),
        Expr::Mul(a, b) => in_range("mul", eval_wide(a, p, stepped)? * eval_wide(b, p, stepped)?),
        Expr::Div(a, b) => {
            let u = eval_wide(a, p, stepped)?;
            let v = eval_wide(b, p, stepped)?;
            if v.is_zero() {
                return Err(DeltaError::domain("div", "division by zero"));
            }
            in_range("div", u / v)
        }
        Expr::Pow(a, b) => {
            let u = eval_wide(a, p, stepped)?;
            let v = eval_wide(b, p, stepped)?;
            if !depends_on_step(b, stepped) {
                let vf = v.to_f64();
                if WideReal::from_f64(vf) == v {
                    if vf == 2.0 {
                        return in_range("pow", u.square());
                    } else if vf == 0.5 {
                        return wide_sqrt(&u);
                    } else if vf == -1.0 {
                        return wide_recip(&u);
                    }
                }
            }
            let l = wide_ln(&u)?;
            wide_exp(&(&v * &l))
        }
        Expr::Call(f, a) => {
            let u = eval_wide(a, p, stepped)?;
            match f {
                Func::Exp => wide_exp(&u),
                Func::Log => wide_ln(&u),
                Func::Sqrt => wide_sqrt(&u),
                Func::Sq => in_range("sq", u.square()),
                Func::Recip => wide_recip(&u),
                Func::Penalty => {
                    if u.cmp_zero() == Ordering::Greater {
                        in_range("penalty", u.square())
                    } else {
                        Ok(WideReal::zero())
                    }
                }
            }
        }
    }
}

/// `f(x + s) − f(x)` evaluated in wide precision and rounded once.
pub fn oracle_delta(e: &Expr, x: &[f64], s: &[f64]) -> Result<f64> {
    if x.len() != s.len() {
        return Err(DeltaError::Shape("x and s lengths differ".into()));
    }
    if x.iter().chain(s).any(|v| !v.is_finite()) {
        return Err(DeltaError::InvalidInput("non-finite oracle input".into()));
    }
    let stepped: Vec<bool> = s.iter().map(|&v| v != 0.0).collect();
    let zero = vec![0.0; s.len()];
    let base = oracle_eval(e, &wide_point(x, &zero), &stepped)?;
    let shifted = oracle_eval(e, &wide_point(x, s), &stepped)?;
    Ok((shifted - base).to_f64())
}

/// Gradient at `x` by central differences with step 2⁻⁸⁰ in wide precision.
pub fn oracle_gradient(e: &Expr, x: &[f64]) -> Result<Vec<f64>> {
    let h = WideReal::from_f64(2f64.powi(-80));
    let two_h = &h + &h;
    let stepped = vec![true; x.len()];
    let base: Vec<WideReal> = x.iter().map(|&v| WideReal::from_f64(v)).collect();
    (0..x.len())
        .map(|i| {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i] = &plus[i] + &h;
            minus[i] = &minus[i] - &h;
            let fp = oracle_eval(e, &plus, &stepped)?;
            let fm = oracle_eval(e, &minus, &stepped)?;
            Ok(((fp - fm) / two_h.clone()).to_f64())
        })
        .collect()
}

fn wide_cubic(c: &Cubic, t: &WideReal) -> WideReal {
    let w = WideReal::from_f64;
    ((&(&w(c.c3) * t) + &w(c.c2)) * t.clone() + w(c.c1)) * t.clone() + w(c.c0)
}

/// Spline value at a wide point, using the same piece convention as
/// [`CubicSpline::eval`] (knots belong to the piece on their right).
pub fn oracle_spline_eval(sp: &CubicSpline, x: &WideReal) -> WideReal {
    let knots = sp.knots();
    let j = knots.partition_point(|&k| WideReal::from_f64(k) <= *x);
    if j == 0 {
        wide_cubic(sp.right_piece(0), &(x - &WideReal::from_f64(knots[0])))
    } else {
        wide_cubic(sp.left_piece(j), &(x - &WideReal::from_f64(knots[j - 1])))
    }
}

pub fn oracle_spline_delta(sp: &CubicSpline, x: f64, dx: f64) -> Result<f64> {
    if !x.is_finite() || !dx.is_finite() {
        return Err(DeltaError::InvalidInput("non-finite oracle input".into()));
    }
    let lo = WideReal::from_f64(x);
    let hi = &lo + &WideReal::from_f64(dx);
    Ok((oracle_spline_eval(sp, &hi) - oracle_spline_eval(sp, &lo)).to_f64())
}

fn wide_solve(a: Vec<Vec<WideReal>>, b: Vec<WideReal>) -> Result<Vec<WideReal>> {
    let n = b.len();
    let mut a = a;
    let mut b = b;
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).expect("ordered"))
            .expect("nonempty");
        if a[p][k].is_zero() {
            return Err(DeltaError::Singular(format!("zero pivot in column {k}")));
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let l = &a[i][k] / &a[k][k];
            for j in k..n {
                let t = &l * &a[k][j];
                a[i][j] = &a[i][j] - &t;
            }
            let t = &l * &b[k];
            b[i] = &b[i] - &t;
        }
    }
    let mut x = vec![WideReal::zero(); n];
    for i in (0..n).rev() {
        let mut s = b[i].clone();
        for j in i + 1..n {
            s = &s - &(&a[i][j] * &x[j]);
        }
        x[i] = &s / &a[i][i];
    }
    Ok(x)
}

fn wide_matrix(m: &Matrix, plus: Option<&Matrix>) -> Vec<Vec<WideReal>> {
    let n = m.dim();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let v = WideReal::from_f64(m[(i, j)]);
                    match plus {
                        Some(p) => &v + &WideReal::from_f64(p[(i, j)]),
                        None => v,
                    }
                })
                .collect()
        })
        .collect()
}

/// `(A+ΔA)⁻¹(b+Δb) − A⁻¹b` from two wide-precision eliminations.
pub fn oracle_solve_delta(a: &DeltaMatrix, b: &DeltaVector) -> Result<Vec<f64>> {
    let n = a.dim();
    if b.len() != n {
        return Err(DeltaError::Shape("system size mismatch".into()));
    }
    let b0: Vec<WideReal> = b.values().iter().map(|&v| WideReal::from_f64(v)).collect();
    let b1 = wide_point(b.values(), b.deltas());
    let x0 = wide_solve(wide_matrix(a.values(), None), b0)?;
    let x1 = wide_solve(wide_matrix(a.values(), Some(a.deltas())), b1)?;
    Ok(x1.into_iter().zip(x0).map(|(p, q)| (p - q).to_f64()).collect())
}

/// `½xᵀMx + dᵀx` at a wide point.
pub fn oracle_quadratic_eval(m: &Matrix, d: &[f64], x: &[WideReal]) -> WideReal {
    let n = d.len();
    let half = WideReal::from_f64(0.5);
    let mut acc = WideReal::zero();
    for i in 0..n {
        let mut row = WideReal::zero();
        for j in 0..n {
            row = &row + &(&WideReal::from_f64(m[(i, j)]) * &x[j]);
        }
        let term = &(&half * &row) + &WideReal::from_f64(d[i]);
        acc = &acc + &(&term * &x[i]);
    }
    acc
}

/// `f(x + dx) − f(x)` for `f(x) = ½xᵀMx + dᵀx`.
pub fn oracle_quadratic_delta(m: &Matrix, d: &[f64], x: &[f64], dx: &[f64]) -> f64 {
    let lo: Vec<WideReal> = x.iter().map(|&v| WideReal::from_f64(v)).collect();
    let hi = wide_point(x, dx);
    (oracle_quadratic_eval(m, d, &hi) - oracle_quadratic_eval(m, d, &lo)).to_f64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn examples() {
        let sq = parse("x0^2", 1).unwrap();
        assert_eq!(oracle_delta(&sq, &[1.0], &[1e-18]).unwrap(), 2e-18);
        assert_eq!(oracle_delta(&sq, &[1.0], &[0.0]).unwrap().to_bits(), 0);
        let rt = parse("sqrt(x0)", 1).unwrap();
        assert_eq!(oracle_delta(&rt, &[1.0], &[3.0]).unwrap(), 1.0);
    }

    #[test]
    fn domain_errors_at_either_endpoint() {
        let e = parse("log(x0)", 1).unwrap();
        assert!(oracle_delta(&e, &[1.0], &[-2.0]).is_err());
        assert!(oracle_delta(&e, &[-1.0], &[2.0]).is_err());
        let e = parse("x0^3", 1).unwrap();
        assert!(oracle_delta(&e, &[-1.0], &[0.5]).is_err());
        let e = parse("x0^2", 1).unwrap();
        assert_eq!(oracle_delta(&e, &[-1.0], &[0.5]).unwrap(), -0.75);
    }

    #[test]
    fn rounding_is_single() {
        let third = &WideReal::from_f64(1.0) / &WideReal::from_f64(3.0);
        assert_eq!(third.to_f64(), 1.0 / 3.0);
        let e = WideReal::from_f64(1.0).exp();
        assert_eq!(e.to_f64(), std::f64::consts::E);
        assert_eq!(WideReal::from_f64(2.0).ln().to_f64(), std::f64::consts::LN_2);
        let zero = WideReal::from_f64(1.5) - WideReal::from_f64(1.5);
        assert_eq!(zero.exp().to_f64(), 1.0);
        assert_eq!(zero.exp_m1().to_f64(), 0.0);
        assert_eq!(zero.sqrt().to_f64(), 0.0);
    }

    #[test]
    fn gradient_of_cubic() {
        let e = parse("x0^3 + x0*x1", 2).unwrap();
        let g = oracle_gradient(&e, &[2.0, 5.0]).unwrap();
        assert!((g[0] - 17.0).abs() < 1e-14);
        assert!((g[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn wide_solve_small_system() {
        let a = DeltaMatrix::new(
            Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap(),
            Matrix::zeros(2),
        )
        .unwrap();
        let b = DeltaVector::new(vec![1.0, 2.0], vec![1.0, 0.0]).unwrap();
        let dx = oracle_solve_delta(&a, &b).unwrap();
        // A⁻¹ (1, 0) = (3, -1) / 5
        assert_eq!(dx, vec![0.6, -0.2]);
    }
}
