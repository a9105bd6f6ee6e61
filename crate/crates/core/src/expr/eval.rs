use super::{Expr, Func};
use crate::branch::penalty_delta;
use crate::error::{DeltaError, Result};
use crate::scalar::DeltaScalar;

fn at(e: &Expr, err: DeltaError) -> DeltaError {
    match err {
        DeltaError::AtNode { .. } => err,
        other => DeltaError::AtNode {
            node: e.to_string(),
            source: Box::new(other),
        },
    }
}

fn check_inputs(e: &Expr, x: &[f64]) -> Result<()> {
    if e.min_arity() > x.len() {
        return Err(DeltaError::Shape(format!(
            "expression uses x{} but only {} inputs were given",
            e.min_arity() - 1,
            x.len()
        )));
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(DeltaError::InvalidInput(format!("input {v} is not finite")));
    }
    Ok(())
}

/// Evaluates `e` at `x` in working precision.
pub fn eval_plain(e: &Expr, x: &[f64]) -> Result<f64> {
    check_inputs(e, x)?;
    plain(e, x)
}

fn finite(e: &Expr, op: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(at(e, DeltaError::Overflow { op }))
    }
}

fn plain_recip(u: f64) -> Result<f64> {
    if u == 0.0 {
        Err(DeltaError::domain("recip", "division by zero"))
    } else {
        Ok(1.0 / u)
    }
}

fn plain_sqrt(u: f64) -> Result<f64> {
    if u < 0.0 {
        Err(DeltaError::domain("sqrt", "negative radicand"))
    } else {
        Ok(u.sqrt())
    }
}

fn plain_ln(u: f64) -> Result<f64> {
    if u <= 0.0 {
        Err(DeltaError::domain("log", "nonpositive argument"))
    } else {
        Ok(u.ln())
    }
}

fn plain(e: &Expr, x: &[f64]) -> Result<f64> {
    match e {
        Expr::Literal(v) => Ok(*v),
        Expr::Var(i) => Ok(x[*i]),
        Expr::Neg(a) => Ok(-plain(a, x)?),
        Expr::Add(a, b) => finite(e, "add", plain(a, x)? + plain(b, x)?),
        Expr::Sub(a, b) => finite(e, "sub", plain(a, x)? - plain(b, x)?),
        Expr::Mul(a, b) => finite(e, "mul", plain(a, x)? * plain(b, x)?),
        Expr::Div(a, b) => {
            let (u, v) = (plain(a, x)?, plain(b, x)?);
            if v == 0.0 {
                return Err(at(e, DeltaError::domain("div", "division by zero")));
            }
            finite(e, "div", u / v)
        }
        Expr::Pow(a, b) => {
            let (u, v) = (plain(a, x)?, plain(b, x)?);
            // Mirrors the dispatch of DeltaScalar::pow for input-independent exponents.
            let r = if v == 2.0 {
                Ok(u * u)
            } else if v == 0.5 {
                plain_sqrt(u)
            } else if v == -1.0 {
                plain_recip(u)
            } else if u <= 0.0 {
                Err(DeltaError::domain("log", "nonpositive argument"))
            } else {
                Ok((v * u.ln()).exp())
            };
            finite(e, "pow", r.map_err(|err| at(e, err))?)
        }
        Expr::Call(f, a) => {
            let u = plain(a, x)?;
            let r = match f {
                Func::Exp => Ok(u.exp()),
                Func::Log => plain_ln(u),
                Func::Sqrt => plain_sqrt(u),
                Func::Sq => Ok(u * u),
                Func::Recip => plain_recip(u),
                Func::Penalty => {
                    let p = u.max(0.0);
                    Ok(p * p)
                }
            };
            finite(e, f.name(), r.map_err(|err| at(e, err))?)
        }
    }
}

/// Evaluates `e` over `(value, delta)` pairs seeded with `(xᵢ, sᵢ)`; returns
/// `(f(x), f(x + s) − f(x))`.
pub fn eval_delta(e: &Expr, x: &[f64], s: &[f64]) -> Result<(f64, f64)> {
    if x.len() != s.len() {
        return Err(DeltaError::Shape(format!(
            "{} inputs but {} step components",
            x.len(),
            s.len()
        )));
    }
    check_inputs(e, x)?;
    if let Some(v) = s.iter().find(|v| !v.is_finite()) {
        return Err(DeltaError::InvalidInput(format!("step {v} is not finite")));
    }
    let seeds = x
        .iter()
        .zip(s)
        .map(|(&xi, &si)| DeltaScalar::seed(xi, si))
        .collect::<Result<Vec<_>>>()?;
    let t = lifted(e, &seeds)?;
    Ok((t.value(), t.delta()))
}

/// Evaluates `e` over already-seeded inputs.
pub fn lifted(e: &Expr, inputs: &[DeltaScalar]) -> Result<DeltaScalar> {
    let r = match e {
        Expr::Literal(v) => DeltaScalar::parameter(*v),
        Expr::Var(i) => return Ok(inputs[*i]),
        Expr::Neg(a) => return Ok(lifted(a, inputs)?.neg()),
        Expr::Add(a, b) => lifted(a, inputs)?.add(lifted(b, inputs)?),
        Expr::Sub(a, b) => lifted(a, inputs)?.sub(lifted(b, inputs)?),
        Expr::Mul(a, b) => lifted(a, inputs)?.mul(lifted(b, inputs)?),
        Expr::Div(a, b) => lifted(a, inputs)?.div(lifted(b, inputs)?),
        Expr::Pow(a, b) => lifted(a, inputs)?.pow(lifted(b, inputs)?),
        Expr::Call(f, a) => {
            let u = lifted(a, inputs)?;
            match f {
                Func::Exp => u.exp(),
                Func::Log => u.ln(),
                Func::Sqrt => u.sqrt(),
                Func::Sq => u.square(),
                Func::Recip => u.recip(),
                Func::Penalty => penalty_delta(u),
            }
        }
    };
    r.map_err(|err| at(e, err))
}
