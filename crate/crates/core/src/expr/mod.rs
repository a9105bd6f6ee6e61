//! A small expression language and its interpreters.
//!
//! [`eval_plain`] is the ordinary program `f(x)`. [`eval_delta`] runs the same
//! tree over [`DeltaScalar`](crate::DeltaScalar), producing `f(x)` and
//! `f(x + s) − f(x)` in one pass without ever forming `f(x + s)`.

mod eval;
mod parse;

use std::fmt;

pub use eval::{eval_delta, eval_plain, lifted};
pub use parse::{parse, ParseError, ParseErrorKind, MAX_NESTING};

/// Named unary functions of the language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sq,
    Recip,
    Penalty,
}

impl Func {
    pub const ALL: [Func; 6] = [Func::Exp, Func::Log, Func::Sqrt, Func::Sq, Func::Recip, Func::Penalty];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sq => "sq",
            Func::Recip => "recip",
            Func::Penalty => "penalty",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Literal(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn lit(v: f64) -> Expr {
        Expr::Literal(v)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn call(f: Func, arg: Expr) -> Expr {
        Expr::Call(f, Box::new(arg))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(e: Expr) -> Expr {
        Expr::Neg(Box::new(e))
    }

    /// One more than the largest variable index used, or 0 if there are none.
    pub fn min_arity(&self) -> usize {
        match self {
            Expr::Literal(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(e) | Expr::Call(_, e) => e.min_arity(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.min_arity().max(b.min_arity())
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Literal(_) | Expr::Var(_) => 1,
            Expr::Neg(e) | Expr::Call(_, e) => 1 + e.depth(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Literal(_) | Expr::Var(_) => 1,
            Expr::Neg(e) | Expr::Call(_, e) => 1 + e.node_count(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                1 + a.node_count() + b.node_count()
            }
        }
    }

    // Binding strength used when printing; higher binds tighter.
    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Literal(v) if v.is_sign_negative() => 3,
            Expr::Literal(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

fn write_literal(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        write!(f, "{v}")
    } else {
        write!(f, "{v:?}")
    }
}

/// Prints with the minimal parentheses needed to reparse to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.precedence();
        match self {
            Expr::Literal(v) if v.is_sign_negative() => {
                f.write_str("-")?;
                write_literal(f, -v)
            }
            Expr::Literal(v) => write_literal(f, *v),
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Call(func, arg) => write!(f, "{}({arg})", func.name()),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_operand(f, e, e.precedence() < 3)
            }
            Expr::Pow(a, b) => {
                write_operand(f, a, a.precedence() < 5)?;
                f.write_str("^")?;
                write_operand(f, b, b.precedence() < 3)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                let op = match self {
                    Expr::Add(..) => " + ",
                    Expr::Sub(..) => " - ",
                    Expr::Mul(..) => " * ",
                    _ => " / ",
                };
                write_operand(f, a, a.precedence() < p)?;
                f.write_str(op)?;
                write_operand(f, b, b.precedence() <= p)
            }
        }
    }
}
