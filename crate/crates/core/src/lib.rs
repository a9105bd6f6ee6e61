//! Computational divided differencing.
//!
//! Instead of computing `f(x + s) − f(x)` by subtracting two nearly equal
//! floating-point results, every intermediate quantity `u` of the program
//! carries its own difference `Δu`, and each operation updates the pair with
//! a rule that has the cancelling part removed algebraically. The result is
//! accurate to a few ulps of the difference itself, however small `s` is.
//!
//! ```
//! use divdiff::expr::{eval_delta, parse};
//!
//! let f = parse("x0^2", 1).unwrap();
//! let (_, delta) = eval_delta(&f, &[1.0], &[1e-18]).unwrap();
//! assert_eq!(delta, 2e-18);
//! ```

pub mod branch;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod optim;
pub mod oracle;
pub mod scalar;
pub mod spline;
pub mod stagnation;
pub mod suite;

pub use branch::{bounded_loop, penalty_branch, penalty_delta, PenaltyBranch};
pub use error::{DeltaError, Result};
pub use expr::{eval_delta, eval_plain, parse, Expr, Func};
pub use linalg::{solve_delta, DeltaMatrix, DeltaVector, Matrix};
pub use optim::{armijo_accepts, quadratic_delta, trust_region_rho, DeltaObjective, QuadraticObjective};
pub use scalar::{AccuracyBudget, DeltaScalar, EPS_MACH};
pub use spline::{spline_eval_delta, CubicSpline};
pub use stagnation::{run_quadratic_experiment, StagnationWindow};
