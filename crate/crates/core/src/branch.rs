//! Branching constructs whose divided differences can still be computed
//! without cancellation: the ℓ² penalty and fixed-trip-count loops.
//! Splines live in [`crate::spline`].

use crate::error::{DeltaError, Result};
use crate::scalar::DeltaScalar;

/// Which rule [`penalty_delta`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyBranch {
    /// Both points nonnegative: plain squaring rule.
    Square,
    /// At least one point negative: one term is zero, so direct subtraction is exact enough.
    Subtract,
}

pub fn penalty_branch(x: DeltaScalar) -> PenaltyBranch {
    if x.value() >= 0.0 && x.shifted_value() >= 0.0 {
        PenaltyBranch::Square
    } else {
        PenaltyBranch::Subtract
    }
}

/// `p = max(0, x)²`.
pub fn penalty_delta(x: DeltaScalar) -> Result<DeltaScalar> {
    match penalty_branch(x) {
        PenaltyBranch::Square => x.square(),
        PenaltyBranch::Subtract => {
            let lo = x.value().max(0.0);
            let hi = x.shifted_value().max(0.0);
            let (value, delta) = (lo * lo, hi * hi - lo * lo);
            if !value.is_finite() || !delta.is_finite() {
                return Err(DeltaError::Overflow { op: "penalty" });
            }
            DeltaScalar::seed(value, delta)
        }
    }
}

/// Runs `body` exactly `max_iters` times with no early exit, so the
/// executions at `x` and `x + s` take the same path.
pub fn bounded_loop<S, F>(init: S, max_iters: usize, mut body: F) -> Result<S>
where
    F: FnMut(S) -> Result<S>,
{
    if max_iters == 0 {
        return Err(DeltaError::InvalidInput("max_iters must be at least 1".into()));
    }
    let mut state = init;
    for iteration in 0..max_iters {
        state = body(state).map_err(|e| DeltaError::AtIteration {
            iteration,
            source: Box::new(e),
        })?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(v: f64, d: f64) -> DeltaScalar {
        DeltaScalar::seed(v, d).unwrap()
    }

    #[test]
    fn penalty_examples() {
        let t = penalty_delta(ds(-1.0, 0.5)).unwrap();
        assert_eq!((t.value(), t.delta()), (0.0, 0.0));
        assert_eq!(penalty_branch(ds(-1.0, 0.5)), PenaltyBranch::Subtract);

        let t = penalty_delta(ds(1.0, 1e-20)).unwrap();
        assert_eq!(t.delta(), 2e-20);

        let x = ds(-1e-30, 2e-30);
        assert_eq!(penalty_branch(x), PenaltyBranch::Subtract);
        let t = penalty_delta(x).unwrap();
        assert_eq!(t.value(), 0.0);
        assert!((t.delta() - 1e-60).abs() <= 1e-75);
    }

    #[test]
    fn square_branch_is_square_rule() {
        for &(u, du) in &[(0.0, 1e-300), (3.0, -1.0), (0.7, 1e-17), (2.0, -2.0)] {
            let x = ds(u, du);
            assert_eq!(penalty_branch(x), PenaltyBranch::Square);
            assert_eq!(penalty_delta(x).unwrap(), x.square().unwrap());
        }
    }

    #[test]
    fn leaving_the_feasible_side() {
        let t = penalty_delta(ds(2.0, -3.0)).unwrap();
        assert_eq!((t.value(), t.delta()), (4.0, -4.0));
    }

    fn newton_sqrt2(t: DeltaScalar) -> Result<DeltaScalar> {
        let two = DeltaScalar::parameter(2.0)?;
        let half = DeltaScalar::parameter(0.5)?;
        t.add(two.div(t)?)?.mul(half)
    }

    #[test]
    fn bounded_newton_loop() {
        let out = bounded_loop(ds(1.5, 0.0), 6, newton_sqrt2).unwrap();
        assert!((out.value() - std::f64::consts::SQRT_2).abs() <= f64::EPSILON);
        assert_eq!(out.delta(), 0.0);

        let out = bounded_loop(ds(1.5, 1e-17), 6, newton_sqrt2).unwrap();
        assert!(out.delta().abs() <= 1e-16);
    }

    #[test]
    fn bounded_loop_counts_exactly() {
        let mut calls = 0;
        let out = bounded_loop(0u32, 1, |s| {
            calls += 1;
            Ok(s + 1)
        })
        .unwrap();
        assert_eq!((out, calls), (1, 1));
        assert!(bounded_loop(0u32, 0, Ok).is_err());
    }

    #[test]
    fn bounded_loop_reports_iteration() {
        let err = bounded_loop(ds(1.0, 0.0), 5, |t| t.sub(ds(1.0, 0.0))?.recip()).unwrap_err();
        match err {
            DeltaError::AtIteration { iteration, .. } => assert_eq!(iteration, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bounded_loop_is_deterministic() {
        let run = || bounded_loop(ds(1.5, 3e-12), 9, newton_sqrt2).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.value().to_bits(), b.value().to_bits());
        assert_eq!(a.delta().to_bits(), b.delta().to_bits());
    }
}
