//! Stagnation detection from the telescoping identity of divided differences,
//! and the quadratic experiment comparing it with an objective-value test.
//!
//! For iterates `x₁, x₂, x₃` exact arithmetic gives
//! `f(x₃) − f(x₁) = (f(x₂) − f(x₁)) + (f(x₃) − f(x₂))`. While the optimizer
//! still makes representable progress, accurately computed differences keep
//! this balance. Once the steps are lost in rounding, the end-to-end
//! difference collapses while the stepwise ones keep their noise, and the
//! window reports stagnation.

use std::collections::VecDeque;

use crate::error::{DeltaError, Result};
use crate::optim::{DeltaObjective, QuadraticObjective};

pub const DEFAULT_CAPACITY: usize = 3;
pub const DEFAULT_TRIGGER_FACTOR: f64 = 2.0;

/// Relative decrease at or below which an objective-value step counts as no progress.
pub const OBJECTIVE_RELATIVE_DECREASE: f64 = 1e-15;
/// Consecutive no-progress steps that stop the objective-value run.
pub const OBJECTIVE_PATIENCE: usize = 3;

/// Recent iterates and the signed objective changes between neighbours.
///
/// `pair_deltas[i]` is `f(iterates[i+1]) − f(iterates[i])`, obtained as
/// `−D_f(x_new, x_prev − x_new)`, so a descending run has negative entries.
#[derive(Debug, Clone, PartialEq)]
pub struct StagnationWindow {
    capacity: usize,
    trigger_factor: f64,
    iterates: VecDeque<Vec<f64>>,
    pair_deltas: VecDeque<f64>,
}

impl Default for StagnationWindow {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY, DEFAULT_TRIGGER_FACTOR).expect("valid defaults")
    }
}

fn step_between(from: &[f64], to: &[f64]) -> Vec<f64> {
    to.iter().zip(from).map(|(a, b)| a - b).collect()
}

impl StagnationWindow {
    pub fn new(capacity: usize, trigger_factor: f64) -> Result<Self> {
        if capacity < 3 {
            return Err(DeltaError::InvalidInput(format!(
                "window capacity {capacity} is below 3"
            )));
        }
        if !(trigger_factor > 1.0 && trigger_factor.is_finite()) {
            return Err(DeltaError::InvalidInput(format!(
                "trigger factor {trigger_factor} must exceed 1"
            )));
        }
        Ok(Self {
            capacity,
            trigger_factor,
            iterates: VecDeque::with_capacity(capacity),
            pair_deltas: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn trigger_factor(&self) -> f64 {
        self.trigger_factor
    }

    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }

    pub fn iterates(&self) -> impl Iterator<Item = &[f64]> {
        self.iterates.iter().map(Vec::as_slice)
    }

    pub fn pair_deltas(&self) -> impl Iterator<Item = f64> + '_ {
        self.pair_deltas.iter().copied()
    }

    /// Returns a new window with `x_new` appended.
    pub fn push(&self, obj: &dyn DeltaObjective, x_new: &[f64]) -> Result<Self> {
        let mut next = self.clone();
        next.push_mut(obj, x_new)?;
        Ok(next)
    }

    /// In-place form of [`push`](Self::push) for driver loops.
    pub fn push_mut(&mut self, obj: &dyn DeltaObjective, x_new: &[f64]) -> Result<()> {
        if x_new.len() != obj.arity() {
            return Err(DeltaError::Shape(format!(
                "iterate has {} components, objective takes {}",
                x_new.len(),
                obj.arity()
            )));
        }
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(DeltaError::InvalidInput("non-finite iterate".into()));
        }
        if let Some(prev) = self.iterates.back() {
            let (_, back) = obj.value_and_delta(x_new, &step_between(x_new, prev))?;
            self.pair_deltas.push_back(-back);
        }
        self.iterates.push_back(x_new.to_vec());
        if self.iterates.len() > self.capacity {
            self.iterates.pop_front();
            self.pair_deltas.pop_front();
        }
        Ok(())
    }

    /// `(L, R)`: the end-to-end difference `f(x_newest) − f(x_oldest)` and the
    /// sum of the stored stepwise differences.
    pub fn telescoping_pair(&self, obj: &dyn DeltaObjective) -> Result<(f64, f64)> {
        if self.iterates.len() < 3 {
            return Err(DeltaError::State(format!(
                "stagnation test needs 3 iterates, window holds {}",
                self.iterates.len()
            )));
        }
        let oldest = &self.iterates[0];
        let newest = &self.iterates[self.iterates.len() - 1];
        let (_, back) = obj.value_and_delta(newest, &step_between(newest, oldest))?;
        Ok((-back, self.pair_deltas.iter().sum()))
    }

    pub fn is_stagnant(&self, obj: &dyn DeltaObjective) -> Result<bool> {
        let (l, r) = self.telescoping_pair(obj)?;
        Ok(stagnation_check(l, r, self.trigger_factor))
    }
}

/// Stagnant when the run is descending (`R < 0`) and `|L| < |R| / factor`.
pub fn stagnation_check(l: f64, r: f64, trigger_factor: f64) -> bool {
    r < 0.0 && l.abs() < r.abs() / trigger_factor
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    SteepestDescent,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Objective-value rule: no meaningful relative decrease for several steps.
    ObjectiveStalled,
    /// Divided-difference rule fired.
    Stagnant,
    /// The update left every component unchanged.
    FixedPoint,
    /// The residual `Mx + d` is exactly zero.
    ZeroGradient,
    MaxIters,
}

impl StopReason {
    pub fn label(self) -> &'static str {
        match self {
            StopReason::ObjectiveStalled => "objective-stalled",
            StopReason::Stagnant => "stagnant",
            StopReason::FixedPoint => "fixed-point",
            StopReason::ZeroGradient => "zero-gradient",
            StopReason::MaxIters => "max-iters",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub max_iters: usize,
    pub window: usize,
    pub trigger_factor: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::SteepestDescent,
            max_iters: 1_000_000,
            window: DEFAULT_CAPACITY,
            trigger_factor: DEFAULT_TRIGGER_FACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub iterations: usize,
    /// `‖x − x*‖ / ‖x*‖` in the 2-norm.
    pub final_error: f64,
    pub stop: StopReason,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub objective_run: RunSummary,
    pub delta_run: RunSummary,
    /// Objective-run error over divided-difference-run error.
    pub ratio: f64,
}

#[derive(Clone, Copy)]
enum Rule {
    Objective,
    Delta,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn relative_error(x: &[f64], x_star: &[f64]) -> f64 {
    let diff: Vec<f64> = x.iter().zip(x_star).map(|(a, b)| a - b).collect();
    let scale = norm(x_star);
    if scale == 0.0 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

fn run_once(
    q: &QuadraticObjective,
    x0: &[f64],
    x_star: &[f64],
    cfg: &ExperimentConfig,
    rule: Rule,
) -> Result<RunSummary> {
    let m = q.matrix();
    let lu = match cfg.method {
        Method::Newton => Some(m.lu()?),
        Method::SteepestDescent => None,
    };
    let start_error = relative_error(x0, x_star);
    let mut x = x0.to_vec();
    let mut f = q.value(&x);
    let mut quiet = 0usize;
    let mut window = StagnationWindow::new(cfg.window, cfg.trigger_factor)?;
    if matches!(rule, Rule::Delta) {
        window.push_mut(q, &x)?;
    }
    let mut stop = StopReason::MaxIters;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let g = q.residual(&x);
        if g.iter().all(|&v| v == 0.0) {
            stop = StopReason::ZeroGradient;
            break;
        }
        let step: Vec<f64> = match &lu {
            Some(lu) => lu.solve(&g),
            None => {
                let mg = m.matvec(&g);
                let alpha = g.iter().map(|v| v * v).sum::<f64>() / g.iter().zip(&mg).map(|(a, b)| a * b).sum::<f64>();
                g.iter().map(|v| alpha * v).collect()
            }
        };
        let x_new: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a - b).collect();
        iterations += 1;
        if x_new == x {
            stop = StopReason::FixedPoint;
            break;
        }
        if x_new.iter().any(|v| !v.is_finite())
            || relative_error(&x_new, x_star) > 10.0 * start_error.max(f64::MIN_POSITIVE)
        {
            return Err(DeltaError::AtIteration {
                iteration: iterations,
                source: Box::new(DeltaError::Numerical("iteration diverged".into())),
            });
        }
        x = x_new;
        match rule {
            Rule::Objective => {
                let f_new = q.value(&x);
                let decrease = f - f_new;
                let progressed = if f == 0.0 {
                    decrease > 0.0
                } else {
                    decrease / f.abs() > OBJECTIVE_RELATIVE_DECREASE
                };
                quiet = if progressed { 0 } else { quiet + 1 };
                f = f_new;
                if quiet >= OBJECTIVE_PATIENCE {
                    stop = StopReason::ObjectiveStalled;
                    break;
                }
            }
            Rule::Delta => {
                window.push_mut(q, &x)?;
                if window.len() >= 3 && window.is_stagnant(q)? {
                    stop = StopReason::Stagnant;
                    break;
                }
            }
        }
    }
    Ok(RunSummary {
        iterations,
        final_error: relative_error(&x, x_star),
        stop,
        x,
    })
}

/// Minimizes `q` from `x0` twice, once stopping on the objective-value rule and
/// once on the divided-difference stagnation test, and compares the final
/// errors against the directly solved minimizer.
pub fn run_quadratic_experiment(
    q: &QuadraticObjective,
    x0: &[f64],
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    if x0.len() != q.dim() {
        return Err(DeltaError::Shape(format!(
            "x0 has {} components, quadratic has dimension {}",
            x0.len(),
            q.dim()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(DeltaError::InvalidInput("non-finite starting point".into()));
    }
    let x_star = q.minimizer()?;
    let objective_run = run_once(q, x0, &x_star, cfg, Rule::Objective)?;
    let delta_run = run_once(q, x0, &x_star, cfg, Rule::Delta)?;
    let ratio = match (objective_run.final_error, delta_run.final_error) {
        (a, b) if a == b => 1.0,
        (a, b) => a / b,
    };
    Ok(ExperimentReport {
        objective_run,
        delta_run,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::scalar::EPS_MACH;

    fn quad() -> QuadraticObjective {
        QuadraticObjective::new(Matrix::diagonal(&[1.0, 100.0]), vec![-1.0, 3.0]).unwrap()
    }

    #[test]
    fn window_bookkeeping() {
        let q = quad();
        let w = StagnationWindow::default();
        let w1 = w.push(&q, &[0.0, 0.0]).unwrap();
        assert_eq!((w1.len(), w1.pair_deltas().count()), (1, 0));
        assert!(w.is_empty());

        let w2 = w1.push(&q, &[0.5, 0.0]).unwrap();
        let (_, back) = q.value_and_delta(&[0.5, 0.0], &[-0.5, 0.0]).unwrap();
        assert_eq!(w2.pair_deltas().collect::<Vec<_>>(), vec![-back]);
        assert!(w2.is_stagnant(&q).is_err());

        let w4 = w2.push(&q, &[0.7, 0.0]).unwrap().push(&q, &[0.8, 0.0]).unwrap();
        assert_eq!((w4.len(), w4.pair_deltas().count()), (3, 2));
        assert_eq!(w4.iterates().next().unwrap(), &[0.5, 0.0]);
    }

    #[test]
    fn window_validation() {
        assert!(StagnationWindow::new(2, 2.0).is_err());
        assert!(StagnationWindow::new(3, 1.0).is_err());
        let w = StagnationWindow::default();
        assert!(w.push(&quad(), &[1.0]).is_err());
        assert!(w.push(&quad(), &[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn check_examples() {
        assert!(stagnation_check(-1e-16, -1e-15, 2.0));
        assert!(!stagnation_check(-9e-16, -1e-15, 2.0));
        assert!(!stagnation_check(0.0, 1e-15, 2.0));
        assert!(!stagnation_check(-1.0, -1.0, 2.0));
    }

    #[test]
    fn descending_window_far_from_minimizer_is_not_stagnant() {
        let q = quad();
        let w = [[0.0, 0.0], [0.3, -0.01], [0.6, -0.02]]
            .iter()
            .fold(StagnationWindow::default(), |w, x| w.push(&q, x).unwrap());
        let (l, r) = w.telescoping_pair(&q).unwrap();
        assert!(r < 0.0);
        assert!((l - r).abs() <= 1e-14 * r.abs());
        assert!(!w.is_stagnant(&q).unwrap());
    }

    #[test]
    fn newton_converges_in_one_step() {
        let q = QuadraticObjective::new(Matrix::identity(4), vec![-1.0; 4]).unwrap();
        let cfg = ExperimentConfig {
            method: Method::Newton,
            ..ExperimentConfig::default()
        };
        let rep = run_quadratic_experiment(&q, &[0.0; 4], &cfg).unwrap();
        assert!(rep.objective_run.final_error <= 10.0 * EPS_MACH);
        assert!(rep.delta_run.final_error <= 10.0 * EPS_MACH);
        assert_eq!(rep.ratio, 1.0);
    }

    #[test]
    fn zero_iterations() {
        let cfg = ExperimentConfig {
            max_iters: 0,
            ..ExperimentConfig::default()
        };
        let rep = run_quadratic_experiment(&quad(), &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(rep.objective_run.iterations, 0);
        assert_eq!(rep.delta_run.iterations, 0);
        assert_eq!(rep.objective_run.stop, StopReason::MaxIters);
    }

    #[test]
    fn delta_rule_outlasts_objective_rule() {
        let q = QuadraticObjective::new(Matrix::diagonal(&[1.0, 100.0]), vec![0.7, -1.3]).unwrap();
        let rep = run_quadratic_experiment(&q, &[0.0, 0.0], &ExperimentConfig::default()).unwrap();
        assert!(rep.delta_run.final_error <= rep.objective_run.final_error);
        assert!(rep.delta_run.final_error <= 1e3 * EPS_MACH, "{rep:?}");
    }
}
