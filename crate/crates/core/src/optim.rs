//! Step-acceptance tests driven by accurate divided differences.

use crate::error::{DeltaError, Result};
use crate::linalg::{DeltaVector, Matrix};
use crate::scalar::DeltaScalar;

/// An objective that can report `f(x)` together with `f(x + s) − f(x)`.
pub trait DeltaObjective {
    fn arity(&self) -> usize;

    /// Returns `(f(x), f(x + s) − f(x))`.
    fn value_and_delta(&self, x: &[f64], s: &[f64]) -> Result<(f64, f64)>;

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// Packages caller-supplied closures as a [`DeltaObjective`].
pub struct FnObjective<E, G> {
    arity: usize,
    evaluator: E,
    gradient: G,
}

impl<E, G> FnObjective<E, G>
where
    E: Fn(&[f64], &[f64]) -> Result<(f64, f64)>,
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    pub fn new(arity: usize, evaluator: E, gradient: G) -> Self {
        Self {
            arity,
            evaluator,
            gradient,
        }
    }
}

impl<E, G> DeltaObjective for FnObjective<E, G>
where
    E: Fn(&[f64], &[f64]) -> Result<(f64, f64)>,
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    fn arity(&self) -> usize {
        self.arity
    }

    fn value_and_delta(&self, x: &[f64], s: &[f64]) -> Result<(f64, f64)> {
        check_len(self.arity, x)?;
        check_len(self.arity, s)?;
        (self.evaluator)(x, s)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.arity, x)?;
        let g = (self.gradient)(x)?;
        check_len(self.arity, &g)?;
        Ok(g)
    }
}

fn check_len(n: usize, v: &[f64]) -> Result<()> {
    if v.len() == n {
        Ok(())
    } else {
        Err(DeltaError::Shape(format!("expected {n} components, got {}", v.len())))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `f(x) = ½xᵀMx + dᵀx` with `M` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    m: Matrix,
    d: Vec<f64>,
}

const SYMMETRY_TOL: f64 = 1e-14;

impl QuadraticObjective {
    pub fn new(m: Matrix, d: Vec<f64>) -> Result<Self> {
        let n = m.dim();
        if d.len() != n {
            return Err(DeltaError::Shape(format!("M is {n}x{n} but d has {} entries", d.len())));
        }
        if d.iter().any(|v| !v.is_finite()) || m.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(DeltaError::InvalidInput("non-finite quadratic coefficients".into()));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if (a - b).abs() > SYMMETRY_TOL * a.abs().max(b.abs()) {
                    return Err(DeltaError::InvalidInput(format!("M is not symmetric at ({i}, {j})")));
                }
            }
        }
        cholesky(&m)?;
        Ok(Self { m, d })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn linear(&self) -> &[f64] {
        &self.d
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mx = self.m.matvec(x);
        x.iter()
            .zip(&mx)
            .zip(&self.d)
            .map(|((xi, mi), di)| (0.5 * mi + di) * xi)
            .sum()
    }

    /// `Mx + d`.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        self.m.matvec(x).iter().zip(&self.d).map(|(a, b)| a + b).collect()
    }

    /// `x* = −M⁻¹d` by direct solve.
    pub fn minimizer(&self) -> Result<Vec<f64>> {
        let neg: Vec<f64> = self.d.iter().map(|v| -v).collect();
        Ok(self.m.lu()?.solve(&neg))
    }
}

fn cholesky(m: &Matrix) -> Result<()> {
    let n = m.dim();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(DeltaError::InvalidInput("M is not positive definite".into()));
        }
        let ljj = diag.sqrt();
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = v / ljj;
        }
    }
    Ok(())
}

/// Value and divided difference of a quadratic:
/// `D_f(x, Δx) = (Mx + d)ᵀΔx + ½ΔxᵀMΔx`.
///
/// The constant `f(x)` never enters the difference, so nothing cancels
/// except what the residual `Mx + d` itself carries.
pub fn quadratic_delta(q: &QuadraticObjective, x: &DeltaVector) -> Result<DeltaScalar> {
    if x.len() != q.dim() {
        return Err(DeltaError::Shape(format!(
            "quadratic has dimension {} but x has {} entries",
            q.dim(),
            x.len()
        )));
    }
    let (xv, dx) = (x.values(), x.deltas());
    let r = q.residual(xv);
    let mdx = q.m.matvec(dx);
    let delta = dot(&r, dx) + 0.5 * dot(dx, &mdx);
    let value = q.value(xv);
    if !value.is_finite() || !delta.is_finite() {
        return Err(DeltaError::Overflow { op: "quadratic" });
    }
    DeltaScalar::seed(value, delta)
}

impl DeltaObjective for QuadraticObjective {
    fn arity(&self) -> usize {
        self.dim()
    }

    fn value_and_delta(&self, x: &[f64], s: &[f64]) -> Result<(f64, f64)> {
        let t = quadratic_delta(self, &DeltaVector::new(x.to_vec(), s.to_vec())?)?;
        Ok((t.value(), t.delta()))
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), x)?;
        Ok(self.residual(x))
    }
}

/// Sufficient decrease: `f(x + αp) − f(x) ≤ σα∇f(x)ᵀp`, with the left side
/// taken from the divided-difference evaluator.
pub fn armijo_accepts(obj: &dyn DeltaObjective, x: &[f64], p: &[f64], alpha: f64, sigma: f64) -> Result<bool> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(DeltaError::InvalidInput(format!("alpha = {alpha} must be positive")));
    }
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(DeltaError::InvalidInput(format!("sigma = {sigma} must lie in (0, 1)")));
    }
    check_len(obj.arity(), p)?;
    let step: Vec<f64> = p.iter().map(|v| alpha * v).collect();
    let (_, delta) = obj.value_and_delta(x, &step)?;
    let slope = dot(&obj.gradient(x)?, p);
    Ok(delta <= sigma * alpha * slope)
}

/// Actual over predicted change, `(f(x+s) − f(x)) / (m(x+s) − m(x))`.
pub fn trust_region_rho(obj: &dyn DeltaObjective, model_delta: f64, x: &[f64], s: &[f64]) -> Result<f64> {
    if model_delta == 0.0 {
        return Err(DeltaError::DegenerateModel);
    }
    if !model_delta.is_finite() {
        return Err(DeltaError::InvalidInput("model difference is not finite".into()));
    }
    let (_, delta) = obj.value_and_delta(x, s)?;
    Ok(delta / model_delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::EPS_MACH;

    fn square() -> impl DeltaObjective {
        FnObjective::new(
            1,
            |x: &[f64], s: &[f64]| {
                let t = DeltaScalar::seed(x[0], s[0])?.square()?;
                Ok((t.value(), t.delta()))
            },
            |x: &[f64]| Ok(vec![2.0 * x[0]]),
        )
    }

    #[test]
    fn armijo_examples() {
        let f = square();
        assert!(armijo_accepts(&f, &[1.0], &[-1.0], 1.0, 0.1).unwrap());
        assert!(armijo_accepts(&f, &[1.0], &[0.0], 1.0, 0.1).unwrap());
        assert!(!armijo_accepts(&f, &[1.0], &[1.0], 1.0, 0.1).unwrap());
        assert!(armijo_accepts(&f, &[1.0], &[-1.0], 0.0, 0.1).is_err());
        assert!(armijo_accepts(&f, &[1.0], &[-1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn armijo_sees_tiny_steps() {
        // Naive subtraction would report zero decrease and reject.
        let f = square();
        assert!(armijo_accepts(&f, &[1.0], &[-1.0], 1e-18, 0.5).unwrap());
    }

    #[test]
    fn rho_examples() {
        let f = square();
        let rho = trust_region_rho(&f, 2e-18, &[1.0], &[1e-18]).unwrap();
        assert!((rho - 1.0).abs() <= 4.0 * EPS_MACH);
        assert_eq!(
            trust_region_rho(&f, 0.0, &[1.0], &[1e-18]).unwrap_err(),
            DeltaError::DegenerateModel
        );
    }

    #[test]
    fn quadratic_examples() {
        let q = QuadraticObjective::new(Matrix::identity(2), vec![0.0, 0.0]).unwrap();
        let t = quadratic_delta(&q, &DeltaVector::new(vec![1.0, 0.0], vec![1e-18, 0.0]).unwrap()).unwrap();
        assert_eq!(t.value(), 0.5);
        assert_eq!(t.delta(), 1e-18);

        let t = quadratic_delta(&q, &DeltaVector::parameters(vec![1.0, 3.0]).unwrap()).unwrap();
        assert_eq!(t.delta().to_bits(), 0);

        let q = QuadraticObjective::new(Matrix::diagonal(&[2.0, 8.0]), vec![-2.0, 0.0]).unwrap();
        let h = 3e-9;
        let t = quadratic_delta(&q, &DeltaVector::new(vec![1.0, 0.0], vec![h, 0.0]).unwrap()).unwrap();
        assert!((t.delta() - h * h).abs() <= 2.0 * EPS_MACH * h * h);
        assert_eq!(q.minimizer().unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn quadratic_validation() {
        let asym = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        assert!(QuadraticObjective::new(asym, vec![0.0; 2]).is_err());
        let indefinite = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(QuadraticObjective::new(indefinite, vec![0.0; 2]).is_err());
        assert!(QuadraticObjective::new(Matrix::identity(2), vec![0.0; 3]).is_err());
        let q = QuadraticObjective::new(Matrix::identity(2), vec![0.0; 2]).unwrap();
        assert!(quadratic_delta(&q, &DeltaVector::parameters(vec![1.0]).unwrap()).is_err());
    }

    #[test]
    fn quadratic_rho_is_one_at_tiny_steps() {
        let q = QuadraticObjective::new(Matrix::diagonal(&[1.0, 4.0, 9.0]), vec![1.0, -2.0, 0.5]).unwrap();
        let x = [0.3, 0.7, -1.1];
        for k in 1..=18 {
            let s: Vec<f64> = [1.0, -2.0, 0.5].iter().map(|v| v * 10f64.powi(-k)).collect();
            // Exact model of a quadratic is the quadratic itself.
            let model = quadratic_delta(&q, &DeltaVector::new(x.to_vec(), s.clone()).unwrap())
                .unwrap()
                .delta();
            let rho = trust_region_rho(&q, model, &x, &s).unwrap();
            assert!((rho - 1.0).abs() <= 100.0 * EPS_MACH);
        }
    }
}
