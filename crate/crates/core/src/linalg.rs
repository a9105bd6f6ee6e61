//! Vector and matrix delta propagation, and the divided-difference linear solve.
//!
//! For `x = A⁻¹b` the difference between the solutions of the perturbed and
//! unperturbed systems is
//!
//! ```text
//! Δx = A⁻¹ ( [(I + B)⁻¹ − I] b + (I + B)⁻¹ Δb ),   B = ΔA·A⁻¹
//! ```
//!
//! The bracketed factor is summed as the Neumann series `−B + B² − …` with
//! the identity precanceled when `‖B‖∞ ≤ 1/2`, and by direct subtraction
//! otherwise. Pivoting only affects how the solves are carried out, so the
//! branch inside elimination never leaks into the difference.

use crate::error::{DeltaError, Result};
use crate::scalar::{DeltaScalar, EPS_MACH};

/// Largest dimension accepted by the dense routines.
pub const MAX_DIM: usize = 512;

/// Bound on `‖ΔA·A⁻¹‖∞` below which the series branch is used.
pub const SERIES_NORM_BOUND: f64 = 0.5;

/// Safety cap on Neumann series terms.
pub const MAX_SERIES_TERMS: usize = 200;

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n > MAX_DIM {
            return Err(DeltaError::Shape(format!("dimension {n} exceeds {MAX_DIM}")));
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(DeltaError::Shape(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(n, data)
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(DeltaError::Shape(format!(
                "{} entries cannot form a {n}x{n} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DeltaError::InvalidInput("matrix entry is not finite".into()));
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        Matrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// LU factorization with partial pivoting.
    pub fn lu(&self) -> Result<Lu> {
        Lu::factor(self)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Packed `PA = LU` factors.
#[derive(Debug, Clone)]
pub struct Lu {
    factors: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(a: &Matrix) -> Result<Self> {
        let n = a.n;
        let mut f = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) =
                (k..n)
                    .map(|i| (i, f[(i, k)].abs()))
                    .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(DeltaError::Singular(format!("zero pivot in column {k}")));
            }
            if p != k {
                for j in 0..n {
                    f.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let diag = f[(k, k)];
            for i in k + 1..n {
                let l = f[(i, k)] / diag;
                f[(i, k)] = l;
                if l != 0.0 {
                    for j in k + 1..n {
                        f.data[i * n + j] -= l * f.data[k * n + j];
                    }
                }
            }
        }
        Ok(Self { factors: f, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.factors.n;
        let f = &self.factors;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| f[(i, j)] * y[j]).sum();
            y[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| f[(i, j)] * y[j]).sum();
            y[i] = (y[i] - s) / f[(i, i)];
        }
        y
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.factors.n;
        let mut inv = Matrix::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e);
            e[j] = 0.0;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// Component-wise `(value, delta)` vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaVector {
    values: Vec<f64>,
    deltas: Vec<f64>,
}

impl DeltaVector {
    pub fn new(values: Vec<f64>, deltas: Vec<f64>) -> Result<Self> {
        if values.len() != deltas.len() {
            return Err(DeltaError::Shape(format!(
                "{} values but {} deltas",
                values.len(),
                deltas.len()
            )));
        }
        if values.iter().chain(&deltas).any(|v| !v.is_finite()) {
            return Err(DeltaError::InvalidInput("vector entry is not finite".into()));
        }
        Ok(Self { values, deltas })
    }

    /// Values that do not depend on the input: all deltas zero.
    pub fn parameters(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(values, vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn get(&self, i: usize) -> DeltaScalar {
        DeltaScalar::seed(self.values[i], self.deltas[i]).expect("entries are finite")
    }
}

/// Square `(value, delta)` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaMatrix {
    values: Matrix,
    deltas: Matrix,
}

impl DeltaMatrix {
    pub fn new(values: Matrix, deltas: Matrix) -> Result<Self> {
        if values.dim() != deltas.dim() {
            return Err(DeltaError::Shape(format!(
                "value matrix is {0}x{0} but delta matrix is {1}x{1}",
                values.dim(),
                deltas.dim()
            )));
        }
        Ok(Self { values, deltas })
    }

    pub fn parameters(values: Matrix) -> Self {
        let n = values.dim();
        Self {
            values,
            deltas: Matrix::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.dim()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn deltas(&self) -> &Matrix {
        &self.deltas
    }
}

fn dot_parts(u: &[f64], du: &[f64], v: &[f64], dv: &[f64]) -> Result<DeltaScalar> {
    let mut value = 0.0;
    let mut delta = 0.0;
    for i in 0..u.len() {
        value += u[i] * v[i];
        delta += u[i] * dv[i] + v[i] * du[i] + du[i] * dv[i];
    }
    if !value.is_finite() || !delta.is_finite() {
        return Err(DeltaError::Overflow { op: "dot" });
    }
    DeltaScalar::seed(value, delta)
}

/// `Σ uᵢvᵢ` with delta `Σ (uᵢΔvᵢ + vᵢΔuᵢ + ΔuᵢΔvᵢ)`.
pub fn dot_delta(a: &DeltaVector, b: &DeltaVector) -> Result<DeltaScalar> {
    if a.len() != b.len() {
        return Err(DeltaError::Shape(format!("dot of lengths {} and {}", a.len(), b.len())));
    }
    dot_parts(&a.values, &a.deltas, &b.values, &b.deltas)
}

pub fn matvec_delta(a: &DeltaMatrix, x: &DeltaVector) -> Result<DeltaVector> {
    let n = a.dim();
    if x.len() != n {
        return Err(DeltaError::Shape(format!(
            "{n}x{n} matrix times vector of length {}",
            x.len()
        )));
    }
    let mut values = Vec::with_capacity(n);
    let mut deltas = Vec::with_capacity(n);
    for i in 0..n {
        let t = dot_parts(a.values.row(i), a.deltas.row(i), &x.values, &x.deltas)?;
        values.push(t.value());
        deltas.push(t.delta());
    }
    DeltaVector::new(values, deltas)
}

/// Which evaluation of `(I + B)⁻¹ − I` a solve used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveBranch {
    /// Neumann series with the identity precanceled; `terms` summed.
    Series { terms: usize },
    /// `(I + B)⁻¹ b − b` by direct subtraction.
    Direct,
}

/// A delta solve together with diagnostics about how it was computed.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: DeltaVector,
    pub branch: SolveBranch,
    /// `‖ΔA·A⁻¹‖∞`
    pub perturbation_norm: f64,
}

/// Solves `A x = b` and returns `x` with `Δx = (A+ΔA)⁻¹(b+Δb) − A⁻¹b`.
pub fn solve_delta(a: &DeltaMatrix, b: &DeltaVector) -> Result<DeltaVector> {
    solve_delta_report(a, b).map(|r| r.solution)
}

pub fn solve_delta_report(a: &DeltaMatrix, b: &DeltaVector) -> Result<SolveReport> {
    let n = a.dim();
    if b.len() != n {
        return Err(DeltaError::Shape(format!(
            "{n}x{n} system with right-hand side of length {}",
            b.len()
        )));
    }
    let lu = a.values.lu().map_err(|e| DeltaError::Singular(format!("A: {e}")))?;
    a.values
        .add(&a.deltas)
        .lu()
        .map_err(|e| DeltaError::Singular(format!("A + ΔA: {e}")))?;

    let x = lu.solve(&b.values);
    let inv = lu.inverse();
    let bmat = a.deltas.matmul(&inv);
    let norm = bmat.inf_norm();

    let (bracket, branch) = if norm <= SERIES_NORM_BOUND {
        let (sum, terms) = neumann_bracket(&bmat, &b.values)?;
        (sum, SolveBranch::Series { terms })
    } else {
        let shifted = Matrix::identity(n).add(&bmat);
        let y = shifted
            .lu()
            .map_err(|e| DeltaError::Singular(format!("I + ΔA·A⁻¹: {e}")))?
            .solve(&b.values);
        let diff = y.iter().zip(&b.values).map(|(y, b)| y - b).collect();
        (diff, SolveBranch::Direct)
    };

    let rhs_term = if b.deltas.iter().all(|&d| d == 0.0) {
        vec![0.0; n]
    } else {
        Matrix::identity(n)
            .add(&bmat)
            .lu()
            .map_err(|e| DeltaError::Singular(format!("I + ΔA·A⁻¹: {e}")))?
            .solve(&b.deltas)
    };

    let combined: Vec<f64> = bracket.iter().zip(&rhs_term).map(|(p, q)| p + q).collect();
    let dx = if combined.iter().all(|&v| v == 0.0) {
        vec![0.0; n]
    } else {
        lu.solve(&combined)
            .into_iter()
            .map(|v| if v == 0.0 { 0.0 } else { v })
            .collect()
    };
    if x.iter().chain(&dx).any(|v| !v.is_finite()) {
        return Err(DeltaError::Overflow { op: "solve" });
    }
    Ok(SolveReport {
        solution: DeltaVector::new(x, dx)?,
        branch,
        perturbation_norm: norm,
    })
}

// Σ_{k≥1} (−B)^k b, stopping once the next term is negligible against the sum.
fn neumann_bracket(bmat: &Matrix, b: &[f64]) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let mut sum = vec![0.0_f64; n];
    let mut term = b.to_vec();
    for k in 1..=MAX_SERIES_TERMS {
        term = bmat.matvec(&term).into_iter().map(|v| -v).collect();
        let term_norm = term.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let sum_norm = sum.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        if term_norm == 0.0 || term_norm < EPS_MACH * sum_norm {
            return Ok((sum, k - 1));
        }
        for (s, t) in sum.iter_mut().zip(&term) {
            *s += t;
        }
    }
    Err(DeltaError::Numerical(format!(
        "Neumann series did not converge in {MAX_SERIES_TERMS} terms"
    )))
}

/// Parses the whitespace-separated matrix format: a line with `n`, then `n`
/// rows of `n` values. An optional second block of `n` rows gives `ΔA`.
pub fn parse_matrix_text(src: &str) -> Result<DeltaMatrix> {
    let mut lines = src
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (lineno, header) = lines
        .next()
        .ok_or_else(|| DeltaError::InvalidInput("empty matrix file".into()))?;
    let n: usize = header
        .parse()
        .map_err(|_| DeltaError::InvalidInput(format!("line {lineno}: expected dimension, got {header:?}")))?;
    if n == 0 || n > MAX_DIM {
        return Err(DeltaError::InvalidInput(format!(
            "line {lineno}: dimension must be in 1..={MAX_DIM}"
        )));
    }
    let rows: Vec<(usize, Vec<f64>)> = lines
        .map(|(ln, l)| {
            let row = l
                .split_whitespace()
                .map(|t| parse_finite(t, ln))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != n {
                return Err(DeltaError::InvalidInput(format!(
                    "line {ln}: expected {n} values, found {}",
                    row.len()
                )));
            }
            Ok((ln, row))
        })
        .collect::<Result<_>>()?;
    let values: Vec<Vec<f64>> = rows.iter().map(|(_, r)| r.clone()).collect();
    match values.len() {
        m if m == n => DeltaMatrix::new(Matrix::from_rows(&values)?, Matrix::zeros(n)),
        m if m == 2 * n => DeltaMatrix::new(Matrix::from_rows(&values[..n])?, Matrix::from_rows(&values[n..])?),
        m => Err(DeltaError::InvalidInput(format!(
            "expected {n} or {} matrix rows, found {m}",
            2 * n
        ))),
    }
}

pub(crate) fn parse_finite(token: &str, line: usize) -> Result<f64> {
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DeltaError::InvalidInput(format!(
            "line {line}: invalid number {token:?}"
        ))),
    }
}
