//! The lifted scalar and the per-operation divided-differencing rules.
//!
//! A [`DeltaScalar`] carries a working-precision value `u` together with the
//! finite difference `Δu` that the same computation would see if every input
//! `x` were replaced by `x + s`. Each rule computes `Δt` for `t = op(u, v)`
//! from `(u, Δu)` and `(v, Δv)` with the common term precanceled, so no
//! subtraction of two nearly equal results ever happens.

use crate::error::{DeltaError, Result};

/// Unit roundoff of IEEE double precision (half the gap between 1 and the next double).
pub const EPS_MACH: f64 = f64::EPSILON / 2.0;

/// Number of Taylor terms used for `exp(d) - 1` when `|d| <= 1`.
pub const EXP_TAYLOR_TERMS: u32 = 17;

/// A value together with its exactly-tracked finite difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaScalar {
    value: f64,
    delta: f64,
}

// Fallible rules, so the std operator traits do not fit.
#[allow(clippy::should_implement_trait)]
impl DeltaScalar {
    /// A quantity that does not depend on the inputs: its delta is zero.
    pub fn parameter(p: f64) -> Result<Self> {
        if !p.is_finite() {
            return Err(DeltaError::InvalidInput(format!("parameter {p} is not finite")));
        }
        Ok(Self { value: p, delta: 0.0 })
    }

    /// An input variable `x` perturbed by the step `s`.
    pub fn seed(x: f64, s: f64) -> Result<Self> {
        if !x.is_finite() || !s.is_finite() {
            return Err(DeltaError::InvalidInput(format!("seed ({x}, {s}) is not finite")));
        }
        Ok(Self::raw(x, s))
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// The value at the shifted point, `u + Δu`, rounded to working precision.
    pub fn shifted_value(&self) -> f64 {
        self.value + self.delta
    }

    // Canonicalizes a negative zero delta so that zero steps give +0.0 bitwise.
    fn raw(value: f64, delta: f64) -> Self {
        let delta = if delta == 0.0 { 0.0 } else { delta };
        Self { value, delta }
    }

    fn checked(op: &'static str, value: f64, delta: f64) -> Result<Self> {
        if value.is_finite() && delta.is_finite() {
            Ok(Self::raw(value, delta))
        } else {
            Err(DeltaError::Overflow { op })
        }
    }

    pub fn neg(self) -> Self {
        Self::raw(-self.value, -self.delta)
    }

    pub fn add(self, rhs: Self) -> Result<Self> {
        Self::checked("add", self.value + rhs.value, self.delta + rhs.delta)
    }

    pub fn sub(self, rhs: Self) -> Result<Self> {
        Self::checked("sub", self.value - rhs.value, self.delta - rhs.delta)
    }

    /// `Δ(uv) = uΔv + vΔu + ΔuΔv`; the `uv` term is precanceled.
    pub fn mul(self, rhs: Self) -> Result<Self> {
        let (u, du) = (self.value, self.delta);
        let (v, dv) = (rhs.value, rhs.delta);
        Self::checked("mul", u * v, u * dv + v * du + du * dv)
    }

    /// `Δ(1/u) = -Δu / (u (u + Δu))`.
    pub fn recip(self) -> Result<Self> {
        let (u, du) = (self.value, self.delta);
        let shifted = u + du;
        if u == 0.0 || shifted == 0.0 {
            return Err(DeltaError::domain("recip", "division by zero"));
        }
        if (u > 0.0) != (shifted > 0.0) {
            return Err(DeltaError::domain("recip", "pole between the two points"));
        }
        let delta = if du == 0.0 { 0.0 } else { -(du / u) / shifted };
        Self::checked("recip", 1.0 / u, delta)
    }

    /// Division as reciprocation followed by multiplication.
    pub fn div(self, rhs: Self) -> Result<Self> {
        self.mul(rhs.recip()?)
    }

    /// `Δ(u²) = 2uΔu + Δu²`.
    pub fn square(self) -> Result<Self> {
        let (u, du) = (self.value, self.delta);
        Self::checked("square", u * u, 2.0 * u * du + du * du)
    }

    /// `Δ√u = Δu / (√(u+Δu) + √u)`.
    pub fn sqrt(self) -> Result<Self> {
        let (u, du) = (self.value, self.delta);
        let shifted = u + du;
        if u < 0.0 || shifted < 0.0 {
            return Err(DeltaError::domain("sqrt", "negative radicand"));
        }
        let root = u.sqrt();
        let delta = if du == 0.0 { 0.0 } else { du / (shifted.sqrt() + root) };
        Self::checked("sqrt", root, delta)
    }

    /// `Δ exp(u) = exp(u) (exp(Δu) - 1)`, see [`exp_step_factor`].
    pub fn exp(self) -> Result<Self> {
        let value = self.value.exp();
        if !value.is_finite() {
            return Err(DeltaError::Overflow { op: "exp" });
        }
        let delta = if self.delta == 0.0 {
            0.0
        } else {
            value * exp_step_factor(self.delta)
        };
        Self::checked("exp", value, delta)
    }

    /// `Δ log(u) = log1p(Δu / u)`.
    pub fn ln(self) -> Result<Self> {
        let (u, du) = (self.value, self.delta);
        if u <= 0.0 || u + du <= 0.0 {
            return Err(DeltaError::domain("log", "nonpositive argument"));
        }
        let ratio = du / u;
        if ratio <= -1.0 {
            return Err(DeltaError::domain("log", "nonpositive argument"));
        }
        Self::checked("log", u.ln(), ratio.ln_1p())
    }

    /// `u^v`. Input-independent exponents 2, 1/2 and -1 use the dedicated
    /// rules; everything else goes through `exp(v log u)`.
    pub fn pow(self, exponent: Self) -> Result<Self> {
        if exponent.delta == 0.0 {
            if exponent.value == 2.0 {
                return self.square();
            } else if exponent.value == 0.5 {
                return self.sqrt();
            } else if exponent.value == -1.0 {
                return self.recip();
            }
        }
        exponent.mul(self.ln()?)?.exp()
    }
}

/// `exp(d) - 1`: direct when `|d| > 1`, otherwise the 17-term Taylor series
/// with the leading 1 precanceled. `|d| == 1` takes the series.
pub fn exp_step_factor(d: f64) -> f64 {
    if d.abs() > 1.0 {
        d.exp() - 1.0
    } else {
        expm1_taylor(d)
    }
}

/// `d + d²/2! + … + d¹⁷/17!` in nested Horner form.
pub fn expm1_taylor(d: f64) -> f64 {
    let mut acc = 1.0;
    for k in (2..=EXP_TAYLOR_TERMS).rev() {
        acc = (d / f64::from(k)).mul_add(acc, 1.0);
    }
    d * acc
}

/// Error model for accuracy checks: `|computed - reference| <= c ε max(|s|, |reference|)`,
/// which is the `c·|s|·ε·max(1, |D|/|s|)` form with the empirical slack `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyBudget {
    eps_mach: f64,
    c_factor: f64,
}

impl Default for AccuracyBudget {
    fn default() -> Self {
        Self {
            eps_mach: EPS_MACH,
            c_factor: 100.0,
        }
    }
}

impl AccuracyBudget {
    pub fn new(eps_mach: f64, c_factor: f64) -> Result<Self> {
        // Written so that NaN is rejected too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(eps_mach > 0.0) || !(c_factor >= 1.0) {
            return Err(DeltaError::InvalidInput(format!(
                "accuracy budget needs eps_mach > 0 and c_factor >= 1, got ({eps_mach}, {c_factor})"
            )));
        }
        Ok(Self { eps_mach, c_factor })
    }

    pub fn eps_mach(&self) -> f64 {
        self.eps_mach
    }

    pub fn c_factor(&self) -> f64 {
        self.c_factor
    }

    pub fn tolerance(&self, step_norm: f64, reference: f64) -> f64 {
        self.c_factor * self.eps_mach * step_norm.abs().max(reference.abs())
    }

    pub fn accepts(&self, computed: f64, reference: f64, step_norm: f64) -> bool {
        (computed - reference).abs() <= self.tolerance(step_norm, reference)
    }
}
