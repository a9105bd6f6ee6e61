//! Cubic splines stored in the dual left/right-anchored form, and their
//! divided difference by the telescoping formula.
//!
//! Piece `j` covers `[ξ_j, ξ_{j+1})` with `ξ_0 = −∞` and `ξ_{k+1} = +∞`.
//! Interior pieces carry both `a(x−ξ_j)³ + b(x−ξ_j)² + c(x−ξ_j) + d` and
//! `m(x−ξ_{j+1})³ + n(x−ξ_{j+1})² + o(x−ξ_{j+1}) + p`; the piece below the
//! first knot only has the right-anchored form and the piece above the last
//! knot only the left-anchored one.

use crate::error::{DeltaError, Result};
use crate::linalg::parse_finite;
use crate::scalar::DeltaScalar;

/// Relative tolerance for left/right agreement at interval midpoints.
pub const DUAL_AGREEMENT_TOL: f64 = 1e-12;

/// Coefficients of `c3·t³ + c2·t² + c1·t + c0` in the offset `t` from the anchor knot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cubic {
    pub c3: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl Cubic {
    pub fn new(c3: f64, c2: f64, c1: f64, c0: f64) -> Self {
        Self { c3, c2, c1, c0 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        ((self.c3 * t + self.c2) * t + self.c1) * t + self.c0
    }

    /// `p(t) − p(0)`: the constant coefficient precancels.
    pub fn rise(&self, t: f64) -> f64 {
        ((self.c3 * t + self.c2) * t + self.c1) * t
    }

    /// `p(t + h) − p(t)` from the binomial expansion, with like terms subtracted.
    pub fn step(&self, t: f64, h: f64) -> f64 {
        let cubic = 3.0 * t * t + 3.0 * t * h + h * h;
        let quad = 2.0 * t + h;
        h * (self.c3 * cubic + self.c2 * quad + self.c1)
    }

    /// [`Cubic::rise`] as an unevaluated sum `hi + lo` (compensated Horner).
    fn rise_compensated(&self, t: f64) -> (f64, f64) {
        let (mut r, mut err) = (self.c3, 0.0_f64);
        for a in [self.c2, self.c1, 0.0] {
            let (p, pe) = two_prod(r, t);
            let (q, se) = two_sum(p, a);
            r = q;
            err = err.mul_add(t, pe + se);
        }
        (r, err)
    }

    /// Rise at the unevaluated offset `t + tl`, with `tl` tiny next to `t`.
    fn rise_at(&self, t: f64, tl: f64) -> (f64, f64) {
        let (r, err) = self.rise_compensated(t);
        (r, self.slope(t).mul_add(tl, err))
    }

    fn slope(&self, t: f64) -> f64 {
        (3.0 * self.c3 * t + 2.0 * self.c2) * t + self.c1
    }

    fn terms_magnitude(&self, t: f64) -> f64 {
        (self.c3 * t * t * t).abs() + (self.c2 * t * t).abs() + (self.c1 * t).abs() + self.c0.abs()
    }

    fn coeffs(&self) -> [f64; 4] {
        [self.c3, self.c2, self.c1, self.c0]
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// A validated cubic spline.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    knots: Vec<f64>,
    // left[0] repeats right[0]; left[j] for j in 1..=k is anchored at knots[j-1].
    left: Vec<Cubic>,
    // right[j] for j in 0..k is anchored at knots[j].
    right: Vec<Cubic>,
}

impl CubicSpline {
    /// Builds a spline from `k` knots, `k` right-anchored pieces (`right[0]` is
    /// the extrapolation piece below the first knot) and `k` left-anchored
    /// pieces (`left[k-1]` is the extrapolation piece above the last knot).
    pub fn new(knots: Vec<f64>, right: Vec<Cubic>, left: Vec<Cubic>) -> Result<Self> {
        let k = knots.len();
        if k == 0 {
            return Err(DeltaError::Spline("at least one knot is required".into()));
        }
        if right.len() != k || left.len() != k {
            return Err(DeltaError::Spline(format!(
                "{k} knots need {k} left and {k} right pieces, got {} and {}",
                left.len(),
                right.len()
            )));
        }
        if knots.iter().any(|v| !v.is_finite())
            || left
                .iter()
                .chain(&right)
                .flat_map(|c| c.coeffs())
                .any(|v| !v.is_finite())
        {
            return Err(DeltaError::Spline("non-finite knot or coefficient".into()));
        }
        if let Some(w) = knots.windows(2).position(|w| w[0] >= w[1]) {
            return Err(DeltaError::Spline(format!(
                "knots not strictly increasing at index {}",
                w + 1
            )));
        }
        let mut padded = Vec::with_capacity(k + 1);
        padded.push(right[0]);
        padded.extend(left);
        let sp = Self {
            knots,
            left: padded,
            right,
        };
        sp.validate()?;
        Ok(sp)
    }

    fn validate(&self) -> Result<()> {
        let k = self.knots.len();
        for i in 0..k {
            if self.right[i].c0 != self.left[i + 1].c0 {
                return Err(DeltaError::Spline(format!(
                    "continuity broken at knot {}: p = {:?} but d = {:?}",
                    i + 1,
                    self.right[i].c0,
                    self.left[i + 1].c0
                )));
            }
        }
        for j in 1..k {
            let (lo, hi) = (self.knots[j - 1], self.knots[j]);
            let mid = lo + 0.5 * (hi - lo);
            let (tl, tr) = (mid - lo, mid - hi);
            let vl = self.left[j].eval(tl);
            let vr = self.right[j].eval(tr);
            let scale = self.left[j].terms_magnitude(tl).max(self.right[j].terms_magnitude(tr));
            if (vl - vr).abs() > DUAL_AGREEMENT_TOL * scale {
                return Err(DeltaError::Spline(format!(
                    "left and right forms of interval {j} disagree at its midpoint ({vl:?} vs {vr:?})"
                )));
            }
        }
        Ok(())
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Left-anchored piece `j` (for `j` in `1..=k`).
    pub fn left_piece(&self, j: usize) -> &Cubic {
        &self.left[j]
    }

    /// Right-anchored piece `j` (for `j` in `0..k`).
    pub fn right_piece(&self, j: usize) -> &Cubic {
        &self.right[j]
    }

    /// Index of the piece containing `x`. Intervals are closed on the left,
    /// so a knot belongs to the piece on its right.
    pub fn piece_of(&self, x: f64) -> usize {
        self.knots.partition_point(|&k| k <= x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.piece_of(x) {
            0 => self.right[0].eval(x - self.knots[0]),
            j => self.left[j].eval(x - self.knots[j - 1]),
        }
    }

    /// Piece containing the exact point `hi + lo`.
    fn piece_of_pair(&self, hi: f64, lo: f64) -> usize {
        self.knots.partition_point(|&k| k < hi || (k == hi && lo >= 0.0))
    }

    /// `s(a + h) − s(a)` for `h >= 0`, with the start point carried exactly
    /// as `a + al`. The pieces can be much larger than their sum, so they are
    /// accumulated with error-free transforms and rounded once.
    fn forward_delta(&self, a: f64, al: f64, h: f64) -> f64 {
        let (e, el) = two_sum(a, h);
        let (e, el) = two_sum(e, el + al);
        let i = self.piece_of_pair(a, al);
        let j = self.piece_of_pair(e, el);
        if i >= j {
            let (c, anchor) = match i {
                0 => (&self.right[0], self.knots[0]),
                i => (&self.left[i], self.knots[i - 1]),
            };
            let (t, tl) = two_sum(a, -anchor);
            let tl = tl + al;
            return c.step(t, h) + tl * (c.slope(t + h) - c.slope(t));
        }
        // s(ξ_{i+1}) − s(a) from the right-anchored form of piece i.
        let (t, tl) = two_sum(a, -self.knots[i]);
        let (tail, tail_lo) = self.right[i].rise_at(t, tl + al);
        // s(a + h) − s(ξ_j) from the left-anchored form of piece j.
        let (t, tl) = two_sum(a, -self.knots[j - 1]);
        let (t, tl2) = two_sum(t, h);
        let (head, head_lo) = self.left[j].rise_at(t, tl + tl2 + al);
        let (mut sum, err) = two_sum(head, -tail);
        let mut lo = err + (head_lo - tail_lo);
        // s(ξ_{l+1}) − s(ξ_l) = p_l − d_l over the pieces fully crossed.
        for l in i + 1..j {
            let (d, de) = two_sum(self.right[l].c0, -self.left[l].c0);
            let (t, te) = two_sum(sum, d);
            sum = t;
            lo += de + te;
        }
        sum + lo
    }

    /// Writes the text file format accepted by [`CubicSpline::parse`].
    pub fn to_text(&self) -> String {
        let k = self.knots.len();
        let mut out = format!("knots: {k}\n");
        let knots: Vec<String> = self.knots.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&knots.join(" "));
        out.push('\n');
        let line = |c: &Cubic| {
            let [a, b, c, d] = c.coeffs();
            format!("{a:?} {b:?} {c:?} {d:?}\n")
        };
        for piece in &self.left {
            out.push_str(&line(piece));
        }
        for piece in &self.right {
            out.push_str(&line(piece));
        }
        out
    }

    /// Parses the spline text format:
    ///
    /// ```text
    /// knots: k
    /// ξ₁ … ξ_k
    /// m₀ n₀ o₀ p₀          below-range piece
    /// a_i b_i c_i d_i      k lines, i = 1..k (line k is the above-range piece)
    /// m_i n_i o_i p_i      k lines, i = 0..k-1
    /// ```
    ///
    /// The below-range piece appears both as the first left line and the
    /// first right line; the two copies must match exactly.
    pub fn parse(src: &str) -> Result<Self> {
        let mut lines = src
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| DeltaError::Spline(format!("unexpected end of file, expected {what}")))
        };
        let (ln, header) = next("header")?;
        let k: usize = header
            .strip_prefix("knots:")
            .and_then(|rest| rest.trim().parse().ok())
            .ok_or_else(|| DeltaError::Spline(format!("line {ln}: expected `knots: k`")))?;
        if k == 0 || k > 1 << 20 {
            return Err(DeltaError::Spline(format!("line {ln}: knot count out of range")));
        }
        let (ln, knot_line) = next("knot line")?;
        let knots = parse_row(knot_line, ln, k)?;
        let mut cubic_line = |what: &str| -> Result<Cubic> {
            let (ln, l) = next(what)?;
            let v = parse_row(l, ln, 4)?;
            Ok(Cubic::new(v[0], v[1], v[2], v[3]))
        };
        let below = cubic_line("below-range piece")?;
        let left = (0..k)
            .map(|_| cubic_line("left-anchored piece"))
            .collect::<Result<Vec<_>>>()?;
        let right = (0..k)
            .map(|_| cubic_line("right-anchored piece"))
            .collect::<Result<Vec<_>>>()?;
        if let Ok((ln, _)) = next("nothing") {
            return Err(DeltaError::Spline(format!("line {ln}: trailing content")));
        }
        if below != right[0] {
            return Err(DeltaError::Spline(
                "below-range piece differs between the left and right blocks".into(),
            ));
        }
        Self::new(knots, right, left)
    }
}

fn parse_row(line: &str, ln: usize, expected: usize) -> Result<Vec<f64>> {
    let row = line
        .split_whitespace()
        .map(|t| parse_finite(t, ln))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| DeltaError::Spline(e.to_string()))?;
    if row.len() != expected {
        return Err(DeltaError::Spline(format!(
            "line {ln}: expected {expected} values, found {}",
            row.len()
        )));
    }
    Ok(row)
}

/// Value of the spline at `x` and its divided difference for the step carried by `x`.
///
/// Negative steps are handled by swapping the roles of the two points: the
/// difference is evaluated from `x + Δx` with step `−Δx` and negated. The
/// start `x + Δx` is carried exactly, so the swap loses nothing; when it is
/// representable the two orientations run identical arithmetic.
pub fn spline_eval_delta(sp: &CubicSpline, x: DeltaScalar) -> Result<DeltaScalar> {
    let (u, du) = (x.value(), x.delta());
    let shifted = u + du;
    if !shifted.is_finite() {
        return Err(DeltaError::Overflow { op: "spline" });
    }
    let delta = if du == 0.0 {
        0.0
    } else if du > 0.0 {
        sp.forward_delta(u, 0.0, du)
    } else {
        let (start, r) = two_sum(u, du);
        -sp.forward_delta(start, r, -du)
    };
    let value = sp.eval(u);
    if !value.is_finite() || !delta.is_finite() {
        return Err(DeltaError::Overflow { op: "spline" });
    }
    DeltaScalar::seed(value, delta)
}

/// Builds a spline from left-anchored coefficients by shifting each interior
/// piece exactly to its right knot. With short dyadic coefficients and knot
/// gaps the shift is exact, so both forms describe the same cubic.
pub fn from_left_pieces(knots: Vec<f64>, below: Cubic, left: Vec<Cubic>) -> Result<CubicSpline> {
    let k = knots.len();
    if left.len() != k {
        return Err(DeltaError::Spline(format!(
            "{k} knots need {k} left pieces, got {}",
            left.len()
        )));
    }
    let mut right = Vec::with_capacity(k);
    right.push(below);
    for j in 1..k {
        let h = knots[j] - knots[j - 1];
        let Cubic {
            c3: a,
            c2: b,
            c1: c,
            c0: d,
        } = left[j - 1];
        right.push(Cubic::new(
            a,
            b + 3.0 * a * h,
            c + 2.0 * b * h + 3.0 * a * h * h,
            ((a * h + b) * h + c) * h + d,
        ));
    }
    CubicSpline::new(knots, right, left)
}
