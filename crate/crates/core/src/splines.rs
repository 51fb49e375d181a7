//! B-splines and NURBS: evaluation, derivatives and Boehm knot insertion.
//!
//! The public [`KnotVector`] works on plain `f64` knots. The mesh-driven
//! spaces use the same kernels ([`nonzero_basis`], [`boehm_insert`]) with
//! exact dyadic knots and precomputed knot offsets.

use crate::error::{Error, Result};

/// Largest polynomial degree supported by the fixed-size evaluation buffers.
pub const MAX_DEGREE: usize = 8;

/// A nondecreasing knot sequence together with the spline degree.
///
/// Basis functions are indexed from 0; function `i` is supported on
/// `[knots[i], knots[i + p + 1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
}

/// Coefficients of a rational spline: one control value and one weight per
/// basis function.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineCoefficients {
    pub controls: Vec<f64>,
    pub weights: Vec<f64>,
}

impl KnotVector {
    pub fn new(knots: Vec<f64>, degree: usize) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::UnsupportedDegree(format!(
                "degree {degree} exceeds {MAX_DEGREE}"
            )));
        }
        if knots.len() < degree + 2 {
            return Err(Error::Argument(format!(
                "{} knots cannot carry a degree-{degree} basis function",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Argument("knots must be finite and nondecreasing".into()));
        }
        if knots[0] == knots[knots.len() - 1] {
            return Err(Error::Argument("knot vector spans an empty interval".into()));
        }
        Ok(Self { knots, degree })
    }

    /// Open knot vector with `p + 1` copies of the first and last breakpoint
    /// and the given interior multiplicities.
    pub fn open(breakpoints: &[f64], interior_multiplicities: &[usize], degree: usize) -> Result<Self> {
        if breakpoints.len() < 2 || interior_multiplicities.len() + 2 != breakpoints.len() {
            return Err(Error::Argument(
                "need n + 2 breakpoints for n interior multiplicities".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument("breakpoints must be strictly increasing".into()));
        }
        if interior_multiplicities.iter().any(|&m| m == 0 || m > degree + 1) {
            return Err(Error::Argument(format!(
                "interior multiplicities must lie in 1..={}",
                degree + 1
            )));
        }
        let mut knots = vec![breakpoints[0]; degree + 1];
        for (b, &m) in breakpoints[1..breakpoints.len() - 1]
            .iter()
            .zip(interior_multiplicities)
        {
            knots.extend(std::iter::repeat_n(*b, m));
        }
        knots.extend(std::iter::repeat_n(breakpoints[breakpoints.len() - 1], degree + 1));
        Self::new(knots, degree)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Interval on which the basis forms a partition of unity.
    pub fn domain(&self) -> (f64, f64) {
        (self.knots[self.degree], self.knots[self.num_basis()])
    }

    pub fn multiplicity(&self, t: f64) -> usize {
        self.knots.iter().filter(|&&k| k == t).count()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.num_basis() {
            return Err(Error::Index {
                index: i,
                count: self.num_basis(),
            });
        }
        Ok(())
    }

    fn check_param(&self, t: f64) -> Result<()> {
        let (a, b) = (self.knots[0], self.knots[self.knots.len() - 1]);
        if !(t >= a && t < b) {
            return Err(Error::Domain { t, a, b });
        }
        Ok(())
    }

    /// Index `s` with `knots[s] <= t < knots[s + 1]` and `p <= s < num_basis`.
    fn span(&self, t: f64) -> Result<usize> {
        let (a, b) = self.domain();
        if !(t >= a && t < b) {
            return Err(Error::Domain { t, a, b });
        }
        let upper = self.knots[..=self.num_basis()].partition_point(|&k| k <= t);
        Ok(upper - 1)
    }
}

/// Value of basis function `i` at `t` (right-continuous).
pub fn eval_bspline(kv: &KnotVector, i: usize, t: f64) -> Result<f64> {
    kv.check_index(i)?;
    kv.check_param(t)?;
    Ok(one_basis(&kv.knots, kv.degree, i, t))
}

/// Right derivative of basis function `i` at `t`; only `order == 1` is
/// supported.
pub fn eval_bspline_deriv(kv: &KnotVector, i: usize, t: f64, order: usize) -> Result<f64> {
    if order != 1 {
        return Err(Error::Argument(format!("derivative order {order} is not supported")));
    }
    let p = kv.degree;
    if p == 0 {
        return Err(Error::UnsupportedDegree(
            "derivatives of degree-0 splines are not defined".into(),
        ));
    }
    kv.check_index(i)?;
    kv.check_param(t)?;
    let u = &kv.knots;
    let pf = p as f64;
    let left = ratio(pf * one_basis(u, p - 1, i, t), u[i + p] - u[i]);
    let right = ratio(pf * one_basis(u, p - 1, i + 1, t), u[i + p + 1] - u[i + 1]);
    Ok(left - right)
}

/// Evaluates `Σ c_i R_i(t)` and the weight function `ŵ(t) = Σ w_k B_k(t)`.
pub fn eval_nurbs(kv: &KnotVector, coeffs: &SplineCoefficients, t: f64) -> Result<(f64, f64)> {
    check_coefficients(kv, coeffs)?;
    let p = kv.degree;
    let s = kv.span(t)?;
    let (left, right) = span_offsets(&kv.knots, p, s, t);
    let mut vals = [0.0; MAX_DEGREE + 1];
    nonzero_basis(p, &left, &right, &mut vals, None);
    let mut num = 0.0;
    let mut den = 0.0;
    for (r, &b) in vals[..=p].iter().enumerate() {
        let k = s - p + r;
        num += coeffs.controls[k] * coeffs.weights[k] * b;
        den += coeffs.weights[k] * b;
    }
    Ok((num / den, den))
}

/// Inserts `t_new` once (Boehm). The rational function and its weight function
/// are unchanged; the new weights are convex combinations of the old ones.
pub fn insert_knot(
    kv: &KnotVector,
    coeffs: &SplineCoefficients,
    t_new: f64,
) -> Result<(KnotVector, SplineCoefficients)> {
    check_coefficients(kv, coeffs)?;
    let (a, b) = kv.domain();
    if !(t_new > a && t_new < b) {
        return Err(Error::Domain { t: t_new, a, b });
    }
    let mut knots = kv.knots.clone();
    let mut hom: Vec<[f64; 2]> = coeffs
        .controls
        .iter()
        .zip(&coeffs.weights)
        .map(|(&c, &w)| [c * w, w])
        .collect();
    boehm_insert(&mut knots, kv.degree, &mut hom, t_new, |x, y| y - x)?;
    let weights: Vec<f64> = hom.iter().map(|h| h[1]).collect();
    let controls = hom.iter().map(|h| h[0] / h[1]).collect();
    Ok((
        KnotVector {
            knots,
            degree: kv.degree,
        },
        SplineCoefficients { controls, weights },
    ))
}

fn check_coefficients(kv: &KnotVector, coeffs: &SplineCoefficients) -> Result<()> {
    let n = kv.num_basis();
    if coeffs.controls.len() != n || coeffs.weights.len() != n {
        return Err(Error::Invariant(format!(
            "{n} basis functions but {} controls and {} weights",
            coeffs.controls.len(),
            coeffs.weights.len()
        )));
    }
    if coeffs.weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::Invariant("weights must be positive".into()));
    }
    Ok(())
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Single basis function by the triangular scheme.
fn one_basis(u: &[f64], p: usize, i: usize, t: f64) -> f64 {
    if t < u[i] || t >= u[i + p + 1] {
        return 0.0;
    }
    let mut n = [0.0; MAX_DEGREE + 1];
    for (j, nj) in n.iter_mut().enumerate().take(p + 1) {
        *nj = if u[i + j] <= t && t < u[i + j + 1] { 1.0 } else { 0.0 };
    }
    for k in 1..=p {
        let mut saved = if n[0] == 0.0 {
            0.0
        } else {
            (t - u[i]) * n[0] / (u[i + k] - u[i])
        };
        for j in 0..=(p - k) {
            let ul = u[i + j + 1];
            let ur = u[i + j + k + 1];
            if n[j + 1] == 0.0 {
                n[j] = saved;
                saved = 0.0;
            } else {
                let tmp = n[j + 1] / (ur - ul);
                n[j] = saved + (ur - t) * tmp;
                saved = (t - ul) * tmp;
            }
        }
    }
    n[0]
}

pub(crate) type Offsets = [f64; MAX_DEGREE + 2];

/// `left[j] = t - knots[s + 1 - j]`, `right[j] = knots[s + j] - t`.
fn span_offsets(u: &[f64], p: usize, s: usize, t: f64) -> (Offsets, Offsets) {
    let mut left = [0.0; MAX_DEGREE + 2];
    let mut right = [0.0; MAX_DEGREE + 2];
    for j in 1..=p {
        left[j] = t - u[s + 1 - j];
        right[j] = u[s + j] - t;
    }
    (left, right)
}

/// Nonzero basis values (and optionally first derivatives) on a knot span.
///
/// The span is described by the offsets `left[j] = t - t_{s+1-j}` and
/// `right[j] = t_{s+j} - t` for `j = 1..=p`; entry `r` of the output belongs
/// to basis function `s - p + r`. Working with offsets lets callers supply
/// differences that were computed exactly.
pub(crate) fn nonzero_basis(
    p: usize,
    left: &Offsets,
    right: &Offsets,
    vals: &mut [f64; MAX_DEGREE + 1],
    ders: Option<&mut [f64; MAX_DEGREE + 1]>,
) {
    let mut lower = [0.0; MAX_DEGREE + 1];
    triangle(p.saturating_sub(1), left, right, &mut lower);
    if p == 0 {
        vals[0] = 1.0;
    } else {
        // one more sweep of the triangle from degree p - 1 to p
        let mut saved = 0.0;
        for r in 0..p {
            let tmp = lower[r] / (right[r + 1] + left[p - r]);
            vals[r] = saved + right[r + 1] * tmp;
            saved = left[p - r] * tmp;
        }
        vals[p] = saved;
    }
    if let Some(d) = ders {
        if p == 0 {
            d[0] = 0.0;
            return;
        }
        let pf = p as f64;
        for r in 0..=p {
            let mut v = 0.0;
            if r >= 1 {
                v += ratio(lower[r - 1], right[r] + left[p - r + 1]);
            }
            if r < p {
                v -= ratio(lower[r], right[r + 1] + left[p - r]);
            }
            d[r] = pf * v;
        }
    }
}

fn triangle(p: usize, left: &Offsets, right: &Offsets, n: &mut [f64; MAX_DEGREE + 1]) {
    n[0] = 1.0;
    for j in 1..=p {
        let mut saved = 0.0;
        for r in 0..j {
            let tmp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        n[j] = saved;
    }
}

/// Boehm insertion of one knot into `knots` with homogeneous coefficients.
///
/// `diff(x, y)` must return `y - x` as a real number; it allows exact knot
/// types. Inserting beyond multiplicity `p + 1` fails.
pub(crate) fn boehm_insert<K: Copy + PartialOrd>(
    knots: &mut Vec<K>,
    p: usize,
    coeffs: &mut Vec<[f64; 2]>,
    t: K,
    diff: impl Fn(K, K) -> f64,
) -> Result<()> {
    let k = knots.partition_point(|&x| x <= t);
    if k == 0 || k == knots.len() {
        return Err(Error::Refinement("inserted knot outside the knot vector".into()));
    }
    let k = k - 1;
    let s = knots[..=k].iter().rev().take_while(|&&x| x == t).count();
    if s > p {
        return Err(Error::Refinement(format!(
            "knot already has full multiplicity {}",
            p + 1
        )));
    }
    if k < p {
        return Err(Error::Refinement("inserted knot inside the clamped start".into()));
    }
    let old = std::mem::take(coeffs);
    let mut out = Vec::with_capacity(old.len() + 1);
    out.extend_from_slice(&old[..=k - p]);
    for i in (k - p + 1)..=(k - s) {
        let alpha = diff(knots[i], t) / diff(knots[i], knots[i + p]);
        let a = old[i];
        let b = old[i - 1];
        out.push([
            alpha * a[0] + (1.0 - alpha) * b[0],
            alpha * a[1] + (1.0 - alpha) * b[1],
        ]);
    }
    out.extend_from_slice(&old[k - s..]);
    *coeffs = out;
    knots.insert(k + 1, t);
    Ok(())
}
