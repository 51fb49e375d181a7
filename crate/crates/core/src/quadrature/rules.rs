use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    /// `∫₀¹ f(t) dt`
    Legendre,
    /// `∫₀¹ f(t) log(1/t) dt`
    LogWeighted,
}

/// A quadrature rule on the reference interval `[0, 1]`.
///
/// `complements[k] == 1 - nodes[k]` is stored separately so callers can map
/// nodes onto tiny intervals next to either endpoint without cancellation.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub kind: RuleKind,
    pub nodes: Vec<f64>,
    pub complements: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Applies the rule to `f`, including the weight function of the rule.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.nodes
            .iter()
            .zip(&self.complements)
            .zip(&self.weights)
            .map(|((&x, &c), &w)| (x, c, w))
    }
}

/// Gauss–Legendre rule with `n` points on `[0, 1]`; exact for polynomials of
/// degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::Argument("quadrature order must be positive".into()));
    }
    let mut nodes = vec![0.0; n];
    let mut complements = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // roots of P_n on [-1, 1], largest first
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-17 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 1.0 / ((1.0 - x * x) * dp * dp);
        // t in [-1, 1] maps to (1 + t) / 2 on [0, 1]; the reference weight 2w halves
        let hi = n - 1 - i;
        nodes[hi] = 0.5 * (1.0 + x);
        complements[hi] = 0.5 * (1.0 - x);
        nodes[i] = 0.5 * (1.0 - x);
        complements[i] = 0.5 * (1.0 + x);
        weights[i] = w;
        weights[hi] = w;
    }
    if n % 2 == 1 {
        let mid = n / 2;
        nodes[mid] = 0.5;
        complements[mid] = 0.5;
    }
    Ok(QuadratureRule {
        kind: RuleKind::Legendre,
        nodes,
        complements,
        weights,
    })
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss rule for `∫₀¹ f(t) log(1/t) dt`, exact for polynomial `f` of degree
/// `2n - 1`.
///
/// Recurrence coefficients come from the modified Chebyshev algorithm with
/// shifted Legendre modified moments, which is well conditioned for this
/// weight. Nodes are eigenvalues of the Jacobi matrix, polished by Newton on
/// the orthonormal recurrence; weights use the Christoffel function.
pub fn gauss_log(n: usize) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::Argument("quadrature order must be positive".into()));
    }
    let (alpha, beta) = log_weight_recurrence(n);

    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        jacobi[(k, k)] = alpha[k];
        if k + 1 < n {
            let b = beta[k + 1].sqrt();
            jacobi[(k, k + 1)] = b;
            jacobi[(k + 1, k)] = b;
        }
    }
    let mut eig: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for x0 in eig {
        let mut x = x0;
        for _ in 0..4 {
            let (p, dp, _) = orthonormal_eval(&alpha, &beta, n, x);
            if dp == 0.0 {
                break;
            }
            let step = p / dp;
            x -= step;
            if step.abs() <= 1e-17 * x.abs() {
                break;
            }
        }
        let (_, _, sum_sq) = orthonormal_eval(&alpha, &beta, n, x);
        nodes.push(x);
        weights.push(1.0 / sum_sq);
    }
    let complements = nodes.iter().map(|x| 1.0 - x).collect();
    Ok(QuadratureRule {
        kind: RuleKind::LogWeighted,
        nodes,
        complements,
        weights,
    })
}

/// Evaluates the degree-`n` orthonormal polynomial, its derivative and
/// `Σ_{k<n} p_k(x)²`.
fn orthonormal_eval(alpha: &[f64], beta: &[f64], n: usize, x: f64) -> (f64, f64, f64) {
    let mut p_prev = 0.0;
    let mut d_prev = 0.0;
    let mut p = 1.0 / beta[0].sqrt();
    let mut d = 0.0;
    let mut sum_sq = p * p;
    for k in 0..n {
        let sb_next = if k + 1 < beta.len() {
            beta[k + 1].sqrt()
        } else {
            1.0
        };
        let sb = if k > 0 { beta[k].sqrt() } else { 0.0 };
        let p_next = ((x - alpha[k]) * p - sb * p_prev) / sb_next;
        let d_next = (p + (x - alpha[k]) * d - sb * d_prev) / sb_next;
        p_prev = p;
        d_prev = d;
        p = p_next;
        d = d_next;
        if k + 1 < n {
            sum_sq += p * p;
        }
    }
    (p, d, sum_sq)
}

/// Returns `(α_0..α_{n-1}, β_0..β_n)` of the monic orthogonal polynomials for
/// the weight `log(1/t)` on `[0, 1]`.
fn log_weight_recurrence(n: usize) -> (Vec<f64>, Vec<f64>) {
    let m = 2 * n + 3;
    // monic shifted Legendre recurrence
    let a = vec![0.5; m];
    let b: Vec<f64> = (0..m)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                let kf = k as f64;
                kf * kf / (4.0 * (4.0 * kf * kf - 1.0))
            }
        })
        .collect();
    // modified moments against monic shifted Legendre polynomials
    let mut moments = vec![0.0; m];
    moments[0] = 1.0;
    let mut lead = 1.0; // (k!)^2 / (2k)!
    for k in 1..m {
        let kf = k as f64;
        lead *= kf * kf / ((2.0 * kf - 1.0) * (2.0 * kf));
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        moments[k] = sign * lead / (kf * (kf + 1.0));
    }

    let nn = n + 1;
    let mut alpha = vec![0.0; nn];
    let mut beta = vec![0.0; nn];
    alpha[0] = a[0] + moments[1] / moments[0];
    beta[0] = moments[0];
    let mut sig_prev = vec![0.0; m + 1];
    let mut sig: Vec<f64> = moments.clone();
    sig.push(0.0);
    for k in 1..nn {
        let mut sig_next = vec![0.0; m + 1];
        for l in k..(2 * nn - k) {
            let lower = if l >= 1 { sig[l - 1] } else { 0.0 };
            sig_next[l] = sig[l + 1] - (alpha[k - 1] - a[l]) * sig[l] - beta[k - 1] * sig_prev[l]
                + b[l] * lower;
        }
        alpha[k] = a[k] + sig_next[k + 1] / sig_next[k] - sig[k] / sig[k - 1];
        beta[k] = sig_next[k] / sig[k - 1];
        sig_prev = sig;
        sig = sig_next;
    }
    alpha.truncate(n);
    (alpha, beta)
}

/// Chebyshev points of the first kind on `[0, 1]`, ascending, as
/// `(node, 1 - node)` pairs.
pub fn chebyshev_points(q: usize) -> Vec<(f64, f64)> {
    (0..q)
        .map(|k| {
            let c = ((2 * k + 1) as f64 * std::f64::consts::PI / (2 * q) as f64).cos();
            (0.5 * (1.0 - c), 0.5 * (1.0 + c))
        })
        .collect()
}

const MAX_CACHED: usize = 40;

/// Cached Gauss–Legendre rule; panics for `n == 0` or `n > 40`.
pub(crate) fn gl(n: usize) -> &'static QuadratureRule {
    static CACHE: OnceLock<Vec<QuadratureRule>> = OnceLock::new();
    let rules = CACHE.get_or_init(|| {
        (1..=MAX_CACHED)
            .map(|k| gauss_legendre(k).expect("positive order"))
            .collect()
    });
    &rules[n - 1]
}

/// Cached log-weighted rule; panics for `n == 0` or `n > 40`.
pub(crate) fn gl_log(n: usize) -> &'static QuadratureRule {
    static CACHE: OnceLock<Vec<QuadratureRule>> = OnceLock::new();
    let rules = CACHE.get_or_init(|| {
        (1..=MAX_CACHED)
            .map(|k| gauss_log(k).expect("positive order"))
            .collect()
    });
    &rules[n - 1]
}
