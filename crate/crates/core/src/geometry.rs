//! Closed boundary curves built from rational quadratic Bézier segments, and
//! the singular model solutions attached to them.
//!
//! Every curve has six segments on `[0, 1]` with breakpoints `k/6`, which
//! coincide with the initial elements. The re-entrant corner of the pacman
//! and heart sits at `γ(0) = γ(1) =` origin; curves run counterclockwise so
//! the outward normal is the tangent rotated clockwise.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeometryKind {
    /// Disk of radius `scale` with the sector `|β| > 7π/8` removed.
    Pacman,
    /// Two circular lobes over a right-angled tip, notch at the origin.
    Heart,
    /// Circle of radius `scale` centered at the origin.
    Circle,
}

impl FromStr for GeometryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pacman" => Ok(Self::Pacman),
            "heart" => Ok(Self::Heart),
            "circle" => Ok(Self::Circle),
            other => Err(Error::Config(format!("unknown geometry '{other}'"))),
        }
    }
}

/// Which one-sided limit to return at a segment junction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    ctrl: [[f64; 2]; 3],
    w: [f64; 3],
}

/// Position and parameter derivative `dγ/dt` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalPoint {
    pub x: [f64; 2],
    pub d: [f64; 2],
}

impl LocalPoint {
    pub fn speed(&self) -> f64 {
        self.d[0].hypot(self.d[1])
    }

    /// Unit outward normal (counterclockwise orientation).
    pub fn normal(&self) -> [f64; 2] {
        let s = self.speed();
        [self.d[1] / s, -self.d[0] / s]
    }
}

/// Result of [`BoundaryCurve::gamma_eval`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSample {
    pub point: [f64; 2],
    pub tangent: [f64; 2],
    pub normal: [f64; 2],
    pub speed: f64,
}

/// Closed piecewise rational parametrization `γ: [0, 1] → Γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCurve {
    kind: GeometryKind,
    scale: f64,
    segments: Vec<Segment>,
    breaks: Vec<f64>,
}

fn line(p: [f64; 2], q: [f64; 2]) -> Segment {
    Segment {
        ctrl: [p, [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])], q],
        w: [1.0, 1.0, 1.0],
    }
}

/// Counterclockwise arc of radius `r` about `c` from angle `a0` to `a1`
/// (sweep below π).
fn arc(c: [f64; 2], r: f64, a0: f64, a1: f64) -> Segment {
    let half = 0.5 * (a1 - a0);
    let mid = 0.5 * (a0 + a1);
    let at = |a: f64, rr: f64| [c[0] + rr * a.cos(), c[1] + rr * a.sin()];
    Segment {
        ctrl: [at(a0, r), at(mid, r / half.cos()), at(a1, r)],
        w: [1.0, half.cos(), 1.0],
    }
}

impl BoundaryCurve {
    /// Builds the curve; `scale` is the pacman/circle radius and the largest
    /// distance of the heart from its notch.
    pub fn new(kind: GeometryKind, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Argument(format!("scale {scale} must be positive")));
        }
        let o = [0.0, 0.0];
        let segments = match kind {
            GeometryKind::Pacman => {
                let r = scale;
                let al = 7.0 * PI / 8.0;
                let lower = [r * (-al).cos(), r * (-al).sin()];
                let upper = [r * al.cos(), r * al.sin()];
                let half = |p: [f64; 2]| [0.5 * p[0], 0.5 * p[1]];
                let mut s = vec![
                    line(o, half(lower)),
                    line(half(lower), lower),
                    arc(o, r, -al, 0.0),
                    arc(o, r, 0.0, al),
                    line(upper, half(upper)),
                    line(half(upper), o),
                ];
                // close exactly
                s[2].ctrl[0] = lower;
                s[3].ctrl[2] = upper;
                s
            }
            GeometryKind::Heart => {
                let a = 0.5 * scale;
                let rl = a * std::f64::consts::FRAC_1_SQRT_2;
                let cl = [-0.5 * a, -0.5 * a];
                let cr = [0.5 * a, -0.5 * a];
                let q = PI / 4.0;
                let left = [-a, -a];
                let tip = [0.0, -2.0 * a];
                let right = [a, -a];
                let mut s = vec![
                    arc(cl, rl, q, 3.0 * q),
                    arc(cl, rl, 3.0 * q, 5.0 * q),
                    line(left, tip),
                    line(tip, right),
                    arc(cr, rl, -q, q),
                    arc(cr, rl, q, 3.0 * q),
                ];
                s[0].ctrl[0] = o;
                s[1].ctrl[2] = left;
                s[4].ctrl[0] = right;
                s[5].ctrl[2] = o;
                s
            }
            GeometryKind::Circle => {
                let r = scale;
                let mut s: Vec<Segment> = (0..6)
                    .map(|k| arc(o, r, k as f64 * PI / 3.0, (k + 1) as f64 * PI / 3.0))
                    .collect();
                s[5].ctrl[2] = s[0].ctrl[0];
                s
            }
        };
        // share junction points bit for bit
        let mut segments = segments;
        for k in 1..segments.len() {
            segments[k].ctrl[0] = segments[k - 1].ctrl[2];
        }
        Ok(Self {
            kind,
            scale,
            segments,
            breaks: (0..=6).map(|k| k as f64 / 6.0).collect(),
        })
    }

    /// Curve of the given kind scaled for the equation: unit size for the
    /// hyper-singular equation, distance at most `0.2499` from the origin
    /// (so `diam < 1/2`) for the weakly-singular one.
    pub fn for_mode(kind: GeometryKind, weak: bool) -> Result<Self> {
        let scale = if weak { 0.2499 } else { 1.0 };
        Self::new(kind, scale)
    }

    /// Imaginary part of the complex poles of segment `s`'s rational
    /// parametrization (in its local parameter), `None` for polynomial
    /// segments.
    pub fn segment_pole(&self, s: usize) -> Option<f64> {
        let w = self.segments[s].w[1];
        if w >= 1.0 {
            return None;
        }
        Some((0.5 / (1.0 - w) - 0.25).sqrt())
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    /// Evaluates segment `s` at local coordinate `u` with `c = 1 - u`
    /// supplied separately; derivatives are with respect to the global
    /// parameter.
    pub fn eval_segment(&self, s: usize, u: f64, c: f64) -> LocalPoint {
        let seg = &self.segments[s];
        let [p0, p1, p2] = seg.ctrl;
        let [w0, w1, w2] = seg.w;
        let b = [c * c, 2.0 * u * c, u * u];
        let den = w0 * b[0] + w1 * b[1] + w2 * b[2];
        let dden = 2.0 * ((w1 - w0) * c + (w2 - w1) * u);
        let h = self.breaks[s + 1] - self.breaks[s];
        let mut x = [0.0; 2];
        let mut d = [0.0; 2];
        for k in 0..2 {
            let num = w0 * p0[k] * b[0] + w1 * p1[k] * b[1] + w2 * p2[k] * b[2];
            let dnum = 2.0 * ((w1 * p1[k] - w0 * p0[k]) * c + (w2 * p2[k] - w1 * p1[k]) * u);
            x[k] = num / den;
            d[k] = (dnum * den - num * dden) / (den * den) / h;
        }
        LocalPoint { x, d }
    }

    /// Total arclength by composite Gauss quadrature.
    pub fn arclength(&self) -> f64 {
        let rule = crate::quadrature::gl(20);
        let mut total = 0.0;
        for s in 0..self.n_segments() {
            let h = self.breaks[s + 1] - self.breaks[s];
            for (x, c, w) in rule.iter() {
                total += w * h * self.eval_segment(s, x, c).speed();
            }
        }
        total
    }

    /// Point, unit tangent, outward normal and speed at `t ∈ [0, 1]`.
    pub fn gamma_eval(&self, t: f64, side: Side) -> Result<CurveSample> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain { t, a: 0.0, b: 1.0 });
        }
        let n = self.n_segments();
        let upper = self.breaks.partition_point(|&b| b <= t);
        let mut s = upper.saturating_sub(1).min(n - 1);
        if side == Side::Left && t == self.breaks[s] {
            s = if s == 0 { n - 1 } else { s - 1 };
        }
        let (lo, hi) = (self.breaks[s], self.breaks[s + 1]);
        let (u, c) = if side == Side::Left && (t == hi || (s == n - 1 && t == 0.0)) {
            (1.0, 0.0)
        } else {
            ((t - lo) / (hi - lo), (hi - t) / (hi - lo))
        };
        let lp = self.eval_segment(s, u, c);
        let speed = lp.speed();
        Ok(CurveSample {
            point: lp.x,
            tangent: [lp.d[0] / speed, lp.d[1] / speed],
            normal: lp.normal(),
            speed,
        })
    }

    /// Exact model solution on this domain.
    pub fn exact_solution(&self) -> ExactSolution {
        match self.kind {
            GeometryKind::Pacman => ExactSolution {
                tau: 4.0 / 7.0,
                shift: 0.0,
            },
            GeometryKind::Heart => ExactSolution {
                tau: 2.0 / 3.0,
                shift: FRAC_PI_2,
            },
            // smooth harmonic r² cos 2β
            GeometryKind::Circle => ExactSolution {
                tau: 2.0,
                shift: 0.0,
            },
        }
    }

    /// Exponent `m` of the substitution `ρ = v^m` that turns the corner
    /// behaviour `ρ^τ` of the model data into a polynomial in `v`.
    pub fn corner_grading(&self) -> Option<u32> {
        match self.kind {
            GeometryKind::Pacman => Some(7),
            GeometryKind::Heart => Some(3),
            GeometryKind::Circle => None,
        }
    }

    /// Samples `γ` at `n` uniform parameters as CSV `t,x,y,nx,ny`.
    pub fn polyline_csv(&self, n: usize) -> String {
        let mut out = String::from("t,x,y,nx,ny\n");
        for k in 0..=n {
            let t = k as f64 / n as f64;
            if let Ok(s) = self.gamma_eval(t.min(1.0), Side::Right) {
                let _ = writeln!(
                    out,
                    "{t},{},{},{},{}",
                    s.point[0], s.point[1], s.normal[0], s.normal[1]
                );
            }
        }
        out
    }
}

/// Harmonic function `P = r^τ cos(τ(β + shift))` with the branch cut on the
/// ray `β = π - shift`, i.e. `β + shift ∈ (-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactSolution {
    pub tau: f64,
    pub shift: f64,
}

/// Dirichlet and Neumann data at a boundary point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactData {
    pub u: f64,
    /// `∂P/∂ν`; `None` exactly at the corner where it may be unbounded.
    pub phi: Option<f64>,
}

impl ExactSolution {
    fn polar(&self, x: [f64; 2]) -> (f64, f64) {
        let r = x[0].hypot(x[1]);
        // angle measured from the ray opposite to the branch cut
        let (s, c) = self.shift.sin_cos();
        let xr = c * x[0] - s * x[1];
        let yr = s * x[0] + c * x[1];
        (r, yr.atan2(xr))
    }

    pub fn potential(&self, x: [f64; 2]) -> f64 {
        let (r, b) = self.polar(x);
        if r == 0.0 {
            return 0.0;
        }
        r.powf(self.tau) * (self.tau * b).cos()
    }

    /// `∇P`, or `None` at the origin.
    pub fn gradient(&self, x: [f64; 2]) -> Option<[f64; 2]> {
        let (r, b) = self.polar(x);
        if r == 0.0 {
            return None;
        }
        let beta = x[1].atan2(x[0]);
        let f = self.tau * r.powf(self.tau - 1.0);
        let dr = f * (self.tau * b).cos();
        let db = -f * (self.tau * b).sin();
        let (sb, cb) = beta.sin_cos();
        Some([dr * cb - db * sb, dr * sb + db * cb])
    }

    /// `u = P` and `φ = ∇P·ν` at a boundary point with outward normal `nu`.
    pub fn data(&self, x: [f64; 2], nu: [f64; 2]) -> ExactData {
        ExactData {
            u: self.potential(x),
            phi: self.gradient(x).map(|g| g[0] * nu[0] + g[1] * nu[1]),
        }
    }
}
