//! Integration of kernels over element pairs and against single target
//! points.
//!
//! Every integral is handed to a sink as blocks of quadrature nodes with
//! kernel-weighted weights `W`, so that `Σ W f(x) g(y)` approximates
//! `∬ f(x) g(y) k(x, y) ds_x ds_y` (resp. `Σ W g(y)` for a single target).
//! Logarithmic kernels are split as `log|x−y| = log d + log(|x−y|/d)` with
//! `d` the parameter distance; the first part goes to log-weighted Gauss
//! rules after Duffy-type substitutions, the second to Gauss–Legendre.

use std::sync::Arc;

use crate::geometry::BoundaryCurve;
use crate::mesh::KnotMesh;

use super::rules::{gl, gl_log, QuadratureRule};

/// Gauss–Legendre orders cached per element for separated pairs.
pub const LADDER: [usize; 10] = [1, 2, 3, 4, 5, 6, 8, 10, 12, 16];
/// Order of the smooth parts of singular splits and of graded panels.
pub const NEAR_ORDER: usize = 16;
/// Order of log-weighted rules.
pub const LOG_ORDER: usize = 12;
const FAR_TOL: f64 = 1e-12;
const MAX_DEPTH: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// `log|x − y|`
    Log,
    /// `(x − y)·ν(x) / |x − y|²`
    NormalX,
    /// `(x − y)·ν(y) / |x − y|²`
    NormalY,
}

impl Kernel {
    #[inline]
    pub fn eval(self, x: &QNode, y: &QNode) -> f64 {
        let d = [x.x[0] - y.x[0], x.x[1] - y.x[1]];
        let r2 = d[0] * d[0] + d[1] * d[1];
        match self {
            Kernel::Log => 0.5 * r2.ln(),
            Kernel::NormalX => (d[0] * x.nrm[0] + d[1] * x.nrm[1]) / r2,
            Kernel::NormalY => (d[0] * y.nrm[0] + d[1] * y.nrm[1]) / r2,
        }
    }
}

/// Substitution toward one end of a panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grade {
    None,
    Lo(u32),
    Hi(u32),
}

/// The local interval `[lo, 1 − hic]` of element `elem`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub elem: usize,
    pub lo: f64,
    pub hic: f64,
    pub grade: Grade,
}

impl Panel {
    pub fn full(elem: usize) -> Self {
        Self {
            elem,
            lo: 0.0,
            hic: 0.0,
            grade: Grade::None,
        }
    }

    fn len(&self) -> f64 {
        1.0 - self.lo - self.hic
    }

    fn is_full_plain(&self) -> bool {
        self.lo == 0.0 && self.hic == 0.0 && self.grade == Grade::None
    }

    /// Local coordinates of panel coordinate `s` (with `sc = 1 − s`).
    fn local(&self, s: f64, sc: f64) -> (f64, f64) {
        let len = self.len();
        (self.lo + s * len, self.hic + sc * len)
    }

    fn split(&self) -> (Panel, Panel) {
        let len = self.len();
        let mid = self.lo + 0.5 * len;
        let midc = self.hic + 0.5 * len;
        let (gl, gh) = match self.grade {
            Grade::Lo(_) => (self.grade, Grade::None),
            Grade::Hi(_) => (Grade::None, self.grade),
            Grade::None => (Grade::None, Grade::None),
        };
        (
            Panel {
                elem: self.elem,
                lo: self.lo,
                hic: midc,
                grade: gl,
            },
            Panel {
                elem: self.elem,
                lo: mid,
                hic: self.hic,
                grade: gh,
            },
        )
    }
}

/// A quadrature node on the curve. `w` is the full `ds` weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QNode {
    pub elem: usize,
    pub xi: f64,
    pub xc: f64,
    pub x: [f64; 2],
    pub nrm: [f64; 2],
    pub speed: f64,
    pub w: f64,
}

/// Nodes of one side of a block; `ladder` is `Some((elem, k))` when the
/// nodes are the cached Gauss nodes of order `LADDER[k]` on the element.
#[derive(Debug, Clone, Copy)]
pub struct Nodes<'a> {
    pub nodes: &'a [QNode],
    pub ladder: Option<(usize, usize)>,
}

/// Kernel-weighted weights for a set of node pairs.
#[derive(Debug, Clone, Copy)]
pub enum Block<'a> {
    /// `w[i * ys.len() + j]` belongs to `(xs[i], ys[j])`.
    Tensor {
        xs: Nodes<'a>,
        ys: Nodes<'a>,
        w: &'a [f64],
    },
    /// `w[k]` belongs to `(xs[k], ys[k])`.
    Zip {
        xs: &'a [QNode],
        ys: &'a [QNode],
        w: &'a [f64],
    },
}

/// Per-element geometric data of a mesh on a curve.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    mesh: KnotMesh,
    curve: Arc<BoundaryCurve>,
    h_hat: Vec<f64>,
    len: Vec<f64>,
    mid: Vec<[f64; 2]>,
    ladder: Vec<QNode>,
    ladder_offsets: [usize; LADDER.len() + 1],
    corner: Option<u32>,
    /// Lowest far-field order per element, set by the parametrization and
    /// the mesh degree.
    min_order: Vec<usize>,
}

fn ladder_offsets() -> [usize; LADDER.len() + 1] {
    let mut off = [0; LADDER.len() + 1];
    for (k, n) in LADDER.iter().enumerate() {
        off[k + 1] = off[k] + n;
    }
    off
}

fn ladder_index(n: usize) -> usize {
    LADDER.iter().position(|&m| m >= n).unwrap_or(LADDER.len() - 1)
}

/// Gauss order for a singularity at distance `ratio · L` from a panel of
/// length `L`, from the Bernstein ellipse through the singularity.
fn far_order(ratio: f64) -> usize {
    if ratio <= 0.0 {
        return NEAR_ORDER;
    }
    let a = 2.0 * ratio;
    let rho = a + (a * a + 1.0).sqrt();
    let n = ((1.0 / FAR_TOL).ln() / (2.0 * rho.ln())).ceil();
    (n as usize).clamp(1, NEAR_ORDER)
}

/// Gauss order that resolves the parametrization poles of element `e`.
fn geometry_order(mesh: &KnotMesh, curve: &BoundaryCurve, e: usize) -> usize {
    let (s, _, _) = mesh.local_to_segment(e, 0.5, 0.5);
    match curve.segment_pole(s) {
        Some(delta) => {
            let b = curve.breaks();
            let frac = mesh.h_hat(e) / (b[s + 1] - b[s]);
            far_order(delta / frac)
        }
        None => 1,
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// `1 − v^m` without cancellation for `v` near 1.
fn one_minus_pow(v: f64, vc: f64, m: u32) -> f64 {
    if v < 0.5 {
        1.0 - v.powi(m as i32)
    } else {
        -(m as f64 * (-vc).ln_1p()).exp_m1()
    }
}

/// Panel coordinates `(s, sc, weight factor)` of a Gauss rule, graded if
/// requested.
fn panel_rule(rule: &QuadratureRule, grade: Grade) -> Vec<(f64, f64, f64)> {
    rule.iter()
        .map(|(v, vc, w)| match grade {
            Grade::None => (v, vc, w),
            Grade::Lo(m) => {
                let s = v.powi(m as i32);
                (s, one_minus_pow(v, vc, m), w * m as f64 * v.powi(m as i32 - 1))
            }
            Grade::Hi(m) => {
                let sc = vc.powi(m as i32);
                (one_minus_pow(vc, v, m), sc, w * m as f64 * vc.powi(m as i32 - 1))
            }
        })
        .collect()
}

impl ElementGeometry {
    pub fn new(mesh: &KnotMesh, curve: Arc<BoundaryCurve>) -> Self {
        let n = mesh.n_elements();
        let offsets = ladder_offsets();
        // polynomial densities of the mesh degree need p + 1 points even
        // when the kernel is nearly constant
        let min_order = (0..n)
            .map(|e| geometry_order(mesh, &curve, e).max(mesh.degree() + 1).min(NEAR_ORDER))
            .collect();
        let mut g = Self {
            mesh: mesh.clone(),
            corner: curve.corner_grading(),
            curve,
            h_hat: (0..n).map(|e| mesh.h_hat(e)).collect(),
            len: vec![0.0; n],
            mid: vec![[0.0; 2]; n],
            ladder: Vec::with_capacity(n * offsets[LADDER.len()]),
            ladder_offsets: offsets,
            min_order,
        };
        for e in 0..n {
            for &order in LADDER.iter() {
                for (x, c, w) in gl(order).iter() {
                    let q = g.node(e, x, c, w);
                    g.ladder.push(q);
                }
            }
            g.len[e] = g.ladder_nodes(e, LADDER.len() - 1).iter().map(|q| q.w).sum();
            g.mid[e] = g.node(e, 0.5, 0.5, 0.0).x;
        }
        g
    }

    pub fn mesh(&self) -> &KnotMesh {
        &self.mesh
    }

    pub fn curve(&self) -> &Arc<BoundaryCurve> {
        &self.curve
    }

    pub fn n_elements(&self) -> usize {
        self.h_hat.len()
    }

    /// Arclength `h_Q` of element `e`.
    pub fn length(&self, e: usize) -> f64 {
        self.len[e]
    }

    pub fn h_hat(&self, e: usize) -> f64 {
        self.h_hat[e]
    }

    /// Grading exponent of the re-entrant corner, if the curve has one.
    pub fn corner_grading(&self) -> Option<u32> {
        self.corner
    }

    /// Node at local coordinate `(ξ, 1 − ξ)` with rule weight `w` in `ξ`.
    pub fn node(&self, e: usize, xi: f64, xc: f64, w: f64) -> QNode {
        let (s, u, c) = self.mesh.local_to_segment(e, xi, xc);
        let lp = self.curve.eval_segment(s, u, c);
        let speed = lp.speed();
        QNode {
            elem: e,
            xi,
            xc,
            x: lp.x,
            nrm: lp.normal(),
            speed,
            w: w * speed * self.h_hat[e],
        }
    }

    /// Cached Gauss nodes of order `LADDER[k]` on element `e`.
    pub fn ladder_nodes(&self, e: usize, k: usize) -> &[QNode] {
        let per = self.ladder_offsets[LADDER.len()];
        let base = e * per;
        &self.ladder[base + self.ladder_offsets[k]..base + self.ladder_offsets[k + 1]]
    }

    fn next(&self, e: usize) -> usize {
        (e + 1) % self.n_elements()
    }

    /// Whether element `e` touches the corner node with a singular density
    /// and the grade to put on it.
    fn corner_grade(&self, e: usize, graded: bool) -> Grade {
        match (graded, self.corner) {
            (true, Some(m)) if e == 0 => Grade::Lo(m),
            (true, Some(m)) if e + 1 == self.n_elements() => Grade::Hi(m),
            _ => Grade::None,
        }
    }

    /// Lowest Gauss order for element `e`: resolves its parametrization and
    /// degree-`p` densities.
    pub fn min_order(&self, e: usize) -> usize {
        self.min_order[e]
    }

    /// Rule of order `n` on element `e` for integrating a density; graded
    /// toward the corner when `graded` and the curve has one.
    pub fn element_rule(&self, e: usize, n: usize, graded: bool) -> Vec<QNode> {
        let mut p = Panel::full(e);
        p.grade = self.corner_grade(e, graded);
        self.panel_nodes(&p, n)
    }

    fn panel_nodes(&self, p: &Panel, n: usize) -> Vec<QNode> {
        let len = p.len();
        panel_rule(gl(n), p.grade)
            .into_iter()
            .map(|(s, sc, w)| {
                let (xi, xc) = p.local(s, sc);
                self.node(p.elem, xi, xc, w * len)
            })
            .collect()
    }

    fn panel_info(&self, p: &Panel) -> ([f64; 2], f64) {
        if p.lo == 0.0 && p.hic == 0.0 {
            return (self.mid[p.elem], self.len[p.elem]);
        }
        let (xi, xc) = p.local(0.5, 0.5);
        let mid = self.node(p.elem, xi, xc, 0.0).x;
        let len = p.len();
        let l = gl(4)
            .iter()
            .map(|(s, sc, w)| {
                let (xi, xc) = p.local(s, sc);
                self.node(p.elem, xi, xc, w * len).w
            })
            .sum();
        (mid, l)
    }

    /// Nodes for a separated panel; `None` means "use the ladder".
    fn side_nodes(&self, p: &Panel, order: usize) -> (Vec<QNode>, Option<(usize, usize)>) {
        if p.is_full_plain() {
            let k = ladder_index(order);
            return (self.ladder_nodes(p.elem, k).to_vec(), Some((p.elem, k)));
        }
        let n = if p.grade == Grade::None {
            LADDER[ladder_index(order)]
        } else {
            NEAR_ORDER
        };
        (self.panel_nodes(p, n), None)
    }

    /// Integrates `kernel` over elements `a` (x) and `b` (y). With `graded`
    /// the y-density may behave like `ρ^τ` at the corner.
    pub fn integrate_elements(
        &self,
        a: usize,
        b: usize,
        kernel: Kernel,
        graded: bool,
        sink: &mut dyn FnMut(Block),
    ) {
        let n = self.n_elements();
        let pa = Panel::full(a);
        let mut pb = Panel::full(b);
        let gb = self.corner_grade(b, graded);
        if a == b {
            if kernel == Kernel::Log {
                self.identical_log(&pa, sink);
            } else {
                // distinct orders keep x and y off the diagonal
                pb.grade = gb;
                let xs = self.panel_nodes(&pa, NEAR_ORDER - 1);
                let ys = self.panel_nodes(&pb, NEAR_ORDER);
                self.tensor_nodes(Nodes { nodes: &xs, ladder: None }, Nodes { nodes: &ys, ladder: None }, kernel, sink);
            }
            return;
        }
        let a_hi = self.next(a) == b;
        let a_lo = self.next(b) == a;
        if !(a_hi || a_lo) {
            pb.grade = gb;
            self.separated(pa, pb, kernel, 0, sink);
            return;
        }
        // shared node is node 0 exactly when the pair straddles the seam
        let shared_is_corner = (a_hi && b == 0) || (a_lo && a == 0);
        if n == 2 || gb == Grade::None || shared_is_corner {
            let m = if shared_is_corner {
                match gb {
                    Grade::Lo(m) | Grade::Hi(m) => Some(m),
                    Grade::None => None,
                }
            } else {
                None
            };
            self.adjacent(&pa, a_hi, &pb, kernel, m, sink);
            return;
        }
        // corner at the far end of b: keep the Duffy half plain, grade the other
        let (lo, hi) = pb.split();
        let (near, far) = if a_hi { (lo, hi) } else { (hi, lo) };
        let far = Panel { grade: gb, ..far };
        self.adjacent(&pa, a_hi, &near, kernel, None, sink);
        self.separated(pa, far, kernel, 0, sink);
    }

    fn tensor(
        &self,
        pa: &Panel,
        pb: &Panel,
        na: usize,
        nb: usize,
        kernel: Kernel,
        sink: &mut dyn FnMut(Block),
    ) {
        let (xs, ta) = self.side_nodes(pa, na);
        let (ys, tb) = self.side_nodes(pb, nb);
        self.tensor_nodes(Nodes { nodes: &xs, ladder: ta }, Nodes { nodes: &ys, ladder: tb }, kernel, sink);
    }

    fn tensor_nodes(&self, xs: Nodes, ys: Nodes, kernel: Kernel, sink: &mut dyn FnMut(Block)) {
        let mut w = Vec::with_capacity(xs.nodes.len() * ys.nodes.len());
        for x in xs.nodes {
            for y in ys.nodes {
                w.push(x.w * y.w * kernel.eval(x, y));
            }
        }
        sink(Block::Tensor { xs, ys, w: &w });
    }

    fn separated(&self, pa: Panel, pb: Panel, kernel: Kernel, depth: usize, sink: &mut dyn FnMut(Block)) {
        let (ma, la) = self.panel_info(&pa);
        let (mb, lb) = self.panel_info(&pb);
        let d = dist(ma, mb) - 0.5 * (la + lb);
        if d < la.max(lb) && depth < MAX_DEPTH {
            if la >= lb {
                let (a1, a2) = pa.split();
                self.separated(a1, pb, kernel, depth + 1, sink);
                self.separated(a2, pb, kernel, depth + 1, sink);
            } else {
                let (b1, b2) = pb.split();
                self.separated(pa, b1, kernel, depth + 1, sink);
                self.separated(pa, b2, kernel, depth + 1, sink);
            }
            return;
        }
        let na = far_order(d / la).max(self.min_order[pa.elem]);
        let nb = far_order(d / lb).max(self.min_order[pb.elem]);
        self.tensor(&pa, &pb, na, nb, kernel, sink);
    }

    /// Duffy rule at a shared point. `a_hi`: the hi end of `pa` meets the
    /// lo end of `pb` (otherwise lo of `pa` meets hi of `pb`). `grade`
    /// grades both Duffy variables toward the shared point.
    fn adjacent(
        &self,
        pa: &Panel,
        a_hi: bool,
        pb: &Panel,
        kernel: Kernel,
        grade: Option<u32>,
        sink: &mut dyn FnMut(Block),
    ) {
        let (la, lb) = (pa.len(), pb.len());
        // distance α from the shared point → panel coordinates
        let at_a = |al: f64, alc: f64| if a_hi { pa.local(alc, al) } else { pa.local(al, alc) };
        let at_b = |be: f64, bec: f64| if a_hi { pb.local(be, bec) } else { pb.local(bec, be) };
        let g = grade.map_or(Grade::None, Grade::Lo);
        let rho_rule = panel_rule(gl(NEAR_ORDER), g);
        let plain = panel_rule(gl(NEAR_ORDER), Grade::None);
        // with a graded density, y = ρ s on triangle 0 also needs grading in
        // s; the kernel has poles near |s| = 1, so grade only [0, 1/4]
        let split_rule: Vec<(f64, f64, f64)> = match grade {
            Some(m) => {
                let mut r: Vec<_> = panel_rule(gl(NEAR_ORDER), Grade::Lo(m))
                    .into_iter()
                    .map(|(s, sc, w)| (0.25 * s, 0.75 + 0.25 * sc, 0.25 * w))
                    .collect();
                r.extend(plain.iter().map(|&(s, sc, w)| (0.25 + 0.75 * s, 0.75 * sc, 0.75 * w)));
                r
            }
            None => plain.clone(),
        };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut w = Vec::new();
        for tri in 0..2 {
            let s_rule = if tri == 0 { &split_rule } else { &plain };
            for &(rho, rhoc, wr) in &rho_rule {
                for &(s, _, ws) in s_rule {
                    // tri 0: α = ρ, β = ρ s; tri 1: β = ρ, α = ρ s
                    let (al, alc, be, bec) = if tri == 0 {
                        (rho, rhoc, rho * s, 1.0 - rho * s)
                    } else {
                        (rho * s, 1.0 - rho * s, rho, rhoc)
                    };
                    let (xa, xac) = at_a(al, alc);
                    let (yb, ybc) = at_b(be, bec);
                    let x = self.node(pa.elem, xa, xac, la);
                    let y = self.node(pb.elem, yb, ybc, lb);
                    let k = match kernel {
                        Kernel::Log => {
                            let r = dist(x.x, y.x);
                            (r / rho).ln()
                        }
                        _ => kernel.eval(&x, &y),
                    };
                    xs.push(x);
                    ys.push(y);
                    w.push(wr * ws * rho * x.w * y.w * k);
                }
            }
            if kernel == Kernel::Log {
                // ∫ ρ log ρ (...) dρ part
                for (rho, rhoc, wl) in gl_log(LOG_ORDER).iter() {
                    for (s, _, ws) in gl(NEAR_ORDER).iter() {
                        let (al, alc, be, bec) = if tri == 0 {
                            (rho, rhoc, rho * s, 1.0 - rho * s)
                        } else {
                            (rho * s, 1.0 - rho * s, rho, rhoc)
                        };
                        let (xa, xac) = at_a(al, alc);
                        let (yb, ybc) = at_b(be, bec);
                        let x = self.node(pa.elem, xa, xac, la);
                        let y = self.node(pb.elem, yb, ybc, lb);
                        xs.push(x);
                        ys.push(y);
                        w.push(-wl * ws * rho * x.w * y.w);
                    }
                }
            }
        }
        sink(Block::Zip {
            xs: &xs,
            ys: &ys,
            w: &w,
        });
    }

    /// Log kernel on a panel with itself.
    fn identical_log(&self, p: &Panel, sink: &mut dyn FnMut(Block)) {
        let len = p.len();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut w = Vec::new();
        let mut push = |d: f64, dc: f64, v: f64, vc: f64, wt: f64, log_part: bool| {
            // s − t = d, t = (1 − d) v
            let t = dc * v;
            let tc = d + dc * vc;
            let s = d + dc * v;
            let sc = dc * vc;
            for (u, uc, z, zc) in [(s, sc, t, tc), (t, tc, s, sc)] {
                let (xa, xac) = p.local(u, uc);
                let (yb, ybc) = p.local(z, zc);
                let x = self.node(p.elem, xa, xac, len);
                let y = self.node(p.elem, yb, ybc, len);
                let k = if log_part { -1.0 } else { (dist(x.x, y.x) / d).ln() };
                xs.push(x);
                ys.push(y);
                w.push(wt * dc * x.w * y.w * k);
            }
        };
        for (d, dc, wd) in gl(NEAR_ORDER).iter() {
            for (v, vc, wv) in gl(NEAR_ORDER).iter() {
                push(d, dc, v, vc, wd * wv, false);
            }
        }
        for (d, dc, wd) in gl_log(LOG_ORDER).iter() {
            for (v, vc, wv) in gl(NEAR_ORDER).iter() {
                push(d, dc, v, vc, wd * wv, true);
            }
        }
        sink(Block::Zip {
            xs: &xs,
            ys: &ys,
            w: &w,
        });
    }

    /// Integrates `kernel(x, ·)` against a density over the whole curve for
    /// a target node `x` lying inside its element.
    pub fn integrate_point(&self, x: &QNode, kernel: Kernel, graded: bool, sink: &mut dyn FnMut(Nodes, &[f64])) {
        let mut w = Vec::new();
        for f in 0..self.n_elements() {
            if f == x.elem {
                self.point_own(x, kernel, graded, sink);
                continue;
            }
            let mut p = Panel::full(f);
            p.grade = self.corner_grade(f, graded);
            self.point_separated(x, p, kernel, 0, &mut w, sink);
        }
    }

    fn point_own(&self, x: &QNode, kernel: Kernel, graded: bool, sink: &mut dyn FnMut(Nodes, &[f64])) {
        let e = x.elem;
        let grade = self.corner_grade(e, graded);
        let lower = Panel {
            elem: e,
            lo: 0.0,
            hic: x.xc,
            grade: if matches!(grade, Grade::Lo(_)) { grade } else { Grade::None },
        };
        let upper = Panel {
            elem: e,
            lo: x.xi,
            hic: 0.0,
            grade: if matches!(grade, Grade::Hi(_)) { grade } else { Grade::None },
        };
        for (p, x_at_hi) in [(lower, true), (upper, false)] {
            let len = p.len();
            if len <= 0.0 {
                continue;
            }
            let mut ys = Vec::new();
            let mut w = Vec::new();
            if kernel == Kernel::Log {
                // β = distance from x in panel coordinates
                let at = |b: f64, bc: f64| if x_at_hi { p.local(bc, b) } else { p.local(b, bc) };
                for (b, bc, wb) in gl(NEAR_ORDER).iter() {
                    let (yi, yc) = at(b, bc);
                    let y = self.node(e, yi, yc, wb * len);
                    w.push(y.w * (dist(x.x, y.x) / b).ln());
                    ys.push(y);
                }
                for (b, bc, wb) in gl_log(LOG_ORDER).iter() {
                    let (yi, yc) = at(b, bc);
                    let y = self.node(e, yi, yc, wb * len);
                    w.push(-y.w);
                    ys.push(y);
                }
            } else {
                for y in self.panel_nodes(&p, NEAR_ORDER) {
                    w.push(y.w * kernel.eval(x, &y));
                    ys.push(y);
                }
            }
            sink(Nodes { nodes: &ys, ladder: None }, &w);
        }
    }

    fn point_separated(
        &self,
        x: &QNode,
        p: Panel,
        kernel: Kernel,
        depth: usize,
        w: &mut Vec<f64>,
        sink: &mut dyn FnMut(Nodes, &[f64]),
    ) {
        let (m, l) = self.panel_info(&p);
        let d = dist(x.x, m) - 0.5 * l;
        if d < l && depth < MAX_DEPTH {
            let (p1, p2) = p.split();
            self.point_separated(x, p1, kernel, depth + 1, w, sink);
            self.point_separated(x, p2, kernel, depth + 1, w, sink);
            return;
        }
        let order = far_order(d / l).max(self.min_order[p.elem]);
        w.clear();
        if p.is_full_plain() {
            let k = ladder_index(order);
            let ys = self.ladder_nodes(p.elem, k);
            w.extend(ys.iter().map(|y| y.w * kernel.eval(x, y)));
            sink(Nodes { nodes: ys, ladder: Some((p.elem, k)) }, w);
        } else {
            let (ys, _) = self.side_nodes(&p, order);
            w.extend(ys.iter().map(|y| y.w * kernel.eval(x, y)));
            sink(Nodes { nodes: &ys, ladder: None }, w);
        }
    }

    /// Convenience: `∬ f(x) g(y) k(x, y) ds_x ds_y` over elements `a × b`.
    pub fn pair_integral(
        &self,
        a: usize,
        b: usize,
        kernel: Kernel,
        graded: bool,
        f: impl Fn(&QNode) -> f64,
        g: impl Fn(&QNode) -> f64,
    ) -> f64 {
        let mut total = 0.0;
        self.integrate_elements(a, b, kernel, graded, &mut |blk| match blk {
            Block::Tensor { xs, ys, w } => {
                let gy: Vec<f64> = ys.nodes.iter().map(&g).collect();
                for (i, x) in xs.nodes.iter().enumerate() {
                    let fx = f(x);
                    let row = &w[i * gy.len()..(i + 1) * gy.len()];
                    total += fx * row.iter().zip(&gy).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            Block::Zip { xs, ys, w } => {
                for k in 0..w.len() {
                    total += w[k] * f(&xs[k]) * g(&ys[k]);
                }
            }
        });
        total
    }

    /// Convenience: `∫ g(y) k(x, y) ds_y` for a target node.
    pub fn point_integral(&self, x: &QNode, kernel: Kernel, graded: bool, g: impl Fn(&QNode) -> f64) -> f64 {
        let mut total = 0.0;
        self.integrate_point(x, kernel, graded, &mut |ys, w| {
            total += ys.nodes.iter().zip(w).map(|(y, w)| w * g(y)).sum::<f64>();
        });
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryKind;
    use crate::mesh::{InitialMesh, Mode};
    use std::f64::consts::PI;

    fn geo(kind: GeometryKind, scale: f64, refinements: usize) -> ElementGeometry {
        let init = Arc::new(InitialMesh::uniform_six(2, Mode::Hyper).unwrap());
        let mut m = KnotMesh::initial(init);
        for _ in 0..refinements {
            m = m.refine_uniform().unwrap();
        }
        ElementGeometry::new(&m, Arc::new(BoundaryCurve::new(kind, scale).unwrap()))
    }

    // ∬_{[a,b]×[c,d]} log|s − t| via G'' = log
    fn rect_log(a: f64, b: f64, c: f64, d: f64) -> f64 {
        let g = |x: f64| {
            if x == 0.0 {
                0.0
            } else {
                0.5 * x * x * x.abs().ln() - 0.75 * x * x
            }
        };
        g(d - a) - g(c - a) - g(d - b) + g(c - b)
    }

    #[test]
    fn straight_line_pairs_match_closed_forms() {
        // pacman segment 0 runs straight from the origin with constant speed
        let g = geo(GeometryKind::Pacman, 1.0, 2);
        let n = g.n_elements();
        let q0 = g.node(0, 0.1, 0.9, 1.0).speed;
        let q1 = g.node(1, 0.9, 0.1, 1.0).speed;
        assert!((q0 - q1).abs() < 1e-13);
        let h = g.length(0);
        let one = |_: &QNode| 1.0;
        let ident = g.pair_integral(0, 0, Kernel::Log, false, one, one);
        assert!((ident - h * h * (h.ln() - 1.5)).abs() < 1e-13, "{ident}");
        let adj = g.pair_integral(0, 1, Kernel::Log, false, one, one);
        assert!((adj - rect_log(0.0, h, h, 2.0 * h)).abs() < 1e-13);
        let far = g.pair_integral(0, 3, Kernel::Log, false, one, one);
        assert!((far - rect_log(0.0, h, 3.0 * h, 4.0 * h)).abs() < 1e-13);
        assert!(n >= 6);
        let lin = |q: &QNode| q.xi;
        let lhs = g.pair_integral(0, 2, Kernel::Log, false, lin, one);
        // 64-point reference
        let r = crate::quadrature::gauss_legendre(64).unwrap();
        let mut refv = 0.0;
        for (s, _, ws) in r.iter() {
            for (t, _, wt) in r.iter() {
                refv += ws * wt * s * (h * (2.0 + t - s)).ln();
            }
        }
        assert!((lhs - refv * h * h).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pairs() {
        let g = geo(GeometryKind::Heart, 1.0, 1);
        let n = g.n_elements();
        let f = |q: &QNode| 1.0 + q.xi * q.xi;
        let h = |q: &QNode| q.xc - 0.3 * q.xi;
        for a in 0..n {
            for b in [0, 1, n - 1, (a + 5) % n] {
                let ab = g.pair_integral(a, b, Kernel::Log, false, f, h);
                let ba = g.pair_integral(b, a, Kernel::Log, false, h, f);
                assert!((ab - ba).abs() < 1e-13 * ab.abs().max(1e-3), "{a} {b}");
            }
        }
    }

    #[test]
    fn circle_single_layer_of_constant() {
        let a = 0.5;
        let g = geo(GeometryKind::Circle, a, 2);
        let n = g.n_elements();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                total += g.pair_integral(i, j, Kernel::Log, false, |_| 1.0, |_| 1.0);
            }
        }
        let v11 = -total / (2.0 * PI);
        assert!((v11 - PI * 2f64.ln() / 2.0).abs() < 1e-10, "{v11}");
        // pointwise: V1 = −a log a
        for e in [0, 7, n - 1] {
            let x = g.node(e, 0.3, 0.7, 0.0);
            let v = -g.point_integral(&x, Kernel::Log, false, |_| 1.0) / (2.0 * PI);
            assert!((v + a * a.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn gauss_identity_for_double_layer() {
        // ∫ ∂_ν(y) G(x, y) ds_y = −1/2 for x on a smooth part of Γ
        for kind in [GeometryKind::Pacman, GeometryKind::Heart, GeometryKind::Circle] {
            let g = geo(kind, 1.0, 2);
            let n = g.n_elements();
            for e in [1, n / 3 + 1, n / 2 - 1] {
                let x = g.node(e, 0.37, 0.63, 0.0);
                let k = g.point_integral(&x, Kernel::NormalY, true, |_| 1.0) / (2.0 * PI);
                assert!((k + 0.5).abs() < 1e-11, "{kind:?} {e} {k}");
            }
            // pair version: Σ_b ∬ 1·k = −π |Γ| (with the 1/2π removed)
            let mut total = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let v = g.pair_integral(a, b, Kernel::NormalY, true, |_| 1.0, |_| 1.0);
                    assert!(v.is_finite(), "{kind:?} {a} {b} {n}");
                    total += v;
                }
            }
            let len: f64 = (0..n).map(|e| g.length(e)).sum();
            assert!((total / (2.0 * PI) + 0.5 * len).abs() < 1e-10, "{kind:?} {total}");
        }
    }

    #[test]
    fn graded_density_near_corner() {
        // ∬ over the two corner elements of r(y)^{4/7} with the double-layer
        // kernel, graded vs. heavily subdivided reference
        let g = geo(GeometryKind::Pacman, 1.0, 1);
        let n = g.n_elements();
        let dens = |q: &QNode| (q.x[0].hypot(q.x[1])).powf(4.0 / 7.0);
        let graded = g.pair_integral(n - 1, 0, Kernel::NormalY, true, |_| 1.0, dens);
        let plain = g.pair_integral(n - 1, 0, Kernel::NormalY, false, |_| 1.0, dens);
        assert!((graded - plain).abs() < 1e-4);
        // reference: analytic in the straight-edge geometry
        // x at distance α on edge n−1, y at distance β on edge 0, angle π/4
        let h = g.length(0);
        let (ax, ay) = (7.0 * PI / 8.0, -7.0 * PI / 8.0);
        let r = gl(40);
        let mut refv = 0.0;
        for (u, _, wu) in r.iter() {
            let rho = u.powi(7);
            let jr = 7.0 * u.powi(6);
            for (v, _, wv) in r.iter() {
                let s = v.powi(7);
                let js = 7.0 * v.powi(6);
                for tri in 0..2 {
                    let (al, be) = if tri == 0 { (rho, rho * s) } else { (rho * s, rho) };
                    let (al, be) = (al * h, be * h);
                    let xv = [al * ax.cos(), al * ax.sin()];
                    let yv = [be * ay.cos(), be * ay.sin()];
                    let ny = [ay.sin(), -ay.cos()];
                    let d = [xv[0] - yv[0], xv[1] - yv[1]];
                    let k = (d[0] * ny[0] + d[1] * ny[1]) / (d[0] * d[0] + d[1] * d[1]);
                    refv += wu * wv * jr * js * rho * h * h * k * be.powf(4.0 / 7.0);
                }
            }
        }
        assert!((graded - refv).abs() < 1e-12, "{graded} {refv}");
    }

    #[test]
    fn far_order_monotone() {
        let mut prev = NEAR_ORDER;
        for r in [0.5, 1.0, 2.0, 10.0, 100.0, 1e4] {
            let n = far_order(r);
            assert!(n <= prev);
            prev = n;
        }
        assert!(far_order(1e6) <= 2);
    }
}
