//! Discrete ansatz spaces over a knot mesh.
//!
//! NURBS kinds use the B-splines of the open knot vector induced by the mesh
//! (first and last breakpoint repeated `p + 1` times, 0-based indices
//! `k = 0..N`). The hyper-singular space merges `k = 0` and `k = N - 1` into
//! degree of freedom 0 and keeps `k → k` otherwise; the weakly-singular space
//! uses `k → k`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::BoundaryCurve;
use crate::mesh::{KnotMesh, Param};
use crate::quadrature::gl;
use crate::splines::{boehm_insert, nonzero_basis, Offsets, MAX_DEGREE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    /// Continuous NURBS with equal values at `γ(a)` and `γ(b-)`, dimension `N - 1`.
    HyperNurbs,
    /// All NURBS of the knot vector, dimension `N`.
    WeakNurbs,
    /// Elementwise Legendre polynomials in the parameter, dimension `(p + 1)|Q|`.
    PwPolyDiscontinuous,
    /// Continuous piecewise polynomials (B-splines with interior multiplicity `p`).
    PwPolyContinuous,
}

impl SpaceKind {
    fn is_spline(self) -> bool {
        !matches!(self, SpaceKind::PwPolyDiscontinuous)
    }
}

#[derive(Debug, Clone)]
struct ElementBasis {
    /// Global B-spline index of local function 0 (`span - p`).
    first: usize,
    dminus: Offsets,
    dplus: Offsets,
    h_hat: f64,
}

/// Nonzero basis functions of one element at one point.
#[derive(Debug, Clone, Copy)]
pub struct LocalBasis {
    pub len: usize,
    pub dofs: [usize; MAX_DEGREE + 1],
    pub vals: [f64; MAX_DEGREE + 1],
    /// Derivatives with respect to the curve parameter `t`.
    pub ders: [f64; MAX_DEGREE + 1],
}

impl Default for LocalBasis {
    fn default() -> Self {
        Self {
            len: 0,
            dofs: [0; MAX_DEGREE + 1],
            vals: [0.0; MAX_DEGREE + 1],
            ders: [0.0; MAX_DEGREE + 1],
        }
    }
}

/// A discrete space on a mesh over a curve.
#[derive(Debug, Clone)]
pub struct DiscreteSpace {
    kind: SpaceKind,
    mesh: KnotMesh,
    curve: Arc<BoundaryCurve>,
    degree: usize,
    knots: Vec<Param>,
    weights: Vec<f64>,
    initial_weights: Vec<f64>,
    elements: Vec<ElementBasis>,
    dim: usize,
}

/// Extended open knot vector of a spline kind on `mesh`.
fn knot_vector(mesh: &KnotMesh, kind: SpaceKind) -> Vec<Param> {
    let p = mesh.degree();
    let mut knots = vec![Param::START; p + 1];
    for j in 1..mesh.n_nodes() {
        let m = match kind {
            SpaceKind::PwPolyContinuous => p,
            _ => mesh.multiplicity(j),
        };
        knots.extend(std::iter::repeat_n(mesh.node(j), m));
    }
    let (_, end) = mesh.element(mesh.n_elements() - 1);
    knots.extend(std::iter::repeat_n(end, p + 1));
    knots
}

fn initial_knot_vector(mesh: &KnotMesh, kind: SpaceKind) -> Vec<Param> {
    knot_vector(&KnotMesh::initial(mesh.init().clone()), kind)
}

/// Replays all insertions that turn `from` into `to` on homogeneous
/// coefficients.
fn insert_all(
    mesh: &KnotMesh,
    from: &[Param],
    to: &[Param],
    p: usize,
    coeffs: &mut Vec<[f64; 2]>,
) -> Result<()> {
    let mut knots = from.to_vec();
    let diff = |a: Param, b: Param| mesh.param_diff(a, b);
    let mut i = 0;
    for &k in to {
        while i < knots.len() && knots[i] < k {
            i += 1;
        }
        if i < knots.len() && knots[i] == k {
            i += 1;
            continue;
        }
        boehm_insert(&mut knots, p, coeffs, k, diff)?;
        i += 1;
    }
    if knots != to {
        return Err(Error::Argument("target knot vector does not contain the source".into()));
    }
    Ok(())
}

impl DiscreteSpace {
    /// Builds a space; `initial_weights` are the NURBS weights on the initial
    /// mesh (all ones if `None`) and are propagated by knot insertion.
    pub fn new(
        mesh: &KnotMesh,
        curve: Arc<BoundaryCurve>,
        kind: SpaceKind,
        initial_weights: Option<&[f64]>,
    ) -> Result<Self> {
        let p = mesh.degree();
        if curve.n_segments() != mesh.init().n_segments()
            || curve
                .breaks()
                .iter()
                .zip(mesh.init().breaks())
                .any(|(a, b)| (a - b).abs() > 1e-15)
        {
            return Err(Error::Argument(
                "curve segments must coincide with the initial elements".into(),
            ));
        }
        if kind == SpaceKind::PwPolyContinuous && p == 0 {
            return Err(Error::UnsupportedDegree(
                "continuous piecewise polynomials need p >= 1".into(),
            ));
        }
        if kind == SpaceKind::HyperNurbs && p == 0 {
            return Err(Error::UnsupportedDegree("the hyper-singular space needs p >= 1".into()));
        }
        let n_el = mesh.n_elements();
        if !kind.is_spline() {
            let elements = (0..n_el)
                .map(|e| ElementBasis {
                    first: e * (p + 1),
                    dminus: [0.0; MAX_DEGREE + 2],
                    dplus: [0.0; MAX_DEGREE + 2],
                    h_hat: mesh.h_hat(e),
                })
                .collect();
            return Ok(Self {
                kind,
                mesh: mesh.clone(),
                curve,
                degree: p,
                knots: Vec::new(),
                weights: Vec::new(),
                initial_weights: Vec::new(),
                elements,
                dim: (p + 1) * n_el,
            });
        }

        let knots = knot_vector(mesh, kind);
        let n_basis = knots.len() - p - 1;
        let init_knots = initial_knot_vector(mesh, kind);
        let n0 = init_knots.len() - p - 1;
        let w0: Vec<f64> = match (kind, initial_weights) {
            (SpaceKind::PwPolyContinuous, _) | (_, None) => vec![1.0; n0],
            (_, Some(w)) => w.to_vec(),
        };
        if w0.len() != n0 {
            return Err(Error::Argument(format!(
                "expected {n0} initial weights, got {}",
                w0.len()
            )));
        }
        if w0.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Invariant("weights must be positive".into()));
        }
        if kind == SpaceKind::HyperNurbs && (w0[0] - w0[n0 - 1]).abs() > 1e-14 * w0[0] {
            return Err(Error::Argument(
                "first and last initial weight must agree for the hyper-singular space".into(),
            ));
        }
        let mut hom: Vec<[f64; 2]> = w0.iter().map(|&w| [w, w]).collect();
        insert_all(mesh, &init_knots, &knots, p, &mut hom)?;
        let weights: Vec<f64> = hom.iter().map(|h| h[1]).collect();

        let mut elements = Vec::with_capacity(n_el);
        let mut span = p;
        for e in 0..n_el {
            if e > 0 {
                span += match kind {
                    SpaceKind::PwPolyContinuous => p,
                    _ => mesh.multiplicity(e),
                };
            }
            let (za, zb) = mesh.element(e);
            let mut dminus = [0.0; MAX_DEGREE + 2];
            let mut dplus = [0.0; MAX_DEGREE + 2];
            for j in 1..=p {
                dminus[j] = mesh.param_diff(knots[span + 1 - j], za);
                dplus[j] = mesh.param_diff(zb, knots[span + j]);
            }
            elements.push(ElementBasis {
                first: span - p,
                dminus,
                dplus,
                h_hat: mesh.h_hat(e),
            });
        }
        let dim = match kind {
            SpaceKind::HyperNurbs | SpaceKind::PwPolyContinuous => n_basis - 1,
            _ => n_basis,
        };
        Ok(Self {
            kind,
            mesh: mesh.clone(),
            curve,
            degree: p,
            knots,
            weights,
            initial_weights: w0,
            elements,
            dim,
        })
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn mesh(&self) -> &KnotMesh {
        &self.mesh
    }

    pub fn curve(&self) -> &Arc<BoundaryCurve> {
        &self.curve
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// NURBS weights `W`, one per B-spline of the knot vector.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn initial_weights(&self) -> &[f64] {
        &self.initial_weights
    }

    pub fn knots(&self) -> &[Param] {
        &self.knots
    }

    /// Number of B-splines of the underlying knot vector (spline kinds).
    pub fn n_bsplines(&self) -> usize {
        self.weights.len()
    }

    /// Degree of freedom carried by B-spline `k`.
    pub fn dof_of_bspline(&self, k: usize) -> usize {
        match self.kind {
            SpaceKind::HyperNurbs | SpaceKind::PwPolyContinuous if k + 1 == self.n_bsplines() => 0,
            _ => k,
        }
    }

    fn uses_weights(&self) -> bool {
        matches!(self.kind, SpaceKind::HyperNurbs | SpaceKind::WeakNurbs)
    }

    /// Global B-spline index of local function 0 on element `e`.
    pub fn first_bspline(&self, e: usize) -> usize {
        self.elements[e].first
    }

    /// Raw B-spline values and `t`-derivatives on element `e` (spline kinds).
    pub(crate) fn bsplines_local(
        &self,
        e: usize,
        xi: f64,
        xc: f64,
        vals: &mut [f64; MAX_DEGREE + 1],
        ders: &mut [f64; MAX_DEGREE + 1],
    ) {
        let el = &self.elements[e];
        let p = self.degree;
        let mut left = [0.0; MAX_DEGREE + 2];
        let mut right = [0.0; MAX_DEGREE + 2];
        for j in 1..=p {
            left[j] = xi * el.h_hat + el.dminus[j];
            right[j] = xc * el.h_hat + el.dplus[j];
        }
        nonzero_basis(p, &left, &right, vals, Some(ders));
    }

    /// Basis functions that do not vanish on element `e` at local
    /// coordinate `ξ` (with `xc = 1 - ξ`).
    pub fn eval_local(&self, e: usize, xi: f64, xc: f64, out: &mut LocalBasis) {
        let p = self.degree;
        out.len = p + 1;
        if self.kind == SpaceKind::PwPolyDiscontinuous {
            let scale = 2.0 / self.elements[e].h_hat;
            legendre_local(p, xi, xc, &mut out.vals, &mut out.ders);
            for k in 0..=p {
                out.dofs[k] = e * (p + 1) + k;
                out.ders[k] *= scale;
            }
            return;
        }
        let mut b = [0.0; MAX_DEGREE + 1];
        let mut db = [0.0; MAX_DEGREE + 1];
        self.bsplines_local(e, xi, xc, &mut b, &mut db);
        let first = self.elements[e].first;
        if self.uses_weights() {
            let mut w = 0.0;
            let mut dw = 0.0;
            for r in 0..=p {
                w += self.weights[first + r] * b[r];
                dw += self.weights[first + r] * db[r];
            }
            for r in 0..=p {
                let wk = self.weights[first + r];
                out.vals[r] = wk * b[r] / w;
                out.ders[r] = wk * (db[r] * w - b[r] * dw) / (w * w);
            }
        } else {
            out.vals[..=p].copy_from_slice(&b[..=p]);
            out.ders[..=p].copy_from_slice(&db[..=p]);
        }
        for r in 0..=p {
            out.dofs[r] = self.dof_of_bspline(first + r);
        }
    }

    /// Element containing `t ∈ [0, 1)` (right-continuous) and its local
    /// coordinates.
    pub fn locate(&self, t: f64) -> Result<(usize, f64, f64)> {
        let b = *self.mesh.init().breaks().last().unwrap();
        let a = self.mesh.init().breaks()[0];
        if !(t >= a && t < b) {
            return Err(Error::Domain { t, a, b });
        }
        let n = self.mesh.n_elements();
        let e = (0..n)
            .collect::<Vec<_>>()
            .partition_point(|&j| self.mesh.node_t(j) <= t)
            - 1;
        let lo = self.mesh.node_t(e);
        let hh = self.elements[e].h_hat;
        let xi = ((t - lo) / hh).clamp(0.0, 1.0);
        Ok((e, xi, 1.0 - xi))
    }

    /// Embeds a function of this space into `target`, which must be a
    /// refinement of the same kind.
    pub fn embed(&self, coeffs: &[f64], target: &DiscreteSpace) -> Result<Vec<f64>> {
        if coeffs.len() != self.dim {
            return Err(Error::Argument("coefficient length does not match the space".into()));
        }
        if target.kind != self.kind || !target.mesh.refines(&self.mesh) {
            return Err(Error::Argument("target space is not a refinement of the source".into()));
        }
        if target.initial_weights != self.initial_weights {
            return Err(Error::Argument("spaces use different initial weights".into()));
        }
        let p = self.degree;
        if self.kind == SpaceKind::PwPolyDiscontinuous {
            let mut out = vec![0.0; target.dim];
            let rule = gl(p + 1);
            let mut src = LocalBasis::default();
            let mut dst = LocalBasis::default();
            for e in 0..target.mesh.n_elements() {
                let (za, zb) = target.mesh.element(e);
                let ce = self.mesh.find_element_containing(za, zb)?;
                let (ca, _) = self.mesh.element(ce);
                let off = self.mesh.param_diff(ca, za) / self.elements[ce].h_hat;
                let frac = target.elements[e].h_hat / self.elements[ce].h_hat;
                for (x, c, w) in rule.iter() {
                    let xs = off + x * frac;
                    self.eval_local(ce, xs, 1.0 - xs, &mut src);
                    let v: f64 = (0..=p).map(|k| coeffs[src.dofs[k]] * src.vals[k]).sum();
                    target.eval_local(e, x, c, &mut dst);
                    for k in 0..=p {
                        // orthogonal Legendre: coefficient = (2k + 1) ∫ f P_k
                        out[dst.dofs[k]] += (2 * k + 1) as f64 * w * v * dst.vals[k];
                    }
                }
            }
            return Ok(out);
        }
        let n = self.n_bsplines();
        let mut hom: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                let c = coeffs[self.dof_of_bspline(k)];
                let w = if self.uses_weights() { self.weights[k] } else { 1.0 };
                [c * w, w]
            })
            .collect();
        insert_all(&self.mesh, &self.knots, &target.knots, p, &mut hom)?;
        let mut out = vec![0.0; target.dim];
        for (k, h) in hom.iter().enumerate() {
            out[target.dof_of_bspline(k)] = h[0] / h[1];
        }
        Ok(out)
    }
}

impl KnotMesh {
    /// Element of this mesh that contains the parameter interval `[a, b]`.
    pub(crate) fn find_element_containing(&self, a: Param, b: Param) -> Result<usize> {
        let e = self.nodes().partition_point(|&z| z <= a);
        if e == 0 {
            return Err(Error::Argument("interval before the first node".into()));
        }
        let e = e - 1;
        let (_, end) = self.element(e);
        if b > end {
            return Err(Error::Argument("interval crosses a node of the coarse mesh".into()));
        }
        Ok(e)
    }
}

/// Shifted Legendre polynomials `P_k(2ξ - 1)` and their `ξ`-derivatives
/// divided by 2 (so multiplying by `2/ĥ` gives `t`-derivatives).
fn legendre_local(
    p: usize,
    xi: f64,
    xc: f64,
    vals: &mut [f64; MAX_DEGREE + 1],
    ders: &mut [f64; MAX_DEGREE + 1],
) {
    let x = xi - xc;
    vals[0] = 1.0;
    ders[0] = 0.0;
    if p == 0 {
        return;
    }
    vals[1] = x;
    ders[1] = 1.0;
    for k in 2..=p {
        let kf = k as f64;
        vals[k] = ((2.0 * kf - 1.0) * x * vals[k - 1] - (kf - 1.0) * vals[k - 2]) / kf;
        ders[k] = ders[k - 2] + (2.0 * kf - 1.0) * vals[k - 1];
    }
}

/// Coefficient vector bound to a space.
#[derive(Debug, Clone)]
pub struct DiscreteSolution {
    pub space: Arc<DiscreteSpace>,
    pub coeffs: Vec<f64>,
}

impl DiscreteSolution {
    pub fn new(space: Arc<DiscreteSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(Error::Invariant(format!(
                "{} coefficients for a space of dimension {}",
                coeffs.len(),
                space.dim()
            )));
        }
        Ok(Self { space, coeffs })
    }

    pub fn zeros(space: Arc<DiscreteSpace>) -> Self {
        let coeffs = vec![0.0; space.dim()];
        Self { space, coeffs }
    }

    /// Value and parameter derivative on element `e` at `(ξ, 1 - ξ)`.
    pub fn eval_local(&self, e: usize, xi: f64, xc: f64) -> (f64, f64) {
        let mut b = LocalBasis::default();
        self.space.eval_local(e, xi, xc, &mut b);
        let mut v = 0.0;
        let mut d = 0.0;
        for k in 0..b.len {
            v += self.coeffs[b.dofs[k]] * b.vals[k];
            d += self.coeffs[b.dofs[k]] * b.ders[k];
        }
        (v, d)
    }

    /// Value (`order == 0`) or arclength derivative (`order == 1`) at `t`.
    pub fn eval(&self, t: f64, order: usize) -> Result<f64> {
        if order > 1 {
            return Err(Error::Argument(format!("derivative order {order} is not supported")));
        }
        if order == 1 && self.space.degree() == 0 && self.space.kind() != SpaceKind::PwPolyDiscontinuous {
            return Err(Error::UnsupportedDegree("derivative of degree 0".into()));
        }
        let (e, xi, xc) = self.space.locate(t)?;
        let (v, d) = self.eval_local(e, xi, xc);
        if order == 0 {
            return Ok(v);
        }
        let (s, u, c) = self.space.mesh().local_to_segment(e, xi, xc);
        Ok(d / self.space.curve().eval_segment(s, u, c).speed())
    }

    /// Embeds into a refined space of the same kind.
    pub fn embed(&self, target: Arc<DiscreteSpace>) -> Result<DiscreteSolution> {
        let coeffs = self.space.embed(&self.coeffs, &target)?;
        DiscreteSolution::new(target, coeffs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryKind;
    use crate::mesh::{InitialMesh, Mode};
    use proptest::prelude::*;

    fn setup(mode: Mode) -> (KnotMesh, Arc<BoundaryCurve>) {
        let init = Arc::new(InitialMesh::uniform_six(2, mode).unwrap());
        (
            KnotMesh::initial(init),
            Arc::new(BoundaryCurve::new(GeometryKind::Pacman, 1.0).unwrap()),
        )
    }

    fn random_refine(mut m: KnotMesh, picks: &[f64]) -> KnotMesh {
        for s in picks {
            let n = m.n_nodes();
            let z = ((s * n as f64) as usize).min(n - 1);
            m = m.refine(&[z]).unwrap();
        }
        m
    }

    #[test]
    fn dimensions() {
        let (m, c) = setup(Mode::Hyper);
        let h = DiscreteSpace::new(&m, c.clone(), SpaceKind::HyperNurbs, None).unwrap();
        assert_eq!(h.dim(), 7);
        let (mw, _) = setup(Mode::Weak);
        let w = DiscreteSpace::new(&mw, c.clone(), SpaceKind::WeakNurbs, None).unwrap();
        assert_eq!(w.dim(), 8);
        let r = m.refine(&[1, 2]).unwrap();
        assert_eq!(r.num_knots(), 9);
        let h2 = DiscreteSpace::new(&r, c.clone(), SpaceKind::HyperNurbs, None).unwrap();
        assert_eq!(h2.dim(), 8);
        let d = DiscreteSpace::new(&m, c.clone(), SpaceKind::PwPolyDiscontinuous, None).unwrap();
        assert_eq!(d.dim(), 18);
        let cont = DiscreteSpace::new(&m, c, SpaceKind::PwPolyContinuous, None).unwrap();
        assert_eq!(cont.dim(), 12);
    }

    #[test]
    fn weight_mismatch_rejected() {
        let (m, c) = setup(Mode::Hyper);
        let w = [1.0, 0.9, 1.0, 1.0, 1.0, 1.0, 1.0, 0.8];
        assert!(DiscreteSpace::new(&m, c.clone(), SpaceKind::HyperNurbs, Some(&w)).is_err());
        let (mw, _) = setup(Mode::Weak);
        assert!(DiscreteSpace::new(&mw, c, SpaceKind::WeakNurbs, Some(&w)).is_ok());
    }

    #[test]
    fn constants_and_periodicity() {
        let (m, c) = setup(Mode::Hyper);
        let m = m.refine(&[2]).unwrap().refine(&[3, 4]).unwrap();
        let w = [1.0, 0.9, 1.3, 0.7, 1.1, 1.2, 0.95, 1.0];
        let s = Arc::new(DiscreteSpace::new(&m, c, SpaceKind::HyperNurbs, Some(&w)).unwrap());
        let sol = DiscreteSolution::new(s.clone(), vec![2.0; s.dim()]).unwrap();
        for k in 0..37 {
            let t = k as f64 / 37.0;
            assert!((sol.eval(t, 0).unwrap() - 2.0).abs() < 1e-13);
            assert!(sol.eval(t, 1).unwrap().abs() < 1e-11);
        }
        for i in 0..s.dim() {
            let mut e = vec![0.0; s.dim()];
            e[i] = 1.0;
            let f = DiscreteSolution::new(s.clone(), e).unwrap();
            let start = f.eval(0.0, 0).unwrap();
            let (ve, _) = f.eval_local(m.n_elements() - 1, 1.0, 0.0);
            assert!((start - ve).abs() < 1e-14);
        }
    }

    #[test]
    fn unit_weights_reduce_to_bsplines() {
        let (m, c) = setup(Mode::Weak);
        let s = DiscreteSpace::new(&m, c, SpaceKind::WeakNurbs, None).unwrap();
        let kv = crate::splines::KnotVector::open(
            &[0.0, 1.0 / 6.0, 2.0 / 6.0, 0.5, 4.0 / 6.0, 5.0 / 6.0, 1.0],
            &[1, 1, 1, 1, 1],
            2,
        )
        .unwrap();
        let mut b = LocalBasis::default();
        for k in 0..30 {
            let t = (k as f64 + 0.5) / 30.0;
            let (e, xi, xc) = s.locate(t).unwrap();
            s.eval_local(e, xi, xc, &mut b);
            for r in 0..b.len {
                let v = crate::splines::eval_bspline(&kv, b.dofs[r], t).unwrap();
                assert!((v - b.vals[r]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn arclength_derivative_matches_fd() {
        let (m, c) = setup(Mode::Hyper);
        let s = Arc::new(DiscreteSpace::new(&m, c.clone(), SpaceKind::HyperNurbs, None).unwrap());
        let coeffs: Vec<f64> = (0..s.dim()).map(|i| (i as f64 * 0.9).sin()).collect();
        let f = DiscreteSolution::new(s, coeffs).unwrap();
        for t in [0.07, 0.2, 0.41, 0.6, 0.77, 0.93] {
            let h = 1e-6;
            let pa = c.gamma_eval(t - h, crate::geometry::Side::Right).unwrap().point;
            let pb = c.gamma_eval(t + h, crate::geometry::Side::Right).unwrap().point;
            let ds = (pa[0] - pb[0]).hypot(pa[1] - pb[1]);
            let fd = (f.eval(t + h, 0).unwrap() - f.eval(t - h, 0).unwrap()) / ds;
            assert!((fd - f.eval(t, 1).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn weak_full_multiplicity_gives_jump() {
        let (m, c) = setup(Mode::Weak);
        let m = m.refine(&[2]).unwrap().refine(&[2]).unwrap();
        let s = DiscreteSpace::new(&m, c, SpaceKind::WeakNurbs, None).unwrap();
        let mut jump = false;
        let mut l = LocalBasis::default();
        let mut r = LocalBasis::default();
        s.eval_local(1, 1.0, 0.0, &mut l);
        s.eval_local(2, 0.0, 1.0, &mut r);
        for i in 0..s.dim() {
            let vl: f64 = (0..l.len).filter(|&k| l.dofs[k] == i).map(|k| l.vals[k]).sum();
            let vr: f64 = (0..r.len).filter(|&k| r.dofs[k] == i).map(|k| r.vals[k]).sum();
            jump |= (vl - vr).abs() > 0.5;
        }
        assert!(jump);
    }

    #[test]
    fn embed_identity_and_errors() {
        let (m, c) = setup(Mode::Hyper);
        let s = Arc::new(DiscreteSpace::new(&m, c.clone(), SpaceKind::HyperNurbs, None).unwrap());
        let f = DiscreteSolution::new(s.clone(), (0..7).map(|i| i as f64).collect()).unwrap();
        let g = f.embed(s.clone()).unwrap();
        assert_eq!(f.coeffs, g.coeffs);
        let fine = Arc::new(
            DiscreteSpace::new(&m.refine(&[1, 2]).unwrap(), c.clone(), SpaceKind::HyperNurbs, None)
                .unwrap(),
        );
        assert!(DiscreteSolution::zeros(fine.clone()).embed(s).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn embedding_preserves_values(
            weak in any::<bool>(),
            kind_sel in 0usize..3,
            picks1 in prop::collection::vec(0.0f64..1.0, 0..6),
            picks2 in prop::collection::vec(0.0f64..1.0, 1..6),
            ts in prop::collection::vec(0.0f64..1.0, 100),
        ) {
            let mode = if weak { Mode::Weak } else { Mode::Hyper };
            let kind = match (kind_sel, weak) {
                (0, false) => SpaceKind::HyperNurbs,
                (0, true) => SpaceKind::WeakNurbs,
                (1, _) => SpaceKind::PwPolyDiscontinuous,
                _ => SpaceKind::PwPolyContinuous,
            };
            let (m0, c) = setup(mode);
            let w = [1.0, 0.9, 1.3, 0.7, 1.1, 1.2, 0.95, 1.0];
            let m1 = random_refine(m0, &picks1);
            let m2 = random_refine(m1.clone(), &picks2);
            let s1 = Arc::new(DiscreteSpace::new(&m1, c.clone(), kind, Some(&w)).unwrap());
            let s2 = Arc::new(DiscreteSpace::new(&m2, c.clone(), kind, Some(&w)).unwrap());
            let wmin = 0.7 - 1e-15;
            let wmax = 1.3 + 1e-15;
            prop_assert!(s2.weights().iter().all(|&x| x >= wmin && x <= wmax));
            let coeffs: Vec<f64> = (0..s1.dim()).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
            let f = DiscreteSolution::new(s1, coeffs).unwrap();
            let g = f.embed(s2).unwrap();
            for t in ts {
                prop_assert!((f.eval(t, 0).unwrap() - g.eval(t, 0).unwrap()).abs() < 1e-11);
            }
        }
    }
}
