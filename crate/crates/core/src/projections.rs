//! Data approximation and quasi-interpolation.
//!
//! The dual functionals live on one element each: for B-spline `i` the
//! functional is `v ↦ ∫_{E_i} B̂*_i (ŵ / w_i) v dt` where `E_i` is the
//! longest element (in the parameter) of `supp B_i` and `B̂*_i` is the
//! polynomial on `E_i` that is `L²(E_i)`-biorthogonal to the B-splines
//! living on `E_i`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::operators::Density;
use crate::quadrature::{gl, ElementGeometry, NEAR_ORDER};
use crate::spaces::{DiscreteSolution, DiscreteSpace, LocalBasis, SpaceKind};
use crate::splines::MAX_DEGREE;

/// Quadrature only needs the element structure, so `⊖1` spaces share the
/// geometry of their parent mesh.
fn check_mesh(geo: &ElementGeometry, space: &DiscreteSpace) -> Result<()> {
    if space.mesh().nodes() != geo.mesh().nodes() || space.curve() != geo.curve() {
        return Err(Error::Argument("space and quadrature geometry differ".into()));
    }
    Ok(())
}


/// `L²(Γ)` projection onto discontinuous piecewise polynomials of the mesh
/// degree.
pub fn l2_project_pw(geo: &ElementGeometry, f: &dyn Density) -> Result<DiscreteSolution> {
    let space = Arc::new(DiscreteSpace::new(
        geo.mesh(),
        geo.curve().clone(),
        SpaceKind::PwPolyDiscontinuous,
        None,
    )?);
    l2_project_onto(geo, space, f)
}

/// Same as [`l2_project_pw`] onto a prebuilt piecewise polynomial space.
pub fn l2_project_onto(
    geo: &ElementGeometry,
    space: Arc<DiscreteSpace>,
    f: &dyn Density,
) -> Result<DiscreteSolution> {
    check_mesh(geo, &space)?;
    if space.kind() != SpaceKind::PwPolyDiscontinuous {
        return Err(Error::Argument("projection target must be discontinuous".into()));
    }
    let np = space.degree() + 1;
    // the rational arcs have strongly varying speed, so data integrals use
    // the near-field order everywhere
    let n = NEAR_ORDER;
    let local: Vec<Result<Vec<f64>>> = (0..geo.n_elements())
        .into_par_iter()
        .map(|e| {
            let mut g = DMatrix::<f64>::zeros(np, np);
            let mut r = DVector::<f64>::zeros(np);
            let mut lb = LocalBasis::default();
            for q in geo.element_rule(e, n, f.singular()) {
                space.eval_local(e, q.xi, q.xc, &mut lb);
                let fv = f.at(&q);
                for a in 0..np {
                    r[a] += q.w * fv * lb.vals[a];
                    for b in 0..np {
                        g[(a, b)] += q.w * lb.vals[a] * lb.vals[b];
                    }
                }
            }
            let chol = g.cholesky().ok_or_else(|| {
                Error::Invariant(format!("singular element mass matrix on element {e}"))
            })?;
            Ok(chol.solve(&r).as_slice().to_vec())
        })
        .collect();
    let mut coeffs = Vec::with_capacity(space.dim());
    for c in local {
        coeffs.extend(c?);
    }
    DiscreteSolution::new(space, coeffs)
}

/// Element-supported dual functionals of a spline space.
#[derive(Debug, Clone)]
pub struct DualBasis {
    space: Arc<DiscreteSpace>,
    /// `E_i` for every B-spline.
    elem: Vec<usize>,
    /// `B̂*_i = Σ_l coef[i][l] B_{first(E_i) + l}` on `E_i`.
    coef: Vec<[f64; MAX_DEGREE + 1]>,
}

impl DualBasis {
    pub fn new(space: Arc<DiscreteSpace>) -> Result<Self> {
        if space.kind() == SpaceKind::PwPolyDiscontinuous {
            return Err(Error::Argument("dual basis is defined for spline spaces".into()));
        }
        let mesh = space.mesh();
        let p = space.degree();
        let nb = space.n_bsplines();
        let ne = mesh.n_elements();
        let mut elem = vec![usize::MAX; nb];
        for e in 0..ne {
            let first = space.first_bspline(e);
            for l in 0..=p {
                let i = first + l;
                let cur = elem[i];
                if cur == usize::MAX || mesh.h_hat(e) > mesh.h_hat(cur) {
                    elem[i] = e;
                }
            }
        }
        if elem.contains(&usize::MAX) {
            return Err(Error::Invariant("B-spline without an element".into()));
        }
        let mut inv: Vec<Option<DMatrix<f64>>> = vec![None; ne];
        let rule = gl(p + 1);
        let mut coef = vec![[0.0; MAX_DEGREE + 1]; nb];
        for i in 0..nb {
            let e = elem[i];
            if inv[e].is_none() {
                let mut g = DMatrix::<f64>::zeros(p + 1, p + 1);
                let mut b = [0.0; MAX_DEGREE + 1];
                let mut db = [0.0; MAX_DEGREE + 1];
                let hh = mesh.h_hat(e);
                for (x, c, w) in rule.iter() {
                    space.bsplines_local(e, x, c, &mut b, &mut db);
                    for a in 0..=p {
                        for bb in 0..=p {
                            g[(a, bb)] += hh * w * b[a] * b[bb];
                        }
                    }
                }
                let gi = g.try_inverse().ok_or_else(|| {
                    Error::Invariant(format!("degenerate element {e} in the dual basis"))
                })?;
                inv[e] = Some(gi);
            }
            let gi = inv[e].as_ref().unwrap();
            let l = i - space.first_bspline(e);
            for m in 0..=p {
                coef[i][m] = gi[(l, m)];
            }
        }
        Ok(Self { space, elem, coef })
    }

    pub fn space(&self) -> &Arc<DiscreteSpace> {
        &self.space
    }

    /// Element carrying the dual function of B-spline `i`.
    pub fn element(&self, i: usize) -> usize {
        self.elem[i]
    }

    fn weight_at(&self, e: usize, b: &[f64; MAX_DEGREE + 1]) -> f64 {
        match self.space.kind() {
            SpaceKind::HyperNurbs | SpaceKind::WeakNurbs => {
                let first = self.space.first_bspline(e);
                (0..=self.space.degree())
                    .map(|r| self.space.weights()[first + r] * b[r])
                    .sum()
            }
            _ => 1.0,
        }
    }

    fn own_weight(&self, i: usize) -> f64 {
        match self.space.kind() {
            SpaceKind::HyperNurbs | SpaceKind::WeakNurbs => self.space.weights()[i],
            _ => 1.0,
        }
    }

    /// `R̂*_i(t)` on its element at local coordinate `(ξ, 1 − ξ)`.
    pub fn eval_dual(&self, i: usize, xi: f64, xc: f64) -> f64 {
        let e = self.elem[i];
        let mut b = [0.0; MAX_DEGREE + 1];
        let mut db = [0.0; MAX_DEGREE + 1];
        self.space.bsplines_local(e, xi, xc, &mut b, &mut db);
        let bs: f64 = (0..=self.space.degree()).map(|m| self.coef[i][m] * b[m]).sum();
        bs * self.weight_at(e, &b) / self.own_weight(i)
    }

    /// `∫ R̂*_i (v ∘ γ) dt` for every B-spline `i`. A discrete `v` must live
    /// on a space over the same elements.
    pub fn apply(&self, geo: &ElementGeometry, v: &dyn Density) -> Result<Vec<f64>> {
        check_mesh(geo, &self.space)?;
        let p = self.space.degree();
        let n = NEAR_ORDER;
        let ne = geo.n_elements();
        let mut used = vec![false; ne];
        for &e in &self.elem {
            used[e] = true;
        }
        // moments ∫_E B_m ŵ v dt
        let moments: Vec<[f64; MAX_DEGREE + 1]> = (0..ne)
            .into_par_iter()
            .map(|e| {
                let mut mom = [0.0; MAX_DEGREE + 1];
                if !used[e] {
                    return mom;
                }
                let mut b = [0.0; MAX_DEGREE + 1];
                let mut db = [0.0; MAX_DEGREE + 1];
                for q in geo.element_rule(e, n, v.singular()) {
                    self.space.bsplines_local(e, q.xi, q.xc, &mut b, &mut db);
                    let f = q.w / q.speed * self.weight_at(e, &b) * v.at(&q);
                    for m in 0..=p {
                        mom[m] += f * b[m];
                    }
                }
                mom
            })
            .collect();
        Ok((0..self.elem.len())
            .map(|i| {
                let mom = &moments[self.elem[i]];
                let s: f64 = (0..=p).map(|m| self.coef[i][m] * mom[m]).sum();
                s / self.own_weight(i)
            })
            .collect())
    }
}

/// Scott–Zhang-type operator onto `space`; merged periodic functions take
/// the average of their two endpoint functionals.
pub fn scott_zhang(geo: &ElementGeometry, dual: &DualBasis, v: &dyn Density) -> Result<DiscreteSolution> {
    let space = dual.space().clone();
    let lam = dual.apply(geo, v)?;
    let nb = lam.len();
    let mut coeffs = vec![0.0; space.dim()];
    match space.kind() {
        SpaceKind::HyperNurbs | SpaceKind::PwPolyContinuous => {
            coeffs[0] = 0.5 * (lam[0] + lam[nb - 1]);
            coeffs[1..nb - 1].copy_from_slice(&lam[1..nb - 1]);
        }
        _ => coeffs.copy_from_slice(&lam),
    }
    DiscreteSolution::new(space, coeffs)
}

/// `J•` onto the hyper-singular space.
pub fn scott_zhang_hyper(geo: &ElementGeometry, space: Arc<DiscreteSpace>, v: &dyn Density) -> Result<DiscreteSolution> {
    if space.kind() != SpaceKind::HyperNurbs {
        return Err(Error::Argument("J needs the hyper-singular space".into()));
    }
    scott_zhang(geo, &DualBasis::new(space)?, v)
}

/// `I•` onto the weakly-singular space.
pub fn scott_zhang_weak(geo: &ElementGeometry, space: Arc<DiscreteSpace>, v: &dyn Density) -> Result<DiscreteSolution> {
    if space.kind() != SpaceKind::WeakNurbs {
        return Err(Error::Argument("I needs the weakly-singular space".into()));
    }
    scott_zhang(geo, &DualBasis::new(space)?, v)
}

/// Scott–Zhang approximation of Dirichlet data by continuous piecewise
/// polynomials of the mesh degree.
pub fn sz_data_weak(geo: &ElementGeometry, u: &dyn Density) -> Result<DiscreteSolution> {
    let space = Arc::new(DiscreteSpace::new(
        geo.mesh(),
        geo.curve().clone(),
        SpaceKind::PwPolyContinuous,
        None,
    )?);
    scott_zhang(geo, &DualBasis::new(space)?, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundaryCurve, GeometryKind};
    use crate::mesh::{InitialMesh, KnotMesh, Mode};
    use crate::operators::FnDensity;
    use proptest::prelude::*;

    fn curve() -> Arc<BoundaryCurve> {
        Arc::new(BoundaryCurve::new(GeometryKind::Pacman, 1.0).unwrap())
    }

    fn mesh(p: usize, mode: Mode, picks: &[f64]) -> KnotMesh {
        let mut m = KnotMesh::initial(Arc::new(InitialMesh::uniform_six(p, mode).unwrap()));
        for s in picks {
            let n = m.n_nodes();
            let z = ((s * n as f64) as usize).min(n - 1);
            m = m.refine(&[z]).unwrap();
        }
        m
    }

    fn kind_for(mode: Mode) -> SpaceKind {
        match mode {
            Mode::Hyper => SpaceKind::HyperNurbs,
            Mode::Weak => SpaceKind::WeakNurbs,
        }
    }

    fn weights(n: usize, seed: f64, hyper: bool) -> Vec<f64> {
        let mut w: Vec<f64> = (0..n).map(|k| 1.0 + 0.3 * ((k as f64 + seed) * 1.7).sin()).collect();
        if hyper {
            w[n - 1] = w[0];
        }
        w
    }

    /// `∫ R̂*_i (R_j ∘ γ) dt` by direct element quadrature over `E_i`.
    fn pairing(dual: &DualBasis, i: usize, j: usize) -> f64 {
        let s = dual.space();
        let e = dual.element(i);
        let hh = s.mesh().h_hat(e);
        let mut lb = LocalBasis::default();
        let mut out = 0.0;
        for (x, c, w) in crate::quadrature::gauss_legendre(12).unwrap().iter() {
            s.eval_local(e, x, c, &mut lb);
            let first = s.first_bspline(e);
            for r in 0..lb.len {
                if first + r == j {
                    out += hh * w * dual.eval_dual(i, x, c) * lb.vals[r];
                }
            }
        }
        out
    }

    fn check_biorthogonal(dual: &DualBasis, tol: f64) {
        let nb = dual.space().n_bsplines();
        for i in 0..nb {
            for j in 0..nb {
                let d = if i == j { 1.0 } else { 0.0 };
                let v = pairing(dual, i, j);
                assert!((v - d).abs() < tol, "({i},{j}) -> {v}");
            }
        }
    }

    #[test]
    fn p0_dual_is_normalized_indicator() {
        let m = mesh(0, Mode::Weak, &[0.1, 0.5, 0.52]);
        let s = Arc::new(DiscreteSpace::new(&m, curve(), SpaceKind::WeakNurbs, None).unwrap());
        let d = DualBasis::new(s).unwrap();
        for i in 0..m.n_elements() {
            assert_eq!(d.element(i), i);
            let v = d.eval_dual(i, 0.3, 0.7);
            assert!((v * m.h_hat(i) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_scaling_cancels() {
        let m = mesh(2, Mode::Weak, &[0.3, 0.31, 0.9]);
        let w0 = weights(8, 0.4, false);
        let w1: Vec<f64> = w0.iter().map(|w| 2.0 * w).collect();
        let a = DualBasis::new(Arc::new(DiscreteSpace::new(&m, curve(), SpaceKind::WeakNurbs, Some(&w0)).unwrap())).unwrap();
        let b = DualBasis::new(Arc::new(DiscreteSpace::new(&m, curve(), SpaceKind::WeakNurbs, Some(&w1)).unwrap())).unwrap();
        for i in 0..a.space().n_bsplines() {
            for (x, c) in [(0.2, 0.8), (0.65, 0.35)] {
                assert!((a.eval_dual(i, x, c) - b.eval_dual(i, x, c)).abs() < 1e-12);
            }
        }
        check_biorthogonal(&b, 1e-10);
    }

    #[test]
    fn l2_projection_reproduces_and_is_orthogonal() {
        let m = mesh(2, Mode::Hyper, &[0.2, 0.7]);
        let geo = ElementGeometry::new(&m, curve());
        let space = Arc::new(DiscreteSpace::new(&m, curve(), SpaceKind::PwPolyDiscontinuous, None).unwrap());
        let coeffs: Vec<f64> = (0..space.dim()).map(|k| (k as f64 * 0.77).cos()).collect();
        let f = DiscreteSolution::new(space.clone(), coeffs.clone()).unwrap();
        let pf = l2_project_pw(&geo, &f).unwrap();
        for (a, b) in pf.coeffs.iter().zip(&coeffs) {
            assert!((a - b).abs() < 1e-12);
        }
        // orthogonality of the error against every basis function
        let g = FnDensity(|q: &crate::quadrature::QNode| (3.0 * q.x[0]).sin() + q.x[1] * q.x[1], false);
        let pg = l2_project_pw(&geo, &g).unwrap();
        let mut lb = LocalBasis::default();
        let mut res = vec![0.0; space.dim()];
        for e in 0..geo.n_elements() {
            for q in geo.element_rule(e, 16, false) {
                space.eval_local(e, q.xi, q.xc, &mut lb);
                let err = g.at(&q) - pg.at(&q);
                for k in 0..lb.len {
                    res[lb.dofs[k]] += q.w * err * lb.vals[k];
                }
            }
        }
        assert!(res.iter().all(|r| r.abs() < 1e-11), "{res:?}");
    }

    #[test]
    fn l2_projection_p0_is_elementwise_mean() {
        // the first pacman segment is straight; t ↦ t has mean at the midpoint
        let m = KnotMesh::initial(Arc::new(InitialMesh::uniform_six(0, Mode::Weak).unwrap()));
        let geo = ElementGeometry::new(&m, curve());
        let f = FnDensity(|q: &crate::quadrature::QNode| q.xi, false);
        let pf = l2_project_pw(&geo, &f).unwrap();
        assert!((pf.coeffs[0] - 0.5).abs() < 1e-14);
        assert!((pf.coeffs[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn constants_are_reproduced() {
        for mode in [Mode::Hyper, Mode::Weak] {
            let m = mesh(2, mode, &[0.4, 0.41, 0.05]);
            let geo = ElementGeometry::new(&m, curve());
            let w0 = weights(8, 1.1, mode == Mode::Hyper);
            let s = Arc::new(DiscreteSpace::new(&m, curve(), kind_for(mode), Some(&w0)).unwrap());
            let one = FnDensity(|_: &crate::quadrature::QNode| 1.0, false);
            let j = scott_zhang(&geo, &DualBasis::new(s).unwrap(), &one).unwrap();
            assert!(j.coeffs.iter().all(|c| (c - 1.0).abs() < 1e-12), "{:?}", j.coeffs);
            let u = sz_data_weak(&geo, &one).unwrap();
            assert!(u.coeffs.iter().all(|c| (c - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn continuous_data_is_reproduced_and_continuous() {
        let m = mesh(2, Mode::Weak, &[0.6, 0.61]);
        let geo = ElementGeometry::new(&m, curve());
        let s = Arc::new(DiscreteSpace::new(&m, curve(), SpaceKind::PwPolyContinuous, None).unwrap());
        let coeffs: Vec<f64> = (0..s.dim()).map(|k| (k as f64 * 1.3).sin()).collect();
        let f = DiscreteSolution::new(s, coeffs.clone()).unwrap();
        let u = sz_data_weak(&geo, &f).unwrap();
        for (a, b) in u.coeffs.iter().zip(&coeffs) {
            assert!((a - b).abs() < 1e-10);
        }
        // a smooth non-member still gives a continuous result
        let g = FnDensity(|q: &crate::quadrature::QNode| (4.0 * q.x[0]).sin(), false);
        let ug = sz_data_weak(&geo, &g).unwrap();
        for e in 0..m.n_elements() {
            let a = ug.eval_local(e, 1.0, 0.0).0;
            let b = ug.eval_local((e + 1) % m.n_elements(), 0.0, 1.0).0;
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn locality_of_support() {
        let m = mesh(2, Mode::Hyper, &[0.3, 0.8, 0.81]);
        let geo = ElementGeometry::new(&m, curve());
        let s = Arc::new(DiscreteSpace::new(&m, curve(), SpaceKind::HyperNurbs, None).unwrap());
        let dual = DualBasis::new(s).unwrap();
        let q = 4;
        let patch = m.patch_of_elements(&[q], 2);
        let bump = |e: usize| !patch.contains(&e);
        let v = FnDensity(move |x: &crate::quadrature::QNode| if bump(x.elem) { 1.0 + x.xi } else { 0.0 }, false);
        let j = scott_zhang(&geo, &dual, &v).unwrap();
        for k in 0..9 {
            let xi = k as f64 / 8.0;
            assert!(j.eval_local(q, xi, 1.0 - xi).0.abs() < 1e-14);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn biorthogonal_on_fuzzed_meshes(
            p in 0usize..=3,
            weak in proptest::bool::ANY,
            picks in proptest::collection::vec(0.0f64..1.0, 0..12),
            seed in 0.0f64..3.0,
        ) {
            let mode = if weak || p == 0 { Mode::Weak } else { Mode::Hyper };
            let m = mesh(p, mode, &picks);
            let n0 = 6 + p;
            let w0 = weights(n0, seed, mode == Mode::Hyper);
            let s = Arc::new(DiscreteSpace::new(&m, curve(), kind_for(mode), Some(&w0)).unwrap());
            let dual = DualBasis::new(s).unwrap();
            check_biorthogonal(&dual, 1e-10);
        }

        #[test]
        fn local_projection_property(
            p in 1usize..=3,
            weak in proptest::bool::ANY,
            picks in proptest::collection::vec(0.0f64..1.0, 0..10),
            q in 0usize..64,
            seed in 0.0f64..3.0,
        ) {
            let mode = if weak { Mode::Weak } else { Mode::Hyper };
            let m = mesh(p, mode, &picks);
            let q = q % m.n_elements();
            let geo = ElementGeometry::new(&m, curve());
            let w0 = weights(6 + p, seed, mode == Mode::Hyper);
            let s = Arc::new(DiscreteSpace::new(&m, curve(), kind_for(mode), Some(&w0)).unwrap());
            let coeffs: Vec<f64> = (0..s.dim()).map(|k| ((k as f64 + seed) * 2.3).sin()).collect();
            let member = DiscreteSolution::new(s.clone(), coeffs).unwrap();
            let patch = m.patch_of_elements(&[q], p);
            let v = FnDensity(
                |x: &crate::quadrature::QNode| {
                    let base = member.at(x);
                    if patch.contains(&x.elem) { base } else { base + 5.0 * (7.0 * x.x[0]).cos() }
                },
                false,
            );
            let j = scott_zhang(&geo, &DualBasis::new(s).unwrap(), &v).unwrap();
            for k in 0..7 {
                let xi = k as f64 / 6.0;
                let a = j.eval_local(q, xi, 1.0 - xi).0;
                let b = member.eval_local(q, xi, 1.0 - xi).0;
                prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
            }
        }
    }
}
