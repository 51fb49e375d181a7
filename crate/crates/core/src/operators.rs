//! Galerkin matrices, right-hand sides and pointwise evaluation of the
//! boundary integral operators of the 2D Laplacian with
//! `G(x, y) = −(1/2π) log|x − y|`.
//!
//! `W` is only ever realized through `⟨W u, v⟩ = ⟨V ∂_Γ u, ∂_Γ v⟩`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::ExactSolution;
use crate::quadrature::{chebyshev_points, Block, ElementGeometry, Kernel, Nodes, QNode, LADDER};
use crate::spaces::{DiscreteSolution, DiscreteSpace, LocalBasis, SpaceKind};
use crate::splines::MAX_DEGREE;

const INV_2PI: f64 = 0.5 / PI;
const ROW_CHUNK: usize = 64;

/// The four boundary integral formulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Formulation {
    /// `W u = (1/2 − K′) φ`
    HyperDirect,
    /// `W u = φ`
    HyperIndirect,
    /// `V φ = (1/2 + K) u`
    WeakDirect,
    /// `V φ = u`
    WeakIndirect,
}

impl Formulation {
    pub fn is_hyper(self) -> bool {
        matches!(self, Self::HyperDirect | Self::HyperIndirect)
    }

    pub fn is_direct(self) -> bool {
        matches!(self, Self::HyperDirect | Self::WeakDirect)
    }
}

/// A scalar function on the curve, evaluated at quadrature nodes.
pub trait Density: Sync {
    fn at(&self, q: &QNode) -> f64;

    /// Whether the function behaves like `ρ^τ` (or `ρ^{τ−1}`) at the corner
    /// and needs graded quadrature there.
    fn singular(&self) -> bool {
        false
    }
}

impl Density for DiscreteSolution {
    fn at(&self, q: &QNode) -> f64 {
        self.eval_local(q.elem, q.xi, q.xc).0
    }
}

/// `∂_Γ` of a discrete function.
pub struct ArcDerivative<'a>(pub &'a DiscreteSolution);

impl Density for ArcDerivative<'_> {
    fn at(&self, q: &QNode) -> f64 {
        self.0.eval_local(q.elem, q.xi, q.xc).1 / q.speed
    }
}

/// Dirichlet trace `u = P|_Γ` of a model solution.
pub struct DirichletTrace(pub ExactSolution);

impl Density for DirichletTrace {
    fn at(&self, q: &QNode) -> f64 {
        self.0.potential(q.x)
    }

    fn singular(&self) -> bool {
        true
    }
}

/// Neumann trace `φ = ∂P/∂ν` of a model solution (zero at the corner).
pub struct NeumannTrace(pub ExactSolution);

impl Density for NeumannTrace {
    fn at(&self, q: &QNode) -> f64 {
        self.0.data(q.x, q.nrm).phi.unwrap_or(0.0)
    }

    fn singular(&self) -> bool {
        true
    }
}

/// Arclength derivative of the Dirichlet trace.
pub struct DirichletArcDerivative(pub ExactSolution);

impl Density for DirichletArcDerivative {
    fn at(&self, q: &QNode) -> f64 {
        match self.0.gradient(q.x) {
            Some(g) => g[0] * (-q.nrm[1]) + g[1] * q.nrm[0],
            None => 0.0,
        }
    }

    fn singular(&self) -> bool {
        true
    }
}

/// Closure adaptor.
pub struct FnDensity<F: Fn(&QNode) -> f64 + Sync>(pub F, pub bool);

impl<F: Fn(&QNode) -> f64 + Sync> Density for FnDensity<F> {
    fn at(&self, q: &QNode) -> f64 {
        (self.0)(q)
    }

    fn singular(&self) -> bool {
        self.1
    }
}

/// Values of a density at all cached ladder nodes.
struct DensityTable {
    per: usize,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl DensityTable {
    fn new(geo: &ElementGeometry, d: &dyn Density) -> Self {
        let mut offsets = vec![0];
        for n in LADDER {
            offsets.push(offsets.last().unwrap() + n);
        }
        let per = *offsets.last().unwrap();
        let values = (0..geo.n_elements())
            .into_par_iter()
            .flat_map_iter(|e| {
                (0..LADDER.len())
                    .flat_map(move |k| geo.ladder_nodes(e, k).iter().map(|q| d.at(q)))
                    .collect::<Vec<_>>()
            })
            .collect();
        Self { per, offsets, values }
    }

    fn get(&self, e: usize, k: usize) -> &[f64] {
        let base = e * self.per;
        &self.values[base + self.offsets[k]..base + self.offsets[k + 1]]
    }

    fn values(&self, nodes: &Nodes, d: &dyn Density) -> Vec<f64> {
        match nodes.ladder {
            Some((e, k)) => self.get(e, k).to_vec(),
            None => nodes.nodes.iter().map(|q| d.at(q)).collect(),
        }
    }
}

/// Basis values (or arclength derivatives) at the ladder nodes of every
/// element, plus the element dofs.
struct BasisTable<'a> {
    space: &'a DiscreteSpace,
    deriv: bool,
    np: usize,
    dofs: Vec<[usize; MAX_DEGREE + 1]>,
    per: usize,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl<'a> BasisTable<'a> {
    fn new(geo: &ElementGeometry, space: &'a DiscreteSpace, deriv: bool) -> Self {
        let np = space.degree() + 1;
        let mut offsets = vec![0];
        for n in LADDER {
            offsets.push(offsets.last().unwrap() + n * np);
        }
        let per = *offsets.last().unwrap();
        let n_el = geo.n_elements();
        let mut dofs = vec![[0; MAX_DEGREE + 1]; n_el];
        let mut lb = LocalBasis::default();
        for (e, d) in dofs.iter_mut().enumerate() {
            space.eval_local(e, 0.5, 0.5, &mut lb);
            *d = lb.dofs;
        }
        let mut t = Self {
            space,
            deriv,
            np,
            dofs,
            per,
            offsets,
            values: Vec::new(),
        };
        let values: Vec<f64> = (0..n_el)
            .into_par_iter()
            .flat_map_iter(|e| {
                let mut out = Vec::with_capacity(per);
                for k in 0..LADDER.len() {
                    for q in geo.ladder_nodes(e, k) {
                        out.extend_from_slice(&t.eval(q)[..np]);
                    }
                }
                out
            })
            .collect();
        t.values = values;
        t
    }

    fn eval(&self, q: &QNode) -> [f64; MAX_DEGREE + 1] {
        let mut lb = LocalBasis::default();
        self.space.eval_local(q.elem, q.xi, q.xc, &mut lb);
        if self.deriv {
            let mut d = lb.ders;
            for v in d.iter_mut().take(self.np) {
                *v /= q.speed;
            }
            d
        } else {
            lb.vals
        }
    }

    /// Row-major `nodes.len() × np` matrix of basis values.
    fn matrix(&self, nodes: &Nodes) -> Vec<f64> {
        match nodes.ladder {
            Some((e, k)) => {
                let base = e * self.per;
                self.values[base + self.offsets[k]..base + self.offsets[k + 1]].to_vec()
            }
            None => {
                let mut out = Vec::with_capacity(nodes.nodes.len() * self.np);
                for q in nodes.nodes {
                    out.extend_from_slice(&self.eval(q)[..self.np]);
                }
                out
            }
        }
    }
}

/// `Σ w f_a ⊗ f_b` for one block, added to the `np × np` row-major `local`.
fn accumulate_block(blk: Block, ta: &BasisTable, tb: &BasisTable, local: &mut [f64]) {
    let np = ta.np;
    match blk {
        Block::Tensor { xs, ys, w } => {
            let fa = ta.matrix(&xs);
            let fb = tb.matrix(&ys);
            let ny = ys.nodes.len();
            let mut tmp = vec![0.0; np];
            for i in 0..xs.nodes.len() {
                tmp.iter_mut().for_each(|v| *v = 0.0);
                let row = &w[i * ny..(i + 1) * ny];
                for (j, wij) in row.iter().enumerate() {
                    for k in 0..np {
                        tmp[k] += wij * fb[j * np + k];
                    }
                }
                for ka in 0..np {
                    let f = fa[i * np + ka];
                    for kb in 0..np {
                        local[ka * np + kb] += f * tmp[kb];
                    }
                }
            }
        }
        Block::Zip { xs, ys, w } => {
            for k in 0..w.len() {
                let fa = ta.eval(&xs[k]);
                let fb = tb.eval(&ys[k]);
                for ka in 0..np {
                    let f = w[k] * fa[ka];
                    for kb in 0..np {
                        local[ka * np + kb] += f * fb[kb];
                    }
                }
            }
        }
    }
}

fn check_space(geo: &ElementGeometry, space: &DiscreteSpace) -> Result<()> {
    if space.mesh() != geo.mesh() || !Arc::ptr_eq(space.curve(), geo.curve()) && **space.curve() != **geo.curve() {
        return Err(Error::Argument("space and geometry live on different meshes or curves".into()));
    }
    Ok(())
}

/// `M_ij = ∬ log|x − y| f_j(y) f_i(x)` for the basis (or its arclength
/// derivative).
fn log_matrix(geo: &ElementGeometry, space: &DiscreteSpace, deriv: bool) -> DMatrix<f64> {
    let table = BasisTable::new(geo, space, deriv);
    let n = geo.n_elements();
    let np = table.np;
    let dim = space.dim();
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for chunk in (0..n).step_by(ROW_CHUNK) {
        let rows: Vec<Vec<f64>> = (chunk..(chunk + ROW_CHUNK).min(n))
            .into_par_iter()
            .map(|a| {
                let mut out = vec![0.0; (n - a) * np * np];
                for b in a..n {
                    let local = &mut out[(b - a) * np * np..(b - a + 1) * np * np];
                    geo.integrate_elements(a, b, Kernel::Log, false, &mut |blk| {
                        accumulate_block(blk, &table, &table, local)
                    });
                }
                out
            })
            .collect();
        for (r, a) in rows.iter().zip(chunk..) {
            for b in a..n {
                let local = &r[(b - a) * np * np..(b - a + 1) * np * np];
                for ka in 0..np {
                    for kb in 0..np {
                        let v = local[ka * np + kb];
                        let (i, j) = (table.dofs[a][ka], table.dofs[b][kb]);
                        m[(i, j)] += v;
                        if a != b {
                            m[(j, i)] += v;
                        }
                    }
                }
            }
        }
    }
    let mt = m.transpose();
    (m + mt) * 0.5
}

/// Galerkin matrix `⟨V b_j, b_i⟩` of the single-layer operator.
pub fn assemble_v(geo: &ElementGeometry, space: &DiscreteSpace) -> Result<DMatrix<f64>> {
    check_space(geo, space)?;
    Ok(log_matrix(geo, space, false) * (-INV_2PI))
}

/// `∫_Γ b_i ds` for every basis function.
pub fn basis_integrals(geo: &ElementGeometry, space: &DiscreteSpace) -> Vec<f64> {
    load_vector(geo, space, &FnDensity(|_| 1.0, false))
}

/// `⟨⟨R_j, R_i⟩⟩ = ⟨V ∂_Γ R_j, ∂_Γ R_i⟩ + (∫ R_j)(∫ R_i)`.
pub fn assemble_w_stabilized(geo: &ElementGeometry, space: &DiscreteSpace) -> Result<DMatrix<f64>> {
    check_space(geo, space)?;
    if space.degree() == 0 {
        return Err(Error::UnsupportedDegree("the hyper-singular form needs p >= 1".into()));
    }
    if space.kind() != SpaceKind::HyperNurbs {
        return Err(Error::Argument("the stabilized form is defined on the hyper-singular space".into()));
    }
    let mut a = log_matrix(geo, space, true) * (-INV_2PI);
    let s = DVector::from_vec(basis_integrals(geo, space));
    a += &s * s.transpose();
    Ok(a)
}

/// `⟨f, b_i⟩` with element quadrature (graded at the corner for singular
/// densities).
pub fn load_vector(geo: &ElementGeometry, space: &DiscreteSpace, f: &dyn Density) -> Vec<f64> {
    let np = space.degree() + 1;
    let order = (space.degree() + 1 + 8).min(crate::quadrature::NEAR_ORDER);
    let parts: Vec<([usize; MAX_DEGREE + 1], [f64; MAX_DEGREE + 1])> = (0..geo.n_elements())
        .into_par_iter()
        .map(|e| {
            let mut lb = LocalBasis::default();
            let mut loc = [0.0; MAX_DEGREE + 1];
            let n = if f.singular() { crate::quadrature::NEAR_ORDER } else { order };
            for q in geo.element_rule(e, n, f.singular()) {
                space.eval_local(e, q.xi, q.xc, &mut lb);
                let v = q.w * f.at(&q);
                for k in 0..np {
                    loc[k] += v * lb.vals[k];
                }
            }
            (lb.dofs, loc)
        })
        .collect();
    let mut out = vec![0.0; space.dim()];
    for (dofs, loc) in parts {
        for k in 0..np {
            out[dofs[k]] += loc[k];
        }
    }
    out
}

/// `∬ b_i(x) f(y) k(x, y) ds_y ds_x` for every test function.
fn kernel_vector(geo: &ElementGeometry, space: &DiscreteSpace, f: &dyn Density, kernel: Kernel) -> Vec<f64> {
    let table = BasisTable::new(geo, space, false);
    let dens = DensityTable::new(geo, f);
    let n = geo.n_elements();
    let np = table.np;
    let graded = f.singular();
    let parts: Vec<[f64; MAX_DEGREE + 1]> = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut loc = [0.0; MAX_DEGREE + 1];
            for b in 0..n {
                geo.integrate_elements(a, b, kernel, graded, &mut |blk| match blk {
                    Block::Tensor { xs, ys, w } => {
                        let fa = table.matrix(&xs);
                        let gy = dens.values(&ys, f);
                        for i in 0..xs.nodes.len() {
                            let row = &w[i * gy.len()..(i + 1) * gy.len()];
                            let s: f64 = row.iter().zip(&gy).map(|(a, b)| a * b).sum();
                            for k in 0..np {
                                loc[k] += s * fa[i * np + k];
                            }
                        }
                    }
                    Block::Zip { xs, ys, w } => {
                        for k in 0..w.len() {
                            let fa = table.eval(&xs[k]);
                            let v = w[k] * f.at(&ys[k]);
                            for kk in 0..np {
                                loc[kk] += v * fa[kk];
                            }
                        }
                    }
                });
            }
            loc
        })
        .collect();
    let mut out = vec![0.0; space.dim()];
    for (a, loc) in parts.iter().enumerate() {
        for k in 0..np {
            out[table.dofs[a][k]] += loc[k];
        }
    }
    out
}

/// Right-hand side of the hyper-singular equation: `⟨(1/2 − K′)φ_h, R_i⟩`
/// (direct) or `⟨φ_h, R_i⟩` (indirect).
pub fn apply_kprime_rhs(
    geo: &ElementGeometry,
    phi_h: &DiscreteSolution,
    test: &DiscreteSpace,
    formulation: Formulation,
) -> Result<Vec<f64>> {
    check_space(geo, test)?;
    if phi_h.space.kind() != SpaceKind::PwPolyDiscontinuous || phi_h.space.mesh() != geo.mesh() {
        return Err(Error::Argument(
            "hyper-singular data must be a piecewise polynomial on the current mesh".into(),
        ));
    }
    let mass = load_vector(geo, test, phi_h);
    Ok(match formulation {
        Formulation::HyperDirect => {
            let k = kernel_vector(geo, test, phi_h, Kernel::NormalX);
            mass.iter().zip(&k).map(|(m, k)| 0.5 * m + INV_2PI * k).collect()
        }
        Formulation::HyperIndirect => mass,
        _ => return Err(Error::Argument("not a hyper-singular formulation".into())),
    })
}

/// Right-hand side of the weakly-singular equation: `⟨(1/2 + K)u, Ψ_i⟩`
/// (direct) or `⟨u, Ψ_i⟩` (indirect).
pub fn apply_k_rhs(
    geo: &ElementGeometry,
    u: &dyn Density,
    test: &DiscreteSpace,
    formulation: Formulation,
) -> Result<Vec<f64>> {
    check_space(geo, test)?;
    let mass = load_vector(geo, test, u);
    Ok(match formulation {
        Formulation::WeakDirect => {
            let k = kernel_vector(geo, test, u, Kernel::NormalY);
            mass.iter().zip(&k).map(|(m, k)| 0.5 * m + INV_2PI * k).collect()
        }
        Formulation::WeakIndirect => mass,
        _ => return Err(Error::Argument("not a weakly-singular formulation".into())),
    })
}

/// `∫ k(x, y) f(y) ds_y` at a node inside its element.
fn potential(geo: &ElementGeometry, x: &QNode, kernel: Kernel, f: &dyn Density, table: Option<&DensityTable>) -> f64 {
    let mut total = 0.0;
    geo.integrate_point(x, kernel, f.singular(), &mut |ys, w| {
        match (ys.ladder, table) {
            (Some((e, k)), Some(t)) => {
                total += t.get(e, k).iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
            }
            _ => {
                total += ys.nodes.iter().zip(w).map(|(y, w)| w * f.at(y)).sum::<f64>();
            }
        }
    });
    total
}

/// Pointwise single-layer potential `V f(x)`.
pub fn single_layer_at(geo: &ElementGeometry, x: &QNode, f: &dyn Density) -> f64 {
    -INV_2PI * potential(geo, x, Kernel::Log, f, None)
}

/// Pointwise `K′ f(x)`.
pub fn adjoint_double_layer_at(geo: &ElementGeometry, x: &QNode, f: &dyn Density) -> f64 {
    -INV_2PI * potential(geo, x, Kernel::NormalX, f, None)
}

/// Pointwise `K f(x)`.
pub fn double_layer_at(geo: &ElementGeometry, x: &QNode, f: &dyn Density) -> f64 {
    INV_2PI * potential(geo, x, Kernel::NormalY, f, None)
}

/// Operator applications at many nodes, sharing one density table.
pub fn potentials_at(geo: &ElementGeometry, xs: &[QNode], kernel: Kernel, f: &dyn Density) -> Vec<f64> {
    let table = DensityTable::new(geo, f);
    let scale = match kernel {
        Kernel::Log | Kernel::NormalX => -INV_2PI,
        Kernel::NormalY => INV_2PI,
    };
    xs.par_iter()
        .map(|x| scale * potential(geo, x, kernel, f, Some(&table)))
        .collect()
}

/// Per-element polynomial interpolants through `q` Chebyshev points.
#[derive(Debug, Clone)]
pub struct ElementInterpolant {
    q: usize,
    nodes: Vec<(f64, f64)>,
    bary: Vec<f64>,
    values: Vec<f64>,
    dvalues: Vec<f64>,
    h_hat: Vec<f64>,
}

impl ElementInterpolant {
    /// Chebyshev points `(ξ, 1 − ξ)` used for `q` samples.
    pub fn sample_points(q: usize) -> Vec<(f64, f64)> {
        chebyshev_points(q)
    }

    /// `values[e * q + k]` belongs to element `e`, point `k`.
    pub fn new(geo: &ElementGeometry, q: usize, values: Vec<f64>) -> Result<Self> {
        if q < 2 || values.len() != q * geo.n_elements() {
            return Err(Error::Argument("interpolant needs q >= 2 samples per element".into()));
        }
        let nodes = chebyshev_points(q);
        let bary: Vec<f64> = (0..q)
            .map(|k| {
                let th = (2 * k + 1) as f64 * PI / (2 * q) as f64;
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                s * th.sin()
            })
            .collect();
        // differentiation matrix D_ij = (b_j / b_i) / (x_i − x_j)
        let mut d = vec![0.0; q * q];
        for i in 0..q {
            let mut diag = 0.0;
            for j in 0..q {
                if i != j {
                    let v = bary[j] / bary[i] / (nodes[i].0 - nodes[j].0);
                    d[i * q + j] = v;
                    diag -= v;
                }
            }
            d[i * q + i] = diag;
        }
        let mut dvalues = vec![0.0; values.len()];
        for e in 0..geo.n_elements() {
            for i in 0..q {
                dvalues[e * q + i] = (0..q).map(|j| d[i * q + j] * values[e * q + j]).sum();
            }
        }
        Ok(Self {
            q,
            nodes,
            bary,
            values,
            dvalues,
            h_hat: (0..geo.n_elements()).map(|e| geo.h_hat(e)).collect(),
        })
    }

    fn bary_eval(&self, data: &[f64], xi: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..self.q {
            let diff = xi - self.nodes[k].0;
            if diff == 0.0 {
                return data[k];
            }
            let t = self.bary[k] / diff;
            num += t * data[k];
            den += t;
        }
        num / den
    }

    /// Sampled values, `q` per element.
    pub fn samples(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, e: usize, xi: f64) -> f64 {
        self.bary_eval(&self.values[e * self.q..(e + 1) * self.q], xi)
    }

    /// Derivative with respect to arclength at a node.
    pub fn arc_derivative(&self, x: &QNode) -> f64 {
        let e = x.elem;
        let dxi = self.bary_eval(&self.dvalues[e * self.q..(e + 1) * self.q], x.xi);
        dxi / (self.h_hat[e] * x.speed)
    }
}

/// `V f` sampled at `q` Chebyshev points per element.
pub fn sample_potential(geo: &ElementGeometry, q: usize, kernel: Kernel, f: &dyn Density) -> Result<ElementInterpolant> {
    let pts = ElementInterpolant::sample_points(q);
    let xs: Vec<QNode> = (0..geo.n_elements())
        .flat_map(|e| pts.iter().map(move |&(xi, xc)| (e, xi, xc)))
        .map(|(e, xi, xc)| geo.node(e, xi, xc, 0.0))
        .collect();
    ElementInterpolant::new(geo, q, potentials_at(geo, &xs, kernel, f))
}

/// `W U = −∂_Γ V(∂_Γ U)` as an interpolant of `V(∂_Γ U)`; evaluate with
/// `−arc_derivative`.
pub fn eval_w_on_solution(geo: &ElementGeometry, u: &DiscreteSolution, q: usize) -> Result<ElementInterpolant> {
    sample_potential(geo, q, Kernel::Log, &ArcDerivative(u))
}

/// `V Φ` as an interpolant per element.
pub fn eval_v_on_solution(geo: &ElementGeometry, phi: &DiscreteSolution, q: usize) -> Result<ElementInterpolant> {
    sample_potential(geo, q, Kernel::Log, phi)
}

/// Assembled Galerkin system.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub space: Arc<DiscreteSpace>,
    pub formulation: Formulation,
}

impl GalerkinSystem {
    pub fn solve(&self) -> Result<DiscreteSolution> {
        let x = solve_spd(&self.matrix, &self.rhs)?;
        DiscreteSolution::new(self.space.clone(), x.as_slice().to_vec())
    }
}

/// Cholesky solve with up to two steps of iterative refinement.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(Error::Argument("matrix and right-hand side sizes differ".into()));
    }
    let chol = match a.clone().cholesky() {
        Some(c) => c,
        None => return Err(cholesky_failure(a)),
    };
    let mut x = chol.solve(b);
    let bn = b.norm().max(f64::MIN_POSITIVE);
    for _ in 0..2 {
        let r = b - a * &x;
        if r.norm() <= 1e-12 * bn {
            break;
        }
        x += chol.solve(&r);
    }
    Ok(x)
}

fn cholesky_failure(a: &DMatrix<f64>) -> Error {
    let n = a.nrows();
    let mut l = a.clone();
    for j in 0..n {
        let mut d = l[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Error::Conditioning { row: j, pivot: d, dim: n };
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = l[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Error::Conditioning {
        row: n,
        pivot: f64::NAN,
        dim: n,
    }
}

/// Mass matrix `∫ b_i b_j ds` (element quadrature, exact for polynomial
/// bases up to geometry).
pub fn assemble_mass(geo: &ElementGeometry, space: &DiscreteSpace) -> DMatrix<f64> {
    let np = space.degree() + 1;
    let n = (2 * space.degree() + 6).min(crate::quadrature::NEAR_ORDER);
    let mut m = DMatrix::zeros(space.dim(), space.dim());
    let mut lb = LocalBasis::default();
    for e in 0..geo.n_elements() {
        for q in geo.element_rule(e, n, false) {
            space.eval_local(e, q.xi, q.xc, &mut lb);
            for a in 0..np {
                for b in 0..np {
                    m[(lb.dofs[a], lb.dofs[b])] += q.w * lb.vals[a] * lb.vals[b];
                }
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundaryCurve, GeometryKind};
    use crate::mesh::{InitialMesh, KnotMesh, Mode};

    fn setup(kind: GeometryKind, scale: f64, mode: Mode, refinements: usize, p: usize) -> (ElementGeometry, KnotMesh) {
        let init = Arc::new(InitialMesh::uniform_six(p, mode).unwrap());
        let mut m = KnotMesh::initial(init);
        for _ in 0..refinements {
            m = m.refine_uniform().unwrap();
        }
        let curve = Arc::new(BoundaryCurve::new(kind, scale).unwrap());
        (ElementGeometry::new(&m, curve), m)
    }

    #[test]
    fn v_constant_on_circle_and_symmetry() {
        let (geo, m) = setup(GeometryKind::Circle, 0.5, Mode::Weak, 2, 0);
        let s = DiscreteSpace::new(&m, geo.curve().clone(), SpaceKind::PwPolyDiscontinuous, None).unwrap();
        let v = assemble_v(&geo, &s).unwrap();
        let total: f64 = v.iter().sum();
        assert!((total - PI * 2f64.ln() / 2.0).abs() < 1e-8);
        let asym = (&v - v.transpose()).amax();
        assert!(asym <= 1e-12 * v.amax());
    }

    #[test]
    fn w_stabilized_annihilates_constants() {
        let (geo, m) = setup(GeometryKind::Pacman, 1.0, Mode::Hyper, 1, 2);
        let s = DiscreteSpace::new(&m, geo.curve().clone(), SpaceKind::HyperNurbs, None).unwrap();
        let a = assemble_w_stabilized(&geo, &s).unwrap();
        let one = DVector::from_element(s.dim(), 1.0);
        let len: f64 = (0..geo.n_elements()).map(|e| geo.length(e)).sum();
        let val = one.dot(&(&a * &one));
        assert!((val - len * len).abs() < 1e-10 * len * len);
        assert!(a.clone().cholesky().is_some());
        // Galerkin consistency for a member of the space
        let w: Vec<f64> = (0..s.dim()).map(|i| (i as f64).cos()).collect();
        let wv = DVector::from_vec(w.clone());
        let rhs = &a * &wv;
        let x = solve_spd(&a, &rhs).unwrap();
        assert!((x - wv).amax() < 1e-10);
    }

    #[test]
    fn kprime_rhs_compatibility_on_circle() {
        let (geo, m) = setup(GeometryKind::Circle, 1.0, Mode::Hyper, 1, 2);
        let test = DiscreteSpace::new(&m, geo.curve().clone(), SpaceKind::HyperNurbs, None).unwrap();
        let pw = Arc::new(DiscreteSpace::new(&m, geo.curve().clone(), SpaceKind::PwPolyDiscontinuous, None).unwrap());
        let coeffs: Vec<f64> = (0..pw.dim()).map(|i| ((i * 3) % 5) as f64 - 2.0).collect();
        let phi = DiscreteSolution::new(pw.clone(), coeffs).unwrap();
        let b = apply_kprime_rhs(&geo, &phi, &test, Formulation::HyperDirect).unwrap();
        // partition of unity: Σ b = ⟨φ, (1/2 − K)1⟩ = ⟨φ, 1⟩
        let sum: f64 = b.iter().sum();
        let mean: f64 = load_vector(&geo, &pw, &FnDensity(|_| 1.0, false))
            .iter()
            .zip(&phi.coeffs)
            .map(|(a, b)| a * b)
            .sum();
        assert!((sum - mean).abs() < 1e-11, "{sum} {mean}");
        let zero = DiscreteSolution::zeros(pw);
        assert!(apply_kprime_rhs(&geo, &zero, &test, Formulation::HyperDirect)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn k_rhs_of_constant_vanishes() {
        for kind in [GeometryKind::Pacman, GeometryKind::Heart] {
            let (geo, m) = setup(kind, 0.2499, Mode::Weak, 1, 2);
            let test = DiscreteSpace::new(&m, geo.curve().clone(), SpaceKind::WeakNurbs, None).unwrap();
            let b = apply_k_rhs(&geo, &FnDensity(|_| 1.0, true), &test, Formulation::WeakDirect).unwrap();
            assert!(b.iter().all(|v| v.abs() < 1e-11), "{kind:?} {b:?}");
            let ind = apply_k_rhs(&geo, &FnDensity(|_| 1.0, false), &test, Formulation::WeakIndirect).unwrap();
            let ints = basis_integrals(&geo, &test);
            assert!(ind.iter().zip(&ints).all(|(a, b)| (a - b).abs() < 1e-15));
        }
    }

    #[test]
    fn circle_fourier_symbols() {
        let a = 0.5;
        let (geo, m) = setup(GeometryKind::Circle, a, Mode::Hyper, 3, 2);
        let s = Arc::new(DiscreteSpace::new(&m, geo.curve().clone(), SpaceKind::HyperNurbs, None).unwrap());
        // interpolate cos(kθ) crudely through the L² projection
        for k in 1..=3 {
            let f = FnDensity(move |q: &QNode| (k as f64 * q.x[1].atan2(q.x[0])).cos(), false);
            let mass = assemble_mass(&geo, &s);
            let rhs = DVector::from_vec(load_vector(&geo, &s, &f));
            let c = solve_spd(&mass, &rhs).unwrap();
            let u = DiscreteSolution::new(s.clone(), c.as_slice().to_vec()).unwrap();
            let wint = eval_w_on_solution(&geo, &u, 5).unwrap();
            let vint = eval_v_on_solution(&geo, &u, 5).unwrap();
            let x = geo.node(3, 0.41, 0.59, 0.0);
            let th = x.x[1].atan2(x.x[0]);
            let wu = -wint.arc_derivative(&x);
            let expected_w = k as f64 / (2.0 * a) * (k as f64 * th).cos();
            assert!((wu - expected_w).abs() < 1e-2 * (k as f64 / (2.0 * a)), "{k} {wu} {expected_w}");
            let vu = vint.value(3, 0.41);
            let expected_v = a / (2.0 * k as f64) * (k as f64 * th).cos();
            assert!((vu - expected_v).abs() < 1e-3 * a, "{k} {vu} {expected_v}");
        }
    }

    #[test]
    fn cholesky_failure_reports_pivot() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match solve_spd(&a, &DVector::from_vec(vec![1.0, 1.0])) {
            Err(Error::Conditioning { row, .. }) => assert_eq!(row, 1),
            other => panic!("{other:?}"),
        }
        let id = DMatrix::<f64>::identity(3, 3);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(solve_spd(&id, &b).unwrap(), b);
    }
}
