//! Node-wise error indicators.
//!
//! Element contributions are computed once; a node `z` collects the two
//! elements of its patch (`z − 1` and `z`), so `α(S)² = Σ_{z∈S} α(z)²`
//! counts every element twice over the whole mesh.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::KnotMesh;
use crate::operators::{
    potentials_at, sample_potential, ArcDerivative, Density, ElementInterpolant, Formulation,
};
use crate::projections::{scott_zhang, DualBasis};
use crate::quadrature::{ElementGeometry, Kernel, QNode, NEAR_ORDER};
use crate::spaces::{DiscreteSolution, DiscreteSpace, SpaceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndicatorKind {
    Eta,
    Res,
    Osc,
    Mu,
}

/// Nonnegative values `α(z)`, one per mesh node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeIndicators {
    pub kind: IndicatorKind,
    pub values: Vec<f64>,
}

impl NodeIndicators {
    /// Indicators from squared element contributions over one-element
    /// patches on each side of every node.
    pub fn from_elements(kind: IndicatorKind, elem_sq: &[f64]) -> Self {
        let n = elem_sq.len();
        let values = (0..n)
            .map(|z| (elem_sq[(z + n - 1) % n] + elem_sq[z]).max(0.0).sqrt())
            .collect();
        Self { kind, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn squared(&self, z: usize) -> f64 {
        self.values[z] * self.values[z]
    }

    /// `α(S)²`.
    pub fn sum_sq(&self, set: &[usize]) -> f64 {
        set.iter().map(|&z| self.squared(z)).sum()
    }

    /// `α(N)`.
    pub fn total(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Weighted-residual estimator split into its parts.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub eta: NodeIndicators,
    pub res: NodeIndicators,
    pub osc: NodeIndicators,
    /// Squared element contributions.
    pub elem_res: Vec<f64>,
    pub elem_osc: Vec<f64>,
}

impl Estimate {
    fn from_elements(elem_res: Vec<f64>, elem_osc: Vec<f64>) -> Self {
        let sum: Vec<f64> = elem_res.iter().zip(&elem_osc).map(|(a, b)| a + b).collect();
        Self {
            eta: NodeIndicators::from_elements(IndicatorKind::Eta, &sum),
            res: NodeIndicators::from_elements(IndicatorKind::Res, &elem_res),
            osc: NodeIndicators::from_elements(IndicatorKind::Osc, &elem_osc),
            elem_res,
            elem_osc,
        }
    }
}

/// Chebyshev samples per element for operator interpolants.
pub fn interpolation_points(p: usize) -> usize {
    p + 4
}

/// Element rule for `L²` norms: Gauss of order `p + 4` (at least what the
/// parametrization needs), graded near the corner for singular integrands.
fn norm_rule(geo: &ElementGeometry, e: usize, p: usize, singular: bool) -> Vec<QNode> {
    let corner = singular
        && geo.corner_grading().is_some()
        && (e == 0 || e + 1 == geo.n_elements());
    if corner {
        geo.element_rule(e, NEAR_ORDER, true)
    } else {
        geo.element_rule(e, (p + 4).max(geo.min_order(e)).min(NEAR_ORDER), false)
    }
}

struct Rules {
    nodes: Vec<QNode>,
    offsets: Vec<usize>,
}

impl Rules {
    fn new(geo: &ElementGeometry, p: usize, singular: bool) -> Self {
        let mut nodes = Vec::new();
        let mut offsets = vec![0];
        for e in 0..geo.n_elements() {
            nodes.extend(norm_rule(geo, e, p, singular));
            offsets.push(nodes.len());
        }
        Self { nodes, offsets }
    }

    /// `h_e^{power} ∫_e f² ds` for every element, with `f` given at the nodes.
    fn weighted_sq(&self, geo: &ElementGeometry, f: &[f64], power: i32) -> Vec<f64> {
        (0..geo.n_elements())
            .map(|e| {
                let r = self.offsets[e]..self.offsets[e + 1];
                let s: f64 = self.nodes[r.clone()].iter().zip(&f[r]).map(|(q, v)| q.w * v * v).sum();
                geo.length(e).powi(power) * s
            })
            .collect()
    }
}

fn check_solution(geo: &ElementGeometry, sol: &DiscreteSolution) -> Result<()> {
    if sol.space.mesh().nodes() != geo.mesh().nodes() {
        return Err(Error::Argument("solution and geometry use different meshes".into()));
    }
    Ok(())
}

/// `res(z)² = ‖h^{1/2}(g − W U)‖²` and `osc(z)² = ‖h^{1/2}(φ − φ_h)‖²` over
/// the patch of `z`, with `g = (1/2 − K′)φ_h` (direct) or `φ_h` (indirect).
pub fn compute_eta_hyper(
    geo: &ElementGeometry,
    u: &DiscreteSolution,
    phi: &dyn Density,
    phi_h: &DiscreteSolution,
    formulation: Formulation,
) -> Result<Estimate> {
    if !formulation.is_hyper() {
        return Err(Error::Argument("not a hyper-singular formulation".into()));
    }
    check_solution(geo, u)?;
    check_solution(geo, phi_h)?;
    let p = u.space.degree();
    let wu = sample_potential(geo, interpolation_points(p), Kernel::Log, &ArcDerivative(u))?;
    let rules = Rules::new(geo, p, false);
    let kphi = match formulation {
        Formulation::HyperDirect => potentials_at(geo, &rules.nodes, Kernel::NormalX, phi_h),
        _ => vec![0.0; rules.nodes.len()],
    };
    let scale = if formulation.is_direct() { 0.5 } else { 1.0 };
    let resid: Vec<f64> = rules
        .nodes
        .par_iter()
        .zip(&kphi)
        .map(|(q, k)| scale * phi_h.at(q) - k + wu.arc_derivative(q))
        .collect();
    let elem_res = rules.weighted_sq(geo, &resid, 1);

    let orules = Rules::new(geo, p, phi.singular());
    let diff: Vec<f64> = orules.nodes.par_iter().map(|q| phi.at(q) - phi_h.at(q)).collect();
    let elem_osc = orules.weighted_sq(geo, &diff, 1);
    Ok(Estimate::from_elements(elem_res, elem_osc))
}

/// Dirichlet data of the weakly-singular equation.
pub struct WeakData<'a> {
    /// `u` on the curve.
    pub u: &'a dyn Density,
    /// `∂_Γ u`.
    pub du: &'a dyn Density,
    /// Approximation `u_h` used on the right-hand side, `None` for `u` itself.
    pub u_h: Option<&'a DiscreteSolution>,
}

/// `res(z)² = ‖h^{1/2} ∂_Γ(g − V Φ)‖²` and `osc(z)² = ‖h^{1/2} ∂_Γ(u − u_h)‖²`
/// with `g = (1/2 + K)u_h` (direct) or `u_h` (indirect).
pub fn compute_eta_weak(
    geo: &ElementGeometry,
    phi: &DiscreteSolution,
    data: &WeakData,
    formulation: Formulation,
) -> Result<Estimate> {
    if formulation.is_hyper() {
        return Err(Error::Argument("not a weakly-singular formulation".into()));
    }
    check_solution(geo, phi)?;
    let p = phi.space.degree();
    let q = interpolation_points(p);
    let (g, dg, singular): (&dyn Density, Box<dyn Density + '_>, bool) = match data.u_h {
        Some(uh) => {
            check_solution(geo, uh)?;
            (uh, Box::new(ArcDerivative(uh)), false)
        }
        None => (data.u, Box::new(Forward(data.du)), data.u.singular()),
    };
    let vphi = sample_potential(geo, q, Kernel::Log, phi)?;
    let interp = if formulation.is_direct() {
        let ku = sample_potential(geo, q, Kernel::NormalY, g)?;
        let vals = ku.samples().iter().zip(vphi.samples()).map(|(a, b)| a - b).collect();
        ElementInterpolant::new(geo, q, vals)?
    } else {
        let vals = vphi.samples().iter().map(|b| -b).collect();
        ElementInterpolant::new(geo, q, vals)?
    };
    let scale = if formulation.is_direct() { 0.5 } else { 1.0 };
    let rules = Rules::new(geo, p, singular);
    let resid: Vec<f64> = rules
        .nodes
        .par_iter()
        .map(|x| scale * dg.at(x) + interp.arc_derivative(x))
        .collect();
    let elem_res = rules.weighted_sq(geo, &resid, 1);
    let elem_osc = match data.u_h {
        Some(uh) => {
            let orules = Rules::new(geo, p, data.du.singular());
            let d = ArcDerivative(uh);
            let diff: Vec<f64> = orules.nodes.par_iter().map(|x| data.du.at(x) - d.at(x)).collect();
            orules.weighted_sq(geo, &diff, 1)
        }
        None => vec![0.0; geo.n_elements()],
    };
    Ok(Estimate::from_elements(elem_res, elem_osc))
}

struct Forward<'a>(&'a dyn Density);

impl Density for Forward<'_> {
    fn at(&self, q: &QNode) -> f64 {
        self.0.at(q)
    }

    fn singular(&self) -> bool {
        self.0.singular()
    }
}

/// The space `X_{•⊖1}` (or `Y_{•⊖1}`) of a solution's space.
pub fn ominus_space(space: &DiscreteSpace) -> Result<DiscreteSpace> {
    DiscreteSpace::new(
        &space.mesh().ominus_one(),
        space.curve().clone(),
        space.kind(),
        Some(space.initial_weights()),
    )
}

/// `μ(z) = ‖h^{∓1/2}(1 − J_{•⊖1})U‖_{L²(π^{2p+1}(z))}`: weight `h^{−1}` for the
/// hyper-singular space, `h^{+1}` for the weakly-singular one.
pub fn compute_mu(geo: &ElementGeometry, sol: &DiscreteSolution) -> Result<NodeIndicators> {
    check_solution(geo, sol)?;
    let space = &sol.space;
    let power = match space.kind() {
        SpaceKind::HyperNurbs => -1,
        SpaceKind::WeakNurbs => 1,
        _ => return Err(Error::Argument("μ is defined for the NURBS spaces".into())),
    };
    let n = geo.n_elements();
    let mesh = space.mesh();
    if mesh.coarsenable_nodes().is_empty() {
        return Ok(NodeIndicators {
            kind: IndicatorKind::Mu,
            values: vec![0.0; n],
        });
    }
    let minus = Arc::new(ominus_space(space)?);
    let dual = DualBasis::new(minus)?;
    let j = scott_zhang(geo, &dual, sol)?;
    let p = space.degree();
    let rules = Rules::new(geo, p, false);
    let diff: Vec<f64> = rules.nodes.par_iter().map(|x| sol.at(x) - j.at(x)).collect();
    let elem = rules.weighted_sq(geo, &diff, power);
    Ok(NodeIndicators {
        kind: IndicatorKind::Mu,
        values: patch_sums(&elem, 2 * p + 1).into_iter().map(|v| v.max(0.0).sqrt()).collect(),
    })
}

/// `Σ_{e ∈ π^m(z)} a_e` for every node `z`: elements `z − m ..= z + m − 1`.
fn patch_sums(a: &[f64], m: usize) -> Vec<f64> {
    let n = a.len();
    if 2 * m >= n {
        let s: f64 = a.iter().sum();
        return vec![s; n];
    }
    (0..n)
        .map(|z| (0..2 * m).map(|k| a[(z + n + k - m) % n]).sum())
        .collect()
}

/// Debug dump `t,res,osc,eta,mu` per node.
pub fn indicator_csv(mesh: &KnotMesh, est: &Estimate, mu: &NodeIndicators) -> String {
    let mut out = String::from("t,multiplicity,res,osc,eta,mu\n");
    for z in 0..mesh.n_nodes() {
        let _ = writeln!(
            out,
            "{},{},{:e},{:e},{:e},{:e}",
            mesh.node_t(z),
            mesh.multiplicity(z),
            est.res.values[z],
            est.osc.values[z],
            est.eta.values[z],
            mu.values[z]
        );
    }
    out
}
