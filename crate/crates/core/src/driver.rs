//! The adaptive loop: solve, estimate, mark, refine and coarsen.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::estimators::{compute_eta_hyper, compute_eta_weak, compute_mu, indicator_csv, NodeIndicators, WeakData};
use crate::geometry::{BoundaryCurve, GeometryKind};
use crate::mesh::{InitialMesh, KnotMesh, Mode};
use crate::operators::{
    apply_k_rhs, apply_kprime_rhs, assemble_v, assemble_w_stabilized, DirichletArcDerivative, DirichletTrace,
    Formulation, GalerkinSystem, NeumannTrace,
};
use crate::projections::{l2_project_pw, sz_data_weak};
use crate::quadrature::ElementGeometry;
use crate::spaces::{DiscreteSolution, DiscreteSpace, SpaceKind};

/// Parameters of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveConfig {
    pub theta: f64,
    pub vartheta: f64,
    pub c_min: f64,
    pub c_mark: f64,
    pub formulation: Formulation,
    pub uniform: bool,
    pub max_dof: usize,
    pub geometry: GeometryKind,
    pub degree: usize,
    /// Mesh-ratio constant; `None` takes the initial mesh's own ratio.
    pub kappa0: Option<f64>,
    /// Allow zero-cost coarsening when `ϑ = 0`.
    pub coarsen_free: bool,
    /// Replace the Dirichlet data of the weakly-singular equation by its
    /// Scott–Zhang approximation.
    pub data_approximation: bool,
    /// Keep a per-node indicator table in every record.
    pub keep_indicators: bool,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            vartheta: 0.1,
            c_min: 1.0,
            c_mark: 1.0,
            formulation: Formulation::HyperDirect,
            uniform: false,
            max_dof: 1000,
            geometry: GeometryKind::Pacman,
            degree: 2,
            kappa0: None,
            coarsen_free: false,
            data_approximation: false,
            keep_indicators: false,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Config(format!("theta = {} must lie in (0, 1]", self.theta)));
        }
        if !(self.vartheta >= 0.0 && self.vartheta.is_finite()) {
            return Err(Error::Config(format!("vartheta = {} must be >= 0", self.vartheta)));
        }
        if !(self.c_min >= 1.0 && self.c_min.is_finite()) {
            return Err(Error::Config(format!("C_min = {} must be >= 1", self.c_min)));
        }
        if !(self.c_mark > 0.0 && self.c_mark.is_finite()) {
            return Err(Error::Config(format!("C_mark = {} must be > 0", self.c_mark)));
        }
        let weak = !self.formulation.is_hyper();
        if self.degree > crate::splines::MAX_DEGREE || (!weak && self.degree == 0) {
            return Err(Error::Config(format!(
                "degree {} not supported for this equation",
                self.degree
            )));
        }
        if self.data_approximation && (!weak || self.degree == 0) {
            return Err(Error::Config(
                "data approximation applies to the weakly-singular equation with p >= 1".into(),
            ));
        }
        Ok(())
    }

    fn mode(&self) -> Mode {
        if self.formulation.is_hyper() {
            Mode::Hyper
        } else {
            Mode::Weak
        }
    }

    fn space_kind(&self) -> SpaceKind {
        if self.formulation.is_hyper() {
            SpaceKind::HyperNurbs
        } else {
            SpaceKind::WeakNurbs
        }
    }
}

/// Outcome of one step `ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub ell: usize,
    /// Number of knots `#N` counted with multiplicity.
    pub knots: usize,
    pub dim: usize,
    pub eta: f64,
    pub res: f64,
    pub osc: f64,
    pub mu: f64,
    /// `|M¹|`.
    pub marked: usize,
    /// `|M⁻|`.
    pub coarsened: usize,
    pub mesh: KnotMesh,
    pub indicators: Option<String>,
}

impl RunRecord {
    /// `t multiplicity` lines of the knot vector.
    pub fn histogram(&self) -> String {
        self.mesh.dump()
    }
}

pub const CSV_HEADER: &str = "ell,knots,dim,eta,res,osc,mu,marked,coarsened";

impl RunRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:e},{:e},{:e},{:e},{},{}",
            self.ell, self.knots, self.dim, self.eta, self.res, self.osc, self.mu, self.marked, self.coarsened
        )
    }
}

/// Whole run as CSV with header.
pub fn records_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

/// Order: larger value first, ties by node index (= parameter) ascending.
fn by_desc(ind: &NodeIndicators) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ind.len()).collect();
    order.sort_by(|&a, &b| match ind.squared(b).partial_cmp(&ind.squared(a)) {
        Some(Ordering::Equal) | None => a.cmp(&b),
        Some(o) => o,
    });
    order
}

/// Minimal set with `θ η² ≤ η(M)²`, returned in selection order. `C_min` is
/// accepted for completeness; the greedy set is exactly minimal.
pub fn doerfler_mark(ind: &NodeIndicators, theta: f64, _c_min: f64) -> Vec<usize> {
    let all: Vec<usize> = (0..ind.len()).collect();
    let goal = theta * ind.sum_sq(&all);
    let mut out = Vec::new();
    let mut acc = 0.0;
    for z in by_desc(ind) {
        if acc >= goal || ind.squared(z) == 0.0 {
            break;
        }
        acc += ind.squared(z);
        out.push(z);
    }
    out
}

/// Coarsening marks: smallest `μ` first while `μ(M⁻)² ≤ ϑ η²` and
/// `|M⁻| ≤ C_mark |M¹|`.
pub fn coarsen_mark(
    mu: &NodeIndicators,
    eta_sq: f64,
    vartheta: f64,
    c_mark: f64,
    n_marked: usize,
    eligible: &[usize],
    coarsen_free: bool,
) -> Vec<usize> {
    if vartheta == 0.0 && !coarsen_free {
        return Vec::new();
    }
    let cap = (c_mark * n_marked as f64 + 1e-9).floor() as usize;
    let budget = vartheta * eta_sq;
    let mut order = eligible.to_vec();
    order.sort_by(|&a, &b| match mu.squared(a).partial_cmp(&mu.squared(b)) {
        Some(Ordering::Equal) | None => a.cmp(&b),
        Some(o) => o,
    });
    let mut out = Vec::new();
    let mut acc = 0.0;
    for z in order {
        if out.len() >= cap {
            break;
        }
        let next = acc + mu.squared(z);
        if next > budget {
            break;
        }
        acc = next;
        out.push(z);
    }
    out
}

/// `M² = {z : π(z) ∩ M⁻ ≠ ∅}`: the coarsened nodes and their neighbors.
pub fn neighbor_marks(n: usize, coarsened: &[usize]) -> Vec<usize> {
    let mut m = vec![false; n];
    for &z in coarsened {
        m[(z + n - 1) % n] = true;
        m[z] = true;
        m[(z + 1) % n] = true;
    }
    (0..n).filter(|&z| m[z]).collect()
}

/// `coarsen(refine(K, M¹ ∪ M²), M⁻)`.
pub fn refine_and_coarsen(mesh: &KnotMesh, marked: &[usize], coarsened: &[usize]) -> Result<KnotMesh> {
    let mut all: Vec<usize> = marked.to_vec();
    all.extend(neighbor_marks(mesh.n_nodes(), coarsened));
    all.sort_unstable();
    all.dedup();
    let refined = mesh.refine(&all)?;
    let moved: Vec<usize> = coarsened
        .iter()
        .map(|&z| {
            refined
                .find_node(mesh.node(z))
                .ok_or_else(|| Error::Invariant("coarsened node vanished during refinement".into()))
        })
        .collect::<Result<_>>()?;
    refined.coarsen_multiplicity(&moved)
}

/// State of the loop after a solve.
pub struct Step {
    pub mesh: KnotMesh,
    pub geometry: ElementGeometry,
    pub solution: DiscreteSolution,
}

/// Adaptive (or uniform) run of an experiment.
pub struct Driver {
    config: AdaptiveConfig,
    curve: Arc<BoundaryCurve>,
    init: Arc<InitialMesh>,
}

impl Driver {
    pub fn new(config: AdaptiveConfig) -> Result<Self> {
        config.validate()?;
        let weak = !config.formulation.is_hyper();
        let curve = Arc::new(BoundaryCurve::for_mode(config.geometry, weak)?);
        let breaks = curve.breaks().to_vec();
        let interior = vec![1; breaks.len() - 2];
        let init = Arc::new(InitialMesh::new(breaks, interior, config.degree, config.mode(), config.kappa0)?);
        Ok(Self { config, curve, init })
    }

    pub fn config(&self) -> &AdaptiveConfig {
        &self.config
    }

    pub fn curve(&self) -> &Arc<BoundaryCurve> {
        &self.curve
    }

    pub fn initial_mesh(&self) -> KnotMesh {
        KnotMesh::initial(self.init.clone())
    }

    fn space(&self, mesh: &KnotMesh) -> Result<Arc<DiscreteSpace>> {
        Ok(Arc::new(DiscreteSpace::new(mesh, self.curve.clone(), self.config.space_kind(), None)?))
    }

    /// Assembles and solves on `mesh`.
    pub fn solve(&self, mesh: &KnotMesh) -> Result<Step> {
        let geo = ElementGeometry::new(mesh, self.curve.clone());
        let space = self.space(mesh)?;
        let exact = self.curve.exact_solution();
        let f = self.config.formulation;
        let (matrix, rhs) = if f.is_hyper() {
            let phi_h = l2_project_pw(&geo, &NeumannTrace(exact))?;
            (assemble_w_stabilized(&geo, &space)?, apply_kprime_rhs(&geo, &phi_h, &space, f)?)
        } else {
            let rhs = if self.config.data_approximation {
                let uh = sz_data_weak(&geo, &DirichletTrace(exact))?;
                apply_k_rhs(&geo, &uh, &space, f)?
            } else {
                apply_k_rhs(&geo, &DirichletTrace(exact), &space, f)?
            };
            (assemble_v(&geo, &space)?, rhs)
        };
        let system = GalerkinSystem {
            matrix,
            rhs: DVector::from_vec(rhs),
            space,
            formulation: f,
        };
        let solution = system.solve()?;
        Ok(Step {
            mesh: mesh.clone(),
            geometry: geo,
            solution,
        })
    }

    /// Estimates, marks and produces the record and the next mesh.
    pub fn adapt(&self, ell: usize, step: &Step) -> Result<(RunRecord, KnotMesh)> {
        let geo = &step.geometry;
        let exact = self.curve.exact_solution();
        let f = self.config.formulation;
        let est = if f.is_hyper() {
            let phi = NeumannTrace(exact);
            let phi_h = l2_project_pw(geo, &phi)?;
            compute_eta_hyper(geo, &step.solution, &phi, &phi_h, f)?
        } else {
            let u = DirichletTrace(exact);
            let du = DirichletArcDerivative(exact);
            let uh = if self.config.data_approximation {
                Some(sz_data_weak(geo, &u)?)
            } else {
                None
            };
            let data = WeakData {
                u: &u,
                du: &du,
                u_h: uh.as_ref(),
            };
            compute_eta_weak(geo, &step.solution, &data, f)?
        };
        let mu = compute_mu(geo, &step.solution)?;
        let mesh = &step.mesh;
        let eta = est.eta.total();
        let (marked, coarsened, next) = if self.config.uniform {
            (mesh.n_nodes(), 0, mesh.refine_uniform()?)
        } else {
            let m1 = doerfler_mark(&est.eta, self.config.theta, self.config.c_min);
            // a node just marked for refinement is not also a coarsening candidate
            let eligible: Vec<usize> = mesh
                .coarsenable_nodes()
                .into_iter()
                .filter(|z| !m1.contains(z))
                .collect();
            let mminus = coarsen_mark(
                &mu,
                eta * eta,
                self.config.vartheta,
                self.config.c_mark,
                m1.len(),
                &eligible,
                self.config.coarsen_free,
            );
            let next = refine_and_coarsen(mesh, &m1, &mminus)?;
            (m1.len(), mminus.len(), next)
        };
        let record = RunRecord {
            ell,
            knots: mesh.num_knots(),
            dim: step.solution.space.dim(),
            eta,
            res: est.res.total(),
            osc: est.osc.total(),
            mu: mu.total(),
            marked,
            coarsened,
            mesh: mesh.clone(),
            indicators: self.config.keep_indicators.then(|| indicator_csv(mesh, &est, &mu)),
        };
        Ok((record, next))
    }

    /// Runs until the next space would exceed `max_dof`; always produces at
    /// least one record. `on_step` sees every record as it is produced.
    pub fn run_with(&self, mut on_step: impl FnMut(&RunRecord)) -> Result<Vec<RunRecord>> {
        let mut mesh = self.initial_mesh();
        let mut records = Vec::new();
        for ell in 0.. {
            let step = self.solve(&mesh)?;
            let (record, next) = self.adapt(ell, &step)?;
            on_step(&record);
            records.push(record);
            if self.space(&next)?.dim() > self.config.max_dof {
                break;
            }
            mesh = next;
        }
        Ok(records)
    }

    pub fn run(&self) -> Result<Vec<RunRecord>> {
        self.run_with(|_| {})
    }
}

/// Runs an experiment.
pub fn run(config: AdaptiveConfig) -> Result<Vec<RunRecord>> {
    Driver::new(config)?.run()
}

/// Least-squares slope of `log η` against `log #N` over the last `window`
/// records.
pub fn rate_estimate(records: &[RunRecord], window: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = records.iter().map(|r| (r.knots as f64, r.eta)).collect();
    loglog_slope(&pts, window)
}

/// Least-squares slope of `log y` against `log x` over the last `window`
/// points; `None` with fewer than two usable points.
pub fn loglog_slope(points: &[(f64, f64)], window: usize) -> Option<f64> {
    let start = points.len().saturating_sub(window);
    let pts: Vec<(f64, f64)> = points[start..]
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}
