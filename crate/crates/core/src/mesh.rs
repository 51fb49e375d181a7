//! Admissible knot meshes on a closed curve: refinement, multiplicity
//! coarsening, patches, mesh sizes and overlays.
//!
//! Nodes are stored exactly. A node is an initial element index plus a dyadic
//! fraction of that element with [`FRAC_BITS`] bits, so bisection never
//! rounds and knots compare by value.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::BoundaryCurve;
use crate::quadrature::gl;

pub const FRAC_BITS: u32 = 120;
pub const ONE: u128 = 1 << FRAC_BITS;
const ONE_F: f64 = ONE as f64;

/// Relative slack for mesh-ratio comparisons; initial breakpoints are only
/// known in floating point.
const RATIO_SLACK: f64 = 1e-12;

/// Exact parameter value: initial element `seg` plus `frac / 2^120` of it.
///
/// The end of the parameter interval is `(n_seg, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Param {
    seg: u32,
    frac: u128,
}

impl Param {
    pub const START: Param = Param { seg: 0, frac: 0 };

    pub fn new(seg: u32, frac: u128) -> Result<Self> {
        if frac >= ONE {
            return Err(Error::Argument("fraction must be below 2^120".into()));
        }
        Ok(Self { seg, frac })
    }

    pub fn seg(self) -> usize {
        self.seg as usize
    }

    pub fn frac(self) -> u128 {
        self.frac
    }

    fn end(n_seg: usize) -> Self {
        Param {
            seg: n_seg as u32,
            frac: 0,
        }
    }
}

/// Which integral equation the mesh serves; fixes the multiplicity cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Continuous splines, interior multiplicity at most `p`.
    Hyper,
    /// Possibly discontinuous splines, interior multiplicity at most `p + 1`.
    Weak,
}

/// The initial knots every admissible mesh descends from.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialMesh {
    breaks: Vec<f64>,
    mult: Vec<usize>,
    degree: usize,
    mode: Mode,
    kappa0: f64,
}

impl InitialMesh {
    /// `breaks` runs from `a` to `b`; `interior_mult` holds one entry per
    /// interior breakpoint. `kappa0` defaults to the mesh's own local ratio.
    pub fn new(
        breaks: Vec<f64>,
        interior_mult: Vec<usize>,
        degree: usize,
        mode: Mode,
        kappa0: Option<f64>,
    ) -> Result<Self> {
        if breaks.len() < 3 {
            return Err(Error::Argument("a closed curve needs at least two elements".into()));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(Error::Argument("breakpoints must be strictly increasing".into()));
        }
        if interior_mult.len() + 2 != breaks.len() {
            return Err(Error::Argument(
                "one multiplicity per interior breakpoint required".into(),
            ));
        }
        if degree > crate::splines::MAX_DEGREE {
            return Err(Error::UnsupportedDegree(format!("degree {degree}")));
        }
        let cap = cap_for(mode, degree);
        if interior_mult.iter().any(|&m| m == 0 || m > cap) {
            return Err(Error::Argument(format!(
                "interior multiplicities must lie in 1..={cap}"
            )));
        }
        let mut mult = vec![degree + 1];
        mult.extend(interior_mult);
        let mut init = Self {
            breaks,
            mult,
            degree,
            mode,
            kappa0: 1.0,
        };
        let own = init.own_ratio();
        init.kappa0 = match kappa0 {
            Some(k) if k >= 1.0 && k.is_finite() => k,
            Some(k) => return Err(Error::Argument(format!("kappa0 = {k} must be >= 1"))),
            None => own,
        };
        Ok(init)
    }

    /// Six equal elements on `[0, 1]` with simple interior knots.
    pub fn uniform_six(degree: usize, mode: Mode) -> Result<Self> {
        let breaks = (0..=6).map(|k| k as f64 / 6.0).collect();
        Self::new(breaks, vec![1; 5], degree, mode, None)
    }

    fn own_ratio(&self) -> f64 {
        let n = self.breaks.len() - 1;
        let len = |s: usize| self.breaks[s + 1] - self.breaks[s];
        let mut r: f64 = 1.0;
        for s in 0..n {
            let (a, b) = (len(s), len((s + 1) % n));
            r = r.max(a / b).max(b / a);
        }
        if r < 1.0 + RATIO_SLACK {
            1.0
        } else {
            r
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn kappa0(&self) -> f64 {
        self.kappa0
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn n_segments(&self) -> usize {
        self.breaks.len() - 1
    }

    fn seg_len(&self, s: usize) -> f64 {
        self.breaks[s + 1] - self.breaks[s]
    }

    pub fn to_f64(&self, t: Param) -> f64 {
        let s = t.seg();
        if s >= self.n_segments() {
            return self.breaks[self.n_segments()];
        }
        self.breaks[s] + t.frac as f64 / ONE_F * self.seg_len(s)
    }

    /// `b - a` in parameter units, with the integer parts subtracted exactly.
    pub fn param_diff(&self, a: Param, b: Param) -> f64 {
        if a > b {
            return -self.param_diff(b, a);
        }
        if a == b {
            return 0.0;
        }
        if a.seg == b.seg {
            return (b.frac - a.frac) as f64 / ONE_F * self.seg_len(a.seg());
        }
        let mut d = (ONE - a.frac) as f64 / ONE_F * self.seg_len(a.seg());
        for s in a.seg() + 1..b.seg() {
            d += self.seg_len(s);
        }
        if b.seg() < self.n_segments() {
            d += b.frac as f64 / ONE_F * self.seg_len(b.seg());
        }
        d
    }
}

fn cap_for(mode: Mode, p: usize) -> usize {
    match mode {
        Mode::Hyper => p.max(1),
        Mode::Weak => p + 1,
    }
}

/// An admissible knot mesh on the closed curve.
///
/// Node 0 is the seam `a ≡ b` with multiplicity `p + 1`. Element `j` runs
/// from node `j` to node `j + 1`; the last element ends at `b`.
#[derive(Debug, Clone)]
pub struct KnotMesh {
    init: Arc<InitialMesh>,
    nodes: Vec<Param>,
    mult: Vec<usize>,
}

impl PartialEq for KnotMesh {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.mult == other.mult && *self.init == *other.init
    }
}

impl KnotMesh {
    pub fn initial(init: Arc<InitialMesh>) -> Self {
        let nodes = (0..init.n_segments())
            .map(|s| Param {
                seg: s as u32,
                frac: 0,
            })
            .collect();
        let mult = init.mult.clone();
        Self { init, nodes, mult }
    }

    /// Builds a mesh from explicit nodes; used for deserialization and tests.
    /// Admissibility with respect to the mesh ratio is not checked.
    pub fn from_nodes(init: Arc<InitialMesh>, nodes: Vec<(Param, usize)>) -> Result<Self> {
        if nodes.first().map(|n| n.0) != Some(Param::START) {
            return Err(Error::Argument("the first node must be the seam".into()));
        }
        if nodes.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Argument("nodes must be strictly increasing".into()));
        }
        let end = Param::end(init.n_segments());
        if nodes.iter().any(|n| n.0 >= end) {
            return Err(Error::Argument("node beyond the parameter interval".into()));
        }
        let cap = cap_for(init.mode, init.degree);
        let mesh = Self {
            nodes: nodes.iter().map(|n| n.0).collect(),
            mult: nodes.iter().map(|n| n.1).collect(),
            init,
        };
        for s in 0..mesh.init.n_segments() {
            let p = Param {
                seg: s as u32,
                frac: 0,
            };
            if mesh.find_node(p).is_none() {
                return Err(Error::Argument(format!("initial node {s} missing")));
            }
        }
        for j in 0..mesh.nodes.len() {
            let m = mesh.mult[j];
            let ok = if j == 0 {
                m == mesh.init.degree + 1
            } else {
                m >= 1 && m <= cap && m >= mesh.initial_multiplicity(j)
            };
            if !ok {
                return Err(Error::Argument(format!("invalid multiplicity {m} at node {j}")));
            }
        }
        Ok(mesh)
    }

    pub fn init(&self) -> &Arc<InitialMesh> {
        &self.init
    }

    pub fn degree(&self) -> usize {
        self.init.degree
    }

    pub fn mode(&self) -> Mode {
        self.init.mode
    }

    /// Largest interior multiplicity reachable by refinement.
    pub fn cap(&self) -> usize {
        cap_for(self.init.mode, self.init.degree)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, j: usize) -> Param {
        self.nodes[j]
    }

    pub fn node_t(&self, j: usize) -> f64 {
        self.init.to_f64(self.nodes[j])
    }

    pub fn nodes(&self) -> &[Param] {
        &self.nodes
    }

    pub fn multiplicity(&self, j: usize) -> usize {
        self.mult[j]
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.mult
    }

    /// `#₀z` of node `j`, zero for nodes created by bisection.
    pub fn initial_multiplicity(&self, j: usize) -> usize {
        let z = self.nodes[j];
        if z.frac == 0 {
            self.init.mult[z.seg()]
        } else {
            0
        }
    }

    /// Total number of knots `#N = Σ #z` (the seam counts `p + 1`).
    pub fn num_knots(&self) -> usize {
        self.mult.iter().sum()
    }

    pub fn find_node(&self, z: Param) -> Option<usize> {
        self.nodes.binary_search(&z).ok()
    }

    fn end_param(&self) -> Param {
        Param::end(self.init.n_segments())
    }

    /// Parameter endpoints of element `e`.
    pub fn element(&self, e: usize) -> (Param, Param) {
        let b = if e + 1 < self.nodes.len() {
            self.nodes[e + 1]
        } else {
            self.end_param()
        };
        (self.nodes[e], b)
    }

    /// Initial segment containing element `e` and the fractions of its ends.
    pub(crate) fn element_fracs(&self, e: usize) -> (usize, u128, u128) {
        let (a, b) = self.element(e);
        let fb = if b.seg == a.seg { b.frac } else { ONE };
        (a.seg(), a.frac, fb)
    }

    /// Parameter length `ĥ_Q`.
    pub fn h_hat(&self, e: usize) -> f64 {
        let (s, fa, fb) = self.element_fracs(e);
        (fb - fa) as f64 / ONE_F * self.init.seg_len(s)
    }

    pub fn param_diff(&self, a: Param, b: Param) -> f64 {
        self.init.param_diff(a, b)
    }

    /// Maps local coordinates `(ξ, 1 - ξ)` of element `e` to the segment
    /// coordinate `(u, 1 - u)`, both computed without cancellation.
    pub(crate) fn local_to_segment(&self, e: usize, xi: f64, xc: f64) -> (usize, f64, f64) {
        let (s, fa, fb) = self.element_fracs(e);
        let len = (fb - fa) as f64 / ONE_F;
        let u = fa as f64 / ONE_F + xi * len;
        let c = (ONE - fb) as f64 / ONE_F + xc * len;
        (s, u, c)
    }

    /// Local mesh ratio `κ̂` (maximum over neighboring element pairs).
    pub fn kappa_hat(&self) -> f64 {
        let n = self.n_elements();
        (0..n)
            .map(|e| {
                let (a, b) = (self.h_hat(e), self.h_hat((e + 1) % n));
                (a / b).max(b / a)
            })
            .fold(1.0, f64::max)
    }

    /// Arclength `h_Q` and parameter length `ĥ_Q` of element `e`.
    pub fn mesh_size(&self, curve: &BoundaryCurve, e: usize) -> (f64, f64) {
        let rule = gl(16);
        let hh = self.h_hat(e);
        let mut h = 0.0;
        for (x, c, w) in rule.iter() {
            let (s, u, uc) = self.local_to_segment(e, x, c);
            h += w * curve.eval_segment(s, u, uc).speed();
        }
        (h * hh, hh)
    }

    /// Algorithm for `refine(K, M)` with marked node indices.
    ///
    /// Elements with both nodes marked are bisected. Other marked nodes gain
    /// multiplicity while below the cap; otherwise both adjacent elements are
    /// bisected. Marked elements then propagate to neighbors that are more
    /// than `κ̂₀` times larger, which keeps the ratio bound `2κ̂₀`.
    pub fn refine(&self, marked: &[usize]) -> Result<KnotMesh> {
        let n = self.n_nodes();
        let mut node_marked = vec![false; n];
        for &z in marked {
            if z >= n {
                return Err(Error::Argument(format!("node {z} not in mesh with {n} nodes")));
            }
            node_marked[z] = true;
        }
        let mut el_marked = vec![false; n];
        for e in 0..n {
            if node_marked[e] && node_marked[(e + 1) % n] {
                el_marked[e] = true;
            }
        }
        let mut mult = self.mult.clone();
        let cap = self.cap();
        let mut extra = Vec::new();
        for z in 0..n {
            if !node_marked[z] || el_marked[z] || el_marked[(z + n - 1) % n] {
                continue;
            }
            if z != 0 && mult[z] < cap {
                mult[z] += 1;
            } else {
                extra.push(z);
            }
        }
        for z in extra {
            el_marked[z] = true;
            el_marked[(z + n - 1) % n] = true;
        }

        let hh: Vec<f64> = (0..n).map(|e| self.h_hat(e)).collect();
        let limit = self.init.kappa0 * (1.0 + RATIO_SLACK);
        let mut queue: VecDeque<usize> = (0..n).filter(|&e| el_marked[e]).collect();
        while let Some(e) = queue.pop_front() {
            for q in [(e + n - 1) % n, (e + 1) % n] {
                if !el_marked[q] && hh[q] / hh[e] > limit {
                    el_marked[q] = true;
                    queue.push_back(q);
                }
            }
        }

        let mut nodes = Vec::with_capacity(n + el_marked.iter().filter(|&&m| m).count());
        let mut new_mult = Vec::with_capacity(nodes.capacity());
        for e in 0..n {
            nodes.push(self.nodes[e]);
            new_mult.push(mult[e]);
            if el_marked[e] {
                let (s, fa, fb) = self.element_fracs(e);
                let len = fb - fa;
                if len % 2 != 0 {
                    return Err(Error::Refinement(format!(
                        "element {e} cannot be bisected further ({FRAC_BITS} levels)"
                    )));
                }
                nodes.push(Param {
                    seg: s as u32,
                    frac: fa + len / 2,
                });
                new_mult.push(1);
            }
        }
        Ok(KnotMesh {
            init: self.init.clone(),
            nodes,
            mult: new_mult,
        })
    }

    /// Marks every node, which bisects every element without changing any
    /// multiplicity.
    pub fn refine_uniform(&self) -> Result<KnotMesh> {
        let all: Vec<usize> = (0..self.n_nodes()).collect();
        self.refine(&all)
    }

    /// Floor `max{1, #₀z}` below which node `j` cannot be coarsened.
    pub fn multiplicity_floor(&self, j: usize) -> usize {
        if j == 0 {
            self.init.degree + 1
        } else {
            self.initial_multiplicity(j).max(1)
        }
    }

    /// Lowers the multiplicity of each listed node by one.
    pub fn coarsen_multiplicity(&self, nodes: &[usize]) -> Result<KnotMesh> {
        let mut mult = self.mult.clone();
        let mut seen = vec![false; self.n_nodes()];
        for &z in nodes {
            if z >= self.n_nodes() {
                return Err(Error::Argument(format!("node {z} not in mesh")));
            }
            if seen[z] {
                return Err(Error::Argument(format!("node {z} listed twice")));
            }
            seen[z] = true;
            if mult[z] <= self.multiplicity_floor(z) {
                return Err(Error::Argument(format!(
                    "node {z} has multiplicity {} at its floor {}",
                    mult[z],
                    self.multiplicity_floor(z)
                )));
            }
            mult[z] -= 1;
        }
        Ok(KnotMesh {
            init: self.init.clone(),
            nodes: self.nodes.clone(),
            mult,
        })
    }

    /// `K ⊖ 1`: every multiplicity lowered by one, but not below its floor.
    pub fn ominus_one(&self) -> KnotMesh {
        let mult = (0..self.n_nodes())
            .map(|j| (self.mult[j].saturating_sub(1)).max(self.multiplicity_floor(j)))
            .collect();
        KnotMesh {
            init: self.init.clone(),
            nodes: self.nodes.clone(),
            mult,
        }
    }

    /// Nodes whose multiplicity exceeds the `⊖1` floor.
    pub fn coarsenable_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&j| self.mult[j] > self.multiplicity_floor(j))
            .collect()
    }

    /// Elements of the patch `π^m` of a node set, sorted.
    pub fn patch_of_nodes(&self, seeds: &[usize], m: usize) -> Vec<usize> {
        if m == 0 || seeds.is_empty() {
            return Vec::new();
        }
        let n = self.n_elements();
        let mut inside = vec![false; n];
        for &z in seeds {
            inside[z % n] = true;
            inside[(z + n - 1) % n] = true;
        }
        self.grow(inside, m - 1)
    }

    /// Elements of the patch `π^m` of an element set, sorted.
    pub fn patch_of_elements(&self, seeds: &[usize], m: usize) -> Vec<usize> {
        let n = self.n_elements();
        let mut inside = vec![false; n];
        for &e in seeds {
            inside[e % n] = true;
        }
        self.grow(inside, m)
    }

    fn grow(&self, mut inside: Vec<bool>, steps: usize) -> Vec<usize> {
        let n = inside.len();
        for _ in 0..steps {
            if inside.iter().all(|&b| b) {
                break;
            }
            let prev = inside.clone();
            for e in 0..n {
                if prev[e] {
                    inside[(e + 1) % n] = true;
                    inside[(e + n - 1) % n] = true;
                }
            }
        }
        (0..n).filter(|&e| inside[e]).collect()
    }

    /// Equivalent mesh size `|γ⁻¹(π(z))| ρ^(#left + #z + #right)`.
    pub fn tilde_h(&self, z: usize, rho: f64) -> f64 {
        let n = self.n_nodes();
        let (l, r) = ((z + n - 1) % n, (z + 1) % n);
        let len = self.h_hat(l) + self.h_hat(z);
        let k = self.mult[l] + self.mult[z] + self.mult[r];
        len * rho.powi(k as i32)
    }

    /// Coarsest common refinement: union of nodes with maximal multiplicity.
    pub fn overlay(&self, other: &KnotMesh) -> Result<KnotMesh> {
        if *self.init != *other.init {
            return Err(Error::Argument("meshes descend from different initial meshes".into()));
        }
        let (mut i, mut j) = (0, 0);
        let mut nodes = Vec::new();
        let mut mult = Vec::new();
        while i < self.nodes.len() || j < other.nodes.len() {
            let a = self.nodes.get(i);
            let b = other.nodes.get(j);
            match (a, b) {
                (Some(x), Some(y)) if x == y => {
                    nodes.push(*x);
                    mult.push(self.mult[i].max(other.mult[j]));
                    i += 1;
                    j += 1;
                }
                (Some(x), Some(y)) if x < y => {
                    nodes.push(*x);
                    mult.push(self.mult[i]);
                    i += 1;
                }
                (Some(x), None) => {
                    nodes.push(*x);
                    mult.push(self.mult[i]);
                    i += 1;
                }
                (_, Some(y)) => {
                    nodes.push(*y);
                    mult.push(other.mult[j]);
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        Ok(KnotMesh {
            init: self.init.clone(),
            nodes,
            mult,
        })
    }

    /// True if every node of `coarse` is a node here with at least its
    /// multiplicity.
    pub fn refines(&self, coarse: &KnotMesh) -> bool {
        *self.init == *coarse.init
            && coarse
                .nodes
                .iter()
                .zip(&coarse.mult)
                .all(|(z, &m)| self.find_node(*z).is_some_and(|j| self.mult[j] >= m))
    }

    /// Plain-text knot listing, one `t multiplicity` line per node of the
    /// knot vector `z_1, …, z_n = b`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for j in 1..self.n_nodes() {
            let _ = writeln!(out, "{} {}", self.node_t(j), self.mult[j]);
        }
        let b = self.init.breaks[self.init.n_segments()];
        let _ = writeln!(out, "{} {}", b, self.mult[0]);
        out
    }
}
