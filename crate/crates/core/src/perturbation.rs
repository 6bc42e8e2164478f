//! Compactly supported perturbations of a periodic lattice: potentials and
//! graph surgery, the finite boundary couplings `K1 = H0 P_ext - P_ext H` and
//! `K2 = H P_ext - P_ext H0`, and the perturbed resolvent at `z` or `λ ± i0`.
//!
//! The box radius `a` splits the vertex set into the exterior
//! `E = {(j, n) : |n|_∞ > a}` and the interior (everything else, including
//! added vertices). All surgery lies in `|n|_∞ <= a - 1`, so `H = H0` on rows
//! and columns meeting `E`, and `K1`, `K2` live on the two layers
//! `A = {|n|_∞ = a}` and `B = {|n|_∞ = a + 1}`.
//!
//! The perturbed resolvent `u = R(z) g` is obtained from the finite system
//! with unknowns `w = u|_int`, `k = K1 u` on `A ∪ B`:
//!
//! * `k(b) = -Σ_α H0(b, α) w(α)` for `b ∈ B`,
//! * `k(α) = Σ_b H0(α, b) [G (k + P_ext g)](b)` for `α ∈ A`,
//! * `(H_int - z) w + k|_A = g|_int`,
//!
//! where `G` is the free Green function; exterior values are
//! `u = G (k + P_ext g)` on `E`.

use crate::error::{Error, Result};
use crate::green::GreenTable;
use crate::lattice::{window_from_graph, PeriodicLatticeSpec, RealSpaceWindow};
use crate::linalg::{sigma_min, C64};
use crate::quadrature::OffsetBox;
use crate::spectral::LatticeVector;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

/// Smallest admissible singular value of the boundary system.
pub const SING_TOL: f64 = 1e-8;

/// A vertex of the perturbed graph.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vertex {
    Site { cell: usize, n: Vec<i64> },
    Added(usize),
}

impl Vertex {
    pub fn site(cell: usize, n: &[i64]) -> Self {
        Vertex::Site { cell, n: n.to_vec() }
    }

    /// Sup-norm of the translation (added vertices count as 0).
    pub fn radius(&self) -> i64 {
        match self {
            Vertex::Site { n, .. } => n.iter().map(|k| k.abs()).max().unwrap_or(0),
            Vertex::Added(_) => 0,
        }
    }
}

impl std::fmt::Display for Vertex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Vertex::Site { cell, n } => write!(f, "({cell}, {n:?})"),
            Vertex::Added(i) => write!(f, "added[{i}]"),
        }
    }
}

/// Lattice site `(band, site)` as written in perturbation documents.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteRef {
    pub band: usize,
    pub site: Vec<i64>,
}

impl SiteRef {
    pub fn new(band: usize, site: &[i64]) -> Self {
        Self { band, site: site.to_vec() }
    }

    pub fn vertex(&self) -> Vertex {
        Vertex::site(self.band, &self.site)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialEntry {
    pub band: usize,
    pub site: Vec<i64>,
    pub value: f64,
}

/// New vertex joined to existing lattice sites, with its own potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddedVertex {
    pub attach: Vec<SiteRef>,
    #[serde(default)]
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationSpec {
    pub potential: Vec<PotentialEntry>,
    pub removed_vertices: Vec<SiteRef>,
    pub removed_edges: Vec<[SiteRef; 2]>,
    pub added_edges: Vec<[SiteRef; 2]>,
    pub added_vertices: Vec<AddedVertex>,
    pub box_radius: Option<i64>,
}

impl PerturbationSpec {
    /// Potential `value` at one site.
    pub fn single_site(band: usize, site: &[i64], value: f64) -> Self {
        Self { potential: vec![PotentialEntry { band, site: site.to_vec(), value }], ..Self::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.potential.iter().all(|p| p.value == 0.0)
            && self.removed_vertices.is_empty()
            && self.removed_edges.is_empty()
            && self.added_edges.is_empty()
            && self.added_vertices.is_empty()
    }

    /// No graph surgery, only a potential.
    pub fn is_pure_potential(&self) -> bool {
        self.removed_vertices.is_empty()
            && self.removed_edges.is_empty()
            && self.added_edges.is_empty()
            && self.added_vertices.is_empty()
    }
}

/// The perturbed graph with its potential, queried vertex by vertex.
#[derive(Clone, Debug)]
pub struct PerturbedGraph {
    pub spec: PeriodicLatticeSpec,
    table: Vec<Vec<(usize, Vec<i64>)>>,
    removed: HashSet<Vertex>,
    removed_edges: HashSet<(Vertex, Vertex)>,
    extra: HashMap<Vertex, Vec<Vertex>>,
    potential: HashMap<Vertex, f64>,
    touched: HashSet<Vertex>,
    added: usize,
    box_radius: i64,
}

fn bad<T>(m: String) -> Result<T> {
    Err(Error::NonSymmetricEdges(m))
}

impl PerturbedGraph {
    pub fn new(spec: &PeriodicLatticeSpec, pert: &PerturbationSpec) -> Result<Self> {
        let s = spec.cells();
        let check = |r: &SiteRef| -> Result<Vertex> {
            if r.band >= s || r.site.len() != spec.dim {
                return Err(Error::NonSymmetricEdges(format!("malformed site {r:?}")));
            }
            Ok(r.vertex())
        };
        let table = spec.neighbor_table();
        let free_neighbors = |v: &Vertex| -> Vec<Vertex> {
            match v {
                Vertex::Site { cell, n } => table[*cell]
                    .iter()
                    .map(|(t, m)| Vertex::Site { cell: *t, n: n.iter().zip(m).map(|(a, b)| a + b).collect() })
                    .collect(),
                Vertex::Added(_) => Vec::new(),
            }
        };
        let mut touched: HashSet<Vertex> = HashSet::new();
        let mut removed = HashSet::new();
        for r in &pert.removed_vertices {
            let v = check(r)?;
            if !removed.insert(v.clone()) {
                return bad(format!("vertex {v} removed twice"));
            }
            touched.extend(free_neighbors(&v));
            touched.insert(v);
        }
        let mut removed_edges = HashSet::new();
        for [p, q] in &pert.removed_edges {
            let (u, v) = (check(p)?, check(q)?);
            if !free_neighbors(&u).contains(&v) {
                return bad(format!("removed edge {u} - {v} is not an edge"));
            }
            if !removed_edges.insert((u.clone(), v.clone())) {
                return bad(format!("edge {u} - {v} removed twice"));
            }
            removed_edges.insert((v.clone(), u.clone()));
            touched.insert(u);
            touched.insert(v);
        }
        let mut extra: HashMap<Vertex, Vec<Vertex>> = HashMap::new();
        let link = |extra: &mut HashMap<Vertex, Vec<Vertex>>, u: &Vertex, v: &Vertex| -> Result<()> {
            if u == v {
                return bad(format!("self-loop at {u}"));
            }
            if removed.contains(u) || removed.contains(v) {
                return bad(format!("edge {u} - {v} meets a removed vertex"));
            }
            let free = free_neighbors(u).contains(v) && !removed_edges.contains(&(u.clone(), v.clone()));
            if free || extra.get(u).is_some_and(|l| l.contains(v)) {
                return bad(format!("multiple edge {u} - {v}"));
            }
            extra.entry(u.clone()).or_default().push(v.clone());
            extra.entry(v.clone()).or_default().push(u.clone());
            Ok(())
        };
        for [p, q] in &pert.added_edges {
            let (u, v) = (check(p)?, check(q)?);
            link(&mut extra, &u, &v)?;
            touched.insert(u);
            touched.insert(v);
        }
        let mut potential: HashMap<Vertex, f64> = HashMap::new();
        for (i, av) in pert.added_vertices.iter().enumerate() {
            let v = Vertex::Added(i);
            if av.attach.is_empty() {
                return bad(format!("added vertex {i} has no attachment"));
            }
            for r in &av.attach {
                let w = check(r)?;
                link(&mut extra, &v, &w)?;
                touched.insert(w);
            }
            if !av.value.is_finite() {
                return bad(format!("non-finite potential on added vertex {i}"));
            }
            if av.value != 0.0 {
                potential.insert(v, av.value);
            }
        }
        for p in &pert.potential {
            let v = check(&SiteRef::new(p.band, &p.site))?;
            if !p.value.is_finite() {
                return bad(format!("non-finite potential at {v}"));
            }
            if removed.contains(&v) {
                return bad(format!("potential on removed vertex {v}"));
            }
            *potential.entry(v.clone()).or_default() += p.value;
            touched.insert(v);
        }
        let extent = touched.iter().map(Vertex::radius).max().unwrap_or(0);
        let box_radius = pert.box_radius.unwrap_or(extent + 2);
        if box_radius < 1 {
            return bad(format!("box radius {box_radius} must be positive"));
        }
        if let Some(v) = touched.iter().filter(|v| v.radius() > box_radius - 1).min() {
            return Err(Error::SurgeryTouchesBoundary { site: v.to_string(), limit: box_radius - 1 });
        }
        let graph = Self {
            spec: spec.clone(),
            table,
            removed,
            removed_edges,
            extra,
            potential,
            touched,
            added: pert.added_vertices.len(),
            box_radius,
        };
        let mut check_deg: Vec<&Vertex> = graph.touched.iter().collect();
        check_deg.sort();
        for v in check_deg {
            if !graph.removed.contains(v) && graph.degree(v) == 0 {
                return bad(format!("vertex {v} becomes isolated"));
            }
        }
        Ok(graph)
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn box_radius(&self) -> i64 {
        self.box_radius
    }

    pub fn added_count(&self) -> usize {
        self.added
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        match v {
            Vertex::Site { cell, n } => *cell < self.spec.cells() && n.len() == self.spec.dim && !self.removed.contains(v),
            Vertex::Added(i) => *i < self.added,
        }
    }

    pub fn neighbors(&self, v: &Vertex) -> Vec<Vertex> {
        if self.removed.contains(v) {
            return Vec::new();
        }
        let mut out = Vec::new();
        if let Vertex::Site { cell, n } = v {
            for (t, m) in &self.table[*cell] {
                let w = Vertex::Site { cell: *t, n: n.iter().zip(m).map(|(a, b)| a + b).collect() };
                if self.touched.is_empty()
                    || !(self.removed.contains(&w) || self.removed_edges.contains(&(v.clone(), w.clone())))
                {
                    out.push(w);
                }
            }
        }
        if let Some(e) = self.extra.get(v) {
            out.extend(e.iter().cloned());
        }
        out
    }

    pub fn degree(&self, v: &Vertex) -> usize {
        match v {
            Vertex::Site { cell, .. } if !self.touched.contains(v) => self.spec.degrees[*cell],
            _ => self.neighbors(v).len(),
        }
    }

    pub fn potential(&self, v: &Vertex) -> f64 {
        self.potential.get(v).copied().unwrap_or(0.0)
    }

    /// Support of the potential, sorted.
    pub fn potential_support(&self) -> Vec<(Vertex, f64)> {
        let mut v: Vec<(Vertex, f64)> = self.potential.iter().map(|(k, &x)| (k.clone(), x)).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    /// Symmetric matrix element `H(v, w)` of the degree-balanced operator.
    pub fn coupling(&self, v: &Vertex, w: &Vertex) -> f64 {
        let mut h = 0.0;
        if v == w {
            h += self.potential(v);
        }
        let count = self.neighbors(v).iter().filter(|u| *u == w).count();
        if count > 0 {
            h -= count as f64 / ((self.degree(v) * self.degree(w)) as f64).sqrt();
        }
        h
    }

    /// Sites with `|n|_∞ <= r` (translation-major, then cell), then added
    /// vertices.
    pub fn vertices_within(&self, r: i64) -> Vec<Vertex> {
        self.vertices_where(r, |_| true)
    }

    fn vertices_where(&self, r: i64, keep: impl Fn(&[i64]) -> bool) -> Vec<Vertex> {
        let obox = OffsetBox { d: self.spec.dim, radius: r };
        let mut out = Vec::new();
        for n in obox.offsets() {
            if !keep(&n) {
                continue;
            }
            for cell in 0..self.spec.cells() {
                let v = Vertex::Site { cell, n: n.clone() };
                if !self.removed.contains(&v) {
                    out.push(v);
                }
            }
        }
        out.extend((0..self.added).map(Vertex::Added));
        out
    }

    /// Sites on the shell `|n|_∞ = r`.
    pub fn shell(&self, r: i64) -> Vec<Vertex> {
        let mut v = self.vertices_where(r, |n| n.iter().map(|k| k.abs()).max().unwrap_or(0) == r);
        v.retain(|x| matches!(x, Vertex::Site { .. }));
        v
    }

    /// `(H u)(v)` for a finitely supported `u`.
    pub fn apply(&self, u: &LatticeVector) -> LatticeVector {
        let mut out: HashMap<Vertex, C64> = HashMap::new();
        for (v, &val) in u.iter() {
            let pot = self.potential(v);
            if pot != 0.0 {
                *out.entry(v.clone()).or_default() += val * pot;
            }
            let dv = self.degree(v) as f64;
            for w in self.neighbors(v) {
                let dw = self.degree(&w) as f64;
                *out.entry(w).or_default() -= val / (dv * dw).sqrt();
            }
        }
        LatticeVector::from_map(out)
    }
}

/// Assembled perturbed operator with its interior block and boundary layers.
#[derive(Clone, Debug)]
pub struct PerturbedOperator {
    pub graph: PerturbedGraph,
    pub box_radius: i64,
    /// `H` restricted to the interior vertices (`|n|_∞ <= a` plus added).
    pub interior: RealSpaceWindow,
    /// Interior indices of layer `A`.
    pub layer_a: Vec<usize>,
    /// Sites of layer `B`.
    pub layer_b: Vec<Vertex>,
    /// `(position in A, position in B, H0(α, b))`.
    pub coupling: Vec<(usize, usize, f64)>,
}

/// Assemble `H = -Δ_Γ + V` on the perturbed graph.
pub fn assemble(spec: &PeriodicLatticeSpec, pert: &PerturbationSpec) -> Result<PerturbedOperator> {
    let graph = PerturbedGraph::new(spec, pert)?;
    let a = graph.box_radius();
    let sites = graph.vertices_within(a);
    let interior = window_from_graph(&graph, sites, a as usize)?;
    let layer_a: Vec<usize> =
        (0..interior.len()).filter(|&i| matches!(interior.sites[i], Vertex::Site { .. }) && interior.sites[i].radius() == a).collect();
    let layer_b = graph.shell(a + 1);
    let b_index: HashMap<&Vertex, usize> = layer_b.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let mut coupling = Vec::new();
    for (pa, &ia) in layer_a.iter().enumerate() {
        let alpha = &interior.sites[ia];
        let da = graph.degree(alpha) as f64;
        for w in graph.neighbors(alpha) {
            if let Some(&pb) = b_index.get(&w) {
                coupling.push((pa, pb, -1.0 / (da * graph.degree(&w) as f64).sqrt()));
            }
        }
    }
    Ok(PerturbedOperator { graph, box_radius: a, interior, layer_a, layer_b, coupling })
}

/// Free Green function element `⟨δ_p, R0 δ_q⟩` from a table.
pub fn green_between(green: &GreenTable, p: &Vertex, q: &Vertex) -> Result<C64> {
    match (p, q) {
        (Vertex::Site { cell: cp, n: np }, Vertex::Site { cell: cq, n: nq }) => {
            let diff: Vec<i64> = np.iter().zip(nq).map(|(a, b)| a - b).collect();
            let needed = diff.iter().map(|k| k.abs()).max().unwrap_or(0);
            green
                .get(&diff)
                .map(|b| b[(*cp, *cq)])
                .ok_or(Error::GreenTableTooSmall { needed, available: green.radius })
        }
        _ => Err(Error::UnsupportedPerturbation("free Green function between added vertices".into())),
    }
}

/// Solution of the boundary system for one right-hand side.
#[derive(Clone, Debug)]
pub struct BoundarySolution {
    /// `u` on the interior vertices.
    pub interior: Vec<C64>,
    /// `K1 u` on `A` then `B`.
    pub k: Vec<C64>,
    /// Exterior part of the data, `P_ext g`.
    pub exterior_source: Vec<(Vertex, C64)>,
    pub sigma_min: f64,
}

impl PerturbedOperator {
    pub fn dim(&self) -> usize {
        self.graph.dim()
    }

    /// Green-table radius needed for the boundary system.
    pub fn required_radius(&self) -> i64 {
        2 * self.box_radius + 2
    }

    pub fn is_exterior(&self, v: &Vertex) -> bool {
        v.radius() > self.box_radius && matches!(v, Vertex::Site { .. })
    }

    /// Layer sites `A` then `B`, the support of `K1` and `K2`.
    pub fn boundary_sites(&self) -> Vec<Vertex> {
        let mut v: Vec<Vertex> = self.layer_a.iter().map(|&i| self.interior.sites[i].clone()).collect();
        v.extend(self.layer_b.iter().cloned());
        v
    }

    /// `K1 u` on `A ∪ B` (ordering of [`Self::boundary_sites`]).
    pub fn k1_apply(&self, u: impl Fn(&Vertex) -> C64) -> Vec<C64> {
        let na = self.layer_a.len();
        let mut out = vec![C64::default(); na + self.layer_b.len()];
        for &(pa, pb, h) in &self.coupling {
            let alpha = &self.interior.sites[self.layer_a[pa]];
            let b = &self.layer_b[pb];
            out[na + pb] -= u(alpha) * h;
            out[pa] += u(b) * h;
        }
        out
    }

    /// `K2 u = H P_ext u - P_ext H0 u` on `A ∪ B`; equal to `-K1^T` applied
    /// to a free-lattice vector.
    pub fn k2_apply(&self, u: impl Fn(&Vertex) -> C64) -> Vec<C64> {
        self.k1_apply(u)
    }

    /// Dense boundary system matrix for the spectral parameter of `green`.
    pub fn boundary_matrix(&self, green: &GreenTable) -> Result<DMatrix<C64>> {
        if green.radius < self.required_radius() {
            return Err(Error::GreenTableTooSmall { needed: self.required_radius(), available: green.radius });
        }
        let z = green.z;
        let ni = self.interior.len();
        let na = self.layer_a.len();
        let nb = self.layer_b.len();
        let n = ni + na + nb;
        let mut m = DMatrix::<C64>::zeros(n, n);
        let h = &self.interior.symmetric;
        for i in 0..ni {
            for p in h.row_ptr[i]..h.row_ptr[i + 1] {
                m[(i, h.cols[p])] += C64::new(h.vals[p], 0.0);
            }
            m[(i, i)] -= z;
        }
        for (pa, &ia) in self.layer_a.iter().enumerate() {
            m[(ia, ni + pa)] += C64::new(1.0, 0.0);
            m[(ni + pa, ni + pa)] += C64::new(1.0, 0.0);
        }
        for pb in 0..nb {
            m[(ni + na + pb, ni + na + pb)] += C64::new(1.0, 0.0);
        }
        let sources = self.boundary_sites();
        // Rows for A: k(α) - Σ_b H0(α,b) Σ_c G(b - c) k(c).
        let gbc: Vec<Vec<C64>> = self
            .layer_b
            .iter()
            .map(|b| sources.iter().map(|c| green_between(green, b, c)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        for &(pa, pb, hab) in &self.coupling {
            for (ci, g) in gbc[pb].iter().enumerate() {
                m[(ni + pa, ni + ci)] -= g * hab;
            }
            m[(ni + na + pb, self.layer_a[pa])] += C64::new(hab, 0.0);
        }
        Ok(m)
    }

    fn exterior_source(&self, g: &LatticeVector) -> Vec<(Vertex, C64)> {
        g.iter().filter(|(v, _)| self.is_exterior(v)).map(|(v, &x)| (v.clone(), x)).collect()
    }

    /// Solve the boundary system for `u = R g`.
    pub fn solve(&self, green: &GreenTable, g: &LatticeVector) -> Result<BoundarySolution> {
        Ok(self.solve_many(green, std::slice::from_ref(g))?.remove(0))
    }

    /// Solve the boundary system for several right-hand sides with one
    /// factorization.
    pub fn solve_many(&self, green: &GreenTable, gs: &[LatticeVector]) -> Result<Vec<BoundarySolution>> {
        for g in gs {
            for (v, _) in g.iter() {
                if !self.graph.contains(v) {
                    return Err(Error::NonSymmetricEdges(format!("data supported on missing vertex {v}")));
                }
            }
        }
        let m = self.boundary_matrix(green)?;
        let smin = sigma_min(&m);
        if smin < SING_TOL {
            return Err(Error::SystemSingular { energy: green.z.re, sigma_min: smin });
        }
        let ni = self.interior.len();
        let total = m.nrows();
        let mut rhs = DMatrix::<C64>::zeros(total, gs.len());
        let mut sources = Vec::with_capacity(gs.len());
        for (col, g) in gs.iter().enumerate() {
            for (v, &x) in g.iter() {
                if let Some(&i) = self.interior.index.get(v) {
                    rhs[(i, col)] += x;
                }
            }
            let ext = self.exterior_source(g);
            if !ext.is_empty() {
                for &(pa, pb, hab) in &self.coupling {
                    let b = &self.layer_b[pb];
                    let mut gb = C64::default();
                    for (e, x) in &ext {
                        gb += green_between(green, b, e)? * x;
                    }
                    rhs[(ni + pa, col)] += gb * hab;
                }
            }
            sources.push(ext);
        }
        let sol = m.lu().solve(&rhs).ok_or(Error::SystemSingular { energy: green.z.re, sigma_min: 0.0 })?;
        Ok(sources
            .into_iter()
            .enumerate()
            .map(|(col, ext)| BoundarySolution {
                interior: (0..ni).map(|i| sol[(i, col)]).collect(),
                k: (ni..total).map(|i| sol[(i, col)]).collect(),
                exterior_source: ext,
                sigma_min: smin,
            })
            .collect())
    }

    /// Value of the solution at any vertex of the perturbed graph.
    pub fn evaluate(&self, green: &GreenTable, sol: &BoundarySolution, v: &Vertex) -> Result<C64> {
        if let Some(&i) = self.interior.index.get(v) {
            return Ok(sol.interior[i]);
        }
        if !self.is_exterior(v) {
            return Err(Error::NonSymmetricEdges(format!("vertex {v} is not in the graph")));
        }
        let mut acc = C64::default();
        for (c, kc) in self.boundary_sites().iter().zip(&sol.k) {
            acc += green_between(green, v, c)? * kc;
        }
        for (e, x) in &sol.exterior_source {
            acc += green_between(green, v, e)? * x;
        }
        Ok(acc)
    }

    /// Interior residual `max |((H - z) u - g)(v)|` over interior rows, with
    /// layer `B` values reconstructed from the Green function.
    pub fn interior_residual(&self, green: &GreenTable, sol: &BoundarySolution, g: &LatticeVector) -> Result<f64> {
        let ub: Vec<C64> = self.layer_b.iter().map(|b| self.evaluate(green, sol, b)).collect::<Result<_>>()?;
        let h = &self.interior.symmetric;
        let mut r: Vec<C64> = (0..self.interior.len())
            .map(|i| {
                let hv: C64 = (h.row_ptr[i]..h.row_ptr[i + 1]).map(|p| sol.interior[h.cols[p]] * h.vals[p]).sum();
                hv - sol.interior[i] * green.z - g.get(&self.interior.sites[i])
            })
            .collect();
        for &(pa, pb, hab) in &self.coupling {
            r[self.layer_a[pa]] += ub[pb] * hab;
        }
        Ok(r.iter().map(|v| v.norm()).fold(0.0, f64::max))
    }
}

/// `u = R(z) g` (or `R(λ ± i0) g`) at the requested vertices via the
/// boundary system.
pub fn perturbed_resolvent(
    op: &PerturbedOperator,
    green: &GreenTable,
    g: &LatticeVector,
    eval: &[Vertex],
) -> Result<Vec<C64>> {
    let sol = op.solve(green, g)?;
    eval.iter().map(|v| op.evaluate(green, &sol, v)).collect()
}

/// Lippmann–Schwinger route for pure potentials:
/// `(I + G_SS V) u_S = (R0 g)_S`, then `u = R0 g - R0 V u`.
pub fn lippmann_schwinger(
    op: &PerturbedOperator,
    green: &GreenTable,
    g: &LatticeVector,
    eval: &[Vertex],
) -> Result<Vec<C64>> {
    if op.graph.added_count() > 0 || !op.graph.touched_only_by_potential() {
        return Err(Error::UnsupportedPerturbation("graph surgery present".into()));
    }
    let supp = op.graph.potential_support();
    let r0g = |p: &Vertex| -> Result<C64> {
        let mut acc = C64::default();
        for (q, &x) in g.iter() {
            acc += green_between(green, p, q)? * x;
        }
        Ok(acc)
    };
    let ns = supp.len();
    let mut m = DMatrix::<C64>::identity(ns, ns);
    let mut rhs = DVector::<C64>::zeros(ns);
    for (i, (p, _)) in supp.iter().enumerate() {
        for (j, (q, vq)) in supp.iter().enumerate() {
            m[(i, j)] += green_between(green, p, q)? * *vq;
        }
        rhs[i] = r0g(p)?;
    }
    let smin = if ns > 0 { sigma_min(&m) } else { 1.0 };
    if smin < SING_TOL {
        return Err(Error::SystemSingular { energy: green.z.re, sigma_min: smin });
    }
    let us = if ns > 0 {
        m.lu().solve(&rhs).ok_or(Error::SystemSingular { energy: green.z.re, sigma_min: 0.0 })?
    } else {
        rhs
    };
    eval.iter()
        .map(|e| {
            let mut acc = r0g(e)?;
            for (k, (q, vq)) in supp.iter().enumerate() {
                acc -= green_between(green, e, q)? * *vq * us[k];
            }
            Ok(acc)
        })
        .collect()
}

impl PerturbedGraph {
    /// True when the only modification is a potential.
    pub fn touched_only_by_potential(&self) -> bool {
        self.removed.is_empty() && self.removed_edges.is_empty() && self.extra.is_empty()
    }
}

/// Eigenvalue candidate from a singular-value scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenCandidate {
    pub energy: f64,
    pub sigma_min: f64,
    /// Number of singular values below `1e3 · SING_TOL`.
    pub multiplicity: usize,
    /// Interior residual of the reconstructed null vector, relative.
    pub residual: f64,
    /// Set when the energy is within the threshold exclusion distance.
    pub unresolved: bool,
}

/// Smallest singular value of the boundary system and its full spectrum.
pub fn boundary_singular_values(op: &PerturbedOperator, green: &GreenTable) -> Result<Vec<f64>> {
    let m = op.boundary_matrix(green)?;
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    Ok(sv)
}

/// Scan `σ_min` of the boundary system over `[lo, hi]`, refine dips by
/// golden-section search and keep minima below `SING_TOL`. `green_at`
/// supplies the free Green table at each real energy (off-spectrum or
/// boundary value).
pub fn point_spectrum_scan(
    op: &PerturbedOperator,
    green_at: impl Fn(f64) -> Result<GreenTable>,
    interval: (f64, f64),
    n_samples: usize,
) -> Result<Vec<EigenCandidate>> {
    let (lo, hi) = interval;
    let n = n_samples.max(3);
    let grid: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    let smin = |e: f64| -> Result<f64> { Ok(boundary_singular_values(op, &green_at(e)?)?[0]) };
    let vals: Vec<f64> = grid.iter().map(|&e| smin(e)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for k in 0..n {
        let left = if k == 0 { f64::INFINITY } else { vals[k - 1] };
        let right = if k + 1 == n { f64::INFINITY } else { vals[k + 1] };
        if !(vals[k] <= left && vals[k] <= right) {
            continue;
        }
        let (mut a, mut b) = (grid[k.saturating_sub(1)], grid[(k + 1).min(n - 1)]);
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let (mut fc, mut fd) = (smin(c)?, smin(d)?);
        while b - a > 1e-12 * (1.0 + a.abs()) {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                fc = smin(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                fd = smin(d)?;
            }
        }
        let e = 0.5 * (a + b);
        let green = green_at(e)?;
        let m = op.boundary_matrix(&green)?;
        let svd = m.clone().svd(false, true);
        let sv = &svd.singular_values;
        let (imin, &s0) = sv.iter().enumerate().min_by(|x, y| x.1.total_cmp(y.1)).expect("nonempty");
        if s0 >= SING_TOL {
            continue;
        }
        let multiplicity = sv.iter().filter(|&&v| v < 1e3 * SING_TOL).count();
        let vt = svd.v_t.expect("requested");
        let null: Vec<C64> = vt.row(imin).iter().map(|v| v.conj()).collect();
        let ni = op.interior.len();
        let sol = BoundarySolution {
            interior: null[..ni].to_vec(),
            k: null[ni..].to_vec(),
            exterior_source: Vec::new(),
            sigma_min: s0,
        };
        let norm = sol.interior.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
        let residual = op.interior_residual(&green, &sol, &LatticeVector::default())? / norm;
        let (_, dist) = crate::thresholds::nearest_threshold(&op.graph.spec, e);
        out.push(EigenCandidate {
            energy: e,
            sigma_min: s0,
            multiplicity,
            residual,
            unresolved: dist <= crate::thresholds::THR_EXCL,
        });
    }
    out.dedup_by(|p, q| (p.energy - q.energy).abs() < 1e-9);
    Ok(out)
}
