//! Catalog of periodic lattices, their Bloch Hamiltonians and real-space
//! truncations.
//!
//! A lattice vertex is a pair `(j, n)`: cell index `j < s` and translation
//! `n ∈ Z^d`. An edge rule `(j, k, m)` says that `(j, n)` is adjacent to
//! `(k, n + m)` for every `n`. With the Fourier convention
//! `(U f)(x) = (2π)^{-d/2} Σ_n f(n) e^{i n·x}` such a rule contributes
//! `-e^{-i m·x} / sqrt(deg_j deg_k)` to `H0(x)[j][k]`.

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::perturbation::{PerturbationSpec, PerturbedGraph, Vertex};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatticeName {
    Square,
    Triangular,
    Hexagonal,
    Kagome,
    Diamond,
    SubdivisionSquare,
    LadderSquare,
    Graphite,
}

impl LatticeName {
    pub const ALL: [LatticeName; 8] = [
        LatticeName::Square,
        LatticeName::Triangular,
        LatticeName::Hexagonal,
        LatticeName::Kagome,
        LatticeName::Diamond,
        LatticeName::SubdivisionSquare,
        LatticeName::LadderSquare,
        LatticeName::Graphite,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LatticeName::Square => "square",
            LatticeName::Triangular => "triangular",
            LatticeName::Hexagonal => "hexagonal",
            LatticeName::Kagome => "kagome",
            LatticeName::Diamond => "diamond",
            LatticeName::SubdivisionSquare => "subdivision-square",
            LatticeName::LadderSquare => "ladder-square",
            LatticeName::Graphite => "graphite",
        }
    }

    /// Whether `dim` is an admissible rank for this lattice.
    pub fn supports_dim(&self, dim: usize) -> bool {
        match self {
            LatticeName::Square | LatticeName::Diamond | LatticeName::LadderSquare => dim >= 2,
            LatticeName::SubdivisionSquare => (2..crate::linalg::MAX_CELLS).contains(&dim),
            LatticeName::Triangular
            | LatticeName::Hexagonal
            | LatticeName::Kagome
            | LatticeName::Graphite => dim == 2,
        }
    }
}

impl fmt::Display for LatticeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LatticeName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LatticeName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::UnknownLattice(s.to_string()))
    }
}

/// Translation-invariant adjacency: `(source, n)` ~ `(target, n + offset)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeRule {
    pub source: usize,
    pub target: usize,
    pub offset: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicLatticeSpec {
    pub name: LatticeName,
    pub dim: usize,
    /// Period vectors in the embedding space (plotting metadata only).
    pub basis: Vec<Vec<f64>>,
    /// Vertex representatives of the unit cell (plotting metadata only).
    pub offsets: Vec<Vec<f64>>,
    pub degrees: Vec<usize>,
    pub edge_rules: Vec<EdgeRule>,
}

fn unit(d: usize, i: usize, sign: i64) -> Vec<i64> {
    let mut v = vec![0; d];
    v[i] = sign;
    v
}

struct RuleSet {
    d: usize,
    rules: Vec<EdgeRule>,
}

impl RuleSet {
    fn new(d: usize) -> Self {
        Self { d, rules: Vec::new() }
    }

    /// Adds the rule and its reversal.
    fn pair(&mut self, source: usize, target: usize, offset: Vec<i64>) {
        assert_eq!(offset.len(), self.d);
        let back: Vec<i64> = offset.iter().map(|m| -m).collect();
        self.rules.push(EdgeRule { source, target, offset });
        self.rules.push(EdgeRule { source: target, target: source, offset: back });
    }
}

/// Construct a catalog lattice.
pub fn build_lattice(name: LatticeName, dim: usize) -> Result<PeriodicLatticeSpec> {
    if !name.supports_dim(dim) {
        return Err(Error::UnsupportedDimension { name: name.to_string(), dim });
    }
    let d = dim;
    let s3 = 3f64.sqrt();
    let zero = vec![0i64; d];
    let mut r = RuleSet::new(d);
    let identity_basis = || -> Vec<Vec<f64>> {
        (0..d).map(|i| (0..d).map(|k| if k == i { 1.0 } else { 0.0 }).collect()).collect()
    };
    let (basis, offsets, degrees) = match name {
        LatticeName::Square => {
            for i in 0..d {
                r.pair(0, 0, unit(d, i, 1));
            }
            (identity_basis(), vec![vec![0.0; d]], vec![2 * d])
        }
        LatticeName::Triangular => {
            r.pair(0, 0, vec![1, 0]);
            r.pair(0, 0, vec![0, 1]);
            r.pair(0, 0, vec![1, -1]);
            (vec![vec![1.0, 0.0], vec![0.5, s3 / 2.0]], vec![vec![0.0, 0.0]], vec![6])
        }
        LatticeName::Hexagonal => {
            r.pair(0, 1, zero.clone());
            r.pair(0, 1, vec![-1, 0]);
            r.pair(0, 1, vec![0, -1]);
            (
                vec![vec![1.5, s3 / 2.0], vec![0.0, s3]],
                vec![vec![0.5, -s3 / 2.0], vec![1.0, 0.0]],
                vec![3, 3],
            )
        }
        LatticeName::Kagome => {
            r.pair(0, 1, zero.clone());
            r.pair(0, 1, vec![-1, 1]);
            r.pair(0, 2, zero.clone());
            r.pair(0, 2, vec![-1, 0]);
            r.pair(1, 2, zero.clone());
            r.pair(1, 2, vec![0, -1]);
            (
                vec![vec![0.5, s3 / 2.0], vec![-0.5, s3 / 2.0]],
                vec![vec![0.0, 0.0], vec![0.5, 0.0], vec![0.25, s3 / 4.0]],
                vec![4, 4, 4],
            )
        }
        LatticeName::Diamond => {
            r.pair(0, 1, zero.clone());
            for i in 0..d {
                r.pair(0, 1, unit(d, i, -1));
            }
            let basis = (0..d).map(|i| (0..d).map(|k| if k == i { 0.0 } else { 1.0 }).collect()).collect();
            (basis, vec![vec![0.0; d], vec![0.5; d]], vec![d + 1, d + 1])
        }
        LatticeName::SubdivisionSquare => {
            let mut offsets = vec![vec![0.0; d]];
            for j in 0..d {
                r.pair(0, j + 1, zero.clone());
                r.pair(0, j + 1, unit(d, j, -1));
                let mut p = vec![0.0; d];
                p[j] = 0.5;
                offsets.push(p);
            }
            let mut degrees = vec![2 * d];
            degrees.extend(std::iter::repeat_n(2, d));
            (identity_basis(), offsets, degrees)
        }
        LatticeName::LadderSquare => {
            for i in 0..d {
                r.pair(0, 0, unit(d, i, 1));
                r.pair(1, 1, unit(d, i, 1));
            }
            r.pair(0, 1, zero.clone());
            let basis = (0..d).map(|i| (0..=d).map(|k| if k == i { 1.0 } else { 0.0 }).collect()).collect();
            let mut top = vec![0.0; d + 1];
            top[d] = 1.0;
            (basis, vec![vec![0.0; d + 1], top], vec![2 * d + 1, 2 * d + 1])
        }
        LatticeName::Graphite => {
            r.pair(0, 1, zero.clone());
            r.pair(0, 1, vec![-1, 0]);
            r.pair(0, 1, vec![0, -1]);
            r.pair(2, 3, zero.clone());
            r.pair(2, 3, vec![-1, 0]);
            r.pair(2, 3, vec![0, -1]);
            r.pair(0, 2, zero.clone());
            r.pair(1, 3, zero.clone());
            (
                vec![vec![1.5, s3 / 2.0, 0.0], vec![0.0, s3, 0.0]],
                vec![
                    vec![0.5, -s3 / 2.0, 0.0],
                    vec![1.0, 0.0, 0.0],
                    vec![0.5, -s3 / 2.0, 1.0],
                    vec![1.0, 0.0, 1.0],
                ],
                vec![4, 4, 4, 4],
            )
        }
    };
    let mut edge_rules = r.rules;
    edge_rules.sort();
    let spec = PeriodicLatticeSpec { name, dim, basis, offsets, degrees, edge_rules };
    debug_assert!(spec.validate().is_ok());
    Ok(spec)
}

impl PeriodicLatticeSpec {
    /// Number of vertices per unit cell.
    pub fn cells(&self) -> usize {
        self.degrees.len()
    }

    /// Checks reversal closure, degree bookkeeping and cell distinctness.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::NonSymmetricEdges(msg));
        let s = self.cells();
        for rule in &self.edge_rules {
            if rule.source >= s || rule.target >= s || rule.offset.len() != self.dim {
                return bad(format!("malformed rule {rule:?}"));
            }
            let back = EdgeRule {
                source: rule.target,
                target: rule.source,
                offset: rule.offset.iter().map(|m| -m).collect(),
            };
            if !self.edge_rules.contains(&back) {
                return bad(format!("rule {rule:?} has no reversal"));
            }
        }
        for (j, &deg) in self.degrees.iter().enumerate() {
            let count = self.edge_rules.iter().filter(|r| r.source == j).count();
            if count != deg {
                return bad(format!("cell {j}: degree {deg} but {count} rules"));
            }
        }
        for i in 0..s {
            for j in 0..i {
                if self.offsets_congruent(i, j) {
                    return bad(format!("cells {i} and {j} differ by a lattice vector"));
                }
            }
        }
        Ok(())
    }

    fn offsets_congruent(&self, i: usize, j: usize) -> bool {
        let diff: Vec<f64> = self.offsets[i].iter().zip(&self.offsets[j]).map(|(a, b)| a - b).collect();
        let b = nalgebra::DMatrix::from_fn(diff.len(), self.dim, |r, k| self.basis[k][r]);
        let rhs = nalgebra::DVector::from_vec(diff.clone());
        let Ok(sol) = b.clone().svd(true, true).solve(&rhs, 1e-12) else {
            return false;
        };
        let resid = (&b * &sol - rhs).norm();
        resid < 1e-9 && sol.iter().all(|v| (v - v.round()).abs() < 1e-9)
    }

    /// Bloch stencil in the degree-balanced representation.
    pub fn stencil(&self) -> BlochStencil {
        let s = self.cells();
        let mut groups: HashMap<(usize, usize, Vec<i64>), f64> = HashMap::new();
        for r in &self.edge_rules {
            let w = -1.0 / ((self.degrees[r.source] * self.degrees[r.target]) as f64).sqrt();
            *groups.entry((r.source, r.target, r.offset.clone())).or_default() += w;
        }
        let mut terms: Vec<StencilTerm> = groups
            .into_iter()
            .map(|((row, col, offset), coef)| StencilTerm { row, col, offset, coef })
            .collect();
        terms.sort_by(|a, b| (a.row, a.col, &a.offset).cmp(&(b.row, b.col, &b.offset)));
        BlochStencil { s, d: self.dim, terms }
    }

    /// Per-cell neighbour lists `(target, offset)`.
    pub fn neighbor_table(&self) -> Vec<Vec<(usize, Vec<i64>)>> {
        let mut t = vec![Vec::new(); self.cells()];
        for r in &self.edge_rules {
            t[r.source].push((r.target, r.offset.clone()));
        }
        t
    }

    /// Largest sup-norm of an edge offset.
    pub fn max_offset(&self) -> i64 {
        self.edge_rules.iter().flat_map(|r| r.offset.iter().map(|m| m.abs())).max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StencilTerm {
    pub row: usize,
    pub col: usize,
    pub offset: Vec<i64>,
    pub coef: f64,
}

/// `H0(x) = Σ_terms coef · e^{-i offset·x} E_{row,col}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlochStencil {
    pub s: usize,
    pub d: usize,
    pub terms: Vec<StencilTerm>,
}

impl BlochStencil {
    pub fn eval(&self, x: &[f64]) -> CMat {
        let mut m = CMat::zeros(self.s);
        for t in &self.terms {
            let phase: f64 = t.offset.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum();
            m[(t.row, t.col)] += C64::from_polar(t.coef, -phase);
        }
        m
    }

    /// Partial derivatives `∂H0/∂x_a` for every axis.
    pub fn gradient(&self, x: &[f64]) -> Vec<CMat> {
        let mut g = vec![CMat::zeros(self.s); self.d];
        for t in &self.terms {
            let phase: f64 = t.offset.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum();
            let e = C64::from_polar(t.coef, -phase);
            for (a, &k) in t.offset.iter().enumerate() {
                if k != 0 {
                    g[a][(t.row, t.col)] += e * C64::new(0.0, -(k as f64));
                }
            }
        }
        g
    }

    /// Evaluate at complex quasi-momentum (used for algebraic identities).
    pub fn eval_complex(&self, z: &[C64]) -> CMat {
        let mut m = CMat::zeros(self.s);
        for t in &self.terms {
            let phase: C64 = t.offset.iter().zip(z).map(|(&k, &zi)| zi * k as f64).sum();
            m[(t.row, t.col)] += (-crate::linalg::I * phase).exp() * t.coef;
        }
        m
    }

    /// Bound on `|∇λ_j|` from the stencil: `Σ |coef|·|offset|_2`, maximised over rows.
    pub fn gradient_bound(&self) -> f64 {
        let mut rows = vec![0.0; self.s];
        for t in &self.terms {
            let norm = t.offset.iter().map(|&k| (k * k) as f64).sum::<f64>().sqrt();
            rows[t.row] += t.coef.abs() * norm;
        }
        rows.into_iter().fold(0.0, f64::max)
    }
}

/// Bloch Hamiltonian at one quasi-momentum.
#[derive(Clone, Debug)]
pub struct BlochMatrix {
    pub dim_cell: usize,
    pub entries: CMat,
    pub quasimomentum: Vec<f64>,
}

pub fn bloch_matrix(spec: &PeriodicLatticeSpec, x: &[f64]) -> BlochMatrix {
    assert_eq!(x.len(), spec.dim, "quasi-momentum has wrong dimension");
    BlochMatrix { dim_cell: spec.cells(), entries: spec.stencil().eval(x), quasimomentum: x.to_vec() }
}

/// Row-compressed sparse real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        (0..self.n)
            .map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(|p| v[self.cols[p]] * self.vals[p]).sum())
            .collect()
    }

    pub fn apply_real(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(|p| v[self.cols[p]] * self.vals[p]).sum())
            .collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        (self.row_ptr[i]..self.row_ptr[i + 1]).filter(|&p| self.cols[p] == j).map(|p| self.vals[p]).sum()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.cols[p])] += self.vals[p];
            }
        }
        m
    }
}

/// Hard-cutoff truncation of `-Δ_Γ + V` to the sites `|n|_∞ <= radius`.
#[derive(Clone, Debug)]
pub struct RealSpaceWindow {
    pub radius: usize,
    pub dim: usize,
    pub sites: Vec<Vertex>,
    pub index: HashMap<Vertex, usize>,
    /// Degree of each site in the (possibly perturbed) infinite graph.
    pub degrees: Vec<usize>,
    /// Raw Laplacian rows: `-1/deg(v)` per neighbour plus the potential.
    pub matrix: SparseMatrix,
    /// Degree-balanced form `D matrix D^{-1}`, symmetric.
    pub symmetric: SparseMatrix,
}

impl RealSpaceWindow {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Whether every neighbour of site `i` lies inside the window.
    pub fn is_interior(&self, i: usize, graph: &PerturbedGraph) -> bool {
        graph.neighbors(&self.sites[i]).iter().all(|w| self.index.contains_key(w))
    }

    /// Sup-norm radius of a site (added vertices count as radius 0).
    pub fn site_radius(v: &Vertex) -> i64 {
        match v {
            Vertex::Site { n, .. } => n.iter().map(|k| k.abs()).max().unwrap_or(0),
            Vertex::Added(_) => 0,
        }
    }
}

/// Build a real-space window of the free or perturbed operator.
pub fn realspace_window(
    spec: &PeriodicLatticeSpec,
    perturbation: Option<&PerturbationSpec>,
    radius: usize,
) -> Result<RealSpaceWindow> {
    if radius < 2 {
        return Err(Error::RadiusTooSmall { radius, min: 2 });
    }
    let empty = PerturbationSpec::default();
    let graph = PerturbedGraph::new(spec, perturbation.unwrap_or(&empty))?;
    let sites = graph.vertices_within(radius as i64);
    window_from_graph(&graph, sites, radius)
}

pub(crate) fn window_from_graph(graph: &PerturbedGraph, sites: Vec<Vertex>, radius: usize) -> Result<RealSpaceWindow> {
    let index: HashMap<Vertex, usize> = sites.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
    let degrees: Vec<usize> = sites.iter().map(|v| graph.degree(v)).collect();
    let mut raw = SparseMatrix { n: sites.len(), row_ptr: vec![0], cols: Vec::new(), vals: Vec::new() };
    let mut sym = raw.clone();
    for (i, v) in sites.iter().enumerate() {
        let mut row: Vec<(usize, f64, f64)> = Vec::new();
        let pot = graph.potential(v);
        if pot != 0.0 {
            row.push((i, pot, pot));
        }
        let dv = degrees[i] as f64;
        for w in graph.neighbors(v) {
            if let Some(&jw) = index.get(&w) {
                let dw = degrees[jw] as f64;
                row.push((jw, -1.0 / dv, -1.0 / (dv * dw).sqrt()));
            }
        }
        row.sort_by_key(|e| e.0);
        for (j, a, b) in row {
            raw.cols.push(j);
            raw.vals.push(a);
            sym.cols.push(j);
            sym.vals.push(b);
        }
        raw.row_ptr.push(raw.cols.len());
        sym.row_ptr.push(sym.cols.len());
    }
    Ok(RealSpaceWindow { radius, dim: graph.dim(), sites, index, degrees, matrix: raw, symmetric: sym })
}

/// Degree-balanced Hamiltonian on the discrete torus `(Z/period)^d`,
/// returned dense. Cell-major ordering: index = cell + s * flat(n).
pub fn torus_matrix(spec: &PeriodicLatticeSpec, period: usize) -> nalgebra::DMatrix<f64> {
    let s = spec.cells();
    let d = spec.dim;
    let count = period.pow(d as u32);
    let flat = |n: &[i64]| -> usize {
        n.iter().rev().fold(0usize, |acc, &k| acc * period + k.rem_euclid(period as i64) as usize)
    };
    let mut m = nalgebra::DMatrix::zeros(s * count, s * count);
    for idx in 0..count {
        let mut n = vec![0i64; d];
        let mut rem = idx;
        for k in n.iter_mut() {
            *k = (rem % period) as i64;
            rem /= period;
        }
        for r in &spec.edge_rules {
            let target: Vec<i64> = n.iter().zip(&r.offset).map(|(a, b)| a + b).collect();
            let w = -1.0 / ((spec.degrees[r.source] * spec.degrees[r.target]) as f64).sqrt();
            m[(r.source + s * idx, r.target + s * flat(&target))] += w;
        }
    }
    m
}

/// Plane-wave sample `e^{-i n·x} a` evaluated at `(cell, n)`; exact Bloch
/// solution in the degree-balanced representation.
pub fn plane_wave(x: &[f64], amplitude: &[C64], cell: usize, n: &[i64]) -> C64 {
    let phase: f64 = n.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum();
    amplitude[cell] * C64::from_polar(1.0, -phase)
}
