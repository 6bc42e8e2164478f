//! Fermi-surface meshes `M_{λ,j} = {x : λ_j(x) = λ}` with quadrature
//! weights for the co-area measure `dM/|∇λ_j|`.
//!
//! In two dimensions the level curve is located cell by cell with marching
//! squares on a periodic grid of band values (crossings refined to machine
//! precision). Each cell piece is the graph of a function over its chord, so
//! Gauss–Legendre nodes on the chord are projected along the chord normal
//! onto the curve; the co-area weight of a node is `|chord|·w/|∇λ·n|`.
//! In three dimensions the same projection is applied to the triangles of a
//! marching-tetrahedra surface.

use crate::bands::{band_point, wrap, BandGrid};
use crate::error::{Error, Result};
use crate::lattice::{BlochStencil, PeriodicLatticeSpec};
use crate::linalg::C64;
use crate::quadrature::{gauss_legendre, OffsetBox};
use crate::thresholds::{nearest_threshold, THR_EXCL};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

/// Tolerance on `|λ_j(x_k) - λ|` at every node.
pub const SURF_TOL: f64 = 1e-10;

/// Gauss–Legendre points per curve segment used by default.
pub const DEFAULT_ORDER: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FermiNode {
    pub band: usize,
    pub x: Vec<f64>,
    /// Surface-measure weight (arclength in 2D, area in 3D).
    pub weight: f64,
    /// Co-area weight `weight / |∇λ_j|`.
    pub coarea_weight: f64,
    pub gradient: Vec<f64>,
    /// Unit vector `∇λ_j/|∇λ_j|`.
    pub conormal: Vec<f64>,
    /// Gauge-fixed eigenvector `a_j(x)`.
    pub amplitude: Vec<C64>,
    /// `|λ_j(x) - λ|`.
    pub energy_defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FermiSurfaceMesh {
    pub energy: f64,
    pub dim: usize,
    pub resolution: usize,
    /// Nodes sorted band-major.
    pub nodes: Vec<FermiNode>,
    /// Number of projections that failed to converge (expected zero).
    pub dropped: usize,
}

impl FermiSurfaceMesh {
    pub fn band_count(&self, band: usize) -> usize {
        self.nodes.iter().filter(|n| n.band == band).count()
    }

    /// `Σ_k w_k/|∇λ_j(x_k)|` restricted to one band.
    pub fn band_mass(&self, band: usize) -> f64 {
        let w: Vec<f64> = self.nodes.iter().filter(|n| n.band == band).map(|n| n.coarea_weight).collect();
        crate::linalg::pairwise_sum(&w)
    }

    pub fn total_mass(&self) -> f64 {
        let w: Vec<f64> = self.nodes.iter().map(|n| n.coarea_weight).collect();
        crate::linalg::pairwise_sum(&w)
    }

    pub fn total_measure(&self) -> f64 {
        let w: Vec<f64> = self.nodes.iter().map(|n| n.weight).collect();
        crate::linalg::pairwise_sum(&w)
    }

    /// `Σ_k μ_k e^{-i n·x_k} P_j(x_k)` for every `|n|_∞ <= radius`, row-major
    /// `s x s` blocks; `weights` replaces `μ_k` when given.
    pub fn fourier_projections(&self, s: usize, radius: i64, weights: Option<&[f64]>) -> Vec<C64> {
        let obox = OffsetBox { d: self.dim, radius };
        let side = obox.side();
        let len = obox.len() * s * s;
        const CHUNK: usize = 64;
        let parts: Vec<Vec<C64>> = self
            .nodes
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(ci, chunk)| {
                let mut acc = vec![C64::default(); len];
                for (off, node) in chunk.iter().enumerate() {
                    let mu = weights.map_or(node.coarea_weight, |w| w[ci * CHUNK + off]);
                    let proj: Vec<C64> = (0..s * s)
                        .map(|p| node.amplitude[p / s] * node.amplitude[p % s].conj() * mu)
                        .collect();
                    let axis: Vec<Vec<C64>> = node
                        .x
                        .iter()
                        .map(|&xa| (0..side).map(|k| C64::from_polar(1.0, -((k as i64 - radius) as f64) * xa)).collect())
                        .collect();
                    for f in 0..obox.len() {
                        let mut rem = f;
                        let mut ph = C64::new(1.0, 0.0);
                        for a in (0..self.dim).rev() {
                            ph *= axis[a][rem % side];
                            rem /= side;
                        }
                        for (p, &v) in proj.iter().enumerate() {
                            acc[f * s * s + p] += v * ph;
                        }
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![C64::default(); len];
        for p in &parts {
            for (a, &b) in out.iter_mut().zip(p) {
                *a += b;
            }
        }
        out
    }
}

/// Checks the admissibility of `energy` for surface computations.
pub fn check_energy(spec: &PeriodicLatticeSpec, energy: f64) -> Result<()> {
    let (t, dist) = nearest_threshold(spec, energy);
    if dist <= THR_EXCL {
        return Err(Error::EnergyAtThreshold { energy, threshold: t, distance: dist });
    }
    Ok(())
}

/// Fermi surface at `energy` using a `resolution^d` marching grid.
pub fn fermi_surface(spec: &PeriodicLatticeSpec, energy: f64, resolution: usize) -> Result<FermiSurfaceMesh> {
    if !(2..=3).contains(&spec.dim) {
        return Err(Error::MeshUnavailable { dim: spec.dim });
    }
    check_energy(spec, energy)?;
    let grid = BandGrid::new(spec, resolution);
    let mesh = mesh_from_grid(&spec.stencil(), &grid, energy, DEFAULT_ORDER);
    if mesh.nodes.is_empty() {
        return Err(Error::EnergyOutsideBand { energy });
    }
    Ok(mesh)
}

/// Mesh every band at `energy` from a precomputed band grid; bands that do
/// not reach `energy` contribute no nodes. No threshold check is made.
pub fn mesh_from_grid(stencil: &BlochStencil, grid: &BandGrid, energy: f64, order: usize) -> FermiSurfaceMesh {
    let mut nodes = Vec::new();
    let mut dropped = 0;
    for j in 0..grid.s {
        let (n, dr) = match grid.quad.d {
            2 => march_squares(stencil, grid, j, energy, order),
            3 => march_tetrahedra(stencil, grid, j, energy),
            d => panic!("meshing unsupported in dimension {d}"),
        };
        nodes.extend(n);
        dropped += dr;
    }
    FermiSurfaceMesh { energy, dim: grid.quad.d, resolution: grid.quad.grid_n, nodes, dropped }
}

/// Root of `λ_j(p + τ(q - p)) = e` for `τ ∈ [0, 1]`, given a sign change.
fn edge_root(stencil: &BlochStencil, j: usize, e: f64, p: &[f64], q: &[f64], fp: f64, fq: f64) -> f64 {
    let dir: Vec<f64> = p.iter().zip(q).map(|(a, b)| b - a).collect();
    let at = |t: f64| -> Vec<f64> { p.iter().zip(&dir).map(|(a, b)| a + t * b).collect() };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let (mut flo, mut fhi) = (fp, fq);
    let mut t = fp / (fp - fq);
    for _ in 0..60 {
        let (v, g, _) = band_point(stencil, &at(t), j);
        let f = v - e;
        if f == 0.0 {
            return t;
        }
        if (f < 0.0) == (flo < 0.0) {
            lo = t;
            flo = f;
        } else {
            hi = t;
            fhi = f;
        }
        let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let newton = t - f / slope;
        t = if slope.is_finite() && slope != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            let sec = lo - flo * (hi - lo) / (fhi - flo);
            if sec > lo && sec < hi { sec } else { 0.5 * (lo + hi) }
        };
        if f.abs() < 1e-15 || hi - lo < 1e-16 {
            break;
        }
    }
    t
}

/// Solve `λ_j(base + y·normal) = e` for `y` near zero.
fn project(stencil: &BlochStencil, j: usize, e: f64, base: &[f64], normal: &[f64], reach: f64) -> Option<Vec<f64>> {
    let at = |y: f64| -> Vec<f64> { base.iter().zip(normal).map(|(a, b)| a + y * b).collect() };
    let mut y = 0.0;
    for _ in 0..40 {
        let (v, g, _) = band_point(stencil, &at(y), j);
        let f = v - e;
        if f.abs() < 1e-14 {
            return Some(at(y));
        }
        let slope: f64 = g.iter().zip(normal).map(|(a, b)| a * b).sum();
        if slope.abs() < 1e-14 {
            break;
        }
        y -= f / slope;
        if y.abs() > reach {
            break;
        }
    }
    // Bisection fallback on a sign change within the reach.
    let f = |y: f64| band_point(stencil, &at(y), j).0 - e;
    let steps = 16;
    let mut prev = (-reach, f(-reach));
    for k in 1..=steps {
        let yk = -reach + 2.0 * reach * k as f64 / steps as f64;
        let fk = f(yk);
        if (fk < 0.0) != (prev.1 < 0.0) {
            let (mut a, mut b, mut fa) = (prev.0, yk, prev.1);
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                let fm = f(m);
                if (fm < 0.0) == (fa < 0.0) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            let p = at(0.5 * (a + b));
            return (f(0.5 * (a + b)).abs() < SURF_TOL).then_some(p);
        }
        prev = (yk, fk);
    }
    None
}

fn make_node(stencil: &BlochStencil, j: usize, e: f64, x: &[f64], scale: f64, normal: &[f64]) -> Option<FermiNode> {
    let (v, g, a) = band_point(stencil, x, j);
    let gn = g.iter().map(|t| t * t).sum::<f64>().sqrt();
    let gdotn: f64 = g.iter().zip(normal).map(|(p, q)| p * q).sum::<f64>().abs();
    if gn == 0.0 || gdotn == 0.0 {
        return None;
    }
    let coarea = scale / gdotn;
    Some(FermiNode {
        band: j,
        x: wrap(x),
        weight: coarea * gn,
        coarea_weight: coarea,
        conormal: g.iter().map(|t| t / gn).collect(),
        gradient: g,
        amplitude: a,
        energy_defect: (v - e).abs(),
    })
}

fn march_squares(stencil: &BlochStencil, grid: &BandGrid, j: usize, e: f64, order: usize) -> (Vec<FermiNode>, usize) {
    let n = grid.quad.grid_n;
    let h = 2.0 * PI / n as f64;
    let f = |i: usize, k: usize| grid.value((i % n) * n + (k % n), j) - e;
    let pos = |v: f64| v >= 0.0;
    // Edge crossings keyed by (axis, i, k): parameter along the edge.
    let mut edges: Vec<(usize, usize, usize)> = Vec::new();
    for i in 0..n {
        for k in 0..n {
            if pos(f(i, k)) != pos(f(i + 1, k)) {
                edges.push((0, i, k));
            }
            if pos(f(i, k)) != pos(f(i, k + 1)) {
                edges.push((1, i, k));
            }
        }
    }
    if edges.is_empty() {
        return (Vec::new(), 0);
    }
    let roots: HashMap<(usize, usize, usize), f64> = edges
        .par_iter()
        .map(|&(axis, i, k)| {
            let p = [i as f64 * h, k as f64 * h];
            let q = if axis == 0 { [p[0] + h, p[1]] } else { [p[0], p[1] + h] };
            let (fp, fq) = if axis == 0 { (f(i, k), f(i + 1, k)) } else { (f(i, k), f(i, k + 1)) };
            ((axis, i, k), edge_root(stencil, j, e, &p, &q, fp, fq))
        })
        .collect();
    let rule = gauss_legendre(order.max(2), 0.0, 1.0);
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |k| (i, k))).collect();
    let results: Vec<(Vec<FermiNode>, usize)> = cells
        .par_chunks(256)
        .map(|chunk| {
            let mut out = Vec::new();
            let mut dropped = 0;
            for &(i, k) in chunk {
                let fc = [f(i, k), f(i + 1, k), f(i + 1, k + 1), f(i, k + 1)];
                let sg: Vec<bool> = fc.iter().map(|&v| pos(v)).collect();
                if sg.iter().all(|&s| s == sg[0]) {
                    continue;
                }
                let (x0, y0) = (i as f64 * h, k as f64 * h);
                let (i1, k1) = ((i + 1) % n, (k + 1) % n);
                // Ring edges: bottom, right, top, left.
                let pt = |edge: usize| -> Option<[f64; 2]> {
                    match edge {
                        0 => roots.get(&(0, i, k)).map(|t| [x0 + t * h, y0]),
                        1 => roots.get(&(1, i1, k)).map(|t| [x0 + h, y0 + t * h]),
                        2 => roots.get(&(0, i, k1)).map(|t| [x0 + t * h, y0 + h]),
                        _ => roots.get(&(1, i, k)).map(|t| [x0, y0 + t * h]),
                    }
                };
                let present: Vec<usize> = (0..4).filter(|&ed| sg[ed] != sg[(ed + 1) % 4]).collect();
                let pairs: Vec<(usize, usize)> = if present.len() == 2 {
                    vec![(present[0], present[1])]
                } else {
                    let denom = fc[0] + fc[2] - fc[1] - fc[3];
                    let saddle = if denom != 0.0 { (fc[0] * fc[2] - fc[1] * fc[3]) / denom } else { 0.0 };
                    if pos(saddle) == sg[0] {
                        vec![(0, 1), (2, 3)]
                    } else {
                        vec![(3, 0), (1, 2)]
                    }
                };
                for (ea, eb) in pairs {
                    let (Some(pa), Some(pb)) = (pt(ea), pt(eb)) else {
                        dropped += rule.len();
                        continue;
                    };
                    let chord = [pb[0] - pa[0], pb[1] - pa[1]];
                    let len = (chord[0] * chord[0] + chord[1] * chord[1]).sqrt();
                    if len == 0.0 {
                        continue;
                    }
                    let normal = [-chord[1] / len, chord[0] / len];
                    for &(t, w) in &rule {
                        let base = [pa[0] + t * chord[0], pa[1] + t * chord[1]];
                        let node = project(stencil, j, e, &base, &normal, 1.5 * h)
                            .and_then(|x| make_node(stencil, j, e, &x, len * w, &normal));
                        match node {
                            Some(nd) if nd.energy_defect < SURF_TOL => out.push(nd),
                            _ => dropped += 1,
                        }
                    }
                }
            }
            (out, dropped)
        })
        .collect();
    let dropped = results.iter().map(|r| r.1).sum();
    (results.into_iter().flat_map(|r| r.0).collect(), dropped)
}

/// Kuhn triangulation of the unit cube: six tetrahedra along the main
/// diagonal, given as corner bit-masks.
const KUHN: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

/// Symmetric 3-point rule on a triangle (degree 2), barycentric.
const TRI_RULE: [([f64; 3], f64); 3] = [
    ([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], 1.0 / 3.0),
];

fn march_tetrahedra(stencil: &BlochStencil, grid: &BandGrid, j: usize, e: f64) -> (Vec<FermiNode>, usize) {
    let n = grid.quad.grid_n;
    let h = 2.0 * PI / n as f64;
    let fval = |c: [usize; 3]| grid.value(((c[0] % n) * n + (c[1] % n)) * n + (c[2] % n), j) - e;
    let cubes: Vec<[usize; 3]> =
        (0..n).flat_map(|a| (0..n).flat_map(move |b| (0..n).map(move |c| [a, b, c]))).collect();
    let results: Vec<(Vec<FermiNode>, usize)> = cubes
        .par_chunks(512)
        .map(|chunk| {
            let mut out = Vec::new();
            let mut dropped = 0;
            for &cube in chunk {
                let corner = |bits: usize| -> [usize; 3] {
                    [cube[0] + (bits & 1), cube[1] + ((bits >> 1) & 1), cube[2] + ((bits >> 2) & 1)]
                };
                let vals: Vec<f64> = (0..8).map(|b| fval(corner(b))).collect();
                if vals.iter().all(|&v| v >= 0.0) || vals.iter().all(|&v| v < 0.0) {
                    continue;
                }
                let coord = |bits: usize| -> [f64; 3] {
                    let c = corner(bits);
                    [c[0] as f64 * h, c[1] as f64 * h, c[2] as f64 * h]
                };
                let cross = |a: usize, b: usize| -> [f64; 3] {
                    let (p, q) = (coord(a), coord(b));
                    let t = edge_root(stencil, j, e, &p, &q, vals[a], vals[b]);
                    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]), p[2] + t * (q[2] - p[2])]
                };
                for tet in KUHN {
                    let (inside, outside): (Vec<usize>, Vec<usize>) = tet.iter().partition(|&&b| vals[b] >= 0.0);
                    let tris: Vec<[[f64; 3]; 3]> = match (inside.len(), outside.len()) {
                        (1, 3) | (3, 1) => {
                            let (lone, rest) = if inside.len() == 1 { (inside[0], &outside) } else { (outside[0], &inside) };
                            vec![[cross(lone, rest[0]), cross(lone, rest[1]), cross(lone, rest[2])]]
                        }
                        (2, 2) => {
                            let (p, q, r, t) = (inside[0], inside[1], outside[0], outside[1]);
                            let quad = [cross(p, r), cross(p, t), cross(q, t), cross(q, r)];
                            vec![[quad[0], quad[1], quad[2]], [quad[0], quad[2], quad[3]]]
                        }
                        _ => Vec::new(),
                    };
                    for tri in tris {
                        let u = sub3(tri[1], tri[0]);
                        let v = sub3(tri[2], tri[0]);
                        let nrm = cross3(u, v);
                        let twice_area = norm3(nrm);
                        if twice_area < 1e-300 {
                            continue;
                        }
                        let normal = [nrm[0] / twice_area, nrm[1] / twice_area, nrm[2] / twice_area];
                        for (bary, w) in TRI_RULE {
                            let base: Vec<f64> =
                                (0..3).map(|a| bary[0] * tri[0][a] + bary[1] * tri[1][a] + bary[2] * tri[2][a]).collect();
                            let node = project(stencil, j, e, &base, &normal, 1.5 * h)
                                .and_then(|x| make_node(stencil, j, e, &x, 0.5 * twice_area * w, &normal));
                            match node {
                                Some(nd) if nd.energy_defect < SURF_TOL => out.push(nd),
                                _ => dropped += 1,
                            }
                        }
                    }
                }
            }
            (out, dropped)
        })
        .collect();
    let dropped = results.iter().map(|r| r.1).sum();
    (results.into_iter().flat_map(|r| r.0).collect(), dropped)
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm3(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Density of states `ρ(λ) = (2π)^{-d} Σ_j ∫_{M_{λ,j}} dM/|∇λ_j|` at each
/// energy; energies outside the spectrum give zero.
pub fn density_of_states(spec: &PeriodicLatticeSpec, energies: &[f64], resolution: usize) -> Result<Vec<f64>> {
    if !(2..=3).contains(&spec.dim) {
        return Err(Error::MeshUnavailable { dim: spec.dim });
    }
    for &e in energies {
        check_energy(spec, e)?;
    }
    let grid = BandGrid::new(spec, resolution);
    let stencil = spec.stencil();
    let norm = (2.0 * PI).powi(spec.dim as i32);
    Ok(energies.iter().map(|&e| mesh_from_grid(&stencil, &grid, e, 2).total_mass() / norm).collect())
}

/// `∫ ρ(λ) dλ` over the dispersive spectrum, panel by panel between
/// consecutive excluded energies. Each panel is mapped by the smoothstep
/// `3u² - 2u³`, whose vanishing Jacobian at the ends absorbs band-edge jumps
/// and logarithmic van Hove peaks. Nodes close to a threshold are meshed
/// anyway: their weight carries the Jacobian factor `6u(1 - u)`.
pub fn dos_total_mass(spec: &PeriodicLatticeSpec, nodes_per_panel: usize, resolution: usize) -> Result<f64> {
    if !(2..=3).contains(&spec.dim) {
        return Err(Error::MeshUnavailable { dim: spec.dim });
    }
    let report = crate::bands::spectrum_bands(spec, 64);
    let mut cuts = crate::thresholds::excluded_energies(spec);
    for &(a, b) in &report.intervals {
        cuts.push(a);
        cuts.push(b);
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let grid = BandGrid::new(spec, resolution);
    let stencil = spec.stencil();
    let norm = (2.0 * PI).powi(spec.dim as i32);
    let rule = gauss_legendre(nodes_per_panel, 0.0, 1.0);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !report.intervals.iter().any(|&(lo, hi)| a >= lo - 1e-12 && b <= hi + 1e-12) {
            continue;
        }
        for &(u, wu) in &rule {
            let e = a + (b - a) * u * u * (3.0 - 2.0 * u);
            let jac = (b - a) * 6.0 * u * (1.0 - u);
            total += wu * jac * mesh_from_grid(&stencil, &grid, e, 2).total_mass() / norm;
        }
    }
    Ok(total)
}
