//! Band decomposition of the Bloch Hamiltonian and spectrum intervals.

use crate::lattice::{BlochStencil, LatticeName, PeriodicLatticeSpec};
use crate::linalg::{eigh, CMat, Eigh, C64};
use crate::quadrature::{GridStencil, TorusQuadrature};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Eigenvalue spacing below which bands are treated as degenerate.
pub const GAP_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct BandEigensystem {
    pub x: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<C64>>,
    /// `∇λ_j(x)`, withheld for bands within `GAP_TOL` of a neighbour.
    pub gradients: Vec<Option<Vec<f64>>>,
    pub min_gap: f64,
    /// Set when some pair of bands is within `GAP_TOL`.
    pub degenerate: bool,
}

impl BandEigensystem {
    pub fn projection(&self, j: usize) -> CMat {
        CMat::outer(&self.eigenvectors[j])
    }

    /// Projection onto the cluster of bands degenerate with band `j`.
    pub fn cluster_projection(&self, j: usize) -> CMat {
        let s = self.eigenvalues.len();
        let mut p = CMat::zeros(s);
        for k in 0..s {
            if (self.eigenvalues[k] - self.eigenvalues[j]).abs() <= GAP_TOL {
                p = p.add(&self.projection(k));
            }
        }
        p
    }
}

/// Eigen-decomposition together with Hellmann–Feynman gradients.
pub fn band_eigensystem(spec: &PeriodicLatticeSpec, x: &[f64]) -> BandEigensystem {
    band_eigensystem_with(&spec.stencil(), x)
}

pub fn band_eigensystem_with(stencil: &BlochStencil, x: &[f64]) -> BandEigensystem {
    let h = stencil.eval(x);
    let e = eigh(&h);
    let s = stencil.s;
    let eigenvalues: Vec<f64> = e.values[..s].to_vec();
    let eigenvectors: Vec<Vec<C64>> = (0..s).map(|j| e.vector(j)).collect();
    let min_gap = eigenvalues.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let dh = stencil.gradient(x);
    let gradients = (0..s)
        .map(|j| {
            let below = j == 0 || eigenvalues[j] - eigenvalues[j - 1] > GAP_TOL;
            let above = j + 1 == s || eigenvalues[j + 1] - eigenvalues[j] > GAP_TOL;
            (below && above).then(|| hf_gradient(&dh, &eigenvectors[j]))
        })
        .collect();
    BandEigensystem {
        x: x.to_vec(),
        eigenvalues,
        eigenvectors,
        gradients,
        min_gap,
        degenerate: min_gap <= GAP_TOL,
    }
}

/// `∂_a λ = Re(a* ∂_a H a)`.
pub fn hf_gradient(dh: &[CMat], a: &[C64]) -> Vec<f64> {
    dh.iter()
        .map(|m| {
            let ma = m.mul_vec(a);
            a.iter().zip(&ma).map(|(u, v)| (u.conj() * v).re).sum()
        })
        .collect()
}

/// Value, gradient and eigenvector of band `j` at `x`.
pub fn band_point(stencil: &BlochStencil, x: &[f64], j: usize) -> (f64, Vec<f64>, Vec<C64>) {
    let e = eigh(&stencil.eval(x));
    let a = e.vector(j);
    let g = hf_gradient(&stencil.gradient(x), &a);
    (e.values[j], g, a)
}

pub fn band_value(stencil: &BlochStencil, x: &[f64], j: usize) -> f64 {
    eigh(&stencil.eval(x)).values[j]
}

/// Sorted band energies on a periodic grid, `values[flat * s + j]`.
#[derive(Clone, Debug)]
pub struct BandGrid {
    pub quad: TorusQuadrature,
    pub s: usize,
    pub values: Vec<f64>,
}

impl BandGrid {
    pub fn new(spec: &PeriodicLatticeSpec, grid_n: usize) -> Self {
        let quad = TorusQuadrature::new(spec.dim, grid_n);
        let gs = GridStencil::new(&spec.stencil(), grid_n);
        let s = spec.cells();
        let rows: Vec<Vec<f64>> = (0..quad.len())
            .into_par_iter()
            .with_min_len(1024)
            .map(|k| {
                let e: Eigh = eigh(&gs.eval(&quad.index(k)));
                e.values[..s].to_vec()
            })
            .collect();
        Self { quad, s, values: rows.concat() }
    }

    pub fn value(&self, flat: usize, band: usize) -> f64 {
        self.values[flat * self.s + band]
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.quad.grid_n + i % self.quad.grid_n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandRange {
    pub band: usize,
    pub min: f64,
    pub max: f64,
    pub flat: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub bands: Vec<BandRange>,
    /// Union of dispersive band ranges, merged.
    pub intervals: Vec<(f64, f64)>,
    /// Energies of flat bands.
    pub flat_bands: Vec<f64>,
}

impl SpectrumReport {
    /// Union of all band ranges (dispersive and flat), merged.
    pub fn union(&self) -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = self.intervals.clone();
        v.extend(self.flat_bands.iter().map(|&e| (e, e)));
        merge_intervals(v)
    }

    pub fn contains(&self, e: f64) -> bool {
        self.union().iter().any(|&(a, b)| e >= a - 1e-12 && e <= b + 1e-12)
    }
}

/// Flat-band detection threshold on the grid range of a band.
const FLAT_TOL: f64 = 1e-10;

/// Band ranges from a `grid_n^d` sweep, with extrema polished by compass
/// search and Newton.
pub fn spectrum_bands(spec: &PeriodicLatticeSpec, grid_n: usize) -> SpectrumReport {
    let grid = BandGrid::new(spec, grid_n);
    let stencil = spec.stencil();
    let s = spec.cells();
    let mut bands = Vec::new();
    for j in 0..s {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut arg_lo, mut arg_hi) = (0, 0);
        for k in 0..grid.quad.len() {
            let v = grid.value(k, j);
            if v < lo {
                lo = v;
                arg_lo = k;
            }
            if v > hi {
                hi = v;
                arg_hi = k;
            }
        }
        let flat = hi - lo < FLAT_TOL;
        if !flat {
            let step = 2.0 * PI / grid_n as f64;
            let x_lo = grid.quad.node(arg_lo);
            let x_hi = grid.quad.node(arg_hi);
            lo = lo.min(pattern_extremum(&stencil, j, &x_lo, step, -1.0));
            hi = hi.max(pattern_extremum(&stencil, j, &x_hi, step, 1.0));
            if let Some((_, v)) = newton_critical(&stencil, j, &x_lo) {
                lo = lo.min(v);
            }
            if let Some((_, v)) = newton_critical(&stencil, j, &x_hi) {
                hi = hi.max(v);
            }
        }
        bands.push(BandRange { band: j, min: lo, max: hi, flat });
    }
    let intervals = merge_intervals(bands.iter().filter(|b| !b.flat).map(|b| (b.min, b.max)).collect());
    let mut flat_bands: Vec<f64> = bands.iter().filter(|b| b.flat).map(|b| 0.5 * (b.min + b.max)).collect();
    flat_bands.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    SpectrumReport { bands, intervals, flat_bands }
}

/// Compass search for an extremum of `sign · λ_j` from `x0`. Unlike Newton it
/// also converges to conical points, where bands touch.
pub fn pattern_extremum(stencil: &BlochStencil, j: usize, x0: &[f64], step: f64, sign: f64) -> f64 {
    let d = x0.len();
    let f = |x: &[f64]| sign * band_value(stencil, x, j);
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for a in 0..d {
        for sa in [-1.0, 1.0] {
            let mut e = vec![0.0; d];
            e[a] = sa;
            dirs.push(e.clone());
            for b in a + 1..d {
                for sb in [-1.0, 1.0] {
                    let mut e2 = e.clone();
                    e2[b] = sb;
                    dirs.push(e2);
                }
            }
        }
    }
    let mut x = x0.to_vec();
    let mut best = f(&x);
    let mut h = step;
    while h > 1e-13 {
        let improved = dirs.iter().find_map(|e| {
            let y: Vec<f64> = x.iter().zip(e).map(|(a, b)| a + h * b).collect();
            let v = f(&y);
            (v > best).then_some((y, v))
        });
        match improved {
            Some((y, v)) => {
                x = y;
                best = v;
            }
            None => h *= 0.5,
        }
    }
    sign * best
}

pub fn merge_intervals(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 + 1e-12 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Newton iteration on `∇λ_j = 0` from `x0`, with Hellmann–Feynman gradients
/// and a central-difference Hessian. Returns the critical point and value.
pub fn newton_critical(stencil: &BlochStencil, j: usize, x0: &[f64]) -> Option<(Vec<f64>, f64)> {
    let d = x0.len();
    let mut x = x0.to_vec();
    let h = 1e-5;
    for _ in 0..60 {
        let e = band_eigensystem_with(stencil, &x);
        let g = e.gradients[j].clone()?;
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn < 1e-12 {
            return Some((wrap(&x), e.eigenvalues[j]));
        }
        let mut hess = nalgebra::DMatrix::<f64>::zeros(d, d);
        for b in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[b] += h;
            xm[b] -= h;
            let gp = band_eigensystem_with(stencil, &xp).gradients[j].clone()?;
            let gm = band_eigensystem_with(stencil, &xm).gradients[j].clone()?;
            for a in 0..d {
                hess[(a, b)] = (gp[a] - gm[a]) / (2.0 * h);
            }
        }
        let hs = 0.5 * (&hess + hess.transpose());
        let step = hs.lu().solve(&nalgebra::DVector::from_vec(g.iter().map(|v| -v).collect()))?;
        let mut step: Vec<f64> = step.iter().copied().collect();
        let norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return None;
        }
        if norm > 0.5 {
            step.iter_mut().for_each(|v| *v *= 0.5 / norm);
        }
        for (xi, si) in x.iter_mut().zip(&step) {
            *xi += si;
        }
        if norm < 1e-14 {
            let e = band_eigensystem_with(stencil, &x);
            return Some((wrap(&x), e.eigenvalues[j]));
        }
    }
    let e = band_eigensystem_with(stencil, &x);
    let g = e.gradients[j].clone()?;
    (g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-9).then(|| (wrap(&x), e.eigenvalues[j]))
}

pub fn wrap(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.rem_euclid(2.0 * PI)).collect()
}

/// Closed-form spectrum of the free operator for each catalog lattice.
pub fn catalog_spectrum(name: LatticeName) -> Vec<(f64, f64)> {
    match name {
        LatticeName::Triangular | LatticeName::Kagome => vec![(-1.0, 0.5)],
        _ => vec![(-1.0, 1.0)],
    }
}
