//! Threshold sets: the tabulated catalog values and numerically located
//! critical values of the bands.

use crate::bands::{band_eigensystem_with, newton_critical, wrap, BandGrid};
use crate::lattice::{BlochStencil, LatticeName, PeriodicLatticeSpec};
use crate::quadrature::TorusQuadrature;
use serde::{Deserialize, Serialize};

/// Minimum energy distance from `t0` demanded by surface computations.
pub const THR_EXCL: f64 = 1e-3;

/// Exceptional set: finite list or the band `lo <= |λ| <= hi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExceptionalSet {
    Points { values: Vec<f64> },
    AbsBand { lo: f64, hi: f64 },
}

impl ExceptionalSet {
    pub fn contains(&self, e: f64) -> bool {
        match self {
            ExceptionalSet::Points { values } => values.iter().any(|v| (v - e).abs() < 1e-12),
            ExceptionalSet::AbsBand { lo, hi } => e.abs() >= lo - 1e-12 && e.abs() <= hi + 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub name: LatticeName,
    pub dim: usize,
    /// Tabulated `T0` as printed, including its symbolic form.
    pub t0_printed: String,
    pub t0: Vec<f64>,
    /// Real critical values implied by the band formulas (parity-restricted
    /// for the square lattice).
    pub t0_restricted: Vec<f64>,
    pub t1_printed: String,
    pub t1: ExceptionalSet,
    /// Numerically located critical values, when requested.
    pub t0_numeric: Option<Vec<f64>>,
    /// Numeric values not found in `t0` (reported, not asserted).
    pub discrepancies: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    Catalog,
    Numeric,
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    v
}

fn plus_minus(v: impl IntoIterator<Item = f64>) -> Vec<f64> {
    v.into_iter().flat_map(|x| [x, -x]).collect()
}

/// Catalog tables for each lattice.
pub fn catalog(name: LatticeName, dim: usize) -> ThresholdSet {
    let d = dim as f64;
    let di = dim as i64;
    let (t0_printed, t0, t0_restricted, t1_printed, t1): (&str, Vec<f64>, Vec<f64>, &str, ExceptionalSet) =
        match name {
            LatticeName::Square => (
                "{n/d ; -d <= n <= d}",
                (-di..=di).map(|n| n as f64 / d).collect(),
                (0..=di).map(|m| (-di + 2 * m) as f64 / d).collect(),
                "{-1, 1}",
                ExceptionalSet::Points { values: vec![-1.0, 1.0] },
            ),
            LatticeName::Triangular => (
                "{-1, 1/3, 1/2}",
                vec![-1.0, 1.0 / 3.0, 0.5],
                vec![-1.0, 1.0 / 3.0, 0.5],
                "{-1, 1/2}",
                ExceptionalSet::Points { values: vec![-1.0, 0.5] },
            ),
            LatticeName::Hexagonal => (
                "{-1, -1/3, 0, 1/3, 1}",
                vec![-1.0, -1.0 / 3.0, 0.0, 1.0 / 3.0, 1.0],
                vec![-1.0, -1.0 / 3.0, 0.0, 1.0 / 3.0, 1.0],
                "{-1, 0, 1}",
                ExceptionalSet::Points { values: vec![-1.0, 0.0, 1.0] },
            ),
            LatticeName::Kagome => (
                "{-1, -1/4, -1/2, 0, 1/2}",
                vec![-1.0, -0.25, -0.5, 0.0, 0.5],
                vec![-1.0, -0.5, -0.25, 0.0, 0.5],
                "{-1, -1/4, 1/2}",
                ExceptionalSet::Points { values: vec![-1.0, -0.25, 0.5] },
            ),
            LatticeName::Diamond => {
                let mut v = plus_minus((0..=di).map(|m| (di - 2 * m + 1) as f64 / (d + 1.0)));
                if dim.is_multiple_of(2) {
                    v.push(0.0);
                }
                (
                    "{±(l+1)/(d+1) ; l = d, d-2, ..., -d} ∪ {0 if d even}",
                    v.clone(),
                    v,
                    "{-1, 0, 1}",
                    ExceptionalSet::Points { values: vec![-1.0, 0.0, 1.0] },
                )
            }
            LatticeName::SubdivisionSquare => {
                let mut v = plus_minus((1..=di).map(|n| n as f64 / d));
                v.push(0.0);
                let mut r = plus_minus((1..=2 * di).map(|n| (n as f64 / (2.0 * d)).sqrt()));
                r.push(0.0);
                (
                    "{0, ±n/d ; n = 1, ..., d}",
                    v,
                    r,
                    "{0, ±1}",
                    ExceptionalSet::Points { values: vec![-1.0, 0.0, 1.0] },
                )
            }
            LatticeName::LadderSquare => {
                let k = 2.0 * d + 1.0;
                let mut v = vec![-1.0, 1.0];
                v.extend((0..2 * di).map(|m| (-2 * di + 1 + 2 * m) as f64 / k));
                (
                    "{-1, (-2d+1)/(2d+1), (-2d+3)/(2d+1), ..., (2d-1)/(2d+1), 1}",
                    v.clone(),
                    v,
                    "{(2d-1)/(2d+1) <= |λ| <= 1}",
                    ExceptionalSet::AbsBand { lo: (2.0 * d - 1.0) / k, hi: 1.0 },
                )
            }
            LatticeName::Graphite => (
                "{0, ±1/4, ±1/2, ±1}",
                vec![0.0, 0.25, -0.25, 0.5, -0.5, 1.0, -1.0],
                vec![0.0, 0.25, -0.25, 0.5, -0.5, 1.0, -1.0],
                "{1/2 <= |λ| <= 1}",
                ExceptionalSet::AbsBand { lo: 0.5, hi: 1.0 },
            ),
        };
    ThresholdSet {
        name,
        dim,
        t0_printed: t0_printed.to_string(),
        t0: sorted(t0),
        t0_restricted: sorted(t0_restricted),
        t1_printed: t1_printed.to_string(),
        t1,
        t0_numeric: None,
        discrepancies: Vec::new(),
    }
}

/// Catalog or numeric threshold set.
pub fn thresholds(spec: &PeriodicLatticeSpec, mode: ThresholdMode) -> ThresholdSet {
    let mut set = catalog(spec.name, spec.dim);
    if mode == ThresholdMode::Numeric {
        let seeds = if spec.dim <= 2 { 24 } else { 12 };
        let numeric = numeric_critical_values(spec, seeds);
        set.discrepancies =
            numeric.iter().copied().filter(|v| !set.t0.iter().any(|t| (t - v).abs() < 1e-6)).collect();
        set.t0_numeric = Some(numeric);
    }
    set
}

/// Energies every surface computation must avoid: printed `T0`, the
/// restricted set and the flat-band energies.
pub fn excluded_energies(spec: &PeriodicLatticeSpec) -> Vec<f64> {
    let c = catalog(spec.name, spec.dim);
    let mut v = c.t0.clone();
    v.extend(c.t0_restricted.iter().copied());
    sorted(v)
}

/// Nearest excluded energy and its distance.
pub fn nearest_threshold(spec: &PeriodicLatticeSpec, e: f64) -> (f64, f64) {
    excluded_energies(spec)
        .into_iter()
        .map(|t| (t, (t - e).abs()))
        .fold((f64::NAN, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
}

/// Critical values of every band: Newton on `∇λ_j = 0` from each seed,
/// band-touching points located by minimising the squared gap, plus flat
/// bands. Deduplicated at `1e-8`.
pub fn numeric_critical_values(spec: &PeriodicLatticeSpec, seeds_per_axis: usize) -> Vec<f64> {
    let stencil = spec.stencil();
    let s = spec.cells();
    let quad = TorusQuadrature::new(spec.dim, seeds_per_axis);
    // Offset seeds so none sits exactly on a symmetry point.
    let jitter = 0.037;
    let seeds: Vec<Vec<f64>> =
        (0..quad.len()).map(|k| quad.node(k).into_iter().map(|v| v + jitter).collect()).collect();
    let mut values = Vec::new();
    let grid = BandGrid::new(spec, 64);
    for j in 0..s {
        let (lo, hi) = (0..grid.quad.len())
            .map(|k| grid.value(k, j))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if hi - lo < 1e-10 {
            values.push(0.5 * (lo + hi));
            continue;
        }
        for seed in &seeds {
            if let Some((_, v)) = newton_critical(&stencil, j, seed) {
                values.push(v);
            }
        }
    }
    values.extend(touching_values(spec, &stencil, &grid));
    dedup(values, 1e-8)
}

fn dedup(mut v: Vec<f64>, tol: f64) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for x in v {
        if out.last().is_none_or(|l| x - l > tol) {
            out.push(x);
        }
    }
    out
}

/// Energies where adjacent bands touch.
fn touching_values(spec: &PeriodicLatticeSpec, stencil: &BlochStencil, grid: &BandGrid) -> Vec<f64> {
    let s = spec.cells();
    let d = spec.dim;
    let n = grid.quad.grid_n;
    let mut out = Vec::new();
    for j in 0..s.saturating_sub(1) {
        let gap = |k: usize| grid.value(k, j + 1) - grid.value(k, j);
        for k in 0..grid.quad.len() {
            let g = gap(k);
            if g > 0.2 {
                continue;
            }
            let idx = grid.quad.index(k);
            let is_min = (0..d).all(|a| {
                [n - 1, 1].iter().all(|&step| {
                    let mut nb = idx.clone();
                    nb[a] = (nb[a] + step) % n;
                    gap(grid.flat(&nb)) >= g
                })
            });
            if !is_min {
                continue;
            }
            if let Some(v) = minimise_gap(stencil, j, &grid.quad.node(k)) {
                out.push(v);
            }
        }
    }
    out
}

/// Newton on the gradient of `(λ_{j+1} - λ_j)²` with finite differences.
/// Returns the midpoint energy when the gap closes below `1e-7`.
fn minimise_gap(stencil: &BlochStencil, j: usize, x0: &[f64]) -> Option<f64> {
    let d = x0.len();
    let f = |x: &[f64]| {
        let e = band_eigensystem_with(stencil, x);
        let g = e.eigenvalues[j + 1] - e.eigenvalues[j];
        (g * g, 0.5 * (e.eigenvalues[j + 1] + e.eigenvalues[j]), g)
    };
    let mut x = x0.to_vec();
    let h = 1e-4;
    for _ in 0..200 {
        let (f0, mid, gap) = f(&x);
        if gap < 1e-9 {
            return Some(mid);
        }
        let mut grad = vec![0.0; d];
        let mut hess = nalgebra::DMatrix::<f64>::zeros(d, d);
        for a in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[a] += h;
            xm[a] -= h;
            let (fp, _, _) = f(&xp);
            let (fm, _, _) = f(&xm);
            grad[a] = (fp - fm) / (2.0 * h);
            hess[(a, a)] = (fp - 2.0 * f0 + fm) / (h * h);
            for b in 0..a {
                let mut pp = x.clone();
                let mut pm = x.clone();
                let mut mp = x.clone();
                let mut mm = x.clone();
                pp[a] += h;
                pp[b] += h;
                pm[a] += h;
                pm[b] -= h;
                mp[a] -= h;
                mp[b] += h;
                mm[a] -= h;
                mm[b] -= h;
                let v = (f(&pp).0 - f(&pm).0 - f(&mp).0 + f(&mm).0) / (4.0 * h * h);
                hess[(a, b)] = v;
                hess[(b, a)] = v;
            }
        }
        let step = hess.lu().solve(&nalgebra::DVector::from_vec(grad.iter().map(|v| -v).collect()))?;
        let mut step: Vec<f64> = step.iter().copied().collect();
        let norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return None;
        }
        if norm > 0.3 {
            step.iter_mut().for_each(|v| *v *= 0.3 / norm);
        }
        let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        if f(&trial).0 > f0 {
            // Newton overshoots on quartic touchings; fall back to halving.
            let half: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + 0.5 * b).collect();
            if f(&half).0 >= f0 {
                break;
            }
            x = half;
        } else {
            x = trial;
        }
        if norm < 1e-15 {
            break;
        }
    }
    let (_, mid, gap) = f(&wrap(&x));
    (gap < 1e-7).then_some(mid)
}

/// Whether two value sets agree as sets within `tol`.
pub fn sets_match(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().all(|x| b.iter().any(|y| (x - y).abs() < tol)) && b.iter().all(|y| a.iter().any(|x| (x - y).abs() < tol))
}
