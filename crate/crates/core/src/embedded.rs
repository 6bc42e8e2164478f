//! Explicit eigenvalue constructions: embedded eigenvalues with
//! superpolynomially decaying eigenvectors on the ladder and graphite
//! lattices, and compactly supported eigenvectors on the Kagome and
//! subdivision lattices.

use crate::besov::{classify_decay, DecayClass};
use crate::error::{Error, Result};
use crate::lattice::{build_lattice, LatticeName};
use crate::linalg::C64;
use crate::perturbation::{PerturbationSpec, PerturbedGraph, PotentialEntry, Vertex};
use crate::quadrature::{torus_fourier_raw, OffsetBox};
use crate::spectral::LatticeVector;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Trapezoid grid per axis for the Fourier coefficients of the analytic
/// symbols.
pub const SYMBOL_GRID: usize = 512;
/// Residual bound demanded of every construction.
pub const RESID_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    Ladder,
    Graphite,
    KagomeHexagon,
    SubdivisionPlaquette,
}

impl std::str::FromStr for Construction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ladder" => Ok(Self::Ladder),
            "graphite" => Ok(Self::Graphite),
            "kagome-hexagon" => Ok(Self::KagomeHexagon),
            "subdivision-plaquette" => Ok(Self::SubdivisionPlaquette),
            _ => Err(Error::UnknownIdentity(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn value(&self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

impl std::str::FromStr for Sign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+" | "plus" => Ok(Sign::Plus),
            "-" | "minus" => Ok(Sign::Minus),
            _ => Err(Error::UnknownIdentity(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedEigenpair {
    pub construction: Construction,
    pub lattice: LatticeName,
    pub dim: usize,
    pub energy: f64,
    pub vector: LatticeVector,
    /// `‖(H - λ) u‖ / ‖u‖` over every row, including rows that see the
    /// truncation of `u` at the window edge.
    pub residual: f64,
    pub window_radius: usize,
    pub decay: DecayClass,
}

/// `‖(H - λ) u‖₂ / ‖u‖₂` with `u` finitely supported.
pub fn relative_residual(graph: &PerturbedGraph, u: &LatticeVector, energy: f64) -> f64 {
    let hu = graph.apply(u);
    let r = LatticeVector::from_entries(hu.iter().map(|(v, x)| (v.clone(), *x)).chain(u.iter().map(|(v, x)| (v.clone(), -x * energy))));
    r.norm_sqr().sqrt() / u.norm_sqr().sqrt()
}

fn finish(
    construction: Construction,
    lattice: LatticeName,
    dim: usize,
    pert: PerturbationSpec,
    energy: f64,
    vector: LatticeVector,
    window_radius: usize,
) -> Result<(PerturbationSpec, EmbeddedEigenpair)> {
    let spec = build_lattice(lattice, dim)?;
    let graph = PerturbedGraph::new(&spec, &pert)?;
    let residual = relative_residual(&graph, &vector, energy);
    let (decay, _, _) = classify_decay(&vector, window_radius)?;
    Ok((pert, EmbeddedEigenpair { construction, lattice, dim, energy, vector, residual, window_radius, decay }))
}

/// `(2π)^{-d/2} ∫ f(x) e^{-i n·x} dx` for `|n|_∞ <= radius`, `width`
/// components per offset.
fn fourier_coefficients(d: usize, radius: i64, width: usize, f: impl Fn(&[f64], &mut [C64]) + Sync) -> Vec<C64> {
    let h = 2.0 * PI / SYMBOL_GRID as f64;
    let scale = (2.0 * PI).powf(d as f64 / 2.0);
    torus_fourier_raw(d, SYMBOL_GRID, radius, width, |idx, out| {
        let x: Vec<f64> = idx.iter().map(|&i| i as f64 * h).collect();
        f(&x, out)
    })
    .into_iter()
    .map(|v| v * scale)
    .collect()
}

/// Embedded eigenvalue of the ladder lattice: a single-site potential on
/// both rails at the origin, eigenvector `(v̂_±, ±v̂_±)`.
pub fn construct_ladder_embedded(
    d: usize,
    energy: f64,
    sign: Sign,
    window_radius: usize,
) -> Result<(PerturbationSpec, EmbeddedEigenpair)> {
    let k = 2.0 * d as f64 + 1.0;
    let bound = (k - 2.0) / k;
    let s = sign.value();
    if !(s * energy > bound) {
        return Err(Error::EnergyInsideForbiddenRange { energy, bound });
    }
    let r = window_radius as i64;
    let coeffs = fourier_coefficients(d, r, 1, |x, out| {
        let a: f64 = x.iter().map(|t| t.cos()).sum();
        out[0] = C64::new(1.0 / ((s + 2.0 * a) / k + energy), 0.0);
    });
    let obox = OffsetBox { d, radius: r };
    let zero = vec![0i64; d];
    let v0 = coeffs[obox.flat(&zero).expect("origin")].re;
    let c = (2.0 * PI).powf(d as f64 / 2.0) / v0;
    let pert = PerturbationSpec {
        potential: vec![
            PotentialEntry { band: 0, site: zero.clone(), value: c },
            PotentialEntry { band: 1, site: zero, value: c },
        ],
        ..Default::default()
    };
    let vector = LatticeVector::from_entries(obox.offsets().into_iter().enumerate().flat_map(|(f, n)| {
        let w = coeffs[f];
        [(Vertex::site(0, &n), w), (Vertex::site(1, &n), w * s)]
    }));
    finish(Construction::Ladder, LatticeName::LadderSquare, d, pert, energy, vector, window_radius)
}

/// Embedded eigenvalue of graphite: equal potentials on the two sublattice
/// sites of both layers at the origin, eigenvector `(ŵ, ±ŵ)` with
/// `w = (m - c̄, m - c) / (m² - |c|²)`, `m = 4λ ± 1`.
pub fn construct_graphite_embedded(
    energy: f64,
    sign: Sign,
    window_radius: usize,
) -> Result<(PerturbationSpec, EmbeddedEigenpair)> {
    let s = sign.value();
    if !(s * energy > 0.5) {
        return Err(Error::EnergyInsideForbiddenRange { energy, bound: 0.5 });
    }
    let m = 4.0 * energy + s;
    let r = window_radius as i64;
    let coeffs = fourier_coefficients(2, r, 2, |x, out| {
        let c = C64::new(1.0, 0.0) + C64::from_polar(1.0, -x[0]) + C64::from_polar(1.0, -x[1]);
        let den = m * m - c.norm_sqr();
        out[0] = (C64::new(m, 0.0) - c.conj()) / den;
        out[1] = (C64::new(m, 0.0) - c) / den;
    });
    let obox = OffsetBox { d: 2, radius: r };
    let f0 = obox.flat(&[0, 0]).expect("origin");
    let values: Vec<f64> = (0..2).map(|j| 2.0 * PI / (4.0 * coeffs[2 * f0 + j].re)).collect();
    let pert = PerturbationSpec {
        potential: (0..4).map(|cell| PotentialEntry { band: cell, site: vec![0, 0], value: values[cell % 2] }).collect(),
        ..Default::default()
    };
    let vector = LatticeVector::from_entries(obox.offsets().into_iter().enumerate().flat_map(|(f, n)| {
        let (w0, w1) = (coeffs[2 * f], coeffs[2 * f + 1]);
        [
            (Vertex::site(0, &n), w0),
            (Vertex::site(1, &n), w1),
            (Vertex::site(2, &n), w0 * s),
            (Vertex::site(3, &n), w1 * s),
        ]
    }));
    finish(Construction::Graphite, LatticeName::Graphite, 2, pert, energy, vector, window_radius)
}

/// Compactly supported eigenvector with a constant potential `v` on its
/// support: the Kagome hexagon (eigenvalue `v + 1/2`) or the subdivision
/// plaquette (eigenvalue `v`).
pub fn construct_compact_eigenvector(kind: Construction, v: f64) -> Result<(PerturbationSpec, EmbeddedEigenpair)> {
    let (lattice, shift, sites): (LatticeName, f64, Vec<(usize, [i64; 2], f64)>) = match kind {
        Construction::KagomeHexagon => (
            LatticeName::Kagome,
            0.5,
            vec![
                (2, [1, -1], 1.0),
                (1, [1, 0], -1.0),
                (0, [1, 0], 1.0),
                (2, [0, 0], -1.0),
                (1, [0, 0], 1.0),
                (0, [1, -1], -1.0),
            ],
        ),
        Construction::SubdivisionPlaquette => (
            LatticeName::SubdivisionSquare,
            0.0,
            vec![(1, [0, 0], 1.0), (2, [1, 0], -1.0), (1, [0, 1], 1.0), (2, [0, 0], -1.0)],
        ),
        other => return Err(Error::UnknownIdentity(format!("{other:?} is not a compact construction"))),
    };
    let potential = if v == 0.0 {
        Vec::new()
    } else {
        sites.iter().map(|(cell, n, _)| PotentialEntry { band: *cell, site: n.to_vec(), value: v }).collect()
    };
    let pert = PerturbationSpec { potential, ..Default::default() };
    let vector = LatticeVector::from_entries(sites.iter().map(|(cell, n, x)| (Vertex::site(*cell, n), C64::new(*x, 0.0))));
    finish(kind, lattice, 2, pert, v + shift, vector, crate::besov::MIN_WINDOW)
}
