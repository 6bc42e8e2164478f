//! Finitely supported lattice vectors and the spectral transform
//! `F0(λ) f = P_j(x) (𝒰 f)(x)` restricted to the Fermi surface, with its
//! adjoint. `𝒰 f(x) = (2π)^{-d/2} Σ_n f(n) e^{i n·x}`.

use crate::error::Result;
use crate::fermi::{check_energy, FermiSurfaceMesh};
use crate::lattice::PeriodicLatticeSpec;
use crate::linalg::{pairwise_sum, C64};
use crate::perturbation::Vertex;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

/// Finitely supported vector on lattice vertices, sorted by vertex.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatticeVector {
    entries: Vec<(Vertex, C64)>,
}

impl LatticeVector {
    /// Merge duplicate vertices by summation and drop exact zeros.
    pub fn from_entries(entries: impl IntoIterator<Item = (Vertex, C64)>) -> Self {
        let mut map: HashMap<Vertex, C64> = HashMap::new();
        for (v, x) in entries {
            *map.entry(v).or_default() += x;
        }
        Self::from_map(map)
    }

    pub fn from_map(map: HashMap<Vertex, C64>) -> Self {
        let mut entries: Vec<(Vertex, C64)> = map.into_iter().filter(|(_, x)| *x != C64::default()).collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        Self { entries }
    }

    pub fn delta(cell: usize, n: &[i64]) -> Self {
        Self { entries: vec![(Vertex::site(cell, n), C64::new(1.0, 0.0))] }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vertex, &C64)> {
        self.entries.iter().map(|(v, x)| (v, x))
    }

    pub fn get(&self, v: &Vertex) -> C64 {
        self.entries.binary_search_by(|e| e.0.cmp(v)).map(|i| self.entries[i].1).unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|(_, x)| x.norm_sqr()).sum()
    }

    /// `Σ conj(self) · other`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.entries.iter().map(|(v, x)| x.conj() * other.get(v)).sum()
    }

    /// Largest sup-norm radius in the support.
    pub fn support_radius(&self) -> i64 {
        self.entries.iter().map(|(v, _)| v.radius()).max().unwrap_or(0)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { entries: self.entries.iter().map(|(v, x)| (v.clone(), x * s)).collect() }
    }

    /// `(𝒰 f)(x)` as an `s`-vector; vertices other than lattice sites are
    /// ignored.
    pub fn fourier(&self, s: usize, x: &[f64]) -> Vec<C64> {
        let norm = (2.0 * PI).powf(-(x.len() as f64) / 2.0);
        let mut out = vec![C64::default(); s];
        for (v, val) in &self.entries {
            if let Vertex::Site { cell, n } = v {
                let phase: f64 = n.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum();
                out[*cell] += val * C64::from_polar(norm, phase);
            }
        }
        out
    }
}

/// Boundary values `φ_k ∈ range P_j(x_k)` on the nodes of a mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralDatum {
    pub energy: f64,
    pub values: Vec<Vec<C64>>,
}

impl SpectralDatum {
    /// `Σ_k |φ_k|² μ_k`.
    pub fn norm_sqr(&self, mesh: &FermiSurfaceMesh) -> f64 {
        let terms: Vec<f64> = self
            .values
            .iter()
            .zip(&mesh.nodes)
            .map(|(phi, node)| phi.iter().map(|v| v.norm_sqr()).sum::<f64>() * node.coarea_weight)
            .collect();
        pairwise_sum(&terms)
    }

    /// `Σ_k ⟨φ_k, ψ_k⟩ μ_k`.
    pub fn inner(&self, other: &Self, mesh: &FermiSurfaceMesh) -> C64 {
        let terms: Vec<C64> = self
            .values
            .iter()
            .zip(&other.values)
            .zip(&mesh.nodes)
            .map(|((p, q), node)| p.iter().zip(q).map(|(a, b)| a.conj() * b).sum::<C64>() * node.coarea_weight)
            .collect();
        pairwise_sum(&terms)
    }

    /// Largest `|φ_k - P_j(x_k) φ_k|`.
    pub fn range_residual(&self, mesh: &FermiSurfaceMesh) -> f64 {
        self.values
            .iter()
            .zip(&mesh.nodes)
            .map(|(phi, node)| {
                let a = &node.amplitude;
                let c: C64 = a.iter().zip(phi).map(|(x, y)| x.conj() * y).sum();
                a.iter().zip(phi).map(|(x, y)| (y - x * c).norm_sqr()).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// `F0(λ) f` sampled at the mesh nodes.
pub fn f0_apply(spec: &PeriodicLatticeSpec, f: &LatticeVector, mesh: &FermiSurfaceMesh) -> Result<SpectralDatum> {
    check_energy(spec, mesh.energy)?;
    let s = spec.cells();
    let values = mesh
        .nodes
        .iter()
        .map(|node| {
            let uf = f.fourier(s, &node.x);
            let a = &node.amplitude;
            let c: C64 = a.iter().zip(&uf).map(|(x, y)| x.conj() * y).sum();
            a.iter().map(|x| x * c).collect()
        })
        .collect();
    Ok(SpectralDatum { energy: mesh.energy, values })
}

/// `(𝒰* F0(λ)* φ)(v)` at lattice sites:
/// `(2π)^{-d/2} Σ_k e^{-i n·x_k} P_j(x_k) φ_k μ_k`.
pub fn f0_adjoint_eval(mesh: &FermiSurfaceMesh, phi: &SpectralDatum, sites: &[Vertex]) -> Vec<C64> {
    let norm = (2.0 * PI).powf(-(mesh.dim as f64) / 2.0);
    let projected: Vec<Vec<C64>> = phi
        .values
        .iter()
        .zip(&mesh.nodes)
        .map(|(p, node)| {
            let a = &node.amplitude;
            let c: C64 = a.iter().zip(p).map(|(x, y)| x.conj() * y).sum::<C64>() * node.coarea_weight;
            a.iter().map(|x| x * c).collect()
        })
        .collect();
    sites
        .iter()
        .map(|v| match v {
            Vertex::Site { cell, n } => {
                let terms: Vec<C64> = projected
                    .iter()
                    .zip(&mesh.nodes)
                    .map(|(p, node)| {
                        let phase: f64 = n.iter().zip(&node.x).map(|(&k, &xi)| k as f64 * xi).sum();
                        p[*cell] * C64::from_polar(1.0, -phase)
                    })
                    .collect();
                pairwise_sum(&terms) * norm
            }
            Vertex::Added(_) => C64::default(),
        })
        .collect()
}

/// Datum with a single nonzero node: `φ_k = a_j(x_k) / μ_k`, so that the
/// adjoint is the plane wave `(2π)^{-d/2} e^{-i n·x_k} a_j(x_k)`.
pub fn point_mass(mesh: &FermiSurfaceMesh, k: usize) -> SpectralDatum {
    let s = mesh.nodes[k].amplitude.len();
    let values = mesh
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| {
            if i == k {
                node.amplitude.iter().map(|a| a / node.coarea_weight).collect()
            } else {
                vec![C64::default(); s]
            }
        })
        .collect();
    SpectralDatum { energy: mesh.energy, values }
}
