//! Stationary scattering on the Fermi surface: the matrix
//! `A(λ) = F0(λ) Q1(λ+i0) K2 F0(λ)*`, `S(λ) = I - 2πi A(λ)`, and the
//! Helmholtz in/out construction.
//!
//! Channel coordinates are node coefficients `α_l` with `φ_l = α_l a_l`;
//! the channel inner product is `Σ_l μ_l conj(α_l) β_l`. In these
//! coordinates `A_kl = T_kl μ_l` with `T_kl = ⟨ψ_k, Q1 K2 ψ_l⟩` and
//! `ψ_l(j, n) = (2π)^{-d/2} e^{-i n·x_l} a_l[j]`. Every `Q1 K2 ψ_l` lives on
//! the layers `A ∪ B`, so `T = Ψ* M Ψ` with `Ψ` the restriction of the plane
//! waves to the layers and `M` a small dense matrix.

use crate::bands::BandGrid;
use crate::error::{Error, Result};
use crate::fermi::{check_energy, mesh_from_grid, FermiSurfaceMesh};
use crate::green::{green_pv, GreenTable, PvOptions, Side};
use crate::lattice::PeriodicLatticeSpec;
use crate::linalg::C64;
use crate::perturbation::{green_between, PerturbedOperator, Vertex};
use crate::spectral::{LatticeVector, SpectralDatum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Gauss–Legendre points per mesh segment for channel nodes.
pub const CHANNEL_ORDER: usize = 2;

/// Discretized channel space at one energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelBasis {
    pub energy: f64,
    pub mesh: FermiSurfaceMesh,
}

impl ChannelBasis {
    pub fn len(&self) -> usize {
        self.mesh.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.nodes.is_empty()
    }

    /// Quadrature weights `μ_l`.
    pub fn weights(&self) -> Vec<f64> {
        self.mesh.nodes.iter().map(|n| n.coarea_weight).collect()
    }

    /// Bands with at least one node, in order.
    pub fn channels(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.mesh.nodes.iter().map(|n| n.band).collect();
        b.dedup();
        b
    }

    /// `ψ_l(v)`; zero on added vertices.
    pub fn psi(&self, l: usize, v: &Vertex) -> C64 {
        match v {
            Vertex::Site { cell, n } => {
                let node = &self.mesh.nodes[l];
                let phase: f64 = n.iter().zip(&node.x).map(|(&k, &x)| k as f64 * x).sum();
                let norm = (2.0 * PI).powf(-(self.mesh.dim as f64) / 2.0);
                node.amplitude[*cell] * C64::from_polar(norm, -phase)
            }
            Vertex::Added(_) => C64::default(),
        }
    }

    /// Node coefficients `α_l = a_l* φ_l` of a channel datum.
    pub fn coefficients(&self, phi: &SpectralDatum) -> Vec<C64> {
        phi.values
            .iter()
            .zip(&self.mesh.nodes)
            .map(|(p, node)| node.amplitude.iter().zip(p).map(|(a, x)| a.conj() * x).sum())
            .collect()
    }

    /// Channel datum `φ_l = α_l a_l`.
    pub fn datum(&self, alpha: &[C64]) -> SpectralDatum {
        let values = alpha.iter().zip(&self.mesh.nodes).map(|(c, node)| node.amplitude.iter().map(|a| a * c).collect()).collect();
        SpectralDatum { energy: self.energy, values }
    }

    /// `Σ_l μ_l conj(α_l) β_l`.
    pub fn inner(&self, alpha: &[C64], beta: &[C64]) -> C64 {
        self.mesh.nodes.iter().zip(alpha.iter().zip(beta)).map(|(n, (a, b))| a.conj() * b * n.coarea_weight).sum()
    }

    /// Restriction of the plane waves to `sites`, scaled by `sqrt(μ_l)`.
    fn weighted_restriction(&self, sites: &[Vertex]) -> DMatrix<C64> {
        DMatrix::from_fn(sites.len(), self.len(), |c, l| self.psi(l, &sites[c]) * self.mesh.nodes[l].coarea_weight.sqrt())
    }
}

/// Channel nodes at energy `λ` on a `resolution^d` marching grid.
pub fn channel_basis(spec: &PeriodicLatticeSpec, energy: f64, resolution: usize) -> Result<ChannelBasis> {
    channel_basis_with_order(spec, energy, resolution, CHANNEL_ORDER)
}

pub fn channel_basis_with_order(
    spec: &PeriodicLatticeSpec,
    energy: f64,
    resolution: usize,
    order: usize,
) -> Result<ChannelBasis> {
    if !(2..=3).contains(&spec.dim) {
        return Err(Error::MeshUnavailable { dim: spec.dim });
    }
    check_energy(spec, energy)?;
    let grid = BandGrid::new(spec, resolution);
    let mesh = mesh_from_grid(&spec.stencil(), &grid, energy, order);
    if mesh.nodes.is_empty() {
        return Err(Error::EnergyOutsideBand { energy });
    }
    Ok(ChannelBasis { energy, mesh })
}

/// Outgoing Green table for scattering at `λ`, large enough for the
/// boundary system plus `extra` further shells.
pub fn scattering_green(spec: &PeriodicLatticeSpec, op: &PerturbedOperator, energy: f64, extra: i64) -> Result<GreenTable> {
    green_pv(spec, energy, Side::Plus, op.required_radius() + extra, &PvOptions::for_dim(spec.dim))
}

/// Operator `K` on the layer coordinates `A ∪ B` (same matrix for `K1` and
/// `K2` on free-lattice vectors).
fn layer_k(op: &PerturbedOperator) -> DMatrix<C64> {
    let sites = op.boundary_sites();
    let m = sites.len();
    let mut k = DMatrix::zeros(m, m);
    for c in 0..m {
        let col = op.k1_apply(|v| if *v == sites[c] { C64::new(1.0, 0.0) } else { C64::default() });
        for (r, x) in col.into_iter().enumerate() {
            k[(r, c)] = x;
        }
    }
    k
}

/// `M = (P_B + K1 R(λ+i0)|_{A∪B}) K` on the layer coordinates.
fn layer_core(op: &PerturbedOperator, green: &GreenTable) -> Result<DMatrix<C64>> {
    if green.side != Some(Side::Plus) {
        return Err(Error::UnsupportedPerturbation("scattering needs the outgoing table".into()));
    }
    let sites = op.boundary_sites();
    let m = sites.len();
    let na = op.layer_a.len();
    let rhs: Vec<LatticeVector> = sites
        .iter()
        .map(|v| LatticeVector::from_entries([(v.clone(), C64::new(1.0, 0.0))]))
        .collect();
    let sols = op.solve_many(green, &rhs)?;
    let mut y = DMatrix::zeros(m, m);
    for (c, sol) in sols.iter().enumerate() {
        for r in 0..m {
            y[(r, c)] = sol.k[r];
        }
        if c >= na {
            y[(c, c)] += C64::new(1.0, 0.0);
        }
    }
    Ok(y * layer_k(op))
}

/// `‖Φ* C Φ‖₂` for an `r x N` matrix `Φ` via a thin QR of `Φ*`.
fn low_rank_norm(phi: &DMatrix<C64>, core: &DMatrix<C64>) -> f64 {
    let qr = phi.adjoint().qr();
    let r = qr.r();
    (&r * core * r.adjoint()).singular_values().max()
}

/// Scattering data at one energy in factored form.
#[derive(Clone, Debug)]
pub struct SMatrix {
    pub energy: f64,
    pub node_count: usize,
    pub weights: Vec<f64>,
    /// `sqrt(μ_l) ψ_l` on the layers, `m x N`.
    psi: DMatrix<C64>,
    /// Layer core `M`.
    core: DMatrix<C64>,
    /// `‖Ŝ*Ŝ - I‖₂` with `Ŝ = W^{1/2} S W^{-1/2}`, `W = diag(μ)`.
    pub unitarity_defect: f64,
}

impl SMatrix {
    /// `A_kl = T_kl μ_l`.
    pub fn a_entry(&self, k: usize, l: usize) -> C64 {
        let t: C64 = (0..self.core.nrows())
            .flat_map(|r| (0..self.core.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| self.psi[(r, k)].conj() * self.core[(r, c)] * self.psi[(c, l)])
            .sum();
        t * (self.weights[l] / self.weights[k]).sqrt()
    }

    pub fn a_dense(&self) -> DMatrix<C64> {
        let t = self.psi.adjoint() * &self.core * &self.psi;
        DMatrix::from_fn(self.node_count, self.node_count, |k, l| t[(k, l)] * (self.weights[l] / self.weights[k]).sqrt())
    }

    pub fn s_dense(&self) -> DMatrix<C64> {
        let a = self.a_dense();
        DMatrix::from_fn(self.node_count, self.node_count, |k, l| {
            let id = if k == l { C64::new(1.0, 0.0) } else { C64::default() };
            id - C64::new(0.0, 2.0 * PI) * a[(k, l)]
        })
    }

    /// `A α` on node coefficients.
    pub fn apply_a(&self, alpha: &[C64]) -> Vec<C64> {
        let scaled: Vec<C64> = alpha.iter().zip(&self.weights).map(|(a, w)| a * w.sqrt()).collect();
        let v = &self.psi * nalgebra::DVector::from_column_slice(&scaled);
        let y = self.psi.adjoint() * (&self.core * v);
        y.iter().zip(&self.weights).map(|(x, w)| x / w.sqrt()).collect()
    }

    /// `S α = α - 2πi A α`.
    pub fn apply(&self, alpha: &[C64]) -> Vec<C64> {
        let a = self.apply_a(alpha);
        alpha.iter().zip(a).map(|(x, y)| x - C64::new(0.0, 2.0 * PI) * y).collect()
    }

    /// Weighted operator norm `‖A‖_W`.
    pub fn a_norm(&self) -> f64 {
        low_rank_norm(&self.psi, &self.core)
    }

    /// `‖S - I‖_W = 2π ‖A‖_W`.
    pub fn distance_to_identity(&self) -> f64 {
        2.0 * PI * self.a_norm()
    }

    /// `‖A - A'‖_W / ‖A'‖_W` for `A' = t |ψ(v)⟩⟨ψ(v)| W`, the rank-one
    /// operator of a single-site coupling `t` at `v`.
    pub fn rank_one_defect(&self, basis: &ChannelBasis, site: &Vertex, t: C64) -> f64 {
        let m = self.psi.nrows();
        let row = basis.weighted_restriction(std::slice::from_ref(site));
        let stacked = DMatrix::from_fn(m + 1, self.node_count, |r, l| if r < m { self.psi[(r, l)] } else { row[(0, l)] });
        let mut core = DMatrix::zeros(m + 1, m + 1);
        core.view_mut((0, 0), (m, m)).copy_from(&self.core);
        core[(m, m)] = -t;
        let diff = low_rank_norm(&stacked, &core);
        let reference = t.norm() * row.iter().map(|x| x.norm_sqr()).sum::<f64>();
        diff / reference
    }
}

/// `A(λ)` and `S(λ)` for the perturbed operator on the given channels.
pub fn s_matrix(op: &PerturbedOperator, basis: &ChannelBasis, green: &GreenTable) -> Result<SMatrix> {
    if (green.z.re - basis.energy).abs() > 1e-14 || green.z.im != 0.0 {
        return Err(Error::UnsupportedPerturbation("Green table and channel energies differ".into()));
    }
    let sites = op.boundary_sites();
    let core = layer_core(op, green)?;
    let psi = basis.weighted_restriction(&sites);
    let qr = psi.adjoint().qr();
    let r = qr.r();
    let m = r.nrows();
    let small = DMatrix::<C64>::identity(m, m) - (&r * &core * r.adjoint()) * C64::new(0.0, 2.0 * PI);
    let unitarity_defect = (small.adjoint() * &small - DMatrix::<C64>::identity(m, m)).singular_values().max();
    Ok(SMatrix { energy: basis.energy, node_count: basis.len(), weights: basis.weights(), psi, core, unitarity_defect })
}

/// Alias emphasising that `A(λ)` is the primary object of [`SMatrix`].
pub fn a_matrix(op: &PerturbedOperator, basis: &ChannelBasis, green: &GreenTable) -> Result<SMatrix> {
    s_matrix(op, basis, green)
}

/// Result of the Helmholtz in/out construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HelmholtzSolution {
    pub energy: f64,
    pub window_radius: i64,
    /// `u = u_in + v` on the window.
    pub u: LatticeVector,
    pub phi_in: SpectralDatum,
    pub phi_out: SpectralDatum,
    /// `max |((H - λ) u)(v)|` over rows `|n| <= window_radius - 1`.
    pub residual: f64,
    /// Error budget from the Green table residual, the node energy defect
    /// and rounding.
    pub error_estimate: f64,
}

/// Window radius used by [`helmholtz_in_out`] beyond the box.
pub const HELMHOLTZ_MARGIN: i64 = 4;

/// Build `u = u_in + v` with `u_in = P_ext 𝒰* F0(λ)* φ_in` and
/// `v = -R(λ+i0)(H - λ) u_in`, and return `φ_out = S(λ) φ_in`. The Green
/// table must reach `required_radius() + HELMHOLTZ_MARGIN`.
pub fn helmholtz_in_out(
    op: &PerturbedOperator,
    basis: &ChannelBasis,
    green: &GreenTable,
    smat: &SMatrix,
    phi_in: &SpectralDatum,
) -> Result<HelmholtzSolution> {
    let rw = op.box_radius + HELMHOLTZ_MARGIN;
    let needed = rw + op.box_radius + 1;
    if green.radius < needed {
        return Err(Error::GreenTableTooSmall { needed, available: green.radius });
    }
    let alpha = basis.coefficients(phi_in);
    let weighted: Vec<C64> = alpha.iter().zip(basis.weights()).map(|(a, w)| a * w).collect();
    let incoming = |v: &Vertex| -> C64 { weighted.iter().enumerate().map(|(l, c)| basis.psi(l, v) * c).sum() };
    let sites = op.boundary_sites();
    let w_layer: Vec<C64> = sites.iter().map(&incoming).collect();
    let h = op.k1_apply(|v| sites.iter().position(|s| s == v).map_or(C64::default(), |i| w_layer[i]));
    let source = LatticeVector::from_entries(sites.iter().cloned().zip(h.iter().map(|x| -x)));
    let sol = op.solve(green, &source)?;
    let window = op.graph.vertices_within(rw);
    let mut entries = Vec::with_capacity(window.len());
    for v in &window {
        let mut val = op.evaluate(green, &sol, v)?;
        if op.is_exterior(v) {
            val += incoming(v);
        }
        entries.push((v.clone(), val));
    }
    let u = LatticeVector::from_entries(entries);
    let hu = op.graph.apply(&u);
    let residual = window
        .iter()
        .filter(|v| v.radius() < rw)
        .map(|v| (hu.get(v) - u.get(v) * basis.energy).norm())
        .fold(0.0, f64::max);
    let eps_g = green.free_residual(&op.graph.spec.stencil());
    let source_l1: f64 = sol.k.iter().map(|x| x.norm()).sum::<f64>() + sol.exterior_source.iter().map(|(_, x)| x.norm()).sum::<f64>();
    let norm = (2.0 * PI).powf(-(basis.mesh.dim as f64) / 2.0);
    let node_err: f64 =
        basis.mesh.nodes.iter().zip(&weighted).map(|(n, c)| n.energy_defect * c.norm() * norm).sum();
    let umax = u.iter().map(|(_, x)| x.norm()).fold(0.0, f64::max);
    let error_estimate = eps_g * source_l1 + node_err + 1e-13 * umax.max(1.0);
    let phi_out = basis.datum(&smat.apply(&alpha));
    Ok(HelmholtzSolution {
        energy: basis.energy,
        window_radius: rw,
        u,
        phi_in: phi_in.clone(),
        phi_out,
        residual,
        error_estimate,
    })
}

/// `t = v / (1 + v G(0)[j][j])`, the coupling of a single-site potential.
pub fn rank_one_coupling(green: &GreenTable, site: &Vertex, v: f64) -> Result<C64> {
    let g = green_between(green, site, site)?;
    Ok(C64::new(v, 0.0) / (C64::new(1.0, 0.0) + g * v))
}
