//! Free lattice Green function `G(n; z) = (2π)^{-d} ∫ e^{-i n·x} (H0(x) - z)^{-1} dx`
//! off the spectrum and its boundary values `G(n; λ ± i0)` by two
//! independent methods.
//!
//! * `eps_extrapolation`: trapezoid sums at `z = λ + iε` for a geometric
//!   ladder of `ε`, each on a grid fine enough to resolve the width
//!   `ε/|∇λ|`, followed by polynomial extrapolation to `ε = 0`.
//! * `pv_delta`: with a smooth cutoff `χ` of half-width `δ` in energy,
//!   `1/(λ_j - λ ∓ i0) = (1 - χ)/(λ_j - λ) + χ/(λ_j - λ) ± iπ δ(λ_j - λ)`.
//!   The first term is smooth and integrated on the torus grid; by the
//!   co-area formula the second is the principal value
//!   `∫_0^δ χ(t/δ)(F(λ+t) - F(λ-t))/t dt` of the Fermi-surface transforms
//!   `F(E) = Σ_j ∫_{M_{E,j}} e^{-i n·x} P_j dM/|∇λ_j|`, and the third is
//!   `±iπ F(λ)`.
//!
//! Entry `G(p - q)[j][k]` equals `⟨δ_{(j,p)}, R0 δ_{(k,q)}⟩`.

use crate::bands::{band_eigensystem_with, spectrum_bands, BandGrid};
use crate::error::{Error, Result};
use crate::fermi::{check_energy, mesh_from_grid};
use crate::lattice::{BlochStencil, PeriodicLatticeSpec};
use crate::linalg::{eigh, inverse, CMat, C64, I};
use crate::perturbation::Vertex;
use crate::quadrature::{gauss_legendre, neville_at_zero, torus_fourier, GridStencil, OffsetBox, TorusQuadrature};
use crate::spectral::LatticeVector;
use crate::thresholds::excluded_energies;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn sign(&self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

impl std::str::FromStr for Side {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "+" | "plus" => Ok(Side::Plus),
            "-" | "minus" => Ok(Side::Minus),
            _ => Err(format!("side must be `+` or `-`, got `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenMethod {
    Offspectrum,
    EpsExtrapolation,
    PvDelta,
}

impl std::str::FromStr for GreenMethod {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "offspectrum" => Ok(GreenMethod::Offspectrum),
            "eps_extrapolation" => Ok(GreenMethod::EpsExtrapolation),
            "pv_delta" => Ok(GreenMethod::PvDelta),
            _ => Err(format!("unknown method `{s}`")),
        }
    }
}

/// `G(n)` for every `|n|_∞ <= radius`.
#[derive(Clone, Debug)]
pub struct GreenTable {
    pub dim: usize,
    pub s: usize,
    pub radius: i64,
    /// Spectral parameter; real for boundary values.
    pub z: C64,
    /// Set for boundary values `λ ± i0`.
    pub side: Option<Side>,
    pub method: GreenMethod,
    /// Torus grid per axis of the finest quadrature used.
    pub grid_n: usize,
    blocks: Vec<CMat>,
}

impl GreenTable {
    pub fn from_blocks(
        dim: usize,
        s: usize,
        radius: i64,
        z: C64,
        side: Option<Side>,
        method: GreenMethod,
        grid_n: usize,
        blocks: Vec<CMat>,
    ) -> Self {
        assert_eq!(blocks.len(), OffsetBox { d: dim, radius }.len());
        Self { dim, s, radius, z, side, method, grid_n, blocks }
    }

    fn obox(&self) -> OffsetBox {
        OffsetBox { d: self.dim, radius: self.radius }
    }

    pub fn get(&self, n: &[i64]) -> Option<&CMat> {
        self.obox().flat(n).map(|f| &self.blocks[f])
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    /// Table for the conjugate parameter: `G(n; z̄) = G(-n; z)^*`.
    pub fn conjugate_side(&self) -> GreenTable {
        let ob = self.obox();
        let blocks = (0..ob.len())
            .map(|f| {
                let neg: Vec<i64> = ob.offset(f).iter().map(|k| -k).collect();
                self.blocks[ob.flat(&neg).expect("symmetric box")].adjoint()
            })
            .collect();
        GreenTable {
            z: self.z.conj(),
            side: self.side.map(|s| if s == Side::Plus { Side::Minus } else { Side::Plus }),
            blocks,
            ..self.clone()
        }
    }

    /// Restrict to a smaller radius.
    pub fn truncate(&self, radius: i64) -> GreenTable {
        assert!(radius <= self.radius);
        let ob = OffsetBox { d: self.dim, radius };
        let blocks = ob.offsets().iter().map(|n| *self.get(n).expect("inside")).collect();
        GreenTable { radius, blocks, ..self.clone() }
    }

    /// Largest defect of the free equation `(H0 - z) G = δ_0 I` over offsets
    /// whose stencil neighbourhood lies inside the table.
    pub fn free_residual(&self, stencil: &BlochStencil) -> f64 {
        let reach = stencil.terms.iter().flat_map(|t| t.offset.iter().map(|m| m.abs())).max().unwrap_or(0);
        let inner = OffsetBox { d: self.dim, radius: self.radius - reach };
        let mut worst: f64 = 0.0;
        for n in inner.offsets() {
            let mut acc = self.get(&n).expect("inside").scale(-self.z);
            for t in &stencil.terms {
                let shifted: Vec<i64> = n.iter().zip(&t.offset).map(|(a, b)| a + b).collect();
                let g = self.get(&shifted).expect("inside");
                for l in 0..self.s {
                    acc[(t.row, l)] += g[(t.col, l)] * t.coef;
                }
            }
            if n.iter().all(|&k| k == 0) {
                acc = acc.sub(&CMat::identity(self.s));
            }
            worst = worst.max(acc.max_abs());
        }
        worst
    }

    /// `⟨δ_p, R0 δ_q⟩` for lattice sites.
    pub fn element(&self, p: &Vertex, q: &Vertex) -> Result<C64> {
        crate::perturbation::green_between(self, p, q)
    }

    /// `(R0 f)(v)` at the requested sites.
    pub fn apply(&self, f: &LatticeVector, sites: &[Vertex]) -> Result<Vec<C64>> {
        sites
            .iter()
            .map(|p| f.iter().map(|(q, x)| Ok(self.element(p, q)? * x)).sum::<Result<C64>>())
            .collect()
    }

    /// `(R0 f, g) = Σ conj(g(p)) G(p - q) f(q)`.
    pub fn form(&self, f: &LatticeVector, g: &LatticeVector) -> Result<C64> {
        let mut acc = C64::default();
        for (p, gp) in g.iter() {
            for (q, fq) in f.iter() {
                acc += gp.conj() * self.element(p, q)? * fq;
            }
        }
        Ok(acc)
    }
}

/// Largest `|∇λ_j|` over a coarse grid, used to size quadrature grids.
pub fn max_band_gradient(spec: &PeriodicLatticeSpec) -> f64 {
    let stencil = spec.stencil();
    let n = if spec.dim <= 2 { 96 } else { 24 };
    let quad = TorusQuadrature::new(spec.dim, n);
    let mut g: f64 = 0.0;
    for k in 0..quad.len() {
        let e = band_eigensystem_with(&stencil, &quad.node(k));
        for grad in e.gradients.iter().flatten() {
            g = g.max(grad.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
    }
    g.max(1e-3) * 1.05
}

/// Distance from `z` to `σ(H0)`.
pub fn spectrum_distance(spec: &PeriodicLatticeSpec, z: C64) -> f64 {
    let report = spectrum_bands(spec, if spec.dim <= 2 { 64 } else { 16 });
    let dx = report
        .union()
        .iter()
        .map(|&(a, b)| if z.re < a { a - z.re } else if z.re > b { z.re - b } else { 0.0 })
        .fold(f64::INFINITY, f64::min);
    dx.hypot(z.im)
}

/// Default torus grid per axis for off-spectrum quadrature.
pub fn default_grid(dim: usize) -> usize {
    if dim <= 2 {
        256
    } else {
        64
    }
}

/// `G(n; z)` for `dist(z, σ) > 0` by the periodic trapezoid rule.
pub fn green_offspectrum(spec: &PeriodicLatticeSpec, z: C64, radius: i64, grid_n: usize) -> Result<GreenTable> {
    let required = 10.0 * (2.0 * PI / grid_n as f64) * spec.stencil().gradient_bound();
    let distance = spectrum_distance(spec, z);
    if distance < required {
        return Err(Error::SpectrumTooClose { distance, required });
    }
    Ok(trapezoid_table(spec, z, radius, grid_n, GreenMethod::Offspectrum))
}

fn trapezoid_table(spec: &PeriodicLatticeSpec, z: C64, radius: i64, grid_n: usize, method: GreenMethod) -> GreenTable {
    let s = spec.cells();
    let gs = GridStencil::new(&spec.stencil(), grid_n);
    let blocks = torus_fourier(spec.dim, grid_n, radius, s, |idx, out| {
        gs.eval_into(idx, out);
        for i in 0..s {
            out[i * s + i] -= z;
        }
        invert_in_place(s, out);
    });
    GreenTable { dim: spec.dim, s, radius, z, side: None, method, grid_n, blocks }
}

/// Inverse of the row-major `s x s` matrix in `m`; closed forms for `s <= 2`
/// keep the per-node cost of large trapezoid grids low.
fn invert_in_place(s: usize, m: &mut [C64]) {
    match s {
        1 => m[0] = 1.0 / m[0],
        2 => {
            let r = 1.0 / (m[0] * m[3] - m[1] * m[2]);
            let (a, b, c, d) = (m[0], m[1], m[2], m[3]);
            m[0] = d * r;
            m[1] = -b * r;
            m[2] = -c * r;
            m[3] = a * r;
        }
        _ => {
            let inv = inverse(&CMat::from_fn(s, |i, j| m[i * s + j])).expect("regular off the spectrum");
            for i in 0..s {
                for j in 0..s {
                    m[i * s + j] = inv[(i, j)];
                }
            }
        }
    }
}

/// `(R0(z) f)(m)` at the requested sites for off-spectrum `z`.
pub fn resolvent_offspectrum(
    spec: &PeriodicLatticeSpec,
    z: C64,
    f: &LatticeVector,
    eval_sites: &[Vertex],
    grid_n: usize,
) -> Result<Vec<C64>> {
    let reach = eval_sites
        .iter()
        .flat_map(|p| f.iter().map(move |(q, _)| diff_radius(p, q)))
        .max()
        .unwrap_or(0);
    green_offspectrum(spec, z, reach, grid_n)?.apply(f, eval_sites)
}

fn diff_radius(p: &Vertex, q: &Vertex) -> i64 {
    match (p, q) {
        (Vertex::Site { n: a, .. }, Vertex::Site { n: b, .. }) => {
            a.iter().zip(b).map(|(x, y)| (x - y).abs()).max().unwrap_or(0)
        }
        _ => 0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpsOptions {
    pub eps0: f64,
    pub levels: usize,
    /// Grid points per resonance width `ε/|∇λ|_max`.
    pub points_per_width: f64,
    pub min_grid: usize,
    pub max_grid: usize,
}

impl Default for EpsOptions {
    fn default() -> Self {
        Self { eps0: 1e-2, levels: 4, points_per_width: 8.0, min_grid: 64, max_grid: 1 << 15 }
    }
}

/// `G(n; λ ± i0)` by trapezoid sums at `λ ± iε_k`, `ε_k = ε0/2^k`, and
/// Neville extrapolation to `ε = 0`.
pub fn green_eps(spec: &PeriodicLatticeSpec, lambda: f64, side: Side, radius: i64, opts: &EpsOptions) -> Result<GreenTable> {
    check_energy(spec, lambda)?;
    let gmax = max_band_gradient(spec);
    let mut hs = Vec::new();
    let mut tables = Vec::new();
    let mut finest = 0;
    for k in 0..opts.levels {
        let eps = opts.eps0 / 2f64.powi(k as i32);
        let grid = ((opts.points_per_width * gmax / eps).ceil() as usize).clamp(opts.min_grid, opts.max_grid);
        finest = finest.max(grid);
        hs.push(eps);
        tables.push(trapezoid_table(spec, C64::new(lambda, eps), radius, grid, GreenMethod::EpsExtrapolation));
    }
    let s = spec.cells();
    let count = tables[0].blocks.len();
    let blocks = (0..count)
        .map(|f| {
            CMat::from_fn(s, |i, j| {
                let ys: Vec<C64> = tables.iter().map(|t| t.blocks[f][(i, j)]).collect();
                neville_at_zero(&hs, &ys)
            })
        })
        .collect();
    let plus = GreenTable {
        dim: spec.dim,
        s,
        radius,
        z: C64::new(lambda, 0.0),
        side: Some(Side::Plus),
        method: GreenMethod::EpsExtrapolation,
        grid_n: finest,
        blocks,
    };
    Ok(match side {
        Side::Plus => plus,
        Side::Minus => plus.conjugate_side(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PvOptions {
    /// Torus grid per axis for the smooth part.
    pub outer_grid: usize,
    /// Band grid per axis for the Fermi-surface meshes.
    pub mesh_resolution: usize,
    /// Gauss–Legendre points per mesh segment.
    pub mesh_order: usize,
    /// Gauss–Legendre points for the principal value in energy.
    pub tube_nodes: usize,
    /// Upper bound on the cutoff half-width `δ`.
    pub max_half_width: f64,
    /// Multiplier of the surface term; `1` is correct, other values are used
    /// only to check that the verification suite detects the fault.
    pub surface_sign: f64,
}

impl PvOptions {
    pub fn for_dim(dim: usize) -> Self {
        if dim <= 2 {
            Self {
                outer_grid: 1024,
                mesh_resolution: 512,
                mesh_order: 4,
                tube_nodes: 16,
                max_half_width: 0.1,
                surface_sign: 1.0,
            }
        } else {
            Self {
                outer_grid: 96,
                mesh_resolution: 48,
                mesh_order: 4,
                tube_nodes: 12,
                max_half_width: 0.1,
                surface_sign: 1.0,
            }
        }
    }
}

/// `χ(u) = (1 - u²)^8` on `|u| < 1`, zero outside.
fn cutoff(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - u * u).powi(8)
    }
}

/// `(1 - χ(t/δ))/t`, evaluated without cancellation.
fn outer_kernel(t: f64, delta: f64) -> f64 {
    let u = t / delta;
    if u.abs() >= 1.0 {
        return 1.0 / t;
    }
    let w = 1.0 - u * u;
    let mut sum = 0.0;
    let mut p = 1.0;
    for _ in 0..8 {
        sum += p;
        p *= w;
    }
    u / delta * sum
}

/// Half-width `δ` of the energy tube around `λ`.
pub fn tube_half_width(spec: &PeriodicLatticeSpec, lambda: f64, cap: f64) -> f64 {
    let dist = excluded_energies(spec).iter().map(|t| (t - lambda).abs()).fold(f64::INFINITY, f64::min);
    (0.5 * dist).min(cap)
}

/// `G(n; λ ± i0)` by the principal-value plus surface-delta split.
pub fn green_pv(spec: &PeriodicLatticeSpec, lambda: f64, side: Side, radius: i64, opts: &PvOptions) -> Result<GreenTable> {
    if !(2..=3).contains(&spec.dim) {
        return Err(Error::MeshUnavailable { dim: spec.dim });
    }
    check_energy(spec, lambda)?;
    let s = spec.cells();
    let d = spec.dim;
    let delta = tube_half_width(spec, lambda, opts.max_half_width);
    let stencil = spec.stencil();
    let gs = GridStencil::new(&stencil, opts.outer_grid);
    let outer = torus_fourier(d, opts.outer_grid, radius, s, |idx, out| {
        let e = eigh(&gs.eval(idx));
        for b in 0..s {
            let phi = outer_kernel(e.values[b] - lambda, delta);
            let a = e.vector(b);
            for i in 0..s {
                for j in 0..s {
                    out[i * s + j] += a[i] * a[j].conj() * phi;
                }
            }
        }
    });
    let grid = BandGrid::new(spec, opts.mesh_resolution);
    let transform = |e: f64| -> Vec<C64> {
        mesh_from_grid(&stencil, &grid, e, opts.mesh_order).fourier_projections(s, radius, None)
    };
    let len = outer.len() * s * s;
    let mut tube = vec![C64::default(); len];
    for (t, w) in gauss_legendre(opts.tube_nodes, 0.0, delta) {
        let fp = transform(lambda + t);
        let fm = transform(lambda - t);
        let c = w * cutoff(t / delta) / t;
        for k in 0..len {
            tube[k] += (fp[k] - fm[k]) * c;
        }
    }
    let surface = transform(lambda);
    let norm = (2.0 * PI).powi(-(d as i32));
    let surf_coef = I * PI * side.sign() * opts.surface_sign;
    let blocks = outer
        .iter()
        .enumerate()
        .map(|(f, o)| {
            CMat::from_fn(s, |i, j| {
                let k = f * s * s + i * s + j;
                o[(i, j)] + (tube[k] + surface[k] * surf_coef) * norm
            })
        })
        .collect();
    Ok(GreenTable {
        dim: d,
        s,
        radius,
        z: C64::new(lambda, 0.0),
        side: Some(side),
        method: GreenMethod::PvDelta,
        grid_n: opts.outer_grid,
        blocks,
    })
}

/// Boundary-value table by the requested method with default options.
pub fn green_boundary_table(
    spec: &PeriodicLatticeSpec,
    lambda: f64,
    side: Side,
    radius: i64,
    method: GreenMethod,
) -> Result<GreenTable> {
    match method {
        GreenMethod::EpsExtrapolation => green_eps(spec, lambda, side, radius, &EpsOptions::default()),
        GreenMethod::PvDelta => green_pv(spec, lambda, side, radius, &PvOptions::for_dim(spec.dim)),
        GreenMethod::Offspectrum => green_offspectrum(spec, C64::new(lambda, 0.0), radius, default_grid(spec.dim)),
    }
}

/// `G(n; λ ± i0)` as an `s x s` block.
pub fn green_limit(spec: &PeriodicLatticeSpec, n: &[i64], lambda: f64, side: Side, method: GreenMethod) -> Result<CMat> {
    let radius = n.iter().map(|k| k.abs()).max().unwrap_or(0);
    let t = green_boundary_table(spec, lambda, side, radius, method)?;
    Ok(*t.get(n).expect("inside"))
}
