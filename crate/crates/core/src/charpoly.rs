//! Characteristic polynomials `p(x, λ) = det(H0(x) - λ)`, their closed
//! forms, the graph-operation identities relating them, and the explicit
//! flat-band eigenvectors.

use crate::error::{Error, Result};
use crate::lattice::{build_lattice, LatticeName, PeriodicLatticeSpec};
use crate::linalg::{c, C64, I};
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// `det(H0(x) - λ)` by LU.
pub fn char_poly(spec: &PeriodicLatticeSpec, x: &[f64], lambda: C64) -> C64 {
    spec.stencil().eval(x).shift(lambda).determinant()
}

/// `a_d(x) = Σ cos x_j`.
pub fn a_d(x: &[C64]) -> C64 {
    x.iter().map(|z| z.cos()).sum()
}

/// `b_d(x) = Σ cos x_j + Σ_{j<k} cos(x_j - x_k)`.
pub fn b_d(x: &[C64]) -> C64 {
    let mut v = a_d(x);
    for j in 0..x.len() {
        for k in j + 1..x.len() {
            v += (x[j] - x[k]).cos();
        }
    }
    v
}

/// `f_d(z) = 1 + Σ e^{i z_j}`.
pub fn f_d(z: &[C64]) -> C64 {
    c(1.0) + z.iter().map(|zj| (I * zj).exp()).sum::<C64>()
}

/// `α(x) = 3 + 2(cos x1 + cos x2 + cos(x1 - x2)) = |1 + e^{ix1} + e^{ix2}|²`.
pub fn alpha(x: &[C64]) -> C64 {
    c(3.0) + b_d(x) * 2.0
}

/// `β(x) = 1 + cos x1 + cos x2 + cos(x1 - x2)`.
pub fn beta(x: &[C64]) -> C64 {
    c(1.0) + b_d(x)
}

/// `γ_d(x) = 1/(d+1) + 2 b_d(x)/(d+1)²`.
pub fn gamma_d(x: &[C64]) -> C64 {
    let d1 = x.len() as f64 + 1.0;
    c(1.0 / d1) + b_d(x) * (2.0 / (d1 * d1))
}

/// `c(x) = 1 + e^{-ix1} + e^{-ix2}` (graphite).
pub fn graphite_c(x: &[C64]) -> C64 {
    c(1.0) + (-I * x[0]).exp() + (-I * x[1]).exp()
}

fn cplx(x: &[f64]) -> Vec<C64> {
    x.iter().map(|&v| c(v)).collect()
}

/// Closed-form characteristic polynomial of a catalog lattice.
pub fn char_poly_closed(name: LatticeName, x: &[f64], lambda: C64) -> C64 {
    let z = cplx(x);
    let d = x.len() as f64;
    let l = lambda;
    match name {
        LatticeName::Square => -a_d(&z) / d - l,
        LatticeName::Triangular => -b_d(&z) / 3.0 - l,
        LatticeName::Hexagonal => l * l - alpha(&z) / 9.0,
        LatticeName::Kagome => -(l - 0.5) * (l * l + l * 0.5 - beta(&z) / 8.0),
        LatticeName::Diamond => l * l - gamma_d(&z),
        LatticeName::SubdivisionSquare => {
            (-l).powi(x.len() as i32 - 1) * (l * l - (a_d(&z) + d) / (2.0 * d))
        }
        LatticeName::LadderSquare => {
            let k = 2.0 * d + 1.0;
            let a = a_d(&z) * 2.0;
            (l + (a + 1.0) / k) * (l + (a - 1.0) / k)
        }
        LatticeName::Graphite => {
            let al = alpha(&z);
            let l2 = l * l;
            l2 * l2 - (al + 1.0) / 8.0 * l2 + (al - 1.0) * (al - 1.0) / 256.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityKind {
    FactorizationBd,
    LinegraphHexToKagome,
    SubdivisionRelation,
    LadderRelation,
}

impl IdentityKind {
    pub const ALL: [IdentityKind; 4] = [
        IdentityKind::FactorizationBd,
        IdentityKind::LinegraphHexToKagome,
        IdentityKind::SubdivisionRelation,
        IdentityKind::LadderRelation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            IdentityKind::FactorizationBd => "factorization_bd",
            IdentityKind::LinegraphHexToKagome => "linegraph_hex_to_kagome",
            IdentityKind::SubdivisionRelation => "subdivision_relation",
            IdentityKind::LadderRelation => "ladder_relation",
        }
    }
}

impl FromStr for IdentityKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        IdentityKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownIdentity(s.to_string()))
    }
}

/// One sample point: complex quasi-momentum `z` and an energy. Real
/// identities use `Re z`.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityTrial {
    pub z: Vec<C64>,
    pub lambda: f64,
}

/// Max over trials of `|LHS - RHS|` for the requested identity.
///
/// Both sides of the graph-operation identities are evaluated from
/// determinants of catalog Bloch matrices. The subdivision relation uses
/// `p_S(x,λ) = (-λ)^κ (1/2)^μ p_Γ(x, 1 - 2λ²)` with `p = det(H0 - λ)`.
pub fn verify_identity(kind: IdentityKind, dim: usize, trials: &[IdentityTrial]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    match kind {
        IdentityKind::FactorizationBd => {
            for t in trials {
                let z = &t.z[..dim];
                let neg: Vec<C64> = z.iter().map(|v| -v).collect();
                let lhs = b_d(z) + (dim as f64 + 1.0) / 2.0;
                let rhs = f_d(z) * f_d(&neg) * 0.5;
                worst = worst.max((lhs - rhs).norm());
            }
        }
        IdentityKind::LinegraphHexToKagome => {
            let hex = build_lattice(LatticeName::Hexagonal, 2)?;
            let kag = build_lattice(LatticeName::Kagome, 2)?;
            let (k, mu, kappa) = (3.0, 2, 1);
            for t in trials {
                let x = re(&t.z[..2]);
                let l = c(t.lambda);
                let lhs = char_poly(&kag, &x, l);
                let arg = (l + (k - 2.0) / (2.0 * k - 2.0)) * ((2.0 * k - 2.0) / k);
                let rhs = (c(1.0 / (k - 1.0)) - l).powi(kappa)
                    * (k / (2.0 * k - 2.0)).powi(mu)
                    * char_poly(&hex, &x, arg);
                worst = worst.max((lhs - rhs).norm());
            }
        }
        IdentityKind::SubdivisionRelation => {
            let base = build_lattice(LatticeName::Square, dim)?;
            let sub = build_lattice(LatticeName::SubdivisionSquare, dim)?;
            let (mu, kappa) = (1, dim as i32 - 1);
            for t in trials {
                let x = re(&t.z[..dim]);
                let l = c(t.lambda);
                let lhs = char_poly(&sub, &x, l);
                let rhs = (-l).powi(kappa) * 0.5f64.powi(mu) * char_poly(&base, &x, c(1.0) - l * l * 2.0);
                worst = worst.max((lhs - rhs).norm());
            }
        }
        IdentityKind::LadderRelation => {
            let base = build_lattice(LatticeName::Square, dim)?;
            let lad = build_lattice(LatticeName::LadderSquare, dim)?;
            let (k, mu) = (2.0 * dim as f64, 1);
            for t in trials {
                let x = re(&t.z[..dim]);
                let l = c(t.lambda);
                let lhs = char_poly(&lad, &x, l);
                let scaled = l * ((k + 1.0) / k);
                let rhs = (k / (k + 1.0)).powi(2 * mu)
                    * char_poly(&base, &x, scaled + 1.0 / k)
                    * char_poly(&base, &x, scaled - 1.0 / k);
                worst = worst.max((lhs - rhs).norm());
            }
        }
    }
    Ok(worst)
}

fn re(z: &[C64]) -> Vec<f64> {
    z.iter().map(|v| v.re).collect()
}

/// Kagome flat-band vector with eigenvalue 1/2, `(b - 1, b(ā - 1), 1 - āb)`
/// with `a = e^{ix1}`, `b = e^{ix2}`. It vanishes only at `x = 0`, where the
/// flat band touches the dispersive one.
pub fn kagome_flat_vector(x: &[f64]) -> Vec<C64> {
    let a = C64::from_polar(1.0, x[0]);
    let b = C64::from_polar(1.0, x[1]);
    vec![b - 1.0, b * (a.conj() - 1.0), c(1.0) - a.conj() * b]
}

/// Subdivision flat-band vectors `v_j(x)`, `j = 1..d-1`, with eigenvalue 0.
pub fn subdivision_flat_vectors(x: &[f64]) -> Vec<Vec<C64>> {
    let d = x.len();
    (1..d)
        .map(|j| {
            let mut v = vec![c(0.0); d + 1];
            v[1] = -(c(1.0) + C64::from_polar(1.0, x[j]));
            v[j + 1] = c(1.0) + C64::from_polar(1.0, x[0]);
            v
        })
        .collect()
}

/// `‖H0(x) v - λ v‖` for a candidate eigenvector.
pub fn eigen_residual(spec: &PeriodicLatticeSpec, x: &[f64], v: &[C64], lambda: f64) -> f64 {
    let hv = spec.stencil().eval(x).mul_vec(v);
    hv.iter().zip(v).map(|(a, b)| (a - b * lambda).norm_sqr()).sum::<f64>().sqrt()
}
