//! Dyadic-shell Besov norms on `Z^d` and the decay diagnostics built on them.
//!
//! Shells use the sup-norm `|n|_∞`; Ω_0 = {|n| < 1}, Ω_j = {2^{j-1} <= |n| < 2^j}
//! with weight `r_j = 2^j`.

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::perturbation::PerturbedGraph;
use crate::spectral::LatticeVector;
use crate::thresholds::catalog;
use serde::{Deserialize, Serialize};

/// Smallest window radius accepted by the diagnostics.
pub const MIN_WINDOW: usize = 8;
/// Shells below this fraction of `‖u‖` count as empty.
pub const SHELL_FLOOR: f64 = 1e-12;
/// Relative residual accepted by the Rellich diagnostic.
pub const SOLUTION_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesovReport {
    pub window_radius: usize,
    /// `Σ_j r_j^{1/2} ‖u‖_{Ω_j}`.
    pub b_norm: f64,
    /// `(sup_{R>1} (1/R) Σ_{|n|<R} |u(n)|²)^{1/2}`, with `R` ranging over the window.
    pub b_star_norm: f64,
    /// `(R, (1/R) Σ_{|n|<R} |u(n)|²)` at `R = 2, 4, 8, ...` up to the window radius.
    pub b_star0_profile: Vec<(f64, f64)>,
}

/// `Σ_{|n|_∞ = r} |u(n)|²` for `r = 0..=radius`; entries outside are ignored.
pub fn shell_masses(u: &LatticeVector, radius: usize) -> Vec<f64> {
    let mut m = vec![0.0; radius + 1];
    for (v, x) in u.iter() {
        let r = v.radius() as usize;
        if r <= radius {
            m[r] += x.norm_sqr();
        }
    }
    m
}

/// Besov-type norms of `u` restricted to the window `|n|_∞ <= window_radius`.
pub fn besov_report(u: &LatticeVector, window_radius: usize) -> Result<BesovReport> {
    if window_radius < MIN_WINDOW {
        return Err(Error::WindowTooSmall { radius: window_radius, min: MIN_WINDOW });
    }
    let m = shell_masses(u, window_radius);
    let mut b_norm = m[0].sqrt();
    let mut j = 1;
    loop {
        let lo = 1usize << (j - 1);
        if lo > window_radius {
            break;
        }
        let hi = ((1usize << j) - 1).min(window_radius);
        let mass: f64 = m[lo..=hi].iter().sum();
        b_norm += ((1u64 << j) as f64).sqrt() * mass.sqrt();
        j += 1;
    }
    // (1/R) Σ_{|n|<R} is maximised as R decreases to an integer k from above,
    // where it equals S_k / k with S_k = Σ_{|n| <= k}.
    let mut cumulative = vec![0.0; window_radius + 1];
    let mut acc = 0.0;
    for (r, mass) in m.iter().enumerate() {
        acc += mass;
        cumulative[r] = acc;
    }
    let b_star_sq = (1..=window_radius).map(|k| cumulative[k] / k as f64).fold(0.0, f64::max);
    let mut profile = Vec::new();
    let mut r = 2;
    while r <= window_radius {
        profile.push((r as f64, cumulative[r - 1] / r as f64));
        r *= 2;
    }
    Ok(BesovReport { window_radius, b_norm, b_star_norm: b_star_sq.sqrt(), b_star0_profile: profile })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum DecayClass {
    /// Every shell beyond `radius` is below the floor.
    Compact { radius: i64 },
    /// Local power-law exponents of the tail increase without bound.
    Superpolynomial { exponents: Vec<f64> },
    /// Decaying at a roughly fixed power.
    Polynomial { exponents: Vec<f64> },
    /// The averaged mass does not tend to zero (`u ∉ 𝓑*₀`).
    NonDecaying,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RellichReport {
    pub energy: f64,
    pub besov: BesovReport,
    /// Last value of the `𝓑*₀` profile.
    pub b_star0_defect: f64,
    pub shell_norms: Vec<f64>,
    pub compact_support_radius: Option<i64>,
    pub decay: DecayClass,
    /// Relative residual of `(H - λ) u` on rows `|n| <= R - 1`.
    pub residual: f64,
    pub in_exceptional_set: bool,
    /// A decaying, non-compact solution is allowed only on the exceptional set.
    pub consistent: bool,
}

/// Classify the decay of `u` from its shell norms.
pub fn classify_decay(u: &LatticeVector, window_radius: usize) -> Result<(DecayClass, Vec<f64>, BesovReport)> {
    let besov = besov_report(u, window_radius)?;
    let m = shell_masses(u, window_radius);
    let norms: Vec<f64> = m.iter().map(|x| x.sqrt()).collect();
    let total = m.iter().sum::<f64>().sqrt();
    if total == 0.0 {
        return Ok((DecayClass::Compact { radius: 0 }, norms, besov));
    }
    let floor = SHELL_FLOOR * total;
    let last = norms.iter().rposition(|&x| x > floor).unwrap_or(0) as i64;
    let mut tail = vec![0.0; m.len() + 1];
    for r in (0..m.len()).rev() {
        tail[r] = tail[r + 1] + m[r];
    }
    let mut exponents = Vec::new();
    let mut r = 2;
    while 2 * r <= window_radius {
        let (a, b) = (tail[r].sqrt(), tail[2 * r].sqrt());
        if b <= floor {
            break;
        }
        exponents.push((a / b).log2());
        r *= 2;
    }
    // Geometric decay that reaches the floor inside the window is not
    // evidence of compact support.
    let accelerating = exponents.len() >= 2
        && exponents.windows(2).all(|w| w[1] > 1.1 * w[0])
        && exponents[exponents.len() - 1] > 4.0;
    if accelerating && last >= MIN_WINDOW as i64 {
        return Ok((DecayClass::Superpolynomial { exponents }, norms, besov));
    }
    if last + 2 <= window_radius as i64 {
        return Ok((DecayClass::Compact { radius: last }, norms, besov));
    }
    let p = &besov.b_star0_profile;
    if p.len() >= 2 && p[p.len() - 1].1 > 0.75 * p[p.len() - 2].1 {
        return Ok((DecayClass::NonDecaying, norms, besov));
    }
    let decay = if accelerating {
        DecayClass::Superpolynomial { exponents }
    } else {
        DecayClass::Polynomial { exponents }
    };
    Ok((decay, norms, besov))
}

/// Decay diagnostic for a windowed solution of `(H - λ) u = 0`.
pub fn rellich_decay_diagnostic(
    graph: &PerturbedGraph,
    u: &LatticeVector,
    energy: f64,
    window_radius: usize,
) -> Result<RellichReport> {
    let inner = window_radius as i64 - 1;
    let hu = graph.apply(u);
    let mut num = 0.0;
    for (v, x) in hu.iter() {
        if v.radius() <= inner {
            num += (x - u.get(v) * energy).norm_sqr();
        }
    }
    for (v, x) in u.iter() {
        if v.radius() <= inner && hu.get(v) == C64::default() {
            num += (x * energy).norm_sqr();
        }
    }
    let unorm = u.norm_sqr().sqrt();
    let residual = if unorm > 0.0 { num.sqrt() / unorm } else { 0.0 };
    if residual > SOLUTION_TOL {
        return Err(Error::NotASolution { residual, tolerance: SOLUTION_TOL });
    }
    let (decay, shell_norms, besov) = classify_decay(u, window_radius)?;
    let compact_support_radius = match decay {
        DecayClass::Compact { radius } => Some(radius),
        _ => None,
    };
    let in_exceptional_set = catalog(graph.spec.name, graph.spec.dim).t1.contains(energy);
    let consistent = match decay {
        DecayClass::Superpolynomial { .. } | DecayClass::Polynomial { .. } => in_exceptional_set,
        _ => true,
    };
    Ok(RellichReport {
        energy,
        b_star0_defect: besov.b_star0_profile.last().map(|p| p.1).unwrap_or(0.0),
        besov,
        shell_norms,
        compact_support_radius,
        decay,
        residual,
        in_exceptional_set,
        consistent,
    })
}
