//! Periodic trapezoid sums on the torus, Gauss–Legendre rules and
//! polynomial extrapolation.

use crate::lattice::BlochStencil;
use crate::linalg::{CMat, C64};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Uniform periodic grid on `[0, 2π)^d` with equal weights `(2π/grid_n)^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TorusQuadrature {
    pub d: usize,
    pub grid_n: usize,
}

impl TorusQuadrature {
    pub fn new(d: usize, grid_n: usize) -> Self {
        assert!(d >= 1 && grid_n >= 1);
        Self { d, grid_n }
    }

    pub fn weight(&self) -> f64 {
        (2.0 * PI / self.grid_n as f64).powi(self.d as i32)
    }

    pub fn len(&self) -> usize {
        self.grid_n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        2.0 * PI * i as f64 / self.grid_n as f64
    }

    /// Multi-index of the `flat`-th node (first axis slowest).
    pub fn index(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.d];
        let mut rem = flat;
        for a in (0..self.d).rev() {
            idx[a] = rem % self.grid_n;
            rem /= self.grid_n;
        }
        idx
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.index(flat).into_iter().map(|i| self.coordinate(i)).collect()
    }

    /// `Σ_nodes weight · f(x)`.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
        let parts: Vec<f64> = (0..self.len())
            .into_par_iter()
            .with_min_len(4096)
            .map(|k| f(&self.node(k)))
            .collect();
        crate::linalg::pairwise_sum(&parts) * self.weight()
    }
}

/// Lattice offsets `n` with `|n|_∞ <= radius`, first axis slowest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OffsetBox {
    pub d: usize,
    pub radius: i64,
}

impl OffsetBox {
    pub fn side(&self) -> usize {
        (2 * self.radius + 1) as usize
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn flat(&self, n: &[i64]) -> Option<usize> {
        let mut f = 0usize;
        for &k in n {
            if k.abs() > self.radius {
                return None;
            }
            f = f * self.side() + (k + self.radius) as usize;
        }
        Some(f)
    }

    pub fn offset(&self, flat: usize) -> Vec<i64> {
        let mut n = vec![0i64; self.d];
        let mut rem = flat;
        for a in (0..self.d).rev() {
            n[a] = (rem % self.side()) as i64 - self.radius;
            rem /= self.side();
        }
        n
    }

    pub fn offsets(&self) -> Vec<Vec<i64>> {
        (0..self.len()).map(|f| self.offset(f)).collect()
    }
}

/// `(2π)^{-d} ∫ f(x) e^{-i n·x} dx` for every `|n|_∞ <= radius` by the
/// periodic trapezoid rule on a `grid_n^d` grid, where `f` takes values in
/// `s x s` matrices. `f(idx, out)` receives the grid multi-index and writes
/// row-major entries into `out`. The sum is separable: inner axes are
/// contracted first, and chunks along the first axis are reduced in a fixed
/// order so the result does not depend on the thread count.
pub fn torus_fourier<F>(d: usize, grid_n: usize, radius: i64, s: usize, f: F) -> Vec<CMat>
where
    F: Fn(&[usize], &mut [C64]) + Sync,
{
    let raw = torus_fourier_raw(d, grid_n, radius, s * s, f);
    let obox = OffsetBox { d, radius };
    (0..obox.len())
        .map(|k| CMat::from_fn(s, |i, j| raw[k * s * s + i * s + j]))
        .collect()
}

/// Same as [`torus_fourier`] with a flat value vector of length `width`.
pub fn torus_fourier_raw<F>(d: usize, grid_n: usize, radius: i64, width: usize, f: F) -> Vec<C64>
where
    F: Fn(&[usize], &mut [C64]) + Sync,
{
    let k_side = (2 * radius + 1) as usize;
    let phases: Vec<C64> = (0..grid_n)
        .flat_map(|i| {
            let x = 2.0 * PI * i as f64 / grid_n as f64;
            (0..k_side).map(move |k| C64::from_polar(1.0, -((k as i64 - radius) as f64) * x))
        })
        .collect();
    let out_len = width * k_side.pow(d as u32);
    const CHUNK: usize = 8;
    let chunks: Vec<(usize, usize)> =
        (0..grid_n).step_by(CHUNK).map(|a| (a, (a + CHUNK).min(grid_n))).collect();
    let partials: Vec<Vec<C64>> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut acc = vec![C64::default(); out_len];
            let mut idx = vec![0usize; d];
            let mut val = vec![C64::default(); width];
            let mut scratch: Vec<Vec<C64>> =
                (1..d).map(|depth| vec![C64::default(); width * k_side.pow((d - depth) as u32)]).collect();
            for i in lo..hi {
                idx[0] = i;
                let sub_len = out_len / k_side;
                let sub: &mut Vec<C64> = if d == 1 {
                    val.fill(C64::default());
                    f(&idx, &mut val);
                    let e = &phases[i * k_side..(i + 1) * k_side];
                    for (k, &ek) in e.iter().enumerate() {
                        for (p, &v) in val.iter().enumerate() {
                            acc[k * width + p] += v * ek;
                        }
                    }
                    continue;
                } else {
                    &mut scratch[0]
                };
                sub.fill(C64::default());
                let mut rest = std::mem::take(sub);
                contract(1, d, grid_n, k_side, width, &phases, &mut idx, &mut val, &mut scratch[1..], &mut rest, &f);
                let e = &phases[i * k_side..(i + 1) * k_side];
                for (k, &ek) in e.iter().enumerate() {
                    let dst = &mut acc[k * sub_len..(k + 1) * sub_len];
                    for (a, &b) in dst.iter_mut().zip(rest.iter()) {
                        *a += b * ek;
                    }
                }
                scratch[0] = rest;
            }
            acc
        })
        .collect();
    let scale = 1.0 / (grid_n as f64).powi(d as i32);
    let mut out = vec![C64::default(); out_len];
    for p in &partials {
        for (a, &b) in out.iter_mut().zip(p) {
            *a += b;
        }
    }
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

#[allow(clippy::too_many_arguments)]
fn contract<F>(
    depth: usize,
    d: usize,
    grid_n: usize,
    k_side: usize,
    width: usize,
    phases: &[C64],
    idx: &mut [usize],
    val: &mut [C64],
    scratch: &mut [Vec<C64>],
    out: &mut [C64],
    f: &F,
) where
    F: Fn(&[usize], &mut [C64]) + Sync,
{
    if depth == d - 1 {
        for i in 0..grid_n {
            idx[depth] = i;
            val.fill(C64::default());
            f(idx, val);
            let e = &phases[i * k_side..(i + 1) * k_side];
            if width == 1 {
                let v = val[0];
                for (o, &ek) in out.iter_mut().zip(e) {
                    *o += v * ek;
                }
            } else {
                for (k, &ek) in e.iter().enumerate() {
                    for (p, &v) in val.iter().enumerate() {
                        out[k * width + p] += v * ek;
                    }
                }
            }
        }
        return;
    }
    let (head, tail) = scratch.split_first_mut().expect("scratch depth");
    let sub_len = head.len();
    for i in 0..grid_n {
        idx[depth] = i;
        head.fill(C64::default());
        contract(depth + 1, d, grid_n, k_side, width, phases, idx, val, tail, head, f);
        let e = &phases[i * k_side..(i + 1) * k_side];
        for (k, &ek) in e.iter().enumerate() {
            let dst = &mut out[k * sub_len..(k + 1) * sub_len];
            for (a, &b) in dst.iter_mut().zip(head.iter()) {
                *a += b * ek;
            }
        }
    }
}

/// Bloch stencil evaluation on a fixed grid through precomputed phase tables.
#[derive(Clone, Debug)]
pub struct GridStencil {
    pub s: usize,
    pub d: usize,
    pub grid_n: usize,
    /// `table[(m + max_off) * grid_n + i] = e^{-i m x_i}`.
    table: Vec<C64>,
    /// `(row * s + col, coef, factors)`, where `factors` indexes `factor_list`.
    terms: Vec<(usize, f64, std::ops::Range<usize>)>,
    /// `(axis, table row offset)` for every nonzero offset component.
    factor_list: Vec<(usize, usize)>,
}

impl GridStencil {
    pub fn new(stencil: &BlochStencil, grid_n: usize) -> Self {
        let max_off = stencil.terms.iter().flat_map(|t| t.offset.iter().map(|m| m.abs())).max().unwrap_or(0);
        let mut table = Vec::with_capacity((2 * max_off as usize + 1) * grid_n);
        for m in -max_off..=max_off {
            for i in 0..grid_n {
                let x = 2.0 * PI * i as f64 / grid_n as f64;
                table.push(C64::from_polar(1.0, -(m as f64) * x));
            }
        }
        let mut factor_list = Vec::new();
        let terms = stencil
            .terms
            .iter()
            .map(|t| {
                let start = factor_list.len();
                for (a, &m) in t.offset.iter().enumerate() {
                    if m != 0 {
                        factor_list.push((a, (m + max_off) as usize * grid_n));
                    }
                }
                (t.row * stencil.s + t.col, t.coef, start..factor_list.len())
            })
            .collect();
        Self { s: stencil.s, d: stencil.d, grid_n, table, terms, factor_list }
    }

    /// Row-major `H0(x_idx)` written into `out` (length `s*s`, overwritten).
    pub fn eval_into(&self, idx: &[usize], out: &mut [C64]) {
        out.fill(C64::default());
        for (pos, coef, factors) in &self.terms {
            let mut e = C64::new(*coef, 0.0);
            for &(a, base) in &self.factor_list[factors.clone()] {
                e *= self.table[base + idx[a]];
            }
            out[*pos] += e;
        }
    }

    pub fn eval(&self, idx: &[usize]) -> CMat {
        let mut buf = [C64::default(); crate::linalg::MAX_CELLS * crate::linalg::MAX_CELLS];
        self.eval_into(idx, &mut buf[..self.s * self.s]);
        CMat::from_fn(self.s, |i, j| buf[i * self.s + j])
    }
}

/// Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre(order: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let rule = gauss_quad::GaussLegendre::new(order.try_into().expect("order must be at least 2"));
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut v: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (mid + half * x, half * w)).collect();
    v.sort_by(|p, q| p.0.total_cmp(&q.0));
    v
}

/// Polynomial extrapolation of samples `(h_k, y_k)` to `h = 0` (Neville).
pub fn neville_at_zero(h: &[f64], y: &[C64]) -> C64 {
    assert_eq!(h.len(), y.len());
    let mut p = y.to_vec();
    let n = h.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (p[i] * h[i + m] - p[i + 1] * h[i]) / (h[i + m] - h[i]);
        }
    }
    p[0]
}
