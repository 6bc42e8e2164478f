//! Small dense complex matrices sized for Bloch Hamiltonians, plus thin
//! wrappers over `nalgebra` for the larger dense solves.

use nalgebra::{DMatrix, DVector, SMatrix};
use num_complex::Complex64;
use std::ops::{Index, IndexMut};

pub type C64 = Complex64;

/// Largest unit cell handled by the stack-allocated kernels.
pub const MAX_CELLS: usize = 6;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Stack-allocated `n x n` complex matrix with `n <= MAX_CELLS`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CMat {
    pub n: usize,
    a: [[C64; MAX_CELLS]; MAX_CELLS],
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.a[i][j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.a[i][j]
    }
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        assert!(n <= MAX_CELLS, "matrix size {n} exceeds {MAX_CELLS}");
        Self { n, a: [[C64::default(); MAX_CELLS]; MAX_CELLS] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i][i] = c(1.0);
        }
        m
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.a[i][j] = f(i, j);
            }
        }
        m
    }

    pub fn to_dmatrix(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.a[i][j])
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.a[j][i].conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_fn(self.n, |i, j| self.a[i][j] * s)
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::from_fn(self.n, |i, j| self.a[i][j] + o.a[i][j])
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::from_fn(self.n, |i, j| self.a[i][j] - o.a[i][j])
    }

    pub fn mul(&self, o: &Self) -> Self {
        let n = self.n;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.a[i][k];
                for j in 0..n {
                    m.a[i][j] += aik * o.a[k][j];
                }
            }
        }
        m
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.a[i][j] * v[j]).sum()).collect()
    }

    /// `self - z I`.
    pub fn shift(&self, z: C64) -> Self {
        let mut m = *self;
        for i in 0..self.n {
            m.a[i][i] -= z;
        }
        m
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.n).map(|i| self.a[i][j]).collect()
    }

    /// Max entrywise distance from the conjugate transpose.
    pub fn hermitian_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                d = d.max((self.a[i][j] - self.a[j][i].conj()).norm());
            }
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                d = d.max(self.a[i][j].norm());
            }
        }
        d
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self.a[i][i]).sum()
    }

    /// Rank-one projector `v v*`.
    pub fn outer(v: &[C64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j].conj())
    }

    pub fn determinant(&self) -> C64 {
        self.to_dmatrix().determinant()
    }
}

/// Ascending eigen-decomposition of a Hermitian matrix; eigenvectors are the
/// columns of `vectors`, each phase-fixed so its largest component is real
/// and positive.
#[derive(Clone, Copy, Debug)]
pub struct Eigh {
    pub values: [f64; MAX_CELLS],
    pub vectors: CMat,
}

impl Eigh {
    pub fn n(&self) -> usize {
        self.vectors.n
    }

    pub fn vector(&self, j: usize) -> Vec<C64> {
        self.vectors.column(j)
    }

    /// Projection onto the `j`-th eigenvector.
    pub fn projection(&self, j: usize) -> CMat {
        CMat::outer(&self.vector(j))
    }
}

macro_rules! eigh_static {
    ($n:literal, $m:expr) => {{
        let mat = SMatrix::<C64, $n, $n>::from_fn(|i, j| $m.a[i][j]);
        let e = mat.symmetric_eigen();
        let vals: Vec<f64> = e.eigenvalues.iter().copied().collect();
        let vecs = CMat::from_fn($n, |i, j| e.eigenvectors[(i, j)]);
        (vals, vecs)
    }};
}

macro_rules! inverse_static {
    ($n:literal, $m:expr) => {{
        let mat = SMatrix::<C64, $n, $n>::from_fn(|i, j| $m.a[i][j]);
        mat.try_inverse().map(|inv| CMat::from_fn($n, |i, j| inv[(i, j)]))
    }};
}

/// Eigen-decomposition of a Hermitian matrix (only the lower triangle is
/// referenced by the underlying solver).
pub fn eigh(m: &CMat) -> Eigh {
    let n = m.n;
    if n == 1 {
        let mut values = [0.0; MAX_CELLS];
        values[0] = m.a[0][0].re;
        return Eigh { values, vectors: CMat::identity(1) };
    }
    let (vals, vecs) = match n {
        2 => eigh_static!(2, m),
        3 => eigh_static!(3, m),
        4 => eigh_static!(4, m),
        5 => eigh_static!(5, m),
        6 => eigh_static!(6, m),
        _ => unreachable!(),
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let mut values = [0.0; MAX_CELLS];
    let mut vectors = CMat::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = vals[src];
        let col = vecs.column(src);
        let phase = gauge_phase(&col);
        for i in 0..n {
            vectors.a[i][dst] = col[i] * phase;
        }
    }
    Eigh { values, vectors }
}

/// Unit phase that makes the first largest-magnitude component real positive.
fn gauge_phase(v: &[C64]) -> C64 {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let pivot = v.iter().find(|z| z.norm() >= max * (1.0 - 1e-9)).copied().unwrap_or(c(1.0));
    if pivot.norm() == 0.0 {
        c(1.0)
    } else {
        pivot.conj() / pivot.norm()
    }
}

/// Inverse of a small matrix, `None` when numerically singular.
pub fn inverse(m: &CMat) -> Option<CMat> {
    match m.n {
        1 => {
            let v = m.a[0][0];
            (v.norm() > 0.0).then(|| CMat::from_fn(1, |_, _| 1.0 / v))
        }
        2 => {
            let det = m.a[0][0] * m.a[1][1] - m.a[0][1] * m.a[1][0];
            if det.norm() == 0.0 {
                return None;
            }
            let r = 1.0 / det;
            let mut out = CMat::zeros(2);
            out.a[0][0] = m.a[1][1] * r;
            out.a[1][1] = m.a[0][0] * r;
            out.a[0][1] = -m.a[0][1] * r;
            out.a[1][0] = -m.a[1][0] * r;
            Some(out)
        }
        3 => inverse_static!(3, m),
        4 => inverse_static!(4, m),
        5 => inverse_static!(5, m),
        6 => inverse_static!(6, m),
        _ => unreachable!(),
    }
}

/// Solve a dense complex system by LU with partial pivoting.
pub fn lu_solve(a: &DMatrix<C64>, b: &DMatrix<C64>) -> Option<DMatrix<C64>> {
    a.clone().lu().solve(b)
}

/// Smallest singular value of a dense complex matrix.
pub fn sigma_min(a: &DMatrix<C64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    sv.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Right singular vector belonging to the smallest singular value.
pub fn null_vector(a: &DMatrix<C64>) -> (f64, DVector<C64>) {
    let svd = a.clone().svd(false, true);
    let (k, s) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let vt = svd.v_t.expect("requested right singular vectors");
    let v = vt.row(k).adjoint();
    (s, v)
}

/// Largest eigenvalue magnitude of a Hermitian matrix.
pub fn hermitian_spectral_radius(a: &DMatrix<C64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let e = a.clone().symmetric_eigen();
    e.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Pairwise summation, used wherever reductions must not depend on the
/// partitioning of parallel work.
pub fn pairwise_sum<T>(v: &[T]) -> T
where
    T: Copy + Default + std::ops::Add<Output = T>,
{
    const BLOCK: usize = 32;
    if v.len() <= BLOCK {
        v.iter().fold(T::default(), |a, &b| a + b)
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}
