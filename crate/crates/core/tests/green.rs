use lattice_spectra::green::{green_offspectrum, green_eps, green_pv, EpsOptions, PvOptions, Side};
use lattice_spectra::lattice::{build_lattice, torus_matrix, LatticeName, PeriodicLatticeSpec};
use lattice_spectra::Error;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Dense `(H_torus - z)^{-1}`; the periodisation error decays like
/// `e^{-c·period·Im z}`.
fn torus_resolvent(spec: &PeriodicLatticeSpec, period: usize, z: C64) -> DMatrix<C64> {
    let m = torus_matrix(spec, period).map(|v| C64::new(v, 0.0));
    let n = m.nrows();
    (m - DMatrix::<C64>::identity(n, n) * z).try_inverse().unwrap()
}

fn flat(n: &[i64], period: usize) -> usize {
    n.iter().rev().fold(0, |acc, &k| acc * period + k.rem_euclid(period as i64) as usize)
}

#[test]
fn offspectrum_table_matches_dense_torus_inverse() {
    let z = C64::new(0.2, 0.6);
    let period = 24;
    for name in [LatticeName::Square, LatticeName::Hexagonal, LatticeName::Kagome] {
        let spec = build_lattice(name, 2).unwrap();
        let s = spec.cells();
        let table = green_offspectrum(&spec, z, 2, 128).unwrap();
        let dense = torus_resolvent(&spec, period, z);
        let mut err: f64 = 0.0;
        for n in [[0, 0], [1, 0], [0, -1], [2, 1], [-1, 2]] {
            let b = table.get(&n).unwrap();
            for p in 0..s {
                for q in 0..s {
                    err = err.max((b[(p, q)] - dense[(p + s * flat(&n, period), q)]).norm());
                }
            }
        }
        assert!(err < 1e-10, "{name:?}: {err}");
        assert!(table.free_residual(&spec.stencil()) < 1e-10);
    }
}

#[test]
fn offspectrum_refuses_points_near_the_spectrum() {
    let spec = build_lattice(LatticeName::Square, 2).unwrap();
    let r = green_offspectrum(&spec, C64::new(0.3, 1e-4), 1, 64);
    assert!(matches!(r, Err(Error::SpectrumTooClose { .. })));
}

#[test]
fn incoming_table_is_the_adjoint_reflection_of_the_outgoing_one() {
    // G(n; λ - i0) = G(-n; λ + i0)^*.
    let spec = build_lattice(LatticeName::Hexagonal, 2).unwrap();
    let opts = PvOptions::for_dim(2);
    let plus = green_pv(&spec, 0.3, Side::Plus, 2, &opts).unwrap();
    let minus = green_pv(&spec, 0.3, Side::Minus, 2, &opts).unwrap();
    for n in [[0i64, 0], [1, 0], [1, -2], [2, 2]] {
        let neg = [-n[0], -n[1]];
        let d = minus.get(&n).unwrap().sub(&plus.get(&neg).unwrap().adjoint()).max_abs();
        assert!(d < 1e-12, "{n:?}: {d}");
    }
    let conj = plus.conjugate_side();
    assert!(conj.get(&[1, -2]).unwrap().sub(minus.get(&[1, -2]).unwrap()).max_abs() < 1e-12);
}

#[test]
fn limiting_tables_solve_the_free_equation() {
    let spec = build_lattice(LatticeName::Square, 2).unwrap();
    let pv = green_pv(&spec, -0.45, Side::Plus, 3, &PvOptions::for_dim(2)).unwrap();
    assert!(pv.free_residual(&spec.stencil()) < 1e-8);
    // Outgoing: Im G(0; λ + i0) = π ρ(λ) > 0.
    assert!(pv.get(&[0, 0]).unwrap()[(0, 0)].im > 0.0);
}

#[test]
fn threshold_energies_are_refused() {
    let spec = build_lattice(LatticeName::Square, 2).unwrap();
    let r = green_eps(&spec, 0.0, Side::Plus, 1, &EpsOptions::default());
    assert!(matches!(r, Err(Error::EnergyAtThreshold { .. })));
}

#[test]
fn limiting_table_outside_the_spectrum_is_the_real_resolvent() {
    let spec = build_lattice(LatticeName::Square, 2).unwrap();
    let pv = green_pv(&spec, 1.5, Side::Plus, 2, &PvOptions::for_dim(2)).unwrap();
    let off = green_offspectrum(&spec, C64::new(1.5, 0.0), 2, 128).unwrap();
    for n in [[0i64, 0], [1, 0], [2, 1]] {
        let d = pv.get(&n).unwrap().sub(off.get(&n).unwrap()).max_abs();
        assert!(d < 1e-8, "{n:?}: {d}");
    }
}
