use lattice_spectra::bands::{band_eigensystem, spectrum_bands};
use lattice_spectra::lattice::{build_lattice, torus_matrix, LatticeName};
use lattice_spectra::Error;
use nalgebra::SymmetricEigen;
use std::f64::consts::PI;

fn catalog() -> Vec<(LatticeName, usize)> {
    LatticeName::ALL.iter().map(|&n| (n, 2)).chain([
        (LatticeName::Square, 3),
        (LatticeName::Diamond, 3),
        (LatticeName::SubdivisionSquare, 3),
        (LatticeName::LadderSquare, 3),
    ])
    .collect()
}

#[test]
fn every_catalog_lattice_validates() {
    for (name, d) in catalog() {
        let spec = build_lattice(name, d).unwrap();
        spec.validate().unwrap();
        assert_eq!(spec.dim, d);
        assert_eq!(spec.degrees.len(), spec.cells());
    }
}

#[test]
fn unsupported_dimensions_are_rejected() {
    assert!(matches!(build_lattice(LatticeName::Square, 1), Err(Error::UnsupportedDimension { .. })));
    assert!(matches!(build_lattice(LatticeName::Graphite, 3), Err(Error::UnsupportedDimension { .. })));
    assert!(matches!(build_lattice(LatticeName::Kagome, 3), Err(Error::UnsupportedDimension { .. })));
}

#[test]
fn bottom_of_spectrum_is_minus_one_at_the_origin() {
    // sqrt(deg) is a positive eigenvector of the degree-balanced operator at x = 0.
    for (name, d) in catalog() {
        let spec = build_lattice(name, d).unwrap();
        let e = band_eigensystem(&spec, &vec![0.0; d]);
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-12, "{name:?} d={d}: {}", e.eigenvalues[0]);
    }
}

#[test]
fn torus_spectrum_equals_bloch_spectrum_on_the_dual_grid() {
    let period = 6;
    for name in [LatticeName::Square, LatticeName::Hexagonal, LatticeName::Kagome, LatticeName::Graphite] {
        let spec = build_lattice(name, 2).unwrap();
        let m = torus_matrix(&spec, period);
        assert!((&m - m.transpose()).amax() < 1e-15);
        let mut dense: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        let mut bloch = Vec::new();
        for i in 0..period {
            for j in 0..period {
                let x = [2.0 * PI * i as f64 / period as f64, 2.0 * PI * j as f64 / period as f64];
                let e = band_eigensystem(&spec, &x);
                bloch.extend_from_slice(&e.eigenvalues[..spec.cells()]);
            }
        }
        bloch.sort_by(f64::total_cmp);
        let err = dense.iter().zip(&bloch).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{name:?}: {err}");
    }
}

#[test]
fn square_spectrum_is_the_full_interval() {
    let r = spectrum_bands(&build_lattice(LatticeName::Square, 2).unwrap(), 64);
    assert_eq!(r.intervals.len(), 1);
    assert!((r.intervals[0].0 + 1.0).abs() < 1e-12 && (r.intervals[0].1 - 1.0).abs() < 1e-12);
    assert!(r.flat_bands.is_empty());
}

#[test]
fn flat_bands_are_detected() {
    let k = spectrum_bands(&build_lattice(LatticeName::Kagome, 2).unwrap(), 32);
    assert_eq!(k.flat_bands.len(), 1);
    assert!((k.flat_bands[0] - 0.5).abs() < 1e-9);
    let s = spectrum_bands(&build_lattice(LatticeName::SubdivisionSquare, 3).unwrap(), 16);
    assert!(s.flat_bands.iter().all(|e| e.abs() < 1e-9) && !s.flat_bands.is_empty());
}
