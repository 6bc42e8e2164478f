use lattice_spectra::besov::{besov_report, classify_decay, DecayClass};
use lattice_spectra::embedded::{construct_compact_eigenvector, construct_graphite_embedded, construct_ladder_embedded, Construction, Sign};
use lattice_spectra::perturbation::Vertex;
use lattice_spectra::spectral::LatticeVector;
use lattice_spectra::Error;
use num_complex::Complex64 as C64;

#[test]
fn ladder_eigenpair_is_an_eigenvector_with_superpolynomial_decay() {
    let (pert, pair) = construct_ladder_embedded(2, 0.7, Sign::Plus, 40).unwrap();
    assert!(pair.residual < 1e-12, "{}", pair.residual);
    assert!(matches!(pair.decay, DecayClass::Superpolynomial { .. }), "{:?}", pair.decay);
    assert_eq!(pert.potential.len(), 2);
    assert_eq!(pert.potential[0].value, pert.potential[1].value);
}

#[test]
fn ladder_forbidden_range_is_rejected() {
    // d = 2: (2d - 1)/(2d + 1) = 3/5.
    assert!(matches!(construct_ladder_embedded(2, 0.5, Sign::Plus, 20), Err(Error::EnergyInsideForbiddenRange { .. })));
    assert!(matches!(construct_ladder_embedded(2, 0.7, Sign::Minus, 20), Err(Error::EnergyInsideForbiddenRange { .. })));
    assert!(construct_ladder_embedded(2, -0.7, Sign::Minus, 20).is_ok());
}

#[test]
fn graphite_eigenpair_and_forbidden_range() {
    let (_, pair) = construct_graphite_embedded(0.8, Sign::Plus, 40).unwrap();
    assert!(pair.residual < 1e-10, "{}", pair.residual);
    assert!(matches!(construct_graphite_embedded(0.4, Sign::Plus, 20), Err(Error::EnergyInsideForbiddenRange { .. })));
}

#[test]
fn compact_eigenvectors_are_exact_and_compact() {
    for (kind, v, energy) in [(Construction::KagomeHexagon, 0.3, 0.8), (Construction::SubdivisionPlaquette, -0.2, -0.2)] {
        let (_, pair) = construct_compact_eigenvector(kind, v).unwrap();
        assert!(pair.residual < 1e-14, "{kind:?}: {}", pair.residual);
        assert!((pair.energy - energy).abs() < 1e-15);
        assert!(matches!(pair.decay, DecayClass::Compact { radius } if radius <= 1), "{:?}", pair.decay);
    }
}

#[test]
fn besov_norms_of_a_delta() {
    let r = besov_report(&LatticeVector::delta(0, &[0, 0]), 8).unwrap();
    assert!((r.b_norm - 1.0).abs() < 1e-15);
    assert!((r.b_star_norm - 1.0).abs() < 1e-15);
    assert!(matches!(besov_report(&LatticeVector::delta(0, &[0, 0]), 4), Err(Error::WindowTooSmall { .. })));
}

#[test]
fn plane_wave_is_not_decaying() {
    let r = 32i64;
    let u = LatticeVector::from_entries((-r..=r).flat_map(|i| (-r..=r).map(move |j| (Vertex::site(0, &[i, j]), C64::from_polar(1.0, 0.4 * i as f64 - 1.1 * j as f64)))));
    let (class, _, _) = classify_decay(&u, r as usize).unwrap();
    assert_eq!(class, DecayClass::NonDecaying);
}
