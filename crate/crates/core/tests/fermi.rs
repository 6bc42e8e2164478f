use lattice_spectra::fermi::{density_of_states, fermi_surface};
use lattice_spectra::lattice::{build_lattice, LatticeName};
use lattice_spectra::Error;
use std::f64::consts::PI;

/// Arithmetic-geometric mean.
fn agm(mut a: f64, mut b: f64) -> f64 {
    while (a - b).abs() > 1e-15 * a {
        (a, b) = (0.5 * (a + b), (a * b).sqrt());
    }
    a
}

#[test]
fn square_density_of_states_matches_the_elliptic_closed_form() {
    // ρ(λ) = 2K(sqrt(1 - λ²))/π² = 1/(π AGM(1, |λ|)).
    let spec = build_lattice(LatticeName::Square, 2).unwrap();
    let energies = [-0.7, -0.3, 0.2, 0.55];
    let rho = density_of_states(&spec, &energies, 256).unwrap();
    for (e, r) in energies.iter().zip(&rho) {
        let exact = 1.0 / (PI * agm(1.0, e.abs()));
        assert!((r - exact).abs() < 1e-8 * exact, "{e}: {r} vs {exact}");
    }
}

#[test]
fn fermi_nodes_lie_on_the_level_set() {
    for (name, e) in [(LatticeName::Hexagonal, 0.3), (LatticeName::Kagome, -0.4), (LatticeName::Triangular, 0.1)] {
        let spec = build_lattice(name, 2).unwrap();
        let mesh = fermi_surface(&spec, e, 64).unwrap();
        assert!(!mesh.nodes.is_empty());
        assert_eq!(mesh.dropped, 0);
        for n in &mesh.nodes {
            assert!(n.energy_defect < 1e-12, "{name:?}: {}", n.energy_defect);
            let g: f64 = n.gradient.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n.coarea_weight - n.weight / g).abs() < 1e-12 * n.coarea_weight.max(1.0));
        }
    }
}

#[test]
fn meshing_refuses_thresholds_and_gaps() {
    let spec = build_lattice(LatticeName::Square, 2).unwrap();
    assert!(matches!(fermi_surface(&spec, 0.0, 32), Err(Error::EnergyAtThreshold { .. })));
    assert!(matches!(fermi_surface(&spec, 1.3, 32), Err(Error::EnergyOutsideBand { .. })));
}
