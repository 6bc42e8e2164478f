use lattice_spectra::green::{green_offspectrum, green_pv, PvOptions, Side};
use lattice_spectra::lattice::{build_lattice, torus_matrix, LatticeName};
use lattice_spectra::perturbation::{
    assemble, lippmann_schwinger, perturbed_resolvent, PerturbationSpec, PotentialEntry, SiteRef, Vertex,
};
use lattice_spectra::spectral::LatticeVector;
use lattice_spectra::Error;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

fn potential(entries: &[(usize, [i64; 2], f64)]) -> PerturbationSpec {
    PerturbationSpec {
        potential: entries.iter().map(|&(band, site, value)| PotentialEntry { band, site: site.to_vec(), value }).collect(),
        ..Default::default()
    }
}

fn flat(n: &[i64], period: usize) -> usize {
    n.iter().rev().fold(0, |acc, &k| acc * period + k.rem_euclid(period as i64) as usize)
}

#[test]
fn offspectrum_perturbed_resolvent_matches_dense_torus_inverse() {
    let z = C64::new(-0.1, 0.5);
    let period = 24;
    let spec = build_lattice(LatticeName::Hexagonal, 2).unwrap();
    let s = spec.cells();
    let entries = [(0, [0, 0], 0.7), (1, [1, -1], -0.4)];
    let op = assemble(&spec, &potential(&entries)).unwrap();
    let green = green_offspectrum(&spec, z, op.required_radius() + 2, 128).unwrap();
    let g = LatticeVector::from_entries([(Vertex::site(1, &[0, 1]), C64::new(1.0, 0.5))]);
    let eval: Vec<Vertex> = [(0, [0, 0]), (1, [2, -1]), (0, [-2, 3]), (1, [4, 0])].iter().map(|(c, n)| Vertex::site(*c, n)).collect();
    let u = perturbed_resolvent(&op, &green, &g, &eval).unwrap();

    let mut h = torus_matrix(&spec, period).map(|v| C64::new(v, 0.0));
    for (c, n, v) in entries {
        let i = c + s * flat(&n, period);
        h[(i, i)] += v;
    }
    let dim = h.nrows();
    let r = (h - DMatrix::<C64>::identity(dim, dim) * z).try_inverse().unwrap();
    let col = 1 + s * flat(&[0, 1], period);
    for (k, v) in eval.iter().enumerate() {
        let Vertex::Site { cell, n } = v else { unreachable!() };
        let want = r[(cell + s * flat(n, period), col)] * C64::new(1.0, 0.5);
        assert!((u[k] - want).norm() < 1e-10, "{v}: {} vs {}", u[k], want);
    }
}

#[test]
fn boundary_route_agrees_with_lippmann_schwinger_on_the_spectrum() {
    let spec = build_lattice(LatticeName::Square, 2).unwrap();
    let op = assemble(&spec, &potential(&[(0, [0, 0], 1.2), (0, [1, 0], -0.3)])).unwrap();
    let green = green_pv(&spec, 0.3, Side::Plus, op.required_radius() + 2, &PvOptions::for_dim(2)).unwrap();
    let g = LatticeVector::delta(0, &[0, 1]);
    let eval = op.graph.vertices_within(3);
    let a = perturbed_resolvent(&op, &green, &g, &eval).unwrap();
    let b = lippmann_schwinger(&op, &green, &g, &eval).unwrap();
    let err = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
}

#[test]
fn lippmann_schwinger_refuses_graph_surgery() {
    let spec = build_lattice(LatticeName::Square, 2).unwrap();
    let pert = PerturbationSpec { removed_vertices: vec![SiteRef::new(0, &[0, 0])], ..Default::default() };
    let op = assemble(&spec, &pert).unwrap();
    let green = green_offspectrum(&spec, C64::new(0.0, 0.5), op.required_radius(), 128).unwrap();
    let r = lippmann_schwinger(&op, &green, &LatticeVector::delta(0, &[2, 0]), &[Vertex::site(0, &[2, 0])]);
    assert!(matches!(r, Err(Error::UnsupportedPerturbation(_))));
}

#[test]
fn surgery_outside_the_box_is_rejected() {
    let spec = build_lattice(LatticeName::Square, 2).unwrap();
    let pert = PerturbationSpec {
        removed_edges: vec![[SiteRef::new(0, &[2, 0]), SiteRef::new(0, &[3, 0])]],
        box_radius: Some(3),
        ..Default::default()
    };
    assert!(matches!(assemble(&spec, &pert), Err(Error::SurgeryTouchesBoundary { .. })));
}

#[test]
fn removing_a_non_edge_is_rejected() {
    let spec = build_lattice(LatticeName::Square, 2).unwrap();
    let pert = PerturbationSpec { removed_edges: vec![[SiteRef::new(0, &[0, 0]), SiteRef::new(0, &[1, 1])]], ..Default::default() };
    assert!(matches!(assemble(&spec, &pert), Err(Error::NonSymmetricEdges(_))));
}

#[test]
fn perturbed_operator_is_symmetric() {
    let spec = build_lattice(LatticeName::Kagome, 2).unwrap();
    let pert = PerturbationSpec {
        removed_vertices: vec![SiteRef::new(1, &[0, 0])],
        added_edges: vec![[SiteRef::new(0, &[0, 0]), SiteRef::new(2, &[1, 1])]],
        ..potential(&[(2, [0, 0], 0.25)])
    };
    let op = assemble(&spec, &pert).unwrap();
    let g = &op.graph;
    for v in g.vertices_within(2) {
        for w in g.neighbors(&v) {
            assert_eq!(g.coupling(&v, &w), g.coupling(&w, &v), "{v} {w}");
        }
    }
}
