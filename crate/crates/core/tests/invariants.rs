use lattice_spectra::bands::{band_eigensystem, merge_intervals};
use lattice_spectra::besov::besov_report;
use lattice_spectra::charpoly::{char_poly, char_poly_closed, eigen_residual, kagome_flat_vector, subdivision_flat_vectors};
use lattice_spectra::lattice::{build_lattice, LatticeName};
use lattice_spectra::perturbation::Vertex;
use lattice_spectra::quadrature::neville_at_zero;
use lattice_spectra::spectral::LatticeVector;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn lattice() -> impl Strategy<Value = LatticeName> {
    proptest::sample::select(LatticeName::ALL.to_vec())
}

fn momentum(d: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-PI..PI, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bloch_matrix_is_hermitian_and_real_symmetric_under_reflection(name in lattice(), x in momentum(2)) {
        let st = build_lattice(name, 2).unwrap().stencil();
        let h = st.eval(&x);
        prop_assert!(h.hermitian_defect() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let hn = st.eval(&neg);
        let s = h.n;
        for i in 0..s {
            for j in 0..s {
                prop_assert!((hn[(i, j)] - h[(i, j)].conj()).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn bands_lie_in_minus_one_one(name in lattice(), x in momentum(2)) {
        let e = band_eigensystem(&build_lattice(name, 2).unwrap(), &x);
        for v in &e.eigenvalues {
            prop_assert!(*v >= -1.0 - 1e-12 && *v <= 1.0 + 1e-12);
        }
        prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn characteristic_polynomial_matches_closed_form(name in lattice(), x in momentum(2), re in -1.5..1.5f64, im in -1.0..1.0f64) {
        let spec = build_lattice(name, 2).unwrap();
        let lambda = C64::new(re, im);
        let det = char_poly(&spec, &x, lambda);
        let closed = char_poly_closed(name, &x, lambda);
        prop_assert!((det - closed).norm() <= 1e-12 * (1.0 + det.norm()), "{det} vs {closed}");
    }

    #[test]
    fn kagome_flat_vector_is_a_nonzero_eigenvector(x in momentum(2)) {
        prop_assume!(x.iter().map(|v| v * v).sum::<f64>() > 1e-6);
        let spec = build_lattice(LatticeName::Kagome, 2).unwrap();
        let v = kagome_flat_vector(&x);
        let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(norm > 0.0);
        prop_assert!(eigen_residual(&spec, &x, &v, 0.5) < 1e-13 * norm.max(1.0));
    }

    #[test]
    fn subdivision_flat_vectors_have_eigenvalue_zero(d in 2usize..5, seed in momentum(4)) {
        let spec = build_lattice(LatticeName::SubdivisionSquare, d).unwrap();
        let x = &seed[..d];
        let vs = subdivision_flat_vectors(x);
        prop_assert_eq!(vs.len(), d - 1);
        for v in vs {
            prop_assert!(eigen_residual(&spec, x, &v, 0.0) < 1e-13);
        }
    }

    #[test]
    fn merged_intervals_are_disjoint_and_cover_the_input(v in proptest::collection::vec((-2.0..2.0f64, 0.0..1.0f64), 1..12)) {
        let raw: Vec<(f64, f64)> = v.iter().map(|&(a, w)| (a, a + w)).collect();
        let merged = merge_intervals(raw.clone());
        prop_assert!(merged.windows(2).all(|w| w[0].1 < w[1].0));
        for (a, b) in raw {
            prop_assert!(merged.iter().any(|&(lo, hi)| lo <= a && b <= hi));
        }
    }

    #[test]
    fn b_star_norm_is_dominated_by_b_norm(values in proptest::collection::vec((-12i64..=12, -12i64..=12, -1.0..1.0f64, -1.0..1.0f64), 1..40)) {
        let u = LatticeVector::from_entries(values.iter().map(|&(i, j, re, im)| (Vertex::site(0, &[i, j]), C64::new(re, im))));
        prop_assume!(u.norm_sqr() > 0.0);
        let r = besov_report(&u, 16).unwrap();
        prop_assert!(r.b_star_norm <= r.b_norm * (1.0 + 1e-12));
        prop_assert!(u.norm_sqr().sqrt() <= r.b_norm * (1.0 + 1e-12));
    }

    #[test]
    fn neville_is_exact_on_polynomials(c in proptest::collection::vec(-3.0..3.0f64, 4)) {
        let h = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
        let y: Vec<C64> = h.iter().map(|&t| C64::new(c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t, c[1])).collect();
        let p = neville_at_zero(&h, &y);
        prop_assert!((p - C64::new(c[0], c[1])).norm() < 1e-10);
    }
}
