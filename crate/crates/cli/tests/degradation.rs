//! Deliberately degraded runs must be caught by the suite.

use lattice_spectra_cli::verify::{run_criterion, CriterionResult, VerifyOptions};

fn defect_at_reference(r: &CriterionResult) -> f64 {
    r.checks.iter().find(|c| c.label.starts_with("unitarity defect at resolution")).expect("defect check").value
}

#[test]
fn flipped_surface_term_breaks_the_optical_theorem() {
    let healthy = run_criterion(7, &VerifyOptions::default());
    assert!(healthy.passed, "{healthy:?}");
    let opts = VerifyOptions { surface_sign: -1.0, ..VerifyOptions::default() };
    let broken = run_criterion(7, &opts);
    assert!(!broken.passed);
    assert!(broken.metric > 1e-2, "{}", broken.metric);
}

#[test]
fn halving_the_channel_resolution_raises_the_unitarity_defect() {
    let full = run_criterion(11, &VerifyOptions::default());
    let half = run_criterion(11, &VerifyOptions { resolution_scale: 0.5, ..VerifyOptions::default() });
    assert!(full.passed && half.passed, "{full:?}\n{half:?}");
    let (a, b) = (defect_at_reference(&full), defect_at_reference(&half));
    assert!(b > a, "defect {b:.3e} at half resolution vs {a:.3e}");
    let trend = half.checks.iter().find(|c| c.label.starts_with("refinement trend")).unwrap();
    assert!(trend.passed);
}

#[test]
fn trial_points_depend_on_the_seed_only() {
    let a = run_criterion(2, &VerifyOptions::default());
    let b = run_criterion(2, &VerifyOptions::default());
    let c = run_criterion(2, &VerifyOptions { seed: 7, ..VerifyOptions::default() });
    assert_eq!(a, b);
    assert!(c.passed);
    assert_ne!(a.metric, c.metric);
}
