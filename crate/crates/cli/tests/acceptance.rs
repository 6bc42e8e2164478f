//! Full acceptance suite at the contract tolerances, one line per criterion.
//! Runs as a plain binary so the report is printed under `cargo test`.

use lattice_spectra_cli::verify::{budget, verify_all, VerifyOptions, TOTAL_BUDGET};
use std::process::ExitCode;

fn main() -> ExitCode {
    let ids: Vec<usize> = (1..=13).collect();
    let summary = verify_all(&VerifyOptions::default(), &ids);
    let mut failed = 0;
    let mut total = 0.0;
    println!("\nacceptance suite");
    for (r, t) in summary.results.iter().zip(&summary.timings) {
        total += t.seconds;
        let in_budget = budget(r.id).is_none_or(|b| t.seconds < b);
        let passed = r.passed && in_budget;
        failed += usize::from(!passed);
        let limit = budget(r.id).map(|b| format!(" / {b:.0} s")).unwrap_or_default();
        println!(
            "criterion {:>2} {}  {:<42} worst {:.3e} (limit {:.1e})  {:.1} s{}",
            r.id,
            if passed { "PASS" } else { "FAIL" },
            r.name,
            r.metric,
            r.threshold,
            t.seconds,
            limit,
        );
        if let Some(e) = &r.error {
            println!("    error: {e}");
        }
        for c in r.checks.iter().filter(|c| !c.passed) {
            println!("    failed check: {} = {:.3e} (limit {:.1e})", c.label, c.value, c.threshold);
        }
        if !in_budget {
            println!("    over the wall-time budget");
        }
    }
    let total_ok = total < TOTAL_BUDGET;
    println!("total {:.1} s / {TOTAL_BUDGET:.0} s {}", total, if total_ok { "PASS" } else { "FAIL" });
    if failed == 0 && total_ok {
        println!("all 13 criteria passed\n");
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed\n");
        ExitCode::FAILURE
    }
}
