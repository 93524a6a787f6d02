//! Acceptance battery: one pass/fail line per criterion, non-zero exit on any failure.

use std::process::ExitCode;

use chaoskit::suite::{run_criterion, CRITERIA};

const SEED: u64 = 20_240_601;

fn main() -> ExitCode {
    let reports: Vec<_> = (1..=CRITERIA).map(|id| run_criterion(id, SEED)).collect();
    for r in &reports {
        println!("{}", r.line());
    }
    let failed: Vec<usize> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    if failed.is_empty() {
        println!("acceptance: {CRITERIA}/{CRITERIA} criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
