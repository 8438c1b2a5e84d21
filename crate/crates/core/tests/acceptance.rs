//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! `WSP_ACCEPTANCE_ONLY=4,8` runs a subset (criterion 13 is skipped then).

use std::process::ExitCode;

use wsp_core::acceptance::{run_criterion, run_suite, CriterionResult};
use wsp_core::parallel::with_workers;

fn main() -> ExitCode {
    let print = |r: &CriterionResult| println!("{}", r.line());
    let results = match std::env::var("WSP_ACCEPTANCE_ONLY") {
        Ok(list) => list
            .split(',')
            .filter_map(|t| t.trim().parse::<u32>().ok())
            .map(|id| {
                let r = with_workers(1, || run_criterion(id)).expect("thread pool");
                print(&r);
                r
            })
            .collect::<Vec<_>>(),
        Err(_) => run_suite(1, 8, print).expect("thread pool"),
    };
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
