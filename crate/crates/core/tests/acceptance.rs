//! Runs the full acceptance suite, one line per criterion.
//!
//! `ERWLAB_ACCEPT` selects criteria (default `all`), e.g.
//! `ERWLAB_ACCEPT=concentration,11 cargo test --test acceptance`.

use std::process::ExitCode;

use erwlab::accept::{run_suite, select, Targets, DEFAULT_SEED};

fn main() -> ExitCode {
    let selection = std::env::var("ERWLAB_ACCEPT").unwrap_or_else(|_| "all".into());
    let criteria = match select(&selection) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let report = run_suite(&criteria, DEFAULT_SEED, None, &Targets::default(), |r| println!("{}", r.line()));
    let passed = report.results.iter().filter(|r| r.passed).count();
    println!("acceptance: {passed}/{} passed", report.results.len());
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
