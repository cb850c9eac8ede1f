//! Runs the sixteen acceptance checks and prints one line per check.
//!
//! Checks 9 and 15 need a unit time factor and a zero-mean bump, so they run on the
//! winding scenario; everything else runs on the default scenario.

use std::process::ExitCode;
use std::time::Instant;

use blowup_loops::cli::{run_criterion, Scenario, Status};

fn main() -> ExitCode {
    let default = Scenario::default_scenario().context().expect("default scenario is valid");
    let winding = Scenario::winding_scenario().context().expect("winding scenario is valid");
    let mut failed = 0;
    for id in 1..=16u8 {
        let ctx = if matches!(id, 9 | 15) { &winding } else { &default };
        let started = Instant::now();
        let rec = run_criterion(id, ctx);
        let ok = rec.status == Status::Pass;
        if !ok {
            failed += 1;
        }
        let shown: Vec<String> = rec.values.iter().take(3).map(|v| format!("{}={}", v.name, v.value)).collect();
        println!(
            "criterion {id:>2} {:<4} {:<22} [{}] {:.1?}  {}{}",
            if ok { "PASS" } else { "FAIL" },
            rec.name,
            ctx.scenario.name,
            started.elapsed(),
            shown.join(", "),
            rec.note.map(|n| format!("  ({n})")).unwrap_or_default(),
        );
    }
    println!("acceptance: {} of 16 passed", 16 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
