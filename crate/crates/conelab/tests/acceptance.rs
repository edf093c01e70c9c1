//! Acceptance suite: runs the reference configuration end to end, evaluates criteria 1 to 11 and
//! prints one line per criterion. Exits nonzero when any criterion or any pinned tolerance fails.

use conelab::artifacts::read_json;
use conelab::run::{cmd_run, LimitLadderReport, RunOptions, RunOutcome, LIMIT_LADDER_FILE};
use conelab::verify::{tol, verify_run};
use conelab_core::estimates::{M_VARIATION_MAX, RAW_GROWTH_MIN};
use conelab_core::metric::METRICATION_TOL;
use conelab_core::ModelConfig;
use std::process::ExitCode;

/// Every tolerance the criteria use, with its required value.
fn pinned_tolerances() -> Vec<(&'static str, f64, f64)> {
    vec![
        ("calibration", tol::CALIBRATION, 1e-8),
        ("area", tol::AREA, 1e-8),
        ("potential rate", tol::POTENTIAL_RATE, 0.70),
        ("potential value at t = 12", tol::POTENTIAL_FINAL, 1e-3),
        ("potential runtime [s]", tol::POTENTIAL_RUNTIME_SECONDS, 120.0),
        ("time-derivative rate", tol::TIME_DERIVATIVE_RATE, 0.20),
        ("trace-defect rate", tol::TRACE_DEFECT_RATE, 0.10),
        ("uniform variation", tol::UNIFORM_VARIATION, 0.10),
        ("smoothing M variation", M_VARIATION_MAX, 0.20),
        ("smoothing raw growth", RAW_GROWTH_MIN, 0.50),
        ("smoothing runtime [s]", tol::SMOOTHING_RUNTIME_SECONDS, 180.0),
        ("fiber rate", tol::FIBER_RATE, 0.5),
        ("fiber rate rounding", tol::FIBER_RATE_ROUNDING, 1e-9),
        ("gh time", tol::GH_TIME, 10.0),
        ("gh fraction", tol::GH_FRACTION, 0.05),
        ("jacobian", tol::JACOBIAN, 1e-6),
        ("uniqueness", tol::UNIQUENESS, 1e-8),
        ("richardson order", tol::RICHARDSON_ORDER, 1.0),
        ("richardson slack", tol::RICHARDSON_SLACK, 0.2),
        ("metrication", METRICATION_TOL, (std::f64::consts::PI / 8.0).cos().recip() - 1.0),
    ]
}

fn main() -> ExitCode {
    let mut failures = 0;
    for (name, actual, pinned) in pinned_tolerances() {
        if (actual - pinned).abs() > 1e-15 * pinned.abs() {
            println!("tolerance {name}: {actual} differs from the pinned {pinned}");
            failures += 1;
        }
    }

    let dir = tempfile::tempdir().expect("temporary directory");
    let out = dir.path().join("reference");
    let config = ModelConfig::reference();
    match cmd_run(&config, &out, &RunOptions::default()) {
        Ok(RunOutcome::Completed) => {}
        Ok(RunOutcome::Interrupted) => {
            println!("reference run was interrupted");
            return ExitCode::FAILURE;
        }
        Err(e) => {
            println!("reference run failed: {e}");
            return ExitCode::FAILURE;
        }
    }

    let results = match verify_run(&out) {
        Ok(r) => r,
        Err(e) => {
            println!("verification could not start: {e}");
            return ExitCode::FAILURE;
        }
    };
    for r in &results {
        println!("criterion {:>2} {:<30} {}  {}", r.id, r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
        failures += usize::from(!r.passed);
    }

    let ladder: LimitLadderReport = read_json(&out.join(LIMIT_LADDER_FILE)).expect("limit ladder report");
    let monotone = ladder.monotone && ladder.differences.windows(2).all(|w| w[1] <= w[0]);
    println!(
        "limit ladder Cauchy differences {:?} monotone: {}",
        ladder.differences,
        if monotone { "PASS" } else { "FAIL" }
    );
    failures += usize::from(!monotone);

    println!("acceptance: {} of {} criteria passed", results.iter().filter(|r| r.passed).count(), results.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
