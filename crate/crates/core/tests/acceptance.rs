//! Acceptance run: one line per criterion on stderr, nonzero exit if any
//! criterion fails. Set `RTA_ACCEPTANCE_SMOKE=1` for reduced sizes (the
//! statistical criteria are then not expected to pass).

use std::io::Write;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rta_core::harness::{ExperimentSpec, Harness};
use rta_core::model::{validate, ModelParams};
use rta_core::rng::Parallelism;

const SEED: u64 = 20261014;

/// (criterion, experiment, runtime budget in seconds)
const CRITERIA: &[(u32, &str, u64)] = &[
    (1, "equilibrium", 60),
    (2, "symbol_check", 60),
    (3, "stable_index_fit", 600),
    (4, "oracle_equivalence", 600),
    (5, "scaling_limit_experiment", 1800),
    (6, "energy_identity", 300),
    (7, "quadratic_form", 60),
    (8, "crossing_time_convergence", 900),
    (9, "macroscopic_jumps", 900),
    (10, "boundary_trace", 300),
    (11, "weak_residual", 600),
    (12, "mixing_check", 60),
    (13, "determinism", 900),
];

fn main() -> ExitCode {
    let smoke = std::env::var_os("RTA_ACCEPTANCE_SMOKE").is_some();
    let spec = if smoke { ExperimentSpec::smoke() } else { ExperimentSpec::default() };
    let model = validate(&ModelParams::reference(2.0, 0.5, 0.3, 0.2)).expect("reference model is valid");
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let h = Harness {
        model: &model,
        spec: &spec,
        seed: SEED,
        par: Parallelism::new(workers),
    };
    let mut err = std::io::stderr();
    let mut failed = 0;
    for &(id, name, budget) in CRITERIA {
        let start = Instant::now();
        let result = h.run(name);
        let elapsed = start.elapsed();
        let in_budget = elapsed <= Duration::from_secs(budget);
        let (ok, detail) = match &result {
            Ok(t) if t.assertions.is_empty() => (false, "no assertions recorded".to_string()),
            Ok(t) => {
                let bad: Vec<String> = t
                    .assertions
                    .iter()
                    .filter(|a| !a.passed)
                    .map(|a| format!("{} (observed {:.4e}, threshold {:.4e})", a.name, a.observed, a.threshold))
                    .collect();
                let msg = if bad.is_empty() {
                    format!("{} assertions", t.assertions.len())
                } else {
                    format!("failed: {}", bad.join("; "))
                };
                (bad.is_empty(), msg)
            }
            Err(e) => (false, format!("error [{}]: {e}", e.code())),
        };
        let pass = ok && in_budget;
        if !pass {
            failed += 1;
        }
        let budget_note = if in_budget { String::new() } else { format!(" over budget {budget}s;") };
        writeln!(
            err,
            "criterion {id:>2} {name}: {} ({:.1}s;{budget_note} {detail})",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        )
        .ok();
    }
    writeln!(err, "acceptance: {} of {} criteria passed", CRITERIA.len() - failed, CRITERIA.len()).ok();
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
