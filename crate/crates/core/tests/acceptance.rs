//! Acceptance suite. Runs every criterion at its pinned tolerance, prints one
//! PASS/FAIL line each and exits non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use kotz_tails::harness::{run_scenario, scenario_names, ValidationReport};

struct Outcome {
    id: usize,
    title: &'static str,
    pass: bool,
    summary: String,
}

fn checks_line(report: &ValidationReport) -> String {
    report
        .checks
        .iter()
        .map(|c| {
            format!(
                "{} = {:.4e} (bound {:.4e}){}",
                c.name,
                c.value,
                c.bound,
                if c.pass { "" } else { " FAIL" }
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn scenario(name: &str) -> (ValidationReport, Duration) {
    let start = Instant::now();
    let report =
        run_scenario(name, None).unwrap_or_else(|e| panic!("scenario {name} errored: {e}"));
    (report, start.elapsed())
}

/// A criterion backed by one scenario, with an optional wall-clock limit.
fn from_scenario(
    id: usize,
    title: &'static str,
    name: &str,
    limit: Option<Duration>,
) -> (Outcome, ValidationReport) {
    let (report, elapsed) = scenario(name);
    let in_time = limit.is_none_or(|l| elapsed < l);
    let mut summary = format!(
        "{}; runtime {:.1}s",
        checks_line(&report),
        elapsed.as_secs_f64()
    );
    if let Some(l) = limit {
        summary.push_str(&format!(
            " (limit {}s{})",
            l.as_secs(),
            if in_time { "" } else { " EXCEEDED" }
        ));
    }
    let pass = report.pass && in_time;
    (
        Outcome {
            id,
            title,
            pass,
            summary,
        },
        report,
    )
}

fn main() -> ExitCode {
    // libtest flags such as --nocapture are accepted and ignored
    let mut outcomes = Vec::new();
    let mut first_runs = Vec::new();
    let record = |(o, r): (Outcome, ValidationReport), runs: &mut Vec<(String, String)>| {
        println!(
            "criterion {:>2} [{}] {}: {}",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            o.title,
            o.summary
        );
        runs.push((r.scenario.clone(), r.to_json()));
        o
    };

    outcomes.push(record(
        from_scenario(
            1,
            "QP oracle equivalence",
            "qp-oracle",
            Some(Duration::from_secs(10)),
        ),
        &mut first_runs,
    ));
    outcomes.push(record(
        from_scenario(
            2,
            "Gaussian closed-form identity",
            "gaussian-closed-form",
            None,
        ),
        &mut first_runs,
    ));
    outcomes.push(record(
        from_scenario(
            3,
            "asymptotic vs exact convergence",
            "gaussian-convergence",
            Some(Duration::from_secs(60)),
        ),
        &mut first_runs,
    ));
    outcomes.push(record(
        from_scenario(4, "sampler correctness", "sampler", None),
        &mut first_runs,
    ));
    outcomes.push(record(
        from_scenario(
            5,
            "Monte Carlo tail validation",
            "mc-tail",
            Some(Duration::from_secs(300)),
        ),
        &mut first_runs,
    ));

    {
        let (mut o, r) = from_scenario(6, "conditional excess", "excess", None);
        let count = r.details.get("count").and_then(|v| v.as_u64()).unwrap_or(0);
        let enough = count >= 2000;
        o.pass &= enough;
        o.summary = format!(
            "exceedances = {count} (need 2000{}); {}",
            if enough { "" } else { " FAIL" },
            o.summary
        );
        outcomes.push(record((o, r), &mut first_runs));
    }

    {
        // both halves together must fit in the limit
        let (tri, tri_time) = scenario("hr-triangular");
        let (fixed, fixed_time) = scenario("hr-fixed");
        let total = tri_time + fixed_time;
        let in_time = total < Duration::from_secs(600);
        let o = Outcome {
            id: 7,
            title: "Husler-Reiss limit",
            pass: tri.pass && fixed.pass && in_time,
            summary: format!(
                "triangular: {}; fixed correlation: {}; runtime {:.1}s (limit 600s{})",
                checks_line(&tri),
                checks_line(&fixed),
                total.as_secs_f64(),
                if in_time { "" } else { " EXCEEDED" }
            ),
        };
        println!(
            "criterion {:>2} [{}] {}: {}",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            o.title,
            o.summary
        );
        first_runs.push((tri.scenario.clone(), tri.to_json()));
        first_runs.push((fixed.scenario.clone(), fixed.to_json()));
        outcomes.push(o);
    }

    outcomes.push(record(
        from_scenario(8, "estimator consistency", "estimator", None),
        &mut first_runs,
    ));
    outcomes.push(record(
        from_scenario(9, "Gaussian tools oracle", "orthant", None),
        &mut first_runs,
    ));

    {
        let mut mismatched = Vec::new();
        for name in scenario_names() {
            let first = first_runs
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, j)| j.clone());
            let again = scenario(name).0.to_json();
            if first.as_deref() != Some(again.as_str()) {
                mismatched.push(name);
            }
        }
        let o = Outcome {
            id: 10,
            title: "determinism",
            pass: mismatched.is_empty(),
            summary: if mismatched.is_empty() {
                format!(
                    "{} scenarios rerun, all reports byte-identical",
                    scenario_names().len()
                )
            } else {
                format!("reports differ on rerun: {}", mismatched.join(", "))
            },
        };
        println!(
            "criterion {:>2} [{}] {}: {}",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            o.title,
            o.summary
        );
        outcomes.push(o);
    }

    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!(
        "acceptance: {} of {} criteria pass{}",
        outcomes.len() - failed.len(),
        outcomes.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failing: {failed:?}")
        }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
