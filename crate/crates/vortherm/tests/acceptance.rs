//! Acceptance gate for the benchmark reproduction: one test per criterion,
//! each printing a single PASS/FAIL line with the observed values before
//! asserting, plus the harness rate invariant at the end. The two
//! convergence studies are solved once and shared between tests. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines for
//! passing criteria as well.
//!
//! The error-magnitude comparison (criterion 3) and the rate invariant are
//! checked exactly as stated even though the fixed mesh layout used here is
//! known not to meet them on some rows; those tests fail with per-row detail
//! rather than with loosened bounds.

use std::rc::Rc;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use vortherm::assembly::DiscreteSystem;
use vortherm::harness::{
    convergence_study, exact_case_2d, run_property_suite, suite_passed, ErrorReport,
};
use vortherm::mesh::{mesh_stats, refine_uniform};
use vortherm::spaces::build_spaces;

const K0_LEVELS: usize = 6;
const K1_LEVELS: usize = 5;
/// Final-level rate bands for the two orders.
const K0_RATE_BAND: (f64, f64) = (0.9, 1.1);
const K1_RATE_BAND: (f64, f64) = (1.9, 2.1);
/// Wall-clock budgets for the two studies.
const K0_BUDGET: Duration = Duration::from_secs(300);
const K1_BUDGET: Duration = Duration::from_secs(600);
/// Two-sided agreement factor against the tabulated reference errors.
const REFERENCE_FACTOR: f64 = 3.0;
/// Pointwise divergence cap, every level.
const DIV_LIMIT: f64 = 1e-10;
/// Newton iteration cap, every level (at the default tolerance of 1e-8).
const NEWTON_LIMIT: usize = 5;
/// Wall-clock budget for the property suite.
const SUITE_BUDGET: Duration = Duration::from_secs(120);
/// The interpolant residual must decay at a rate of at least k + 1 minus
/// this slack.
const RESIDUAL_RATE_SLACK: f64 = 0.2;

/// Tabulated reference errors for the same benchmark, (h, e_curl_s, e_rdiv,
/// e0, e1) per level. The source tabulation does not state its mesh layout,
/// so agreement is asserted only up to [`REFERENCE_FACTOR`].
const REF_K0: [[f64; 5]; 6] = [
    [0.5, 8.87e+0, 4.25e-1, 7.81e-1, 4.30e+0],
    [0.25, 4.23e+0, 2.07e-1, 3.75e-1, 2.22e+0],
    [0.125, 2.06e+0, 1.02e-1, 1.85e-1, 1.16e+0],
    [0.0625, 1.02e+0, 5.09e-2, 9.20e-2, 5.69e-1],
    [0.0312, 5.05e-1, 2.54e-2, 4.59e-2, 2.81e-1],
    [0.0156, 2.52e-1, 1.27e-2, 2.30e-2, 1.40e-1],
];
const REF_K1: [[f64; 5]; 5] = [
    [0.5, 1.67e+0, 9.08e-2, 7.56e-2, 1.66e+0],
    [0.25, 4.29e-1, 2.42e-2, 1.78e-2, 6.19e-1],
    [0.125, 1.07e-1, 6.13e-3, 4.37e-3, 1.50e-1],
    [0.0625, 2.65e-2, 1.54e-3, 1.09e-3, 3.83e-2],
    [0.0312, 6.61e-3, 3.85e-4, 2.72e-4, 9.64e-3],
];

const FAMILIES: [&str; 4] = ["e_curl_s", "e_rdiv", "e0", "e1"];

struct Study {
    report: ErrorReport,
    elapsed: Duration,
}

static STUDIES: OnceLock<(Study, Study)> = OnceLock::new();

fn studies() -> &'static (Study, Study) {
    STUDIES.get_or_init(|| {
        let t = Instant::now();
        let k0 = convergence_study(0, K0_LEVELS).expect("order-0 study");
        let k0 = Study { report: k0, elapsed: t.elapsed() };
        let t = Instant::now();
        let k1 = convergence_study(1, K1_LEVELS).expect("order-1 study");
        let k1 = Study { report: k1, elapsed: t.elapsed() };
        (k0, k1)
    })
}

/// Print the single verdict line, then assert; the detail rides along in the
/// panic message so plain `cargo test` output stays self-explanatory.
fn verdict(label: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("{tag} {label}: {detail}");
    assert!(pass, "{label}: {detail}");
}

fn final_rates(report: &ErrorReport) -> [f64; 4] {
    let rates = report.rates();
    let last = rates.last().expect("study has rows");
    last.map(|r| r.expect("final level has rates"))
}

#[test]
fn criterion_1_first_order_rates() {
    let (k0, _) = studies();
    let rates = final_rates(&k0.report);
    let (lo, hi) = K0_RATE_BAND;
    let rates_ok = rates.iter().all(|r| (lo..=hi).contains(r));
    let time_ok = k0.elapsed <= K0_BUDGET;
    let detail = format!(
        "order 0, {} levels: final rates {:.2?} (band [{lo}, {hi}]), study took {:.1}s (budget {}s)",
        K0_LEVELS,
        rates,
        k0.elapsed.as_secs_f64(),
        K0_BUDGET.as_secs(),
    );
    verdict("criterion 1 (first-order rates)", rates_ok && time_ok, &detail);
}

#[test]
fn criterion_2_second_order_rates() {
    let (_, k1) = studies();
    let rates = final_rates(&k1.report);
    let (lo, hi) = K1_RATE_BAND;
    let rates_ok = rates.iter().all(|r| (lo..=hi).contains(r));
    let time_ok = k1.elapsed <= K1_BUDGET;
    let detail = format!(
        "order 1, {} levels: final rates {:.2?} (band [{lo}, {hi}]), study took {:.1}s (budget {}s)",
        K1_LEVELS,
        rates,
        k1.elapsed.as_secs_f64(),
        K1_BUDGET.as_secs(),
    );
    verdict("criterion 2 (second-order rates)", rates_ok && time_ok, &detail);
}

#[test]
fn criterion_3_reference_error_magnitudes() {
    let (k0, k1) = studies();
    let mut worst = (0.0_f64, String::new());
    let mut offenders = Vec::new();
    for (report, table) in [
        (&k0.report, &REF_K0[..]),
        (&k1.report, &REF_K1[..]),
    ] {
        assert_eq!(report.rows.len(), table.len(), "levels match the tabulation");
        for (row, reference) in report.rows.iter().zip(table) {
            // The tabulated h values are rounded to three significant digits.
            assert!(
                (row.h / reference[0] - 1.0).abs() < 0.01,
                "h {} matches tabulated {}",
                row.h,
                reference[0]
            );
            let ours = [row.e_curl_s, row.e_rdiv, row.e0, row.e1];
            for ((family, a), b) in FAMILIES.iter().zip(ours).zip(&reference[1..]) {
                let ratio = (a / b).max(b / a);
                let at = format!(
                    "order {}, h={:.4}, {family}: ours {a:.2e} vs reference {b:.2e} (x{ratio:.2})",
                    report.degree, row.h
                );
                if ratio > worst.0 {
                    worst = (ratio, at.clone());
                }
                if ratio > REFERENCE_FACTOR {
                    offenders.push(at);
                }
            }
        }
    }
    let detail = if offenders.is_empty() {
        format!("all errors within x{REFERENCE_FACTOR} of the tabulation; worst {}", worst.1)
    } else {
        format!(
            "{} of 44 comparisons exceed x{REFERENCE_FACTOR}: {}",
            offenders.len(),
            offenders.join("; ")
        )
    };
    verdict(
        "criterion 3 (reference error magnitudes)",
        offenders.is_empty(),
        &detail,
    );
}

#[test]
fn criterion_4_divergence_free_velocity() {
    let (k0, k1) = studies();
    let worst = k0
        .report
        .rows
        .iter()
        .chain(&k1.report.rows)
        .map(|r| r.div_inf)
        .fold(0.0_f64, f64::max);
    let detail = format!("max pointwise divergence over all levels {worst:.2e} (limit {DIV_LIMIT:.0e})");
    verdict("criterion 4 (divergence-free velocity)", worst <= DIV_LIMIT, &detail);
}

#[test]
fn criterion_5_newton_iteration_counts() {
    let (k0, k1) = studies();
    let counts: Vec<usize> = k0
        .report
        .rows
        .iter()
        .chain(&k1.report.rows)
        .map(|r| r.newton_its)
        .collect();
    let worst = counts.iter().copied().max().unwrap_or(0);
    let detail = format!("Newton iterations per level {counts:?} (limit {NEWTON_LIMIT})");
    verdict("criterion 5 (Newton iteration counts)", worst <= NEWTON_LIMIT, &detail);
}

#[test]
fn criterion_6_property_suite() {
    let t = Instant::now();
    let checks = run_property_suite().expect("property suite runs");
    let elapsed = t.elapsed();
    let failing: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}: {}", c.name, c.observed))
        .collect();
    let pass = suite_passed(&checks) && elapsed <= SUITE_BUDGET;
    let detail = if failing.is_empty() {
        format!(
            "{} checks green in {:.1}s (budget {}s)",
            checks.len(),
            elapsed.as_secs_f64(),
            SUITE_BUDGET.as_secs()
        )
    } else {
        format!("failing checks: {}", failing.join("; "))
    };
    verdict("criterion 6 (property suite)", pass, &detail);
}

/// l2 norm of the unconstrained rows of the discrete residual evaluated at
/// the interpolant of the exact fields, per refinement level.
fn interpolant_residuals(k: usize, levels: usize) -> Vec<(f64, f64)> {
    let case = exact_case_2d();
    let mut mesh = Rc::new(case.base_mesh().expect("base mesh"));
    let mut out = Vec::new();
    for level in 0..levels {
        let spaces = build_spaces(&mesh, k).expect("spaces");
        let system = DiscreteSystem::new(&spaces, &case.params).expect("system");
        let loads = case.loads(&spaces).expect("loads");
        let bc = case.boundary_conditions(&spaces).expect("bc");
        let state = case.interpolant(&spaces).expect("interpolant");
        let (gdofs, _) = bc.global(&system.layout);
        let mut residual = system.residual(&state, &loads).expect("residual");
        for &d in &gdofs {
            residual[d] = 0.0;
        }
        let norm = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
        let h = mesh_stats(&mesh).h_max / std::f64::consts::SQRT_2;
        out.push((h, norm));
        if level + 1 < levels {
            mesh = Rc::new(refine_uniform(&mesh).expect("refinement"));
        }
    }
    out
}

#[test]
fn criterion_7_interpolant_residual_decay() {
    let mut pass = true;
    let mut parts = Vec::new();
    for k in 0..=1 {
        let data = interpolant_residuals(k, 4);
        let rates: Vec<f64> = data
            .windows(2)
            .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
            .collect();
        let need = (k + 1) as f64 - RESIDUAL_RATE_SLACK;
        let last = *rates.last().expect("at least two levels");
        pass &= last >= need;
        parts.push(format!(
            "order {k}: residual norms {:?} decay at {:?}, final {last:.2} (need >= {need:.1})",
            data.iter().map(|(_, r)| format!("{r:.2e}")).collect::<Vec<_>>(),
            rates.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>(),
        ));
    }
    let detail = parts.join("; ");
    verdict("criterion 7 (interpolant residual decay)", pass, &detail);
}

#[test]
fn harness_invariant_rate_monotonicity() {
    // Module invariant, not one of the numbered criteria: from the third
    // level onward every observed rate sits within 0.2 of the optimal
    // order, tightening to 0.1 on the finest level.
    let (k0, k1) = studies();
    let mut violations: Vec<String> = k0
        .report
        .rate_violations()
        .into_iter()
        .map(|v| format!("order 0: {v}"))
        .collect();
    violations.extend(
        k1.report
            .rate_violations()
            .into_iter()
            .map(|v| format!("order 1: {v}")),
    );
    let detail = if violations.is_empty() {
        "all rates from level 3 onward within the corridor".to_string()
    } else {
        violations.join("; ")
    };
    verdict(
        "harness invariant (rate monotonicity)",
        violations.is_empty(),
        &detail,
    );
}
