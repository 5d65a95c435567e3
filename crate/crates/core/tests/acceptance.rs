//! Runs every check in the verification suite and prints its one-line
//! report. Each criterion is its own test so a failure names the exact
//! check; run with `--nocapture` to see the pass lines and timings.

use pairhop::acceptance::{
    criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
    criterion_8, CriterionReport,
};

fn check(report: CriterionReport) {
    println!("{}", report.line());
    assert!(report.passed, "{}", report.line());
}

#[test]
fn criterion_1_operator_norm_bounds() {
    check(criterion_1());
}

#[test]
fn criterion_2_weighted_scale_contraction() {
    check(criterion_2());
}

#[test]
fn criterion_3_semigroup_and_transpose_oracle() {
    check(criterion_3());
}

#[test]
fn criterion_4_duality_identity() {
    check(criterion_4());
}

#[test]
fn criterion_5_scaling_limit_convergence() {
    check(criterion_5());
}

#[test]
fn criterion_6_chaos_propagation() {
    check(criterion_6());
}

#[test]
fn criterion_7_kinetic_invariants() {
    check(criterion_7());
}

#[test]
fn criterion_8_stochastic_simulator() {
    check(criterion_8());
}
