//! Acceptance suite: one test per numbered criterion. The suite runs once
//! and every test checks its own line of the report.

use std::sync::OnceLock;

use elastomono_cli::verify::{run, CheckOutcome, Level};

fn outcomes() -> &'static [CheckOutcome] {
    static CELL: OnceLock<Vec<CheckOutcome>> = OnceLock::new();
    CELL.get_or_init(|| run(Level::Full, 1, |c| eprintln!("{c}")))
}

fn criterion(id: u8) {
    let c = outcomes().iter().find(|c| c.id == id).expect("criterion is part of the full suite");
    println!("criterion {id}: {} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    assert!(c.passed, "{c}");
}

#[test]
fn criterion_01_frechet_finite_difference_slope() {
    criterion(1);
}

#[test]
fn criterion_02_self_adjointness() {
    criterion(2);
}

#[test]
fn criterion_03_linearization_semidefinite() {
    criterion(3);
}

#[test]
fn criterion_04_static_monotonicity() {
    criterion(4);
}

#[test]
fn criterion_05_eigencount_oracle() {
    criterion(5);
}

#[test]
fn criterion_06_desk_reconstruction() {
    criterion(6);
}

#[test]
fn criterion_07_desk_load_modes() {
    criterion(7);
}

#[test]
fn criterion_08_default_alpha_constants() {
    criterion(8);
}

#[test]
fn criterion_09_linearized_speedup() {
    criterion(9);
}

#[test]
fn criterion_10_cavity_fill_properties() {
    criterion(10);
}

#[test]
fn supplementary_frechet_linearity() {
    criterion(0);
}
