mod common;

use common::{c, rng, GenOptions};
use shuntflow::case_io::Case;
use shuntflow::cases;
use shuntflow::lindistflow::*;
use shuntflow::network::{LineParams, Network};

fn report(case: &Case) -> ApproximationReport {
    let exact = common::solve(case).phasor;
    let lin = solve_lindistflow(&case.network, &case.injection).unwrap();
    approximation_report(&case.network, &exact, &lin, case.length_ratio)
}

#[test]
fn case2_comparison_is_populated() {
    let rep = report(&cases::case2_shunt());
    assert_eq!(rep.lines.len(), 1);
    // v_lin = 1 − 2 Re(z* S) with S = 0.2 + 0.1i, against v = |V₂|² from Newton
    let v_lin = 1.0 - 2.0 * (0.05 * 0.2 + 0.10 * 0.1);
    let v = 0.981_322_836_921_160_8_f64.powi(2) + 0.015963249335592346f64.powi(2);
    assert!((rep.max_v_error - (v_lin - v).abs()).abs() <= 1e-12);
    assert!(rep.total_shunt_loss.norm() > 0.0);
    assert!(rep.energy_balance_residual <= 1e-9);
    assert!(rep.loss_fraction > 0.0);
}

#[test]
fn zero_shunt_cases_have_no_shunt_losses() {
    let mut r = rng(7);
    let case = common::random_radial(&mut r, 12, &GenOptions { shunt_ratio_max: 0.0, ..GenOptions::default() });
    let rep = report(&case);
    for d in &rep.lines {
        assert_eq!(d.shunt_loss_from, c(0.0, 0.0));
        assert_eq!(d.shunt_loss_to, c(0.0, 0.0));
        assert_eq!(d.shunt_ratio, 0.0);
    }
    assert!(rep.total_series_loss.re > 0.0);
}

#[test]
fn energy_balance_holds_on_exact_solutions() {
    let mut r = rng(9);
    for n in [2, 6, 15, 30] {
        let case = common::random_radial(&mut r, n, &GenOptions::default());
        let rep = report(&case);
        assert!(rep.energy_balance_residual <= 1e-9, "n = {n}: {}", rep.energy_balance_residual);
    }
}

#[test]
fn heavy_loads_grow_the_error_and_raise_flags() {
    let opts = GenOptions { shunt_ratio_max: 1e-4, ..GenOptions::default() };
    let light = common::random_radial(&mut rng(10), 10, &opts);
    let heavy = common::random_radial(&mut rng(10), 10, &GenOptions { load_scale: 10.0, ..opts });
    let (a, b) = (report(&light), report(&heavy));
    assert!(b.max_v_error > a.max_v_error);
    assert!(b.max_flow_error > a.max_flow_error);
    assert!(b.flagged_lines.len() >= a.flagged_lines.len());
    assert!(!b.flagged_lines.is_empty());
}

#[test]
fn overestimates_voltage_without_shunts() {
    let mut r = rng(11);
    for _ in 0..10 {
        let case = common::random_radial(&mut r, 15, &GenOptions { shunt_ratio_max: 0.0, ..GenOptions::default() });
        let exact = common::solve(&case).phasor;
        let lin = solve_lindistflow(&case.network, &case.injection).unwrap();
        for (vl, v) in lin.v_lin.iter().zip(&exact.voltage) {
            assert!(*vl >= v.norm_sqr() - 1e-12);
        }
    }
}

fn path3_error_with_impedance(z: f64) -> f64 {
    let case = cases::path3();
    let lines: Vec<LineParams> = case
        .network
        .lines()
        .iter()
        .map(|l| LineParams::from_impedance(l.from_bus, l.to_bus, c(z, z)))
        .collect();
    let net = Network::build(case.network.buses().to_vec(), lines, 1).unwrap();
    let case = Case::new(net, case.injection);
    let exact = common::solve(&case).phasor;
    let lin = solve_lindistflow(&case.network, &case.injection).unwrap();
    lin.v_lin.iter().zip(&exact.voltage).map(|(vl, v)| (vl - v.norm_sqr()).abs()).fold(0.0, f64::max)
}

#[test]
fn error_vanishes_quadratically_with_impedance() {
    // z = 0 itself has no Π model; the neglected loss terms are O(|z|²)
    let coarse = path3_error_with_impedance(1e-3);
    let fine = path3_error_with_impedance(1e-4);
    assert!(coarse <= 1e-6);
    assert!(fine <= coarse / 50.0, "{coarse:e} {fine:e}");
}

#[test]
fn meshed_networks_are_rejected() {
    let case = cases::triangle();
    assert_eq!(solve_lindistflow(&case.network, &case.injection), Err(LinDistFlowError::NotRadial));
    assert_eq!(downstream_sets(&case.network), Err(LinDistFlowError::NotRadial));
}
