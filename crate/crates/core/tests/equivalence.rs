mod common;

use common::{rng, GenOptions};
use shuntflow::bfm::{self, BranchFlowPoint};
use shuntflow::bim::PhasorSolution;
use shuntflow::case_io::Case;
use shuntflow::cases;
use shuntflow::equivalence::*;

fn check_roundtrips(case: &Case) -> (f64, f64) {
    let net = &case.network;
    let tol = Tolerances::default();
    let ph = common::solve(case).phasor;
    let a = roundtrip_phasor(net, &ph, &tol).unwrap();
    let x = phi1(net, &ph, 1e-9).unwrap();
    let b = roundtrip_point(net, &x, &tol).unwrap();
    assert!(a.pass && b.pass, "{a:?} {b:?}");
    (a.discrepancy, b.discrepancy)
}

#[test]
fn case2_roundtrips() {
    let (a, b) = check_roundtrips(&cases::case2_shunt());
    assert!(a <= 1e-10 && b <= 1e-10);
}

#[test]
fn triangle_roundtrips() {
    check_roundtrips(&cases::triangle());
}

#[test]
fn random_radial_roundtrips() {
    let mut r = rng(100);
    for n in [2, 5, 10, 20, 30] {
        check_roundtrips(&common::random_radial(&mut r, n, &GenOptions::default()));
    }
}

#[test]
fn random_meshed_roundtrips() {
    let mut r = rng(101);
    for (n, extra) in [(4, 1), (8, 2), (15, 4), (25, 5)] {
        check_roundtrips(&common::random_meshed(&mut r, n, extra, &GenOptions::default()));
    }
}

#[test]
fn images_belong_to_every_set() {
    let case = cases::triangle();
    let net = &case.network;
    let ph = common::solve(&case).phasor;
    assert!(in_bim_set(net, &ph.voltage, &ph.injection, 1e-9).holds);
    assert!(in_phasor_set(net, &ph, 1e-9).holds);
    let x = phi1(net, &ph, 1e-9).unwrap();
    assert!(in_mesh_set(net, &x, &Tolerances::default()).holds);
    assert!(in_tree_set(net, &x, 1e-9).holds);
}

#[test]
fn relaxed_point_has_mismatched_magnitudes() {
    let case = cases::case2_shunt();
    let net = &case.network;
    let x = phi1(net, &common::solve(&case).phasor, 1e-9).unwrap();
    let relaxed = common::relax(net, &x, 0, 0.05);
    let r = bfm::bfm_residual(net, &relaxed).unwrap();
    assert!(r.max_linear() <= 1e-12);
    assert!(relaxed.conic_gaps(net).iter().all(|g| *g > 1e-4));
    match phi2(net, &relaxed, &Tolerances::default()) {
        Err(EquivError::MagnitudeMismatch { line: 0, mismatch, .. }) => assert!(mismatch.abs() > 1e-4),
        other => panic!("{other:?}"),
    }
    assert!(!in_tree_set(net, &relaxed, 1e-8).holds);
}

#[test]
fn perturbed_meshed_point_is_rejected() {
    // scaling the chord flow breaks balance and the chord cone
    let case = cases::triangle();
    let net = &case.network;
    let mut x = phi1(net, &common::solve(&case).phasor, 1e-9).unwrap();
    let p = x.power[2];
    x.power[2] = p * 1.05;
    let v = in_mesh_set(net, &x, &Tolerances::default());
    assert!(!v.holds);
}

#[test]
fn dimension_errors() {
    let net = cases::case2_shunt().network;
    let mut ph = PhasorSolution::flat(&net);
    ph.voltage.pop();
    assert!(matches!(phi1(&net, &ph, 1e-8), Err(EquivError::Dimension { .. })));
    let mut x = BranchFlowPoint::flat(&net);
    x.ell.push(0.0);
    assert!(phi2(&net, &x, &Tolerances::default()).is_err());
    let mut x = BranchFlowPoint::flat(&net);
    x.v[1] = 0.0;
    assert_eq!(phi2(&net, &x, &Tolerances::default()), Err(EquivError::NonPositiveVoltage { bus: 1 }));
}
