mod common;

use common::{c, rng, GenOptions};
use proptest::prelude::*;
use shuntflow::bfm::*;
use shuntflow::cases;
use shuntflow::equivalence::{beta_angle_defect, phi1};

fn exact_point(case: &shuntflow::case_io::Case) -> (BranchFlowPoint, shuntflow::bim::PhasorSolution) {
    let ph = common::solve(case).phasor;
    (phi1(&case.network, &ph, 1e-9).unwrap(), ph)
}

#[test]
fn case2_image_satisfies_every_family() {
    let case = cases::case2_shunt();
    let (x, _) = exact_point(&case);
    let r = bfm_residual(&case.network, &x).unwrap();
    assert!(r.max_abs() <= 1e-9, "{r:?}");
}

#[test]
fn voltage_perturbation_only_touches_its_equations() {
    let case = cases::case2_shunt();
    let net = &case.network;
    let (mut x, _) = exact_point(&case);
    x.v[1] += 0.01;
    let r = bfm_residual(net, &x).unwrap();
    // v₂ appears in both drops, the reverse cone and the link equation
    assert!((r.drop_fwd[0] + 0.01).abs() < 1e-9);
    let (_, a21) = net.alpha(0);
    assert!((r.drop_rev[0] - a21.norm_sqr() * 0.01).abs() < 1e-9);
    assert!((r.cones[1] - 0.01 * x.ell[1]).abs() < 1e-9);
    assert!((r.link[0].norm() - a21.norm() * 0.01).abs() < 1e-9);
    assert!(r.max_balance() < 1e-12);
    assert!(r.cones[0].abs() < 1e-12);
    assert!(r.slack == 0.0);
}

#[test]
fn beta_equals_phasor_angle_differences() {
    let mut r = rng(3);
    for case in [cases::case2_shunt(), cases::triangle(), common::random_meshed(&mut r, 9, 2, &GenOptions::default())] {
        let (x, ph) = exact_point(&case);
        let b = beta(&case.network, &x).unwrap();
        for d in beta_angle_defect(&case.network, &b, &ph.voltage) {
            assert!(d.abs() <= 1e-9);
        }
    }
}

#[test]
fn triangle_cycle_condition_recovers_angles() {
    let case = cases::triangle();
    let net = &case.network;
    let (x, ph) = exact_point(&case);
    let b = beta(net, &x).unwrap();
    let check = cycle_condition(net, &b, DEFAULT_ANGLE_TOL).unwrap();
    let shift = ph.voltage[net.slack()].arg();
    for (t, v) in check.theta.iter().zip(&ph.voltage) {
        assert!((wrap_angle(t - (v.arg() - shift))).abs() <= 1e-9);
    }
    assert_eq!(check.cycle_sums.len(), 1);
}

#[test]
fn triangle_perturbed_line_breaks_the_cycle() {
    let case = cases::triangle();
    let net = &case.network;
    let (x, _) = exact_point(&case);
    let mut b = beta(net, &x).unwrap();
    // keep antisymmetry so the cycle test, not the antisymmetry test, fires
    let nl = net.num_lines();
    b[1] += 0.1;
    b[nl + 1] -= 0.1;
    match cycle_condition(net, &b, DEFAULT_ANGLE_TOL) {
        Err(BfmError::CycleMismatch { mismatch, .. }) => assert!((mismatch.abs() - 0.1).abs() < 1e-9),
        other => panic!("{other:?}"),
    }
    // one-sided perturbation trips the antisymmetry check first
    let mut b = beta(net, &x).unwrap();
    b[0] += 0.1;
    assert!(matches!(cycle_condition(net, &b, DEFAULT_ANGLE_TOL), Err(BfmError::AntisymmetryViolation { .. })));
}

#[test]
fn radial_cycle_condition_is_vacuous() {
    let mut r = rng(8);
    for _ in 0..10 {
        let case = common::random_radial(&mut r, 12, &GenOptions::default());
        let net = &case.network;
        let nl = net.num_lines();
        let fwd: Vec<f64> = (0..nl).map(|_| rand::Rng::gen_range(&mut r, -3.0..3.0)).collect();
        let mut b = fwd.clone();
        b.extend(fwd.iter().map(|v| -v));
        let check = cycle_condition(net, &b, 1e-12).unwrap();
        let back = angle_difference_matrix(net) * nalgebra::DVector::from_vec(check.theta.clone());
        for (a, e) in back.iter().zip(&b) {
            assert!((a - e).abs() <= 1e-12);
        }
        let oracle = tree_angles_pseudo_inverse(net, &fwd).unwrap();
        for (a, e) in check.theta.iter().zip(&oracle) {
            assert!((a - e).abs() <= 1e-10);
        }
    }
}

#[test]
fn gap_symmetry_at_exact_points() {
    let mut r = rng(21);
    let case = common::random_radial(&mut r, 15, &GenOptions::default());
    let (x, _) = exact_point(&case);
    for l in 0..case.network.num_lines() {
        let g = gap_symmetry(&case.network, &x, l, 1e-9).unwrap();
        assert!(g.gap_fwd.abs() <= 1e-9 && g.gap_rev.abs() <= 1e-9);
    }
}

#[test]
fn gap_symmetry_precondition() {
    let case = cases::case2_shunt();
    let (mut x, _) = exact_point(&case);
    x.power[1] += c(0.0, 0.01);
    assert!(matches!(gap_symmetry(&case.network, &x, 0, 1e-8), Err(BfmError::PreconditionViolated { .. })));
}

#[test]
fn zero_shunt_reduction_on_solved_points() {
    let mut r = rng(4);
    for _ in 0..5 {
        let case = common::random_radial(&mut r, 10, &GenOptions::default());
        let bare = shuntflow::case_io::Case { network: case.network.without_shunts(), ..case };
        let (x, _) = exact_point(&bare);
        let rep = reduce_zero_shunt_check(&bare.network, &x).unwrap();
        assert_eq!(rep.max_alpha_deviation, 0.0);
        assert!(rep.max_difference() <= 1e-12, "{}", rep.max_difference());
        assert!(rep.bfm.max_abs() <= 1e-12);
    }
    let shunted = cases::case2_shunt();
    let x = BranchFlowPoint::flat(&shunted.network);
    assert_eq!(reduce_zero_shunt_check(&shunted.network, &x), Err(BfmError::NotZeroShunt));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn gap_symmetry_on_constructed_points(
        r in 0.005f64..0.1, xx in 0.005f64..0.1,
        b1 in -0.05f64..0.05, b2 in -0.05f64..0.05, g1 in 0.0f64..0.01,
        vj in 0.8f64..1.2,
        p in -1.0f64..1.0, q in -1.0f64..1.0, ell in 0.0f64..2.0,
    ) {
        let (net, x) = common::constructed_point(c(r, xx), (c(g1, b1), c(0.0, b2)), vj, c(p, q), ell);
        let res = bfm_residual(&net, &x).unwrap();
        prop_assume!(res.line_coupling(0) <= 1e-10);
        let g = gap_symmetry(&net, &x, 0, 1e-10).unwrap();
        prop_assert!(g.difference.abs() <= 1e-8, "difference {}", g.difference);
    }

    #[test]
    fn magnitude_identity_holds_everywhere(
        vj in 0.1f64..2.0, p in -3.0f64..3.0, q in -3.0f64..3.0,
    ) {
        let case = cases::case2_shunt();
        let mut x = BranchFlowPoint::flat(&case.network);
        x.v[0] = vj;
        x.power[0] = c(p, q);
        let d = magnitude_identity_defect(&case.network, &x, shuntflow::End::forward(0));
        prop_assert!(d.abs() <= 1e-12);
    }
}
