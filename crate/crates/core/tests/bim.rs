mod common;

use common::{c, rng, GenOptions};
use shuntflow::bim::*;
use shuntflow::cases;
use shuntflow::network::ComplexValue;

/// Gauss-Seidel on the bus admittance form, written independently of the
/// Newton solver: `V_j ← (conj(s_j / V_j) − Σ_{k≠j} Y_jk V_k) / Y_jj`.
fn gauss_seidel(case: &shuntflow::case_io::Case) -> Vec<ComplexValue> {
    let net = &case.network;
    let n = net.num_buses();
    let mut y = vec![vec![c(0.0, 0.0); n]; n];
    for l in 0..net.num_lines() {
        let (j, k) = net.line_ends(l);
        let line = net.line(l);
        y[j][j] += line.y_series + line.y_shunt_from;
        y[k][k] += line.y_series + line.y_shunt_to;
        y[j][k] -= line.y_series;
        y[k][j] -= line.y_series;
    }
    let mut v = vec![c(1.0, 0.0); n];
    for _ in 0..100_000 {
        let mut change: f64 = 0.0;
        for j in (0..n).filter(|&j| j != net.slack()) {
            let mut acc = (case.injection[j] / v[j]).conj();
            for k in (0..n).filter(|&k| k != j) {
                acc -= y[j][k] * v[k];
            }
            let new = acc / y[j][j];
            change = change.max((new - v[j]).norm());
            v[j] = new;
        }
        if change < 1e-15 {
            break;
        }
    }
    v
}

// Computed with 40-digit Gauss-Seidel outside this crate.
const V2: (f64, f64) = (0.981_322_836_921_160_8, -0.015_963_249_335_592_346);
const S12: (f64, f64) = (0.202_414_647_000_095_37, 0.065_564_307_288_343_82);
const S21: (f64, f64) = (-0.2, -0.1);

#[test]
fn case2_shunt_matches_fixed_point_oracle_and_goldens() {
    let case = cases::case2_shunt();
    let sol = solve_pf_newton(&case.network, &case.injection, &NewtonOptions::default()).unwrap();
    let x = &sol.phasor;
    let gs = gauss_seidel(&case);
    for (a, b) in x.voltage.iter().zip(&gs) {
        assert!((a - b).norm() < 1e-8, "{a} vs {b}");
    }
    assert!((x.voltage[1] - c(V2.0, V2.1)).norm() < 1e-12);
    assert!((x.power[0] - c(S12.0, S12.1)).norm() < 1e-12);
    assert!((x.power[1] - c(S21.0, S21.1)).norm() < 1e-12);
    assert!((x.injection[0] - c(S12.0, S12.1)).norm() < 1e-12);
    assert!(max_bim_residual(&case.network, &x.voltage, &x.injection) <= 1e-10);
    assert_eq!(x.voltage[0], c(1.0, 0.0));
}

#[test]
fn case2_voltage_product_identity() {
    let case = cases::case2_shunt();
    let sol = solve_pf_newton(&case.network, &case.injection, &NewtonOptions::default()).unwrap();
    let (v1, v2) = (sol.phasor.voltage[0], sol.phasor.voltage[1]);
    let (alpha, _) = case.network.alpha(0);
    let z = case.network.line(0).z_series();
    let rhs = alpha.conj() * v1.norm_sqr() - z.conj() * sol.phasor.power[0];
    assert!((v1 * v2.conj() - rhs).norm() <= 1e-12);
}

#[test]
fn huge_load_has_no_solution_and_newton_says_so() {
    // For |V₂| = r the balance forces |s₂ − Y₂₂* r²| = |Y₁₂| r; scan r for a root.
    let case = cases::case2_shunt();
    let line = case.network.line(0);
    let (y22, y12) = (line.y_series + line.y_shunt_to, line.y_series);
    let s2 = c(-100.0, -100.0);
    let f = |r: f64| (s2 - y22.conj() * r * r).norm() - y12.norm() * r;
    let samples: Vec<f64> = (1..=30_000).map(|i| f(i as f64 * 1e-4)).collect();
    assert!(samples.windows(2).all(|w| (w[0] > 0.0) == (w[1] > 0.0)));
    assert!(samples.iter().all(|&v| v > 0.0));

    let err = solve_pf_newton(&case.network, &[c(0.0, 0.0), s2], &NewtonOptions::default()).unwrap_err();
    assert!(matches!(err, PfError::NonConvergence { .. }));
}

#[test]
fn random_cases_conserve_power_and_match_fixed_point() {
    let mut r = rng(11);
    for n in [4usize, 9, 17, 30] {
        let case = common::random_radial(&mut r, n, &GenOptions::default());
        let sol = common::solve(&case);
        let x = &sol.phasor;
        let total: ComplexValue = x.injection.iter().sum();
        let losses: ComplexValue = line_losses(&case.network, &x.voltage).iter().map(LineLoss::total).sum();
        assert!((total - losses).norm() <= 1e-9);
        assert!(phasor_residual(&case.network, x).max() <= 1e-10);
        for m in voltage_product_mismatch(&case.network, &x.voltage, &x.power) {
            assert!(m <= 1e-11);
        }
        let gs = gauss_seidel(&case);
        for (a, b) in x.voltage.iter().zip(&gs) {
            assert!((a - b).norm() < 1e-8);
        }
    }
}

#[test]
fn meshed_cases_satisfy_identities() {
    let mut r = rng(12);
    for _ in 0..5 {
        let case = common::random_meshed(&mut r, 12, 3, &GenOptions::default());
        let x = common::solve(&case).phasor;
        for m in voltage_product_mismatch(&case.network, &x.voltage, &x.power) {
            assert!(m <= 1e-11);
        }
    }
}

#[test]
fn solver_is_deterministic() {
    let case = common::random_meshed(&mut rng(5), 10, 2, &GenOptions::default());
    let a = common::solve(&case);
    let b = common::solve(&case);
    assert_eq!(a, b);
}
