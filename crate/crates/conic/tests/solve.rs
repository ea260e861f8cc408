use shuntflow_conic::{ConicProblem, ConicSolver, InteriorPoint, Status};

fn solve(p: &ConicProblem) -> shuntflow_conic::Solution {
    InteriorPoint::default().solve(p).unwrap()
}

#[test]
fn small_lp() {
    // min -x0 - x1  s.t. x0 + 2 x1 <= 4, 3 x0 + x1 <= 6, x >= 0  ->  x = (1.6, 1.2)
    let mut p = ConicProblem::new(2);
    p.c = vec![-1.0, -1.0];
    p.add_inequality(&[(0, 1.0), (1, 2.0)], 4.0);
    p.add_inequality(&[(0, 3.0), (1, 1.0)], 6.0);
    p.add_inequality(&[(0, -1.0)], 0.0);
    p.add_inequality(&[(1, -1.0)], 0.0);
    let sol = solve(&p);
    assert_eq!(sol.status, Status::Solved);
    assert!((sol.x[0] - 1.6).abs() < 1e-7, "{:?}", sol.x);
    assert!((sol.x[1] - 1.2).abs() < 1e-7);
    assert!((sol.primal_objective + 2.8).abs() < 1e-7);
}

#[test]
fn second_order_cone_projection() {
    // min t  s.t. ‖(x0 - 3, x1 - 4)‖ <= t, x0 + x1 = 0
    // distance from (3,4) to the line x0 + x1 = 0 is 7/√2
    let mut p = ConicProblem::new(3);
    p.c = vec![0.0, 0.0, 1.0];
    p.add_equality(&[(0, 1.0), (1, 1.0)], 0.0);
    p.add_second_order(&[
        (0.0, vec![(2, 1.0)]),
        (-3.0, vec![(0, 1.0)]),
        (-4.0, vec![(1, 1.0)]),
    ]);
    let sol = solve(&p);
    assert_eq!(sol.status, Status::Solved);
    assert!((sol.primal_objective - 7.0 / 2f64.sqrt()).abs() < 1e-7);
    assert!((sol.x[0] + 0.5).abs() < 1e-6, "{:?}", sol.x);
    assert!(sol.residuals.max_infeasibility() <= 1e-9);
    assert!(sol.residuals.rel_gap <= 1e-9);
}

#[test]
fn rotated_cone_through_standard_cone() {
    // min u + w  s.t.  x² <= u w  (as ‖(2x, u - w)‖ <= u + w), x = 1  ->  u = w = 1
    let mut p = ConicProblem::new(3);
    p.c = vec![0.0, 1.0, 1.0];
    p.add_equality(&[(0, 1.0)], 1.0);
    p.add_second_order(&[
        (0.0, vec![(1, 1.0), (2, 1.0)]),
        (0.0, vec![(1, 1.0), (2, -1.0)]),
        (0.0, vec![(0, 2.0)]),
    ]);
    let sol = solve(&p);
    assert_eq!(sol.status, Status::Solved);
    assert!((sol.primal_objective - 2.0).abs() < 1e-7);
    assert!((sol.x[1] * sol.x[2] - 1.0).abs() < 1e-6);
}

#[test]
fn detects_primal_infeasibility() {
    // x <= 1 and x >= 2
    let mut p = ConicProblem::new(1);
    p.c = vec![1.0];
    p.add_inequality(&[(0, 1.0)], 1.0);
    p.add_inequality(&[(0, -1.0)], -2.0);
    assert_eq!(solve(&p).status, Status::PrimalInfeasible);
}

#[test]
fn detects_dual_infeasibility() {
    // min -x  s.t. x >= 0
    let mut p = ConicProblem::new(1);
    p.c = vec![-1.0];
    p.add_inequality(&[(0, -1.0)], 0.0);
    assert_eq!(solve(&p).status, Status::DualInfeasible);
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let mut p = ConicProblem::new(3);
    p.c = vec![0.3, 1.0, 1.0];
    p.add_equality(&[(0, 1.0), (1, -0.2)], 0.7);
    p.add_second_order(&[
        (0.0, vec![(1, 1.0), (2, 1.0)]),
        (0.0, vec![(1, 1.0), (2, -1.0)]),
        (0.0, vec![(0, 2.0)]),
    ]);
    let a = solve(&p);
    let b = solve(&p);
    assert_eq!(a, b);
}
