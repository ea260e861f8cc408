use proptest::prelude::*;
use shuntflow_conic::{ConicProblem, ConicSolver, InteriorPoint, Status};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    // max a·x over the unit ball is ‖a‖
    #[test]
    fn linear_objective_over_ball(a in prop::collection::vec(-5.0f64..5.0, 1..6)) {
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let n = a.len();
        let mut pr = ConicProblem::new(n);
        pr.c = a.iter().map(|v| -v).collect();
        let mut entries = vec![(1.0, vec![])];
        entries.extend((0..n).map(|i| (0.0, vec![(i, 1.0)])));
        pr.add_second_order(&entries);
        let sol = InteriorPoint::default().solve(&pr).unwrap();
        prop_assert_eq!(sol.status, Status::Solved);
        prop_assert!((sol.primal_objective + norm).abs() <= 1e-7 * norm.max(1.0));
    }

    #[test]
    fn triplet_text_round_trips(
        c in prop::collection::vec(-1e3f64..1e3, 3),
        b in -10.0f64..10.0,
        h in 0.0f64..10.0,
    ) {
        let mut pr = ConicProblem::new(3);
        pr.c = c;
        pr.add_equality(&[(0, 1.0), (2, -0.3)], b);
        pr.add_inequality(&[(1, 2.5)], h);
        pr.add_second_order(&[(h, vec![(0, 1.0)]), (0.0, vec![(1, 1.0)]), (b, vec![(2, 1.0)])]);
        let mut buf = Vec::new();
        pr.write_triplets(&mut buf).unwrap();
        let back = ConicProblem::read_triplets(buf.as_slice()).unwrap();
        prop_assert_eq!(back, pr);
    }
}
