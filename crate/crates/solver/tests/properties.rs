use cascadesim_solver::{resolve_with_added_rows, solve_lp, solve_mip, LinearProgram, LpBuilder, LpStatus, RowSpec};
use proptest::prelude::*;

fn arb_lp(integer: bool) -> impl Strategy<Value = LinearProgram> {
    (2usize..6, 1usize..5).prop_flat_map(move |(n, m)| {
        (
            prop::collection::vec(-5i32..=5, n),
            prop::collection::vec(prop::collection::vec(-4i32..=4, n), m),
            prop::collection::vec(0i32..=10, m),
            prop::collection::vec(1i32..=4, n),
        )
            .prop_map(move |(c, a, rhs, ub)| {
                let mut b = LpBuilder::new();
                for j in 0..n {
                    if integer {
                        b.add_int_var(c[j] as f64, 0.0, ub[j] as f64);
                    } else {
                        b.add_var(c[j] as f64, 0.0, ub[j] as f64);
                    }
                }
                for (row, r) in a.iter().zip(&rhs) {
                    let coeffs: Vec<(usize, f64)> =
                        row.iter().enumerate().map(|(j, &v)| (j, v as f64)).collect();
                    b.add_row(f64::NEG_INFINITY, *r as f64, &coeffs);
                }
                b.build()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // x = 0 is always feasible (rhs >= 0), so every instance has an optimum.
    #[test]
    fn strong_duality_holds(lp in arb_lp(false)) {
        let sol = solve_lp(&lp).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        let mut dual = 0.0;
        for i in 0..lp.num_rows() {
            let y = sol.dual_values[i];
            prop_assert!(y <= 1e-9, "row dual of a <= row must be nonpositive");
            dual += y * lp.row_upper[i];
        }
        for j in 0..lp.num_vars() {
            let d = sol.reduced_costs[j];
            dual += d * if d > 0.0 { lp.var_lower[j] } else { lp.var_upper[j] };
        }
        let scale = sol.objective_value.abs().max(1.0);
        prop_assert!((dual - sol.objective_value).abs() <= 1e-6 * scale);
        // Complementary slackness on rows.
        for i in 0..lp.num_rows() {
            let slack = lp.row_upper[i] - sol.row_activity[i];
            prop_assert!((sol.dual_values[i] * slack).abs() <= 1e-6);
        }
    }

    #[test]
    fn adding_a_row_never_lowers_the_minimum(lp in arb_lp(false), coeffs in prop::collection::vec(-3i32..=3, 6), rhs in 0i32..6) {
        let sol = solve_lp(&lp).unwrap();
        let mut lp2 = lp.clone();
        let row: Vec<(usize, f64)> = (0..lp.num_vars()).map(|j| (j, coeffs[j] as f64)).collect();
        let after = resolve_with_added_rows(&mut lp2, &sol, &[RowSpec::new(row, f64::NEG_INFINITY, rhs as f64)]).unwrap();
        prop_assert_eq!(after.status, LpStatus::Optimal);
        prop_assert!(after.objective_value >= sol.objective_value - 1e-9);
        let cold = solve_lp(&lp2).unwrap();
        prop_assert!((cold.objective_value - after.objective_value).abs() <= 1e-8);
    }

    #[test]
    fn mip_is_no_better_than_relaxation(lp in arb_lp(true)) {
        let mip = solve_mip(&lp).unwrap();
        let mut relaxed = lp.clone();
        relaxed.integrality.iter_mut().for_each(|b| *b = false);
        let rel = solve_lp(&relaxed).unwrap();
        prop_assert_eq!(mip.status, LpStatus::Optimal);
        prop_assert!(mip.objective_value >= rel.objective_value - 1e-9);
        prop_assert!(mip.bound <= mip.objective_value + 1e-9);
    }

    #[test]
    fn repeated_solves_are_bit_identical(lp in arb_lp(true)) {
        let a = solve_mip(&lp).unwrap();
        let b = solve_mip(&lp).unwrap();
        prop_assert_eq!(a, b);
    }
}
