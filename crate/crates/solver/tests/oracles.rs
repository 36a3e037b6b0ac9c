use cascadesim_solver::{
    mps, resolve_with_added_rows, solve_lp, solve_mip, LinearProgram, LpBuilder, LpSolution, LpStatus, RowSpec,
    Sense, SimplexSolver, SolverOptions,
};
use cascadesim_testkit::{dense_lp, enumerate, random, DenseLp, Outcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn to_dense(lp: &LinearProgram) -> DenseLp {
    let n = lp.num_vars();
    let mut a = vec![vec![0.0; n]; lp.num_rows()];
    for j in 0..n {
        for (r, v) in lp.columns.col(j) {
            a[r][j] = v;
        }
    }
    let sign = if lp.sense == Sense::Maximize { -1.0 } else { 1.0 };
    DenseLp {
        c: lp.costs.iter().map(|c| sign * c).collect(),
        a,
        row_lo: lp.row_lower.clone(),
        row_hi: lp.row_upper.clone(),
        var_lo: lp.var_lower.clone(),
        var_hi: lp.var_upper.clone(),
    }
}

/// Random oracle instance as a solver LP.
fn random_lp(rng: &mut ChaCha8Rng, integer: bool) -> LinearProgram {
    let inst = random::instance(rng, integer);
    let d = &inst.lp;
    let mut b = LpBuilder::new();
    for j in 0..d.c.len() {
        if inst.integer[j] {
            b.add_int_var(d.c[j], d.var_lo[j], d.var_hi[j]);
        } else {
            b.add_var(d.c[j], d.var_lo[j], d.var_hi[j]);
        }
    }
    for (i, row) in d.a.iter().enumerate() {
        let coeffs: Vec<(usize, f64)> = row.iter().enumerate().filter(|e| *e.1 != 0.0).map(|(j, &v)| (j, v)).collect();
        b.add_row(d.row_lo[i], d.row_hi[i], &coeffs);
    }
    b.build()
}

/// Dual objective assembled from row duals and reduced costs (min sense).
fn dual_objective(lp: &LinearProgram, sol: &LpSolution) -> f64 {
    let mut v = lp.objective_offset;
    for i in 0..lp.num_rows() {
        let y = sol.dual_values[i];
        let bnd = if y > 0.0 { lp.row_lower[i] } else { lp.row_upper[i] };
        if y != 0.0 {
            v += y * bnd;
        }
    }
    for j in 0..lp.num_vars() {
        let d = sol.reduced_costs[j];
        let bnd = if d > 0.0 { lp.var_lower[j] } else { lp.var_upper[j] };
        if d != 0.0 {
            v += d * bnd;
        }
    }
    v
}

#[test]
fn random_lps_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        let lp = random_lp(&mut rng, false);
        let sol = solve_lp(&lp).unwrap();
        let oracle = enumerate::vertex_enumeration(&to_dense(&lp));
        match oracle {
            Outcome::Optimal(v) => {
                assert_eq!(sol.status, LpStatus::Optimal, "case {case}");
                assert!((sol.objective_value - v).abs() <= 1e-6 * v.abs().max(1.0), "case {case}");
                assert!(lp.primal_residual(&sol.primal_values) <= 1e-7, "case {case}");
                let dual = dual_objective(&lp, &sol);
                assert!((dual - v).abs() <= 1e-6 * v.abs().max(1.0), "case {case}: dual {dual} vs {v}");
            }
            Outcome::Infeasible => assert_eq!(sol.status, LpStatus::Infeasible, "case {case}"),
            Outcome::Unbounded => unreachable!("boxed variables"),
        }
    }
}

#[test]
fn random_binary_mips_match_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..100 {
        let lp = random_lp(&mut rng, true);
        let sol = solve_mip(&lp).unwrap();
        let (oracle, _) = enumerate::binary_enumeration(&to_dense(&lp));
        match oracle {
            Outcome::Optimal(v) => {
                assert_eq!(sol.status, LpStatus::Optimal, "case {case}");
                assert_eq!(sol.objective_value, v, "case {case}");
                for (j, x) in sol.incumbent_values.iter().enumerate() {
                    assert!((x - x.round()).abs() <= 1e-6, "case {case} var {j}");
                }
            }
            _ => assert_eq!(sol.status, LpStatus::Infeasible, "case {case}"),
        }
    }
}

#[test]
fn textbook_lp_matches_vertex_oracle() {
    let mut b = LpBuilder::new();
    let x = b.add_var(-1.0, 0.0, f64::INFINITY);
    let y = b.add_var(-2.0, 0.0, f64::INFINITY);
    b.add_row(f64::NEG_INFINITY, 4.0, &[(x, 1.0), (y, 1.0)]);
    b.add_row(f64::NEG_INFINITY, 3.0, &[(x, 1.0)]);
    b.add_row(f64::NEG_INFINITY, 3.0, &[(y, 1.0)]);
    let lp = b.build();
    let sol = solve_lp(&lp).unwrap();
    let mut dense = to_dense(&lp);
    dense.var_hi = vec![3.0, 3.0];
    assert_eq!(enumerate::vertex_enumeration(&dense), Outcome::Optimal(sol.objective_value));
}

#[test]
fn simple_infeasible_and_unbounded() {
    let mut b = LpBuilder::new();
    let x = b.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
    b.add_row(f64::NEG_INFINITY, -1.0, &[(x, 1.0)]);
    b.add_row(0.0, f64::INFINITY, &[(x, 1.0)]);
    assert_eq!(solve_lp(&b.build()).unwrap().status, LpStatus::Infeasible);

    let mut b = LpBuilder::new();
    let x = b.add_var(-1.0, 0.0, f64::INFINITY);
    b.add_row(1.0, f64::INFINITY, &[(x, 1.0)]);
    assert_eq!(solve_lp(&b.build()).unwrap().status, LpStatus::Unbounded);
}

#[test]
fn integral_relaxation_gives_same_answer() {
    let mut b = LpBuilder::new();
    let x = b.add_int_var(1.0, 0.0, 10.0);
    let y = b.add_int_var(2.0, 0.0, 10.0);
    b.add_row(3.0, f64::INFINITY, &[(x, 1.0)]);
    b.add_row(2.0, f64::INFINITY, &[(y, 1.0)]);
    let mip = b.build();
    let mut relaxed = mip.clone();
    relaxed.integrality = vec![false; 2];
    let lp = solve_lp(&relaxed).unwrap();
    let m = solve_mip(&mip).unwrap();
    assert_eq!(m.objective_value, lp.objective_value);
    assert_eq!(m.incumbent_values, lp.primal_values);
}

#[test]
fn sequential_cuts_match_from_scratch_solves() {
    // min -x - y over the box [0, 4]^2, then cut it down three times.
    let mut b = LpBuilder::new();
    let x = b.add_var(-1.0, 0.0, 4.0);
    let y = b.add_var(-1.0, 0.0, 4.0);
    b.add_row(f64::NEG_INFINITY, 7.0, &[(x, 1.0), (y, 1.0)]);
    let mut lp = b.build();
    let mut prior = solve_lp(&lp).unwrap();
    let cuts = [
        RowSpec::new(vec![(x, 2.0), (y, 1.0)], f64::NEG_INFINITY, 8.0),
        RowSpec::new(vec![(x, 1.0), (y, 3.0)], f64::NEG_INFINITY, 9.0),
        RowSpec::new(vec![(x, 1.0), (y, 1.0)], f64::NEG_INFINITY, 10.0),
    ];
    for cut in cuts {
        let before = prior.objective_value;
        let warm = resolve_with_added_rows(&mut lp, &prior, std::slice::from_ref(&cut)).unwrap();
        let cold = solve_lp(&lp).unwrap();
        assert!((warm.objective_value - cold.objective_value).abs() <= 1e-8);
        let (oracle, _) = dense_lp::solve(&to_dense(&lp));
        assert!((oracle.value().unwrap() - cold.objective_value).abs() <= 1e-8);
        assert!(warm.objective_value >= before - 1e-9);
        prior = warm;
    }
}

#[test]
fn redundant_row_keeps_objective() {
    let mut b = LpBuilder::new();
    let x = b.add_var(-3.0, 0.0, 5.0);
    let y = b.add_var(-1.0, 0.0, 5.0);
    b.add_row(f64::NEG_INFINITY, 6.0, &[(x, 1.0), (y, 1.0)]);
    let mut lp = b.build();
    let prior = solve_lp(&lp).unwrap();
    let sol = resolve_with_added_rows(&mut lp, &prior, &[RowSpec::new(vec![(x, 1.0)], f64::NEG_INFINITY, 20.0)])
        .unwrap();
    assert_eq!(sol.objective_value, prior.objective_value);
}

#[test]
fn added_row_rejects_unknown_variable() {
    let mut b = LpBuilder::new();
    b.add_var(1.0, 0.0, 1.0);
    let mut lp = b.build();
    let prior = solve_lp(&lp).unwrap();
    assert!(resolve_with_added_rows(&mut lp, &prior, &[RowSpec::new(vec![(3, 1.0)], 0.0, 1.0)]).is_err());
}

#[test]
fn mps_dump_cross_checks_against_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let lp = random_lp(&mut rng, false);
        let text = mps::write_mps(&lp, "XCHECK");
        let back = mps::read_mps(&text).unwrap();
        let ours = solve_lp(&lp).unwrap();
        let (theirs, _) = dense_lp::solve(&to_dense(&back));
        match theirs {
            Outcome::Optimal(v) => assert!((ours.objective_value - v).abs() <= 1e-6 * v.abs().max(1.0)),
            _ => assert_eq!(ours.status, LpStatus::Infeasible),
        }
    }
}

#[test]
fn persistent_solver_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lp = random_lp(&mut rng, false);
    let a = SimplexSolver::new(&lp, SolverOptions::default()).unwrap().solve().unwrap();
    let b = SimplexSolver::new(&lp, SolverOptions::default()).unwrap().solve().unwrap();
    assert_eq!(a.primal_values, b.primal_values);
    assert_eq!(a.dual_values, b.dual_values);
}

#[test]
fn medium_random_lps_match_dense_tableau() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..40 {
        let n = rng.random_range(10..40);
        let m = rng.random_range(5..30);
        let mut b = LpBuilder::new();
        for _ in 0..n {
            let c = rng.random_range(-5..=5) as f64;
            match rng.random_range(0..4) {
                0 => b.add_var(c, f64::NEG_INFINITY, f64::INFINITY),
                1 => b.add_var(c, 0.0, f64::INFINITY),
                _ => b.add_var(c, rng.random_range(-2..=0) as f64, rng.random_range(1..=5) as f64),
            };
        }
        for _ in 0..m {
            let mut coeffs = Vec::new();
            for j in 0..n {
                if rng.random_bool(0.3) {
                    coeffs.push((j, rng.random_range(-3..=3) as f64));
                }
            }
            let c = rng.random_range(-5..=5) as f64;
            match rng.random_range(0..3) {
                0 => b.add_row(c, c, &coeffs),
                1 => b.add_row(c - 3.0, c + 3.0, &coeffs),
                _ => b.add_row(f64::NEG_INFINITY, c.abs(), &coeffs),
            };
        }
        let lp = b.build();
        let ours = solve_lp(&lp).unwrap();
        let (theirs, _) = dense_lp::solve(&to_dense(&lp));
        match theirs {
            Outcome::Optimal(v) => {
                assert_eq!(ours.status, LpStatus::Optimal, "case {case}");
                assert!((ours.objective_value - v).abs() <= 1e-6 * v.abs().max(1.0), "case {case}");
                assert!(lp.primal_residual(&ours.primal_values) <= 1e-7, "case {case}");
            }
            Outcome::Infeasible => assert_eq!(ours.status, LpStatus::Infeasible, "case {case}"),
            Outcome::Unbounded => assert_eq!(ours.status, LpStatus::Unbounded, "case {case}"),
        }
    }
}
