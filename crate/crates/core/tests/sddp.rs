mod common;

use cascadesim_core::sddp::*;
use cascadesim_solver::{mps, solve_lp, LpBuilder};
use common::*;

#[test]
fn two_stage_toy_matches_extensive_form() {
    let toy = sddp_toy();
    let cfg = SddpConfig::default();
    let (fcf, log) = run_sddp(&toy.model, &toy.set, 2, &cfg, 11, 1).unwrap();
    let oracle = extensive_form(&toy);
    let lb = log.lower_bound();
    assert!(
        (lb - oracle).abs() <= 1e-4 * oracle.abs(),
        "lower bound {lb} vs extensive form {oracle}"
    );
    assert!(log.iterations.len() <= 30);
    for w in log.iterations.windows(2) {
        assert!(w[1].lower_bound >= w[0].lower_bound - 1e-6);
    }
    for k in 0..=20 {
        let x = 5.0 * k as f64;
        let approx = evaluate_fcf(&fcf, 0, &[x]);
        let truth = cost_to_go(&toy, x);
        assert!(approx <= truth + 1e-6, "cut overestimates at {x}: {approx} > {truth}");
    }
}

#[test]
fn deterministic_two_weeks_equal_single_lp() {
    let mut toy = sddp_toy();
    toy.set = weekly_constant_set(
        &[(cascadesim_core::scenario::Variable::Inflow, "R_in"), (cascadesim_core::scenario::Variable::Load, "L")],
        &[vec![vec![10.0, 20.0]], vec![vec![80.0, 80.0]]],
        2,
    );
    toy.inflow = vec![vec![10.0, 20.0]];
    let (_, log) = run_sddp(&toy.model, &toy.set, 2, &SddpConfig::default(), 1, 1).unwrap();
    let mut b = LpBuilder::new();
    let v1 = add_node(&mut b, &toy, 1.0, 10.0, Storage::Fixed(50.0));
    add_node(&mut b, &toy, 1.0, 20.0, Storage::Column(v1));
    let oracle = solve_lp(&b.build()).unwrap().objective_value;
    assert!((log.lower_bound() - oracle).abs() <= 1e-6 * oracle);
}

#[test]
fn thermal_only_cost_is_merit_order() {
    let mut model = one_bus_system(vec![], vec![thermal("T1", "B", 50.0, 20.0), thermal("T2", "B", 50.0, 35.0)]);
    model.deficit = vec![cascadesim_core::system::DeficitStep { depth: 1.0, cost: 1000.0 }];
    let set = weekly_constant_set(&[(cascadesim_core::scenario::Variable::Load, "L")], &[vec![vec![70.0]]], 1);
    let (_, log) = run_sddp(&model, &set, 1, &SddpConfig::default(), 3, 1).unwrap();
    let expected = 168.0 * (50.0 * 20.0 + 20.0 * 35.0);
    assert!((log.lower_bound() - expected).abs() <= 1e-6 * expected);
}

#[test]
fn stage_structure_and_mps_cross_check() {
    let toy = sddp_toy();
    let cfg = SddpConfig::default();
    let fcf = FutureCostFunction::empty(vec!["R".into()], 2);
    let stage = build_stage(&toy.model, &toy.set, &cfg, 0, 2, &fcf, 0, &[50.0]).unwrap();
    assert_eq!(stage.num_blocks(), 21);
    assert_eq!(stage.index.water_rows.len(), 1);
    let last = build_stage(&toy.model, &toy.set, &cfg, 1, 2, &fcf, 0, &[50.0]).unwrap();
    assert!(last.index.alpha.is_none());

    let text = mps::write_mps(&stage.lp, "stage0");
    let reread = mps::read_mps(&text).unwrap();
    let a = solve_lp(&stage.lp).unwrap();
    let (outcome, _) = cascadesim_testkit::dense_lp::solve(&to_dense(&reread));
    let b = outcome.value().expect("dense oracle finds an optimum");
    assert!((a.objective_value - b).abs() <= 1e-6 * a.objective_value.abs().max(1.0));
}

#[test]
fn cut_gradient_is_the_water_balance_dual() {
    let toy = sddp_toy();
    let cfg = SddpConfig::default();
    let fcf = FutureCostFunction::empty(vec!["R".into()], 2);
    let x = 30.0;
    let mut mean_obj = 0.0;
    let mut mean_dual = 0.0;
    for o in 0..2 {
        let st = build_stage(&toy.model, &toy.set, &cfg, 1, 2, &fcf, o, &[x]).unwrap();
        let out = solve_stage(&st).unwrap();
        mean_obj += out.objective / 2.0;
        mean_dual += out.water_duals[0] / 2.0;
    }
    // Finite-difference slope of the expected cost-to-go.
    let h = 1e-3;
    let fd = (cost_to_go(&toy, x + h) - cost_to_go(&toy, x - h)) / (2.0 * h);
    assert!((mean_dual - fd).abs() <= 1e-3 * fd.abs().max(1.0), "dual {mean_dual} vs slope {fd}");
    assert!((mean_obj - cost_to_go(&toy, x)).abs() <= 1e-6 * mean_obj.abs());
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let toy = sddp_toy();
    let cfg = SddpConfig::default();
    let a = run_sddp(&toy.model, &toy.set, 2, &cfg, 5, 1).unwrap();
    let b = run_sddp(&toy.model, &toy.set, 2, &cfg, 5, 4).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}
