mod common;

use cascadesim_core::state::SystemState;
use cascadesim_core::system::{BalancingArea, Bus, CommitmentClass, Topology};
use cascadesim_core::trueup::*;
use common::*;
use proptest::prelude::*;

#[test]
fn single_scenario_matches_extensive_form() {
    let model = two_units();
    let input = TrueUpInput {
        units: vec![on_unit([80.0, 85.0, 90.0]), on_unit([40.0, 40.0, 40.0])],
        xi_now: vec![6.0],
        scenarios: vec![DeviationScenario {
            weight: 1.0,
            xi: [vec![12.0], vec![3.0]],
        }],
    };
    // Nominal setpoints stay within unit limits, so the toy keeps every
    // hour's deviation inside the cheap unit's remaining headroom.
    let p = build_and_solve(&model, &input).unwrap();
    let ef = extensive_form_cost(&model, &input);
    assert!((p.objective - ef).abs() <= 1e-6 * ef.abs().max(1.0), "{} vs {ef}", p.objective);
}

#[test]
fn bracketed_by_extensive_form_and_worst_single_scenario() {
    let model = two_units();
    let input = TrueUpInput {
        units: vec![on_unit([80.0, 85.0, 90.0]), on_unit([40.0, 40.0, 40.0])],
        xi_now: vec![6.0],
        scenarios: three_scenarios(),
    };
    let adr = build_and_solve(&model, &input).unwrap();
    let ef = extensive_form_cost(&model, &input);
    let worst = input
        .scenarios
        .iter()
        .map(|s| {
            let single = TrueUpInput {
                scenarios: vec![DeviationScenario { weight: 1.0, ..s.clone() }],
                ..input.clone()
            };
            build_and_solve(&model, &single).unwrap().objective
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(adr.objective - ef >= -1e-9, "{} < {ef}", adr.objective);
    assert!(worst - adr.objective >= -1e-9, "{} > {worst}", adr.objective);
    let sum: f64 = adr.beta.iter().map(|b| b[0]).sum();
    assert!((sum - 1.0).abs() < 1e-9);
}

#[test]
fn outage_unit_is_held_at_zero() {
    let model = two_units();
    let mut b = on_unit([40.0, 40.0, 40.0]);
    b.outage = true;
    let input = TrueUpInput {
        units: vec![on_unit([60.0, 60.0, 60.0]), b],
        xi_now: vec![40.0],
        scenarios: three_scenarios(),
    };
    let p = build_and_solve(&model, &input).unwrap();
    assert_eq!(p.g0[1], [0.0; 3]);
    assert_eq!(p.beta[1][0], 0.0);
    assert!((p.beta[0][0] - 1.0).abs() < 1e-9);
    let out = realize_thermal(&model, &input, &p);
    assert_eq!(out.generation[1], 0.0);
    assert!(!out.on[1]);
    assert!((out.generation[0] - 100.0).abs() < 1e-9);
}

#[test]
fn variable_count_does_not_depend_on_scenarios() {
    let model = two_units();
    let base = TrueUpInput {
        units: vec![on_unit([80.0; 3]), on_unit([40.0; 3])],
        xi_now: vec![1.0],
        scenarios: three_scenarios(),
    };
    let many = TrueUpInput {
        scenarios: (0..10)
            .map(|k| DeviationScenario {
                weight: 0.1,
                xi: [vec![k as f64], vec![-(k as f64)]],
            })
            .collect(),
        ..base.clone()
    };
    let n1 = build(&model, &base).lp.num_vars();
    let n2 = build(&model, &many).lp.num_vars();
    assert_eq!(n1, n2);
    let units = model.thermal.len();
    let nominal = units * WINDOW + units * WINDOW * 4;
    assert_eq!(n1, nominal + units * model.areas.len());
}

#[test]
fn zero_deviation_realizes_the_plan() {
    let model = two_units();
    let input = TrueUpInput {
        units: vec![on_unit([80.0, 85.0, 90.0]), on_unit([40.0, 40.0, 40.0])],
        xi_now: vec![0.0],
        scenarios: vec![DeviationScenario {
            weight: 1.0,
            xi: [vec![0.0], vec![0.0]],
        }],
    };
    let p = build_and_solve(&model, &input).unwrap();
    let out = realize_thermal(&model, &input, &p);
    assert_eq!(out.generation, vec![80.0, 40.0]);
    assert_eq!(out.mismatch, vec![0.0]);
}

#[test]
fn ten_megawatt_step_matches_participation_grid() {
    let model = two_units();
    let unit = |planned: f64| TrueUpUnit {
        on: [true, false, false],
        planned: [planned, 0.0, 0.0],
        prev_generation: planned,
        outage: false,
    };
    let input = TrueUpInput {
        units: vec![unit(95.0), unit(50.0)],
        xi_now: vec![10.0],
        scenarios: vec![],
    };
    let p = build_and_solve(&model, &input).unwrap();
    let pen = model.top_deficit_cost();
    let cost = |b1: f64| {
        let g1 = 95.0 + 10.0 * b1;
        let g2 = 50.0 + 10.0 * (1.0 - b1);
        20.0 * g1 + 30.0 * g2 + pen * (g1 - 100.0).max(0.0)
    };
    let best = (0..=100).map(|k| cost(k as f64 / 100.0)).fold(f64::INFINITY, f64::min);
    assert!((p.objective - best).abs() < 1e-6, "{} vs {best}", p.objective);
    assert!((p.beta[0][0] - 0.5).abs() < 1e-9);
}

#[test]
fn shared_unit_can_carry_another_areas_deviation() {
    let mut model = two_units();
    model.network.buses.push(Bus {
        id: "B_2".into(),
        area: "A2".into(),
        load_site: None,
        elastic_segments: vec![],
    });
    model.areas.push(BalancingArea {
        id: "A2".into(),
        regulation_mw: 0.0,
        contingency_mw: 0.0,
        shared_resource_ids: vec!["A".into()],
    });
    model.thermal[1].bus = "B_2".into();
    let input = TrueUpInput {
        units: vec![on_unit([50.0; 3]), on_unit([50.0; 3])],
        xi_now: vec![0.0, 10.0],
        scenarios: vec![],
    };
    let p = build(&model, &input);
    let topo = Topology::new(&model);
    assert!(associated(&topo, 0, 1));
    assert!(!associated(&topo, 1, 0));
    assert_eq!(p.lp.var_upper[p.index.beta[1][0]], 0.0);
    let pol = solve(&p).unwrap();
    // The cheap shared unit takes the second area's deviation.
    assert!((pol.beta[0][1] - 1.0).abs() < 1e-9);
}

#[test]
fn three_hour_chain_updates_storage_and_counters() {
    let mut th = thermal("T", "B", 100.0, 50.0);
    th.commitment_class = Some(CommitmentClass::Fast);
    th.initial_on = true;
    th.initial_hours_in_state = 5;
    th.initial_generation_mw = 30.0;
    let model = one_bus_system(vec![reservoir("R", "B", 100.0, 50.0, 100.0, 1.0)], vec![th]);
    let topo = Topology::new(&model);
    let mut state = SystemState::initial(&model);
    let inflow = [10.0, 0.0, 25.0];
    let release = [30.0, 40.0, 5.0];
    let on = [true, false, false];
    let mut expect_storage = 50.0;
    for h in 0..3 {
        let hydro = realize_hydro(&model, &topo, &state.storage_hm3, &[release[h]], &[0.0], &[inflow[h]], 0);
        let thermal = ThermalOutcome {
            generation: vec![if on[h] { 30.0 } else { 0.0 }],
            on: vec![on[h]],
            deployed: vec![0.0],
            mismatch: vec![0.0],
        };
        let out = HourOutcome {
            hour: h,
            thermal,
            hydro,
            available: vec![true],
            fuel_burned: vec![],
        };
        apply_outcome(&model, &mut state, &out);
        expect_storage += 0.0036 * (inflow[h] - release[h]);
        assert!((state.storage_hm3[0] - expect_storage).abs() < 1e-12);
        assert_eq!(state.hour, h + 1);
    }
    assert!(!state.units[0].on);
    assert_eq!(state.units[0].hours_in_state, 2);
    assert_eq!(state.units[0].generation_mw, 0.0);
}

#[test]
fn reservoir_spills_above_cap_and_never_goes_negative() {
    let model = one_bus_system(vec![reservoir("R", "B", 1.0, 0.99, 100.0, 1.0)], vec![]);
    let topo = Topology::new(&model);
    let full = realize_hydro(&model, &topo, &[0.99], &[0.0], &[0.0], &[100.0], 0);
    assert!((full.storage_out[0] - 1.0).abs() < 1e-12);
    assert!(full.spill[0] > 0.0);
    let empty = realize_hydro(&model, &topo, &[0.001], &[100.0], &[0.0], &[0.0], 0);
    assert!(empty.storage_out[0] >= 0.0);
    assert!(empty.turbined[0] < 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn participation_sums_to_one_and_brackets_hold(
        xi in -30.0f64..30.0,
        s in prop::collection::vec((0.05f64..1.0, -25.0f64..25.0, -25.0f64..25.0), 1..4),
    ) {
        let model = two_units();
        let total: f64 = s.iter().map(|x| x.0).sum();
        let input = TrueUpInput {
            units: vec![on_unit([70.0, 70.0, 70.0]), on_unit([40.0, 40.0, 40.0])],
            xi_now: vec![xi],
            scenarios: s.iter().map(|&(w, a, b)| DeviationScenario { weight: w / total, xi: [vec![a], vec![b]] }).collect(),
        };
        let p = build_and_solve(&model, &input).unwrap();
        prop_assert!((p.beta[0][0] + p.beta[1][0] - 1.0).abs() < 1e-9);
        let ef = extensive_form_cost(&model, &input);
        prop_assert!(p.objective - ef >= -1e-6 * ef.abs().max(1.0));
        let out = realize_thermal(&model, &input, &p);
        let conserved: f64 = out.deployed.iter().zip(&out.mismatch).map(|(d, m)| d + m).sum();
        prop_assert!((conserved - xi).abs() < 1e-9);
    }
}
