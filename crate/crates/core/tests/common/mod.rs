//! Small hand-built systems shared by the integration tests and the
//! acceptance suite.
#![allow(dead_code)]

use cascadesim_core::scenario::{ScenarioSet, SeriesKey, Variable};
use cascadesim_core::system::*;

pub fn thermal(id: &str, bus: &str, cap: f64, cost: f64) -> ThermalPlant {
    ThermalPlant {
        id: id.into(),
        bus: bus.into(),
        capacity_mw: cap,
        min_generation_mw: 0.0,
        variable_cost: cost,
        startup_cost: 0.0,
        min_up_h: 1,
        min_down_h: 1,
        ramp_up_mw_h: cap,
        ramp_down_mw_h: cap,
        commitment_class: None,
        fuel_contract: None,
        initial_on: false,
        initial_hours_in_state: 1000,
        initial_generation_mw: 0.0,
        forced_outage_rate: 0.0,
        mean_time_to_repair_h: 24.0,
    }
}

pub fn reservoir(id: &str, bus: &str, max: f64, initial: f64, qmax: f64, slope: f64) -> HydroPlant {
    HydroPlant {
        id: id.into(),
        kind: HydroKind::Reservoir,
        bus: bus.into(),
        max_storage_hm3: max,
        min_storage_hm3: 0.0,
        initial_storage_hm3: initial,
        max_turbining_m3s: qmax,
        production: vec![(0.0, 0.0), (qmax, slope * qmax)],
        downstream: None,
        min_spill_m3s: 0.0,
        max_spill_m3s: 10_000.0,
        inflow_site: format!("{id}_in"),
        flood_control_max_storage_hm3: None,
    }
}

pub fn one_bus_system(hydro: Vec<HydroPlant>, thermal: Vec<ThermalPlant>) -> SystemModel {
    SystemModel {
        schema_version: SCHEMA_VERSION,
        name: "toy".into(),
        hydro,
        thermal,
        fuel_contracts: vec![],
        network: Network {
            buses: vec![Bus {
                id: "B".into(),
                area: "A".into(),
                load_site: Some("L".into()),
                elastic_segments: vec![],
            }],
            circuits: vec![],
            markets: vec![],
        },
        areas: vec![BalancingArea {
            id: "A".into(),
            regulation_mw: 0.0,
            contingency_mw: 0.0,
            shared_resource_ids: vec![],
        }],
        vre: vec![],
        deficit: vec![DeficitStep { depth: 1.0, cost: 1000.0 }],
        curtailment_cost: 0.0,
    }
}

/// Scenario set with piecewise-constant weekly values:
/// `values[key][scenario][week]`.
pub fn weekly_constant_set(keys: &[(Variable, &str)], values: &[Vec<Vec<f64>>], weeks: usize) -> ScenarioSet {
    let s = values[0].len();
    let h = weeks * 168;
    let mut data = Vec::new();
    for per_key in values {
        for per_s in per_key {
            for hour in 0..h {
                data.push(per_s[hour / 168]);
            }
        }
    }
    ScenarioSet::new(
        keys.iter().map(|(v, s)| SeriesKey::new(*v, *s)).collect(),
        s,
        h,
        data,
    )
}

/// Two-stage, two-opening toy: one 100 hm³ reservoir (1 MW per m³/s), one
/// 100 MW thermal at 50 $/MWh, deficit at 1000 $/MWh, 80 MW flat load.
pub struct SddpToy {
    pub model: SystemModel,
    pub set: ScenarioSet,
    /// Inflow (m³/s) per scenario and week.
    pub inflow: Vec<Vec<f64>>,
    pub load: f64,
}

pub fn sddp_toy() -> SddpToy {
    let model = one_bus_system(
        vec![reservoir("R", "B", 100.0, 50.0, 100.0, 1.0)],
        vec![thermal("T", "B", 60.0, 50.0)],
    );
    let inflow = vec![vec![10.0, 20.0], vec![60.0, 45.0]];
    let load = 80.0;
    let set = weekly_constant_set(
        &[(Variable::Inflow, "R_in"), (Variable::Load, "L")],
        &[inflow.clone(), vec![vec![load; 2]; 2]],
        2,
    );
    SddpToy { model, set, inflow, load }
}

/// Dense copy of an LP for the naive tableau oracle.
pub fn to_dense(lp: &cascadesim_solver::LinearProgram) -> cascadesim_testkit::DenseLp {
    let n = lp.num_vars();
    let mut a = vec![vec![0.0; n]; lp.num_rows()];
    for (j, _) in lp.costs.iter().enumerate() {
        for (r, v) in lp.columns.col(j) {
            a[r][j] = v;
        }
    }
    let sign = if lp.sense == cascadesim_solver::Sense::Maximize { -1.0 } else { 1.0 };
    cascadesim_testkit::DenseLp {
        c: lp.costs.iter().map(|c| sign * c).collect(),
        a,
        row_lo: lp.row_lower.clone(),
        row_hi: lp.row_upper.clone(),
        var_lo: lp.var_lower.clone(),
        var_hi: lp.var_upper.clone(),
    }
}

/// Extensive-form counterpart of the affine true-up: every scenario gets
/// its own recourse `d[i][a][t]`, between 0 and the deviation, summing to the
/// deviation per area, and its own slacks weighted by the scenario weight.
/// Solved with the dense tableau oracle.
pub fn extensive_form_cost(model: &SystemModel, input: &cascadesim_core::trueup::TrueUpInput) -> f64 {
    use cascadesim_solver::LpBuilder;
    let topo = Topology::new(model);
    let na = model.areas.len();
    let pen = model.top_deficit_cost();
    let mut b = LpBuilder::new();
    let paths: Vec<(f64, Vec<&[f64]>)> = if input.scenarios.is_empty() {
        vec![(1.0, vec![&input.xi_now[..]])]
    } else {
        input
            .scenarios
            .iter()
            .map(|s| (s.weight, vec![&input.xi_now[..], &s.xi[0][..], &s.xi[1][..]]))
            .collect()
    };
    // Hour 1 is shared by all paths.
    let mut first: Option<Vec<usize>> = None;
    for (w, path) in &paths {
        let mut prev: Option<Vec<usize>> = None;
        for (t, xi) in path.iter().enumerate() {
            if t == 0 {
                if let Some(f) = &first {
                    prev = Some(f.clone());
                    continue;
                }
            }
            let weight = if t == 0 { 1.0 } else { *w };
            let mut gens = Vec::new();
            let mut d: Vec<Vec<Option<usize>>> = vec![vec![None; na]; model.thermal.len()];
            for (i, th) in model.thermal.iter().enumerate() {
                let u = &input.units[i];
                let on = u.on[t] && !u.outage;
                let gen = b.add_var(weight * th.variable_cost, f64::NEG_INFINITY, f64::INFINITY);
                let nominal = b.add_var(0.0, 0.0, 0.0);
                if on {
                    if t == 0 {
                        b.set_bounds(nominal, u.planned[0], u.planned[0]);
                    } else {
                        b.set_bounds(nominal, th.min_generation_mw, th.capacity_mw);
                    }
                }
                let mut co = vec![(gen, 1.0), (nominal, -1.0)];
                for a in 0..na {
                    if topo.thermal_areas[i].contains(&a) && !u.outage {
                        let (lo, hi) = (xi[a].min(0.0), xi[a].max(0.0));
                        let v = b.add_var(0.0, lo, hi);
                        co.push((v, -1.0));
                        d[i][a] = Some(v);
                    }
                }
                b.add_row(0.0, 0.0, &co);
                let (lo, hi) = if on { (th.min_generation_mw, th.capacity_mw) } else { (0.0, 0.0) };
                let s_up = b.add_var(weight * pen, 0.0, f64::INFINITY);
                let s_dn = b.add_var(weight * pen, 0.0, f64::INFINITY);
                b.add_row(f64::NEG_INFINITY, hi, &[(gen, 1.0), (s_up, -1.0)]);
                b.add_row(lo, f64::INFINITY, &[(gen, 1.0), (s_dn, 1.0)]);
                if !u.outage {
                    let r_up = b.add_var(weight * pen, 0.0, f64::INFINITY);
                    let r_dn = b.add_var(weight * pen, 0.0, f64::INFINITY);
                    match &prev {
                        None => {
                            b.add_row(f64::NEG_INFINITY, th.ramp_up_mw_h + u.prev_generation, &[(gen, 1.0), (r_up, -1.0)]);
                            b.add_row(u.prev_generation - th.ramp_down_mw_h, f64::INFINITY, &[(gen, 1.0), (r_dn, 1.0)]);
                        }
                        Some(p) => {
                            b.add_row(f64::NEG_INFINITY, th.ramp_up_mw_h, &[(gen, 1.0), (p[i], -1.0), (r_up, -1.0)]);
                            b.add_row(-th.ramp_down_mw_h, f64::INFINITY, &[(gen, 1.0), (p[i], -1.0), (r_dn, 1.0)]);
                        }
                    }
                }
                gens.push((gen, nominal));
            }
            for a in 0..na {
                let co: Vec<(usize, f64)> = d.iter().filter_map(|row| row[a]).map(|v| (v, 1.0)).collect();
                if !co.is_empty() {
                    b.add_row(xi[a], xi[a], &co);
                }
                if t > 0 {
                    let mut nominal = Vec::new();
                    let mut rhs = 0.0;
                    for (i, _) in model.thermal.iter().enumerate() {
                        if topo.thermal_areas[i][0] == a && !input.units[i].outage {
                            nominal.push((gens[i].1, 1.0));
                            rhs += input.units[i].planned[t];
                        }
                    }
                    if !nominal.is_empty() {
                        b.add_row(rhs, rhs, &nominal);
                    }
                }
            }
            let g: Vec<usize> = gens.iter().map(|x| x.0).collect();
            if t == 0 {
                first = Some(g.clone());
            }
            prev = Some(g);
        }
    }
    let lp = b.build();
    match cascadesim_testkit::dense_lp::solve(&to_dense(&lp)) {
        (cascadesim_testkit::Outcome::Optimal(v), _) => v,
        other => panic!("extensive form not optimal: {other:?}"),
    }
}

/// Optimum of an LP found by the dense tableau oracle.
pub fn dense_optimum(lp: &cascadesim_solver::LinearProgram) -> f64 {
    match cascadesim_testkit::dense_lp::solve(&to_dense(lp)) {
        (cascadesim_testkit::Outcome::Optimal(v), _) => v,
        other => panic!("oracle did not find an optimum: {other:?}"),
    }
}

/// Weekly-aggregate LP of one toy stage node, added to `b` with probability
/// weight `p`. Returns the end-of-week storage column.
pub fn add_node(b: &mut cascadesim_solver::LpBuilder, toy: &SddpToy, p: f64, inflow: f64, storage_in: Storage) -> usize {
    let c = 168.0 * HM3_PER_M3S_HOUR;
    let q = b.add_var(0.0, 0.0, 100.0);
    let s = b.add_var(0.0, 0.0, 10_000.0);
    let gen = b.add_var(0.0, 0.0, 100.0);
    let g = b.add_var(p * 168.0 * 50.0, 0.0, 60.0);
    let d = b.add_var(p * 168.0 * 1000.0, 0.0, toy.load);
    let v = b.add_var(0.0, 0.0, 100.0);
    b.add_row(f64::NEG_INFINITY, 0.0, &[(gen, 1.0), (q, -1.0)]);
    b.add_row(toy.load, toy.load, &[(gen, 1.0), (g, 1.0), (d, 1.0)]);
    match storage_in {
        Storage::Fixed(x) => {
            b.add_row(x + c * inflow, x + c * inflow, &[(v, 1.0), (q, c), (s, c)]);
        }
        Storage::Column(col) => {
            b.add_row(c * inflow, c * inflow, &[(v, 1.0), (q, c), (s, c), (col, -1.0)]);
        }
    }
    v
}

#[derive(Clone, Copy)]
pub enum Storage {
    Fixed(f64),
    Column(usize),
}

pub fn extensive_form(toy: &SddpToy) -> f64 {
    let mut b = cascadesim_solver::LpBuilder::new();
    let x0 = toy.model.hydro[0].initial_storage_hm3;
    for o1 in 0..2 {
        let v1 = add_node(&mut b, toy, 0.5, toy.inflow[o1][0], Storage::Fixed(x0));
        for o2 in 0..2 {
            add_node(&mut b, toy, 0.25, toy.inflow[o2][1], Storage::Column(v1));
        }
    }
    dense_optimum(&b.build())
}

pub fn cost_to_go(toy: &SddpToy, storage: f64) -> f64 {
    let mut b = cascadesim_solver::LpBuilder::new();
    for o2 in 0..2 {
        add_node(&mut b, toy, 0.5, toy.inflow[o2][1], Storage::Fixed(storage));
    }
    dense_optimum(&b.build())
}

/// Two units in one area: cheap A (20 $/MWh) and expensive B (30 $/MWh).
pub fn two_units() -> SystemModel {
    let mut a = thermal("A", "B", 100.0, 20.0);
    a.min_generation_mw = 20.0;
    a.ramp_up_mw_h = 40.0;
    a.ramp_down_mw_h = 40.0;
    a.commitment_class = Some(CommitmentClass::Fast);
    let mut b = thermal("B2", "B", 100.0, 30.0);
    b.min_generation_mw = 10.0;
    b.ramp_up_mw_h = 40.0;
    b.ramp_down_mw_h = 40.0;
    b.commitment_class = Some(CommitmentClass::Fast);
    one_bus_system(vec![], vec![a, b])
}

pub fn on_unit(planned: [f64; 3]) -> cascadesim_core::trueup::TrueUpUnit {
    cascadesim_core::trueup::TrueUpUnit {
        on: [true; 3],
        planned,
        prev_generation: planned[0],
        outage: false,
    }
}

pub fn three_scenarios() -> Vec<cascadesim_core::trueup::DeviationScenario> {
    vec![
        cascadesim_core::trueup::DeviationScenario {
            weight: 0.5,
            xi: [vec![5.0], vec![8.0]],
        },
        cascadesim_core::trueup::DeviationScenario {
            weight: 0.3,
            xi: [vec![-6.0], vec![-4.0]],
        },
        cascadesim_core::trueup::DeviationScenario {
            weight: 0.2,
            xi: [vec![20.0], vec![30.0]],
        },
    ]
}
