//! Hourly true-up with affine decision rules.
//!
//! Over a three-hour window the true-up chooses nominal thermal setpoints
//! `g0[i][t]` and participation factors `beta[i][a]` so that every
//! considered deviation `xi[a]` (the realized one at hour 1, weighted
//! scenarios at hours 2 and 3) is absorbed as `g0 + sum_a beta[i][a] xi[a]`
//! within unit limits and ramps. Limit and ramp violations are priced
//! through one slack per unit and hour, shared by all scenarios, so the
//! problem size does not depend on the number of scenarios.

use cascadesim_solver::{LinearProgram, LpBuilder, SimplexSolver, SolverError, SolverOptions};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scenario::scenario_rng;
use crate::state::{advance_counter, SystemState};
use crate::system::{SystemModel, Topology, HM3_PER_M3S_HOUR};

pub const WINDOW: usize = 3;

/// One thermal unit's plan over the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueUpUnit {
    /// Hour-ahead commitment for hours 1..=3.
    pub on: [bool; WINDOW],
    /// Hour-ahead setpoints (MW).
    pub planned: [f64; WINDOW],
    /// Realized output in the previous hour.
    pub prev_generation: f64,
    /// On forced outage this hour.
    pub outage: bool,
}

/// A weighted deviation scenario for hours 2 and 3: `xi[t][area]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationScenario {
    pub weight: f64,
    pub xi: [Vec<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueUpInput {
    pub units: Vec<TrueUpUnit>,
    /// Realized deviation per area at hour 1 (MW, positive = more needed).
    pub xi_now: Vec<f64>,
    pub scenarios: Vec<DeviationScenario>,
}

#[derive(Debug, Clone)]
pub struct TrueUpIndex {
    pub g0: Vec<[usize; WINDOW]>,
    pub beta: Vec<Vec<usize>>,
    /// Per unit and hour: [above max, below min, ramp up, ramp down].
    pub slack: Vec<[[usize; 4]; WINDOW]>,
    pub sum_rows: Vec<Option<usize>>,
}

#[derive(Debug, Clone)]
pub struct TrueUpProblem {
    pub lp: LinearProgram,
    pub index: TrueUpIndex,
}

/// Optimal affine policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePolicy {
    pub g0: Vec<[f64; WINDOW]>,
    /// [unit][area]
    pub beta: Vec<Vec<f64>>,
    pub objective: f64,
    /// Total slack (MW) over units and hours.
    pub slack: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum TrueUpError {
    #[error("true-up solver failure: {0}")]
    Solver(#[from] SolverError),
    #[error("true-up problem is {0:?}")]
    NotOptimal(cascadesim_solver::LpStatus),
}

/// Penalty per MW of limit or ramp violation.
pub fn slack_penalty(model: &SystemModel) -> f64 {
    model.top_deficit_cost()
}

/// Whether unit `i` may carry area `a`'s deviations.
pub fn associated(topo: &Topology, i: usize, a: usize) -> bool {
    topo.thermal_areas[i].contains(&a)
}

pub fn build(model: &SystemModel, input: &TrueUpInput) -> TrueUpProblem {
    let topo = Topology::new(model);
    let na = model.areas.len();
    let nu = model.thermal.len();
    let pen = slack_penalty(model);
    let mut b = LpBuilder::new();

    // Expected deviation per area summed over the window, for the cost of beta.
    let mut xi_total = input.xi_now.clone();
    for sc in &input.scenarios {
        for t in 0..2 {
            for a in 0..na {
                xi_total[a] += sc.weight * sc.xi[t][a];
            }
        }
    }

    let mut g0 = Vec::with_capacity(nu);
    let mut beta = Vec::with_capacity(nu);
    let mut slack = Vec::with_capacity(nu);
    for (i, th) in model.thermal.iter().enumerate() {
        let u = &input.units[i];
        let mut cols = [0usize; WINDOW];
        for t in 0..WINDOW {
            let (lo, hi) = if u.outage || !u.on[t] {
                (0.0, 0.0)
            } else if t == 0 {
                (u.planned[0], u.planned[0])
            } else {
                (th.min_generation_mw, th.capacity_mw)
            };
            cols[t] = b.add_var(th.variable_cost, lo, hi);
        }
        g0.push(cols);
        let bcols: Vec<usize> = (0..na)
            .map(|a| {
                let ub = if associated(&topo, i, a) && !u.outage { 1.0 } else { 0.0 };
                b.add_var(th.variable_cost * xi_total[a], 0.0, ub)
            })
            .collect();
        beta.push(bcols);
        let mut s = [[0usize; 4]; WINDOW];
        for row in s.iter_mut() {
            for c in row.iter_mut() {
                *c = b.add_var(pen, 0.0, f64::INFINITY);
            }
        }
        slack.push(s);
    }

    let mut sum_rows = Vec::with_capacity(na);
    for a in 0..na {
        let eligible: Vec<usize> = (0..nu)
            .filter(|&i| associated(&topo, i, a) && !input.units[i].outage)
            .collect();
        if eligible.is_empty() {
            sum_rows.push(None);
            continue;
        }
        let co: Vec<(usize, f64)> = eligible.iter().map(|&i| (beta[i][a], 1.0)).collect();
        sum_rows.push(Some(b.add_row(1.0, 1.0, &co)));
    }

    // Nominal area balance at hours 2 and 3.
    for a in 0..na {
        for t in 1..WINDOW {
            let mut co = Vec::new();
            let mut rhs = 0.0;
            for (i, th) in model.thermal.iter().enumerate() {
                let u = &input.units[i];
                if topo.thermal_areas[i][0] == a && !u.outage {
                    co.push((g0[i][t], 1.0));
                    // Relaxed look-ahead hours may plan outside the unit's limits.
                    rhs += if u.on[t] {
                        u.planned[t].clamp(th.min_generation_mw, th.capacity_mw)
                    } else {
                        0.0
                    };
                }
            }
            if !co.is_empty() {
                b.add_row(rhs, rhs, &co);
            }
        }
    }

    // Per-scenario limits and ramps. Paths: the realized hour followed by
    // each scenario's hours 2 and 3.
    let paths: Vec<[&[f64]; WINDOW]> = if input.scenarios.is_empty() {
        vec![[&input.xi_now[..], &[][..], &[][..]]]
    } else {
        input
            .scenarios
            .iter()
            .map(|sc| [&input.xi_now[..], &sc.xi[0][..], &sc.xi[1][..]])
            .collect()
    };
    let hours = if input.scenarios.is_empty() { 1 } else { WINDOW };
    for (i, th) in model.thermal.iter().enumerate() {
        let u = &input.units[i];
        // gen(t) = g0[t] + sum_a beta[a] xi[t][a]
        let gen_terms = |t: usize, xi: &[f64]| -> Vec<(usize, f64)> {
            let mut co = vec![(g0[i][t], 1.0)];
            for (a, &x) in xi.iter().enumerate() {
                if x != 0.0 {
                    co.push((beta[i][a], x));
                }
            }
            co
        };
        let mut seen_first = false;
        for path in &paths {
            for t in 0..hours {
                if t == 0 && seen_first {
                    continue;
                }
                let (lo, hi) = if u.outage || !u.on[t] {
                    (0.0, 0.0)
                } else {
                    (th.min_generation_mw, th.capacity_mw)
                };
                let mut up = gen_terms(t, path[t]);
                up.push((slack[i][t][0], -1.0));
                b.add_row(f64::NEG_INFINITY, hi, &up);
                let mut dn = gen_terms(t, path[t]);
                dn.push((slack[i][t][1], 1.0));
                b.add_row(lo, f64::INFINITY, &dn);
                if u.outage {
                    continue;
                }
                // Ramp from the previous hour of the same path.
                let mut diff = gen_terms(t, path[t]);
                let offset = if t == 0 {
                    u.prev_generation
                } else {
                    for (c, v) in gen_terms(t - 1, path[t - 1]) {
                        diff.push((c, -v));
                    }
                    0.0
                };
                let mut r_up = diff.clone();
                r_up.push((slack[i][t][2], -1.0));
                b.add_row(f64::NEG_INFINITY, th.ramp_up_mw_h + offset, &r_up);
                let mut r_dn = diff;
                r_dn.push((slack[i][t][3], 1.0));
                b.add_row(offset - th.ramp_down_mw_h, f64::INFINITY, &r_dn);
            }
            seen_first = true;
        }
    }

    TrueUpProblem {
        lp: b.build(),
        index: TrueUpIndex {
            g0,
            beta,
            slack,
            sum_rows,
        },
    }
}

pub fn solve(problem: &TrueUpProblem) -> Result<AffinePolicy, TrueUpError> {
    let mut s = SimplexSolver::new(&problem.lp, SolverOptions::default())?;
    let sol = s.solve()?;
    if !sol.is_optimal() {
        return Err(TrueUpError::NotOptimal(sol.status));
    }
    let x = &sol.primal_values;
    let ix = &problem.index;
    Ok(AffinePolicy {
        g0: ix.g0.iter().map(|c| [x[c[0]], x[c[1]], x[c[2]]]).collect(),
        beta: ix.beta.iter().map(|c| c.iter().map(|&j| x[j]).collect()).collect(),
        objective: sol.objective_value,
        slack: ix.slack.iter().flatten().flatten().map(|&j| x[j]).sum(),
    })
}

pub fn build_and_solve(model: &SystemModel, input: &TrueUpInput) -> Result<AffinePolicy, TrueUpError> {
    solve(&build(model, input))
}

/// Realized thermal outcome of the first hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalOutcome {
    pub generation: Vec<f64>,
    pub on: Vec<bool>,
    /// Per area: deviation absorbed by deployed reserves (MW).
    pub deployed: Vec<f64>,
    /// Per area: deviation left unserved (positive) or surplus (negative).
    pub mismatch: Vec<f64>,
}

/// Applies the policy to the realized deviation, clamping each unit to its
/// limits and ramp window.
pub fn realize_thermal(model: &SystemModel, input: &TrueUpInput, policy: &AffinePolicy) -> ThermalOutcome {
    let na = model.areas.len();
    let mut generation = Vec::with_capacity(model.thermal.len());
    let mut on = Vec::with_capacity(model.thermal.len());
    let mut deployed = vec![0.0; na];
    for (i, th) in model.thermal.iter().enumerate() {
        let u = &input.units[i];
        if u.outage || !u.on[0] {
            generation.push(0.0);
            on.push(false);
            continue;
        }
        let terms: Vec<f64> = (0..na).map(|a| policy.beta[i][a] * input.xi_now[a]).collect();
        let wanted = policy.g0[i][0] + terms.iter().sum::<f64>();
        let lo = th.min_generation_mw.max(u.prev_generation - th.ramp_down_mw_h);
        let hi = th.capacity_mw.min(u.prev_generation + th.ramp_up_mw_h);
        let g = if lo <= hi { wanted.clamp(lo, hi) } else { policy.g0[i][0] };
        let moved = g - policy.g0[i][0];
        let total: f64 = terms.iter().sum();
        if total.abs() > 1e-12 {
            let f = moved / total;
            for a in 0..na {
                deployed[a] += terms[a] * f;
            }
        } else if moved.abs() > 0.0 {
            deployed[Topology::new(model).thermal_areas[i][0]] += moved;
        }
        generation.push(g);
        on.push(true);
    }
    let mismatch = (0..na).map(|a| input.xi_now[a] - deployed[a]).collect();
    ThermalOutcome {
        generation,
        on,
        deployed,
        mismatch,
    }
}

/// Realized hydro operation of one hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydroOutcome {
    pub turbined: Vec<f64>,
    pub spill: Vec<f64>,
    pub generation: Vec<f64>,
    pub storage_in: Vec<f64>,
    pub storage_out: Vec<f64>,
    pub inflow: Vec<f64>,
}

/// Runs the cascade for one hour with the planned releases and the
/// realized inflows. Reservoirs spill what exceeds their cap and cut
/// releases that would empty them; run-of-river plants pass what arrives,
/// keeping the planned spill when arrivals match the plan.
pub fn realize_hydro(
    model: &SystemModel,
    topo: &Topology,
    storage: &[f64],
    planned_q: &[f64],
    planned_s: &[f64],
    inflow: &[f64],
    week_of_year: usize,
) -> HydroOutcome {
    let n = model.hydro.len();
    let c = HM3_PER_M3S_HOUR;
    let mut q = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut out = vec![0.0; n];
    for &i in &topo.hydro_order {
        let h = &model.hydro[i];
        let up: f64 = topo.upstream[i].iter().map(|&k| q[k] + s[k]).sum();
        let arriving = inflow[i] + up;
        if h.is_reservoir() {
            let mut qi = planned_q[i].clamp(0.0, h.max_turbining_m3s);
            let mut si = planned_s[i].max(0.0);
            // Water available this hour expressed as a flow.
            let avail = storage[i] / c + arriving;
            if qi + si > avail {
                let scale = (avail / (qi + si)).max(0.0);
                qi *= scale;
                si *= scale;
            }
            let cap = h.storage_cap(week_of_year);
            let level = storage[i] + c * (arriving - qi - si);
            if level > cap {
                si += (level - cap) / c;
            }
            q[i] = qi;
            s[i] = si;
            out[i] = (storage[i] + c * (inflow[i] + up - qi - si)).max(0.0);
        } else {
            // Deviations from the planned arrivals go through the turbines first.
            let planned_arrival = planned_q[i] + planned_s[i];
            q[i] = (planned_q[i] + arriving - planned_arrival).clamp(0.0, h.max_turbining_m3s);
            s[i] = arriving - q[i];
        }
    }
    let generation = model
        .hydro
        .iter()
        .enumerate()
        .map(|(i, h)| h.production_at(q[i]))
        .collect();
    HydroOutcome {
        turbined: q,
        spill: s,
        generation,
        storage_in: storage.to_vec(),
        storage_out: out,
        inflow: inflow.to_vec(),
    }
}

/// Markov two-state forced outages. Each (scenario, hour) has its own
/// random stream, so draws do not depend on how a chain was resumed.
#[derive(Debug, Clone, Copy)]
pub struct OutageProcess {
    seed: u64,
}

const OUTAGE_SEED_SALT: u64 = 0x6f75_7461_6765_7321;

impl OutageProcess {
    pub fn new(seed: u64) -> Self {
        OutageProcess { seed: seed ^ OUTAGE_SEED_SALT }
    }

    /// Availability of each unit after `hour`, one draw per unit in unit order.
    pub fn step(&self, model: &SystemModel, state: &SystemState, scenario: usize, hour: usize) -> Vec<bool> {
        let mut rng = scenario_rng(self.seed, ((scenario as u64) << 32) | hour as u64);
        model
            .thermal
            .iter()
            .zip(&state.units)
            .map(|(t, u)| {
                let draw: f64 = rng.random();
                let mttr = t.mean_time_to_repair_h.max(1.0);
                if u.available {
                    let f = t.forced_outage_rate.clamp(0.0, 0.999);
                    let fail = if f > 0.0 { (f / (mttr * (1.0 - f))).min(1.0) } else { 0.0 };
                    draw >= fail
                } else {
                    draw < 1.0 / mttr
                }
            })
            .collect()
    }
}

/// Everything executed in one hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourOutcome {
    pub hour: usize,
    pub thermal: ThermalOutcome,
    pub hydro: HydroOutcome,
    /// Availability after this hour's outage draw.
    pub available: Vec<bool>,
    /// Fuel burned per contract (MMBtu).
    pub fuel_burned: Vec<f64>,
}

/// Advances the state by one hour.
pub fn apply_outcome(model: &SystemModel, state: &mut SystemState, out: &HourOutcome) {
    let _ = model;
    state.storage_hm3.clone_from(&out.hydro.storage_out);
    for (i, u) in state.units.iter_mut().enumerate() {
        advance_counter(u, out.thermal.on[i]);
        u.generation_mw = out.thermal.generation[i];
        u.available = out.available[i];
    }
    for (c, burned) in out.fuel_burned.iter().enumerate() {
        state.gas_remaining_mmbtu[c] = (state.gas_remaining_mmbtu[c] - burned).max(0.0);
    }
    state.hour = out.hour + 1;
}

/// Fuel burned per contract by a dispatch.
pub fn fuel_burned(model: &SystemModel, topo: &Topology, generation: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; model.fuel_contracts.len()];
    for (i, tc) in topo.thermal_contract.iter().enumerate() {
        if let Some((c, hr)) = tc {
            out[*c] += hr * generation[i];
        }
    }
    out
}
