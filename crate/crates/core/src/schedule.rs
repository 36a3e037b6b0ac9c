//! Week-ahead, day-ahead and hour-ahead scheduling problems.
//!
//! All three layers share one builder over a list of chronological periods
//! (load blocks for the week-ahead, hours otherwise). Each period carries
//! thermal dispatch with unit commitment, reserves, the hydro cascade,
//! transmission, deficit steps, elastic demand, VRE curtailment and market
//! segments. Layers differ in which commitments are integer, which are
//! fixed by an upper layer, and how end-of-horizon storage is valued.

use std::time::Instant;

use cascadesim_solver::{solve_mip_with, LinearProgram, LpBuilder, LpStatus, SimplexSolver, SolverError, SolverOptions};
use serde::{Deserialize, Serialize};

use crate::calendar::{is_week_start, BlockScheme, HOURS_PER_DAY};
use crate::scenario::week_of_year;
use crate::sddp::{overflow_penalty, storage_penalty, Cut};
use crate::state::{repair_commitment, Fixings, HourlyInputs, SystemState};
use crate::system::{CommitmentClass, SystemModel, Topology, HM3_PER_M3S_HOUR};
use crate::Layer;

/// Minimum up/down time formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UcFormulation {
    /// Aggregated turn-on/turn-off inequalities on startup and shutdown
    /// variables.
    Strong,
    /// `window * (u_t - u_{t-1}) <= sum of u over the window`.
    BigM,
}

/// Commitment treatment of one unit in one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Commit {
    Fixed(bool),
    Free { integer: bool },
}

/// How storage left at the end of the horizon is valued.
#[derive(Debug, Clone, PartialEq)]
pub enum EndValue {
    /// Future-cost cuts over reservoir storages.
    Cuts(Vec<Cut>),
    /// Linear value per hm³ for each hydro plant, with optional soft
    /// targets per hydro plant.
    WaterValue { lambda: Vec<f64>, target: Option<Vec<Option<f64>>> },
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleOptions {
    /// Penalty per MW of reserve shortfall per hour.
    pub reserve_shortfall_cost: f64,
    /// Penalty per MW of ramp violation; `None` uses the top deficit cost.
    pub ramp_violation_cost: Option<f64>,
    /// Storage target penalty per hm³ as a multiple of the highest thermal cost.
    pub target_penalty_factor: f64,
    /// Hours of the hour-ahead horizon with integer fast-unit commitments.
    pub integer_hours: usize,
    pub formulation: UcFormulation,
    pub mip_rel_gap: f64,
    pub node_limit: usize,
    pub blocks: BlockScheme,
    /// Penalty per MMBtu burned beyond today's nomination.
    pub gas_overdraw_factor: f64,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        ScheduleOptions {
            reserve_shortfall_cost: 1000.0,
            ramp_violation_cost: None,
            target_penalty_factor: 10.0,
            integer_hours: 6,
            formulation: UcFormulation::Strong,
            mip_rel_gap: 1e-6,
            node_limit: 200_000,
            blocks: BlockScheme::default(),
            gas_overdraw_factor: 10.0,
        }
    }
}

/// Everything the builder needs for one problem instance.
#[derive(Debug, Clone)]
pub struct StageSpec<'a> {
    pub layer: Layer,
    pub start_hour: usize,
    /// (hour offset from `start_hour`, duration in hours) per period.
    pub periods: Vec<(usize, usize)>,
    pub inputs: &'a HourlyInputs,
    pub state: &'a SystemState,
    /// [unit][period]; ignored for units without a commitment class.
    pub commit: Vec<Vec<Commit>>,
    /// Requirement per area per period ([regulation, contingency]); `None`
    /// disables reserves.
    pub reserves: Option<Vec<Vec<[f64; 2]>>>,
    pub hard_first_ramp: bool,
    /// Limit fuel burned during the current day to the remaining nomination
    /// instead of nominating anew.
    pub gas_remaining_today: bool,
    pub end: EndValue,
}

/// Column and row positions of a built problem.
#[derive(Debug, Clone, Default)]
pub struct ScheduleIndex {
    pub g: Vec<Vec<usize>>,
    pub u: Vec<Option<Vec<usize>>>,
    pub y: Vec<Option<Vec<usize>>>,
    pub z: Vec<Option<Vec<usize>>>,
    /// Per unit: (area, regulation cols, contingency cols).
    pub reserve: Vec<Vec<(usize, Vec<usize>, Vec<usize>)>>,
    pub reserve_short: Vec<Vec<[usize; 2]>>,
    pub q: Vec<Vec<usize>>,
    pub s: Vec<Vec<usize>>,
    pub hgen: Vec<Vec<usize>>,
    pub v: Vec<Option<Vec<usize>>>,
    pub water_rows: Vec<Option<Vec<usize>>>,
    pub flow: Vec<Vec<usize>>,
    pub deficit: Vec<Vec<Vec<usize>>>,
    pub curtail: Vec<Vec<usize>>,
    pub elastic: Vec<Vec<Vec<usize>>>,
    pub buy: Vec<Vec<Vec<usize>>>,
    pub sell: Vec<Vec<Vec<usize>>>,
    pub bus_rows: Vec<Vec<usize>>,
    /// (contract, absolute day, column).
    pub nominations: Vec<(usize, usize, usize)>,
    pub alpha: Option<usize>,
    pub integer_count: usize,
}

#[derive(Debug, Clone)]
pub struct ScheduleProblem {
    pub layer: Layer,
    pub start_hour: usize,
    pub periods: Vec<(usize, usize)>,
    pub lp: LinearProgram,
    pub index: ScheduleIndex,
    /// Per bus per period: inelastic load and available VRE (MW).
    pub bus_load: Vec<Vec<f64>>,
    pub vre_avail: Vec<Vec<f64>>,
    pub inflow: Vec<Vec<f64>>,
}

impl ScheduleProblem {
    pub fn num_periods(&self) -> usize {
        self.periods.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleResult {
    pub layer: Layer,
    pub start_hour: usize,
    pub periods: Vec<(usize, usize)>,
    pub objective: f64,
    /// [unit][period]
    pub thermal_gen: Vec<Vec<f64>>,
    pub commitment: Vec<Vec<bool>>,
    pub startups: Vec<Vec<f64>>,
    /// [area][period]: allocated [regulation, contingency].
    pub reserves: Vec<Vec<[f64; 2]>>,
    /// [hydro][period]
    pub hydro_gen: Vec<Vec<f64>>,
    pub turbined: Vec<Vec<f64>>,
    pub spill: Vec<Vec<f64>>,
    /// End-of-period storage; zero for run-of-river plants.
    pub storage: Vec<Vec<f64>>,
    /// Marginal value of stored water per period ($/hm³).
    pub water_values: Vec<Vec<f64>>,
    /// [circuit][period], positive from `from` to `to`.
    pub flows: Vec<Vec<f64>>,
    /// [bus][period]
    pub deficit: Vec<Vec<f64>>,
    pub elastic_served: Vec<Vec<f64>>,
    pub load: Vec<Vec<f64>>,
    /// [vre][period]
    pub vre_available: Vec<Vec<f64>>,
    pub curtailment: Vec<Vec<f64>>,
    /// [market][period]
    pub market_buy: Vec<Vec<f64>>,
    pub market_sell: Vec<Vec<f64>>,
    /// (contract, absolute day, MMBtu).
    pub nominations: Vec<(usize, usize, f64)>,
    pub inflow: Vec<Vec<f64>>,
    pub nodes: usize,
    pub integer_vars: usize,
    pub num_vars: usize,
    pub num_rows: usize,
    pub solve_seconds: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ScheduleError {
    #[error("{layer:?} problem at hour {hour} is {status:?}")]
    NotOptimal { layer: Layer, hour: usize, status: LpStatus },
    #[error("{layer:?} problem at hour {hour}: {source}")]
    Solver {
        layer: Layer,
        hour: usize,
        #[source]
        source: SolverError,
    },
    #[error("inputs end before hour {0}")]
    ShortInputs(usize),
}

fn is_committed(model: &SystemModel, i: usize) -> bool {
    model.thermal[i].commitment_class.is_some()
}

/// Builds the scheduling LP/MIP for `spec`.
pub fn build(model: &SystemModel, spec: &StageSpec, opts: &ScheduleOptions) -> Result<ScheduleProblem, ScheduleError> {
    let topo = Topology::new(model);
    let np = spec.periods.len();
    let last_hour = spec.start_hour + spec.periods.last().map_or(0, |&(o, d)| o + d);
    if last_hour > spec.inputs.hours() {
        return Err(ScheduleError::ShortInputs(last_hour));
    }
    let mut b = LpBuilder::new();
    let mut ix = ScheduleIndex::default();
    let dur: Vec<f64> = spec.periods.iter().map(|&(_, d)| d as f64).collect();
    let abs = |p: usize| spec.start_hour + spec.periods[p].0;
    let ramp_cost = opts.ramp_violation_cost.unwrap_or_else(|| model.top_deficit_cost());
    let woy = week_of_year(spec.start_hour);

    let bus_load: Vec<Vec<f64>> = (0..model.network.buses.len())
        .map(|k| (0..np).map(|p| spec.inputs.load_avg(k, abs(p), spec.periods[p].1)).collect())
        .collect();
    let vre_avail: Vec<Vec<f64>> = (0..model.vre.len())
        .map(|k| (0..np).map(|p| spec.inputs.vre_avg(k, abs(p), spec.periods[p].1)).collect())
        .collect();
    let inflow: Vec<Vec<f64>> = (0..model.hydro.len())
        .map(|k| (0..np).map(|p| spec.inputs.inflow_avg(k, abs(p), spec.periods[p].1)).collect())
        .collect();

    // Thermal units.
    let mut headroom_terms: Vec<Vec<Vec<(usize, f64)>>> = vec![vec![Vec::new(); np]; model.thermal.len()];
    for (i, th) in model.thermal.iter().enumerate() {
        let st = &spec.state.units[i];
        let g: Vec<usize> = (0..np)
            .map(|p| {
                let ub = if !st.available && p == 0 { 0.0 } else { th.capacity_mw };
                b.add_var(th.variable_cost * dur[p], 0.0, ub)
            })
            .collect();
        if is_committed(model, i) {
            let mut u = Vec::with_capacity(np);
            for p in 0..np {
                let (lb, ub, integer) = match spec.commit[i][p] {
                    Commit::Fixed(v) => {
                        let x = if v { 1.0 } else { 0.0 };
                        (x, x, false)
                    }
                    Commit::Free { integer } => (0.0, 1.0, integer),
                };
                let (mut lb, mut ub) = (lb, ub);
                if matches!(spec.commit[i][p], Commit::Free { .. }) {
                    let off = spec.periods[p].0 as u32;
                    if st.on && off + st.hours_in_state < th.min_up_h {
                        lb = 1.0;
                    }
                    if !st.on && off + st.hours_in_state < th.min_down_h {
                        ub = 0.0;
                    }
                }
                if !st.available && p == 0 {
                    lb = 0.0;
                    ub = 0.0;
                }
                let col = if integer && lb < ub {
                    ix.integer_count += 1;
                    b.add_int_var(0.0, lb, ub)
                } else {
                    b.add_var(0.0, lb, ub)
                };
                u.push(col);
            }
            let y: Vec<usize> = (0..np).map(|_| b.add_var(th.startup_cost, 0.0, 1.0)).collect();
            let z: Vec<usize> = (0..np).map(|_| b.add_var(0.0, 0.0, 1.0)).collect();
            let u_prev = if st.on { 1.0 } else { 0.0 };
            for p in 0..np {
                // u_p - u_{p-1} - y_p + z_p = 0
                let mut c = vec![(u[p], 1.0), (y[p], -1.0), (z[p], 1.0)];
                let rhs = if p == 0 {
                    u_prev
                } else {
                    c.push((u[p - 1], -1.0));
                    0.0
                };
                b.add_row(rhs, rhs, &c);
                // g >= pmin u
                b.add_row(0.0, f64::INFINITY, &[(g[p], 1.0), (u[p], -th.min_generation_mw)]);
                headroom_terms[i][p].push((u[p], -th.capacity_mw));
            }
            let s_of = |p: usize| spec.periods[p].0 as i64;
            match opts.formulation {
                UcFormulation::Strong => {
                    for p in 0..np {
                        let mut on = vec![(u[p], -1.0)];
                        let mut off = vec![(u[p], 1.0)];
                        for q in 0..=p {
                            if s_of(p) - s_of(q) < th.min_up_h as i64 {
                                on.push((y[q], 1.0));
                            }
                            if s_of(p) - s_of(q) < th.min_down_h as i64 {
                                off.push((z[q], 1.0));
                            }
                        }
                        b.add_row(f64::NEG_INFINITY, 0.0, &on);
                        b.add_row(f64::NEG_INFINITY, 1.0, &off);
                    }
                }
                UcFormulation::BigM => {
                    for p in 0..np {
                        let up_win: Vec<usize> = (p..np).filter(|&q| s_of(q) - s_of(p) < th.min_up_h as i64).collect();
                        let dn_win: Vec<usize> =
                            (p..np).filter(|&q| s_of(q) - s_of(p) < th.min_down_h as i64).collect();
                        // sum u_q - n (u_p - u_{p-1}) >= 0
                        if up_win.len() > 1 {
                            let n = up_win.len() as f64;
                            let mut c: Vec<(usize, f64)> = up_win.iter().map(|&q| (u[q], 1.0)).collect();
                            c[0].1 -= n;
                            let lo = if p == 0 {
                                -n * u_prev
                            } else {
                                c.push((u[p - 1], n));
                                0.0
                            };
                            b.add_row(lo, f64::INFINITY, &c);
                        }
                        // sum (1 - u_q) >= n (u_{p-1} - u_p)  <=>  -sum u_q + n u_p - n u_{p-1} >= -len
                        if dn_win.len() > 1 {
                            let n = dn_win.len() as f64;
                            let mut c: Vec<(usize, f64)> = dn_win.iter().map(|&q| (u[q], -1.0)).collect();
                            c[0].1 += n;
                            let lo = if p == 0 {
                                -n + n * u_prev
                            } else {
                                c.push((u[p - 1], -n));
                                -n
                            };
                            b.add_row(lo, f64::INFINITY, &c);
                        }
                    }
                }
            }
            ix.u.push(Some(u));
            ix.y.push(Some(y));
            ix.z.push(Some(z));
        } else {
            for p in 0..np {
                headroom_terms[i][p].push((usize::MAX, th.capacity_mw));
            }
            ix.u.push(None);
            ix.y.push(None);
            ix.z.push(None);
        }
        // Ramps between consecutive periods, soft except optionally the first.
        for p in 0..np {
            let step = if p == 0 { 1.0 } else { ((dur[p - 1] + dur[p]) / 2.0).max(1.0) };
            let hard = p == 0 && spec.hard_first_ramp && st.available;
            let (up_slack, dn_slack) = if hard {
                (None, None)
            } else {
                (
                    Some(b.add_var(ramp_cost, 0.0, f64::INFINITY)),
                    Some(b.add_var(ramp_cost, 0.0, f64::INFINITY)),
                )
            };
            let mut up = vec![(g[p], 1.0)];
            let mut dn = vec![(g[p], -1.0)];
            let (up_hi, dn_hi) = if p == 0 {
                (th.ramp_up_mw_h + st.generation_mw, th.ramp_down_mw_h - st.generation_mw)
            } else {
                up.push((g[p - 1], -1.0));
                dn.push((g[p - 1], 1.0));
                (th.ramp_up_mw_h * step, th.ramp_down_mw_h * step)
            };
            if let Some(sl) = up_slack {
                up.push((sl, -1.0));
            }
            if let Some(sl) = dn_slack {
                dn.push((sl, -1.0));
            }
            b.add_row(f64::NEG_INFINITY, up_hi, &up);
            b.add_row(f64::NEG_INFINITY, dn_hi, &dn);
        }
        ix.g.push(g);
    }

    // Reserves (thermal only), headroom rows.
    let na = model.areas.len();
    ix.reserve = vec![Vec::new(); model.thermal.len()];
    if let Some(req) = &spec.reserves {
        for (i, th) in model.thermal.iter().enumerate() {
            for &a in &topo.thermal_areas[i] {
                let reg: Vec<usize> = (0..np).map(|_| b.add_var(0.0, 0.0, f64::INFINITY)).collect();
                let con: Vec<usize> = (0..np).map(|_| b.add_var(0.0, 0.0, f64::INFINITY)).collect();
                ix.reserve[i].push((a, reg, con));
            }
            for p in 0..np {
                let mut c: Vec<(usize, f64)> = ix.reserve[i].iter().flat_map(|(_, r, k)| [(r[p], 1.0), (k[p], 1.0)]).collect();
                if !c.is_empty() {
                    b.add_row(f64::NEG_INFINITY, th.ramp_up_mw_h, &c);
                }
                c.push((ix.g[i][p], 1.0));
                let (terms, hi) = headroom_row(&headroom_terms[i][p]);
                c.extend(terms);
                b.add_row(f64::NEG_INFINITY, hi, &c);
            }
        }
        for a in 0..na {
            let mut shorts = Vec::with_capacity(np);
            for p in 0..np {
                let mut pair = [0usize; 2];
                for (k, slot) in pair.iter_mut().enumerate() {
                    let sh = b.add_var(opts.reserve_shortfall_cost * dur[p], 0.0, f64::INFINITY);
                    let mut c = vec![(sh, 1.0)];
                    for list in &ix.reserve {
                        for (aa, reg, con) in list {
                            if *aa == a {
                                c.push((if k == 0 { reg[p] } else { con[p] }, 1.0));
                            }
                        }
                    }
                    b.add_row(req[a][p][k], f64::INFINITY, &c);
                    *slot = sh;
                }
                shorts.push(pair);
            }
            ix.reserve_short.push(shorts);
        }
    } else {
        for i in 0..model.thermal.len() {
            for p in 0..np {
                if is_committed(model, i) {
                    let mut c = vec![(ix.g[i][p], 1.0)];
                    let (terms, hi) = headroom_row(&headroom_terms[i][p]);
                    c.extend(terms);
                    b.add_row(f64::NEG_INFINITY, hi, &c);
                }
            }
        }
    }

    // Hydro cascade.
    let c = HM3_PER_M3S_HOUR;
    let over_cost = overflow_penalty(model);
    let short_cost = storage_penalty(model);
    let target_cost = opts.target_penalty_factor * model.max_thermal_cost().max(1.0);
    for h in model.hydro.iter() {
        ix.q.push((0..np).map(|_| b.add_var(0.0, 0.0, h.max_turbining_m3s)).collect());
        ix.s.push((0..np).map(|_| b.add_var(0.0, h.min_spill_m3s, h.max_spill_m3s)).collect());
        ix.hgen.push((0..np).map(|_| b.add_var(0.0, 0.0, h.max_generation())).collect());
    }
    for (i, h) in model.hydro.iter().enumerate() {
        for p in 0..np {
            for (a, slope) in h.production_segments() {
                b.add_row(f64::NEG_INFINITY, a, &[(ix.hgen[i][p], 1.0), (ix.q[i][p], -slope)]);
            }
        }
        if h.is_reservoir() {
            let cap = h.storage_cap(woy);
            let v: Vec<usize> = (0..np).map(|_| b.add_var(0.0, 0.0, cap)).collect();
            let mut rows = Vec::with_capacity(np);
            for p in 0..np {
                let d = dur[p] * c;
                let over = b.add_var(over_cost, 0.0, f64::INFINITY);
                let short = b.add_var(short_cost, 0.0, f64::INFINITY);
                let mut co = vec![(v[p], 1.0), (ix.q[i][p], d), (ix.s[i][p], d), (over, 1.0)];
                for &up in &topo.upstream[i] {
                    co.push((ix.q[up][p], -d));
                    co.push((ix.s[up][p], -d));
                }
                let rhs = d * inflow[i][p]
                    + if p == 0 {
                        spec.state.storage_hm3[i]
                    } else {
                        co.push((v[p - 1], -1.0));
                        0.0
                    };
                rows.push(b.add_row(rhs, rhs, &co));
                b.add_row(h.min_storage_hm3, f64::INFINITY, &[(v[p], 1.0), (short, 1.0)]);
            }
            ix.v.push(Some(v));
            ix.water_rows.push(Some(rows));
        } else {
            let mut rows = Vec::with_capacity(np);
            for p in 0..np {
                let over = b.add_var(over_cost * dur[p] * c, 0.0, f64::INFINITY);
                let mut co = vec![(ix.q[i][p], 1.0), (ix.s[i][p], 1.0), (over, 1.0)];
                for &up in &topo.upstream[i] {
                    co.push((ix.q[up][p], -1.0));
                    co.push((ix.s[up][p], -1.0));
                }
                rows.push(b.add_row(inflow[i][p], inflow[i][p], &co));
            }
            ix.v.push(None);
            ix.water_rows.push(Some(rows));
        }
    }

    // End-of-horizon storage value.
    let last = np - 1;
    match &spec.end {
        EndValue::Cuts(cuts) if !cuts.is_empty() => {
            let floor = cuts.iter().map(|k| k.intercept.min(0.0)).fold(0.0, f64::min) - 1e9;
            let alpha = b.add_var(1.0, floor, f64::INFINITY);
            for cut in cuts {
                // alpha - sum g_k v_k >= intercept
                let mut co = vec![(alpha, 1.0)];
                for (k, &r) in topo.reservoirs.iter().enumerate() {
                    if let Some(v) = &ix.v[r] {
                        co.push((v[last], -cut.gradient[k]));
                    }
                }
                b.add_row(cut.intercept, f64::INFINITY, &co);
            }
            ix.alpha = Some(alpha);
        }
        EndValue::WaterValue { lambda, target } => {
            for i in 0..model.hydro.len() {
                let Some(v) = &ix.v[i] else { continue };
                b.set_cost(v[last], -lambda[i]);
                if let Some(Some(t)) = target.as_ref().map(|t| t[i]) {
                    let above = b.add_var(target_cost, 0.0, f64::INFINITY);
                    let below = b.add_var(target_cost, 0.0, f64::INFINITY);
                    b.add_row(t, t, &[(v[last], 1.0), (above, -1.0), (below, 1.0)]);
                }
            }
        }
        _ => {}
    }

    // Fuel contracts: daily nominations, or today's remaining nomination.
    let first_day = spec.start_hour / HOURS_PER_DAY;
    let mut days: Vec<usize> = (0..np).map(|p| abs(p) / HOURS_PER_DAY).collect();
    days.dedup();
    for (ci, contract) in model.fuel_contracts.iter().enumerate() {
        for &day in &days {
            let mut co = Vec::new();
            for (ti, tc) in topo.thermal_contract.iter().enumerate() {
                if let Some((cj, hr)) = tc {
                    if *cj == ci {
                        for p in 0..np {
                            if abs(p) / HOURS_PER_DAY == day {
                                co.push((ix.g[ti][p], hr * dur[p]));
                            }
                        }
                    }
                }
            }
            if spec.gas_remaining_today && day == first_day {
                let over = b.add_var(opts.gas_overdraw_factor * contract.price_per_mmbtu.max(1.0), 0.0, f64::INFINITY);
                co.push((over, -1.0));
                b.add_row(f64::NEG_INFINITY, spec.state.gas_remaining_mmbtu[ci].max(0.0), &co);
            } else {
                let nom = b.add_var(
                    contract.price_per_mmbtu,
                    contract.take_or_pay_min_mmbtu,
                    contract.daily_nomination_max_mmbtu,
                );
                co.push((nom, -1.0));
                b.add_row(f64::NEG_INFINITY, 0.0, &co);
                ix.nominations.push((ci, day, nom));
            }
        }
    }

    // Network.
    let nbus = model.network.buses.len();
    let mut inj: Vec<Vec<Vec<(usize, f64)>>> = vec![vec![Vec::new(); np]; nbus];
    for (i, th) in model.thermal.iter().enumerate() {
        let k = topo.bus_index[&th.bus];
        for p in 0..np {
            inj[k][p].push((ix.g[i][p], 1.0));
        }
    }
    for (i, h) in model.hydro.iter().enumerate() {
        let k = topo.bus_index[&h.bus];
        for p in 0..np {
            inj[k][p].push((ix.hgen[i][p], 1.0));
        }
    }
    let mut vre_rhs = vec![vec![0.0; np]; nbus];
    for (i, u) in model.vre.iter().enumerate() {
        let k = topo.bus_index[&u.bus];
        let mut cols = Vec::with_capacity(np);
        for p in 0..np {
            let cv = b.add_var(model.curtailment_cost * dur[p], 0.0, vre_avail[i][p]);
            inj[k][p].push((cv, -1.0));
            vre_rhs[k][p] += vre_avail[i][p];
            cols.push(cv);
        }
        ix.curtail.push(cols);
    }
    let dc_islands: Vec<usize> = model
        .network
        .circuits
        .iter()
        .filter(|c| c.susceptance.is_some())
        .map(|c| topo.bus_island[topo.bus_index[&c.from]])
        .collect();
    let theta: Vec<Option<Vec<usize>>> = (0..nbus)
        .map(|k| {
            let isl = topo.bus_island[k];
            if !dc_islands.contains(&isl) {
                return None;
            }
            let reference = (0..nbus).find(|&j| topo.bus_island[j] == isl) == Some(k);
            Some(
                (0..np)
                    .map(|_| {
                        if reference {
                            b.add_var(0.0, 0.0, 0.0)
                        } else {
                            b.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY)
                        }
                    })
                    .collect(),
            )
        })
        .collect();
    for circ in &model.network.circuits {
        let (f, t) = (topo.bus_index[&circ.from], topo.bus_index[&circ.to]);
        let mut cols = Vec::with_capacity(np);
        for p in 0..np {
            let x = b.add_var(0.0, -circ.capacity_mw, circ.capacity_mw);
            inj[f][p].push((x, -1.0));
            inj[t][p].push((x, 1.0));
            if let (Some(bsus), Some(tf), Some(tt)) = (circ.susceptance, &theta[f], &theta[t]) {
                b.add_row(0.0, 0.0, &[(x, 1.0), (tf[p], -bsus), (tt[p], bsus)]);
            }
            cols.push(x);
        }
        ix.flow.push(cols);
    }
    for m in &model.network.markets {
        let k = topo.bus_index[&m.bus];
        let mut buys = Vec::with_capacity(np);
        let mut sells = Vec::with_capacity(np);
        for p in 0..np {
            let bv: Vec<usize> = m.buy.iter().map(|s| b.add_var(s.price * dur[p], 0.0, s.quantity_mw)).collect();
            let sv: Vec<usize> = m.sell.iter().map(|s| b.add_var(-s.price * dur[p], 0.0, s.quantity_mw)).collect();
            for &x in &bv {
                inj[k][p].push((x, 1.0));
            }
            for &x in &sv {
                inj[k][p].push((x, -1.0));
            }
            buys.push(bv);
            sells.push(sv);
        }
        ix.buy.push(buys);
        ix.sell.push(sells);
    }
    for (k, bus) in model.network.buses.iter().enumerate() {
        let mut defs = Vec::with_capacity(np);
        let mut els = Vec::with_capacity(np);
        let mut rows = Vec::with_capacity(np);
        for p in 0..np {
            let dv: Vec<usize> = model
                .deficit
                .iter()
                .map(|st| b.add_var(st.cost * dur[p], 0.0, st.depth * bus_load[k][p]))
                .collect();
            let ev: Vec<usize> = bus
                .elastic_segments
                .iter()
                .map(|s| b.add_var(-s.price * dur[p], 0.0, s.quantity_mw))
                .collect();
            let mut co = inj[k][p].clone();
            co.extend(dv.iter().map(|&x| (x, 1.0)));
            co.extend(ev.iter().map(|&x| (x, -1.0)));
            let rhs = bus_load[k][p] - vre_rhs[k][p];
            rows.push(b.add_row(rhs, rhs, &co));
            defs.push(dv);
            els.push(ev);
        }
        ix.deficit.push(defs);
        ix.elastic.push(els);
        ix.bus_rows.push(rows);
    }

    Ok(ScheduleProblem {
        layer: spec.layer,
        start_hour: spec.start_hour,
        periods: spec.periods.clone(),
        lp: b.build(),
        index: ix,
        bus_load,
        vre_avail,
        inflow,
    })
}

/// Splits headroom terms into LP coefficients and a right-hand side.
fn headroom_row(terms: &[(usize, f64)]) -> (Vec<(usize, f64)>, f64) {
    let mut co = Vec::new();
    let mut hi = 0.0;
    for &(col, v) in terms {
        if col == usize::MAX {
            hi += v;
        } else {
            co.push((col, v));
        }
    }
    (co, hi)
}

/// Solves a built problem. Integer problems are re-solved as LPs with the
/// integer columns fixed at the incumbent to recover water values.
pub fn solve(model: &SystemModel, problem: &ScheduleProblem, opts: &ScheduleOptions) -> Result<ScheduleResult, ScheduleError> {
    let t0 = Instant::now();
    let sopts = SolverOptions {
        mip_rel_gap: opts.mip_rel_gap,
        node_limit: opts.node_limit,
        ..SolverOptions::default()
    };
    let err = |source| ScheduleError::Solver {
        layer: problem.layer,
        hour: problem.start_hour,
        source,
    };
    let lp = &problem.lp;
    let (values, objective, nodes, duals) = if lp.has_integers() {
        let mip = match solve_mip_with(lp, &sopts) {
            Ok(m) => m,
            Err(SolverError::NodeLimitExceeded { incumbent: Some(inc), .. }) => {
                log::warn!("{:?} at hour {}: node limit reached, using incumbent", problem.layer, problem.start_hour);
                *inc
            }
            Err(e) => return Err(err(e)),
        };
        if mip.status != LpStatus::Optimal {
            return Err(ScheduleError::NotOptimal {
                layer: problem.layer,
                hour: problem.start_hour,
                status: mip.status,
            });
        }
        let duals = if problem.layer == Layer::WeekAhead {
            let mut s = SimplexSolver::new(lp, sopts.clone()).map_err(err)?;
            for j in 0..lp.num_vars() {
                if lp.integrality[j] {
                    let v = mip.incumbent_values[j].round();
                    s.set_var_bounds(j, v, v);
                }
            }
            let sol = s.solve().map_err(err)?;
            if sol.is_optimal() { Some(sol.dual_values) } else { None }
        } else {
            None
        };
        (mip.incumbent_values, mip.objective_value, mip.nodes, duals)
    } else {
        let mut s = SimplexSolver::new(lp, sopts.clone()).map_err(err)?;
        let sol = s.solve().map_err(err)?;
        if !sol.is_optimal() {
            return Err(ScheduleError::NotOptimal {
                layer: problem.layer,
                hour: problem.start_hour,
                status: sol.status,
            });
        }
        (sol.primal_values, sol.objective_value, 0, Some(sol.dual_values))
    };
    let mut res = extract(model, problem, &values, objective, duals.as_deref());
    res.nodes = nodes;
    res.solve_seconds = t0.elapsed().as_secs_f64();
    Ok(res)
}

fn extract(model: &SystemModel, pr: &ScheduleProblem, x: &[f64], objective: f64, duals: Option<&[f64]>) -> ScheduleResult {
    let ix = &pr.index;
    let np = pr.num_periods();
    let col = |c: &Vec<usize>| -> Vec<f64> { c.iter().map(|&j| x[j]).collect() };
    let sum = |c: &Vec<Vec<usize>>| -> Vec<f64> { c.iter().map(|v| v.iter().map(|&j| x[j]).sum()).collect() };
    let thermal_gen: Vec<Vec<f64>> = ix.g.iter().map(col).collect();
    let commitment = (0..model.thermal.len())
        .map(|i| match &ix.u[i] {
            Some(u) => u.iter().map(|&j| x[j] > 0.5).collect(),
            None => vec![true; np],
        })
        .collect();
    let startups = (0..model.thermal.len())
        .map(|i| match &ix.y[i] {
            Some(y) => col(y),
            None => vec![0.0; np],
        })
        .collect();
    let mut reserves = vec![vec![[0.0; 2]; np]; model.areas.len()];
    for list in &ix.reserve {
        for (a, reg, con) in list {
            for p in 0..np {
                reserves[*a][p][0] += x[reg[p]];
                reserves[*a][p][1] += x[con[p]];
            }
        }
    }
    let storage = ix
        .v
        .iter()
        .map(|v| v.as_ref().map_or(vec![0.0; np], col))
        .collect();
    let water_values = model
        .hydro
        .iter()
        .enumerate()
        .map(|(i, h)| match (duals, &ix.water_rows[i]) {
            (Some(d), Some(rows)) if h.is_reservoir() => rows.iter().map(|&r| (-d[r]).max(0.0)).collect(),
            _ => vec![0.0; np],
        })
        .collect();
    ScheduleResult {
        layer: pr.layer,
        start_hour: pr.start_hour,
        periods: pr.periods.clone(),
        objective: objective + pr.lp.objective_offset,
        thermal_gen,
        commitment,
        startups,
        reserves,
        hydro_gen: ix.hgen.iter().map(col).collect(),
        turbined: ix.q.iter().map(col).collect(),
        spill: ix.s.iter().map(col).collect(),
        storage,
        water_values,
        flows: ix.flow.iter().map(col).collect(),
        deficit: ix.deficit.iter().map(sum).collect(),
        elastic_served: ix.elastic.iter().map(sum).collect(),
        load: pr.bus_load.clone(),
        vre_available: pr.vre_avail.clone(),
        curtailment: ix.curtail.iter().map(col).collect(),
        market_buy: ix.buy.iter().map(sum).collect(),
        market_sell: ix.sell.iter().map(sum).collect(),
        nominations: ix.nominations.iter().map(|&(c, d, j)| (c, d, x[j])).collect(),
        inflow: pr.inflow.clone(),
        nodes: 0,
        integer_vars: ix.integer_count,
        num_vars: pr.lp.num_vars(),
        num_rows: pr.lp.num_rows(),
        solve_seconds: 0.0,
    }
}

impl ScheduleResult {
    pub fn num_periods(&self) -> usize {
        self.periods.len()
    }

    /// Period containing hour offset `h` from the start.
    pub fn period_of(&self, h: usize) -> Option<usize> {
        self.periods.iter().position(|&(o, d)| h >= o && h < o + d)
    }

    /// Net injection balance residual per bus per period (MW).
    pub fn bus_residuals(&self, model: &SystemModel) -> Vec<Vec<f64>> {
        let topo = Topology::new(model);
        let np = self.num_periods();
        let mut r: Vec<Vec<f64>> = self.load.iter().map(|l| l.iter().map(|v| -v).collect()).collect();
        for (i, th) in model.thermal.iter().enumerate() {
            let k = topo.bus_index[&th.bus];
            for p in 0..np {
                r[k][p] += self.thermal_gen[i][p];
            }
        }
        for (i, h) in model.hydro.iter().enumerate() {
            let k = topo.bus_index[&h.bus];
            for p in 0..np {
                r[k][p] += self.hydro_gen[i][p];
            }
        }
        for (i, u) in model.vre.iter().enumerate() {
            let k = topo.bus_index[&u.bus];
            for p in 0..np {
                r[k][p] += self.vre_available[i][p] - self.curtailment[i][p];
            }
        }
        for (c, circ) in model.network.circuits.iter().enumerate() {
            let (f, t) = (topo.bus_index[&circ.from], topo.bus_index[&circ.to]);
            for p in 0..np {
                r[f][p] -= self.flows[c][p];
                r[t][p] += self.flows[c][p];
            }
        }
        for (m, mk) in model.network.markets.iter().enumerate() {
            let k = topo.bus_index[&mk.bus];
            for p in 0..np {
                r[k][p] += self.market_buy[m][p] - self.market_sell[m][p];
            }
        }
        for k in 0..r.len() {
            for p in 0..np {
                r[k][p] += self.deficit[k][p] - self.elastic_served[k][p];
            }
        }
        r
    }
}

/// Hourly periods.
pub fn hourly_periods(hours: usize) -> Vec<(usize, usize)> {
    (0..hours).map(|h| (h, 1)).collect()
}

/// Hours covered by the week-ahead problem starting at `start`: up to the
/// next week start (the year's last week absorbs its extra day).
pub fn week_span(start: usize) -> usize {
    let mut h = start + 1;
    while !is_week_start(h) {
        h += 1;
    }
    h - start
}

/// Block periods for the week-ahead problem starting at `start`.
pub fn block_periods(blocks: &BlockScheme, start: usize) -> Vec<(usize, usize)> {
    let days = week_span(start) / HOURS_PER_DAY;
    let mut out = Vec::new();
    for d in 0..days {
        let mut off = d * HOURS_PER_DAY;
        for &len in &blocks.hours {
            out.push((off, len));
            off += len;
        }
    }
    out
}

fn model_reserves(model: &SystemModel, np: usize) -> Vec<Vec<[f64; 2]>> {
    model
        .areas
        .iter()
        .map(|a| vec![[a.regulation_mw, a.contingency_mw]; np])
        .collect()
}

/// Week-ahead: block periods, integer slow units, future-cost cuts.
pub fn week_ahead_spec<'a>(
    model: &SystemModel,
    start: usize,
    inputs: &'a HourlyInputs,
    state: &'a SystemState,
    cuts: Vec<Cut>,
    opts: &ScheduleOptions,
) -> StageSpec<'a> {
    let periods = block_periods(&opts.blocks, start);
    let commit = model
        .thermal
        .iter()
        .map(|t| {
            let integer = t.commitment_class == Some(CommitmentClass::Slow);
            vec![Commit::Free { integer }; periods.len()]
        })
        .collect();
    StageSpec {
        layer: Layer::WeekAhead,
        start_hour: start,
        periods,
        inputs,
        state,
        commit,
        reserves: None,
        hard_first_ramp: false,
        gas_remaining_today: false,
        end: EndValue::Cuts(cuts),
    }
}

/// Commitment of units fixed by an upper layer over hours
/// `start..start+hours`, repaired against the current state. Returns
/// `None` for units whose plan does not cover the first hour.
fn fixed_sequence(
    model: &SystemModel,
    fix: &Fixings,
    state: &SystemState,
    i: usize,
    start: usize,
    hours: usize,
) -> Option<Vec<Option<bool>>> {
    let plan = &fix.commitment[i];
    let first = *plan.get(start)?;
    first?;
    let desired: Vec<Option<bool>> = (start..start + hours).map(|h| plan.get(h).copied().flatten().map(|(v, _)| v)).collect();
    let covered = desired.iter().take_while(|d| d.is_some()).count();
    let want: Vec<bool> = desired[..covered].iter().map(|d| d.unwrap()).collect();
    let mut out: Vec<Option<bool>> = repair_commitment(&model.thermal[i], &state.units[i], &want)
        .into_iter()
        .map(Some)
        .collect();
    out.resize(hours, None);
    Some(out)
}

/// Day-ahead: 24 hours, slow units fixed from the week-ahead plan,
/// integer intermediate units, reserves, daily storage targets.
pub fn day_ahead_spec<'a>(
    model: &SystemModel,
    start: usize,
    inputs: &'a HourlyInputs,
    state: &'a SystemState,
    fix: &Fixings,
) -> StageSpec<'a> {
    let periods = hourly_periods(HOURS_PER_DAY);
    let commit = (0..model.thermal.len())
        .map(|i| match model.thermal[i].commitment_class {
            Some(CommitmentClass::Slow) => match fixed_sequence(model, fix, state, i, start, HOURS_PER_DAY) {
                Some(seq) => seq
                    .into_iter()
                    .map(|v| v.map_or(Commit::Free { integer: true }, Commit::Fixed))
                    .collect(),
                None => vec![Commit::Free { integer: true }; HOURS_PER_DAY],
            },
            Some(CommitmentClass::Intermediate) => vec![Commit::Free { integer: true }; HOURS_PER_DAY],
            _ => vec![Commit::Free { integer: false }; HOURS_PER_DAY],
        })
        .collect();
    let end_hour = (start + HOURS_PER_DAY - 1).min(fix.hours().saturating_sub(1));
    let day = start / HOURS_PER_DAY;
    let lambda = fix.water_value.iter().map(|w| w.get(end_hour).copied().unwrap_or(0.0)).collect();
    let target = fix.storage_target.iter().map(|t| t.get(day).copied().flatten()).collect();
    StageSpec {
        layer: Layer::DayAhead,
        start_hour: start,
        periods,
        inputs,
        state,
        commit,
        reserves: Some(model_reserves(model, HOURS_PER_DAY)),
        hard_first_ramp: false,
        gas_remaining_today: false,
        end: EndValue::WaterValue {
            lambda,
            target: Some(target),
        },
    }
}

/// Hour-ahead: 24 hours, slow and intermediate units fixed where planned,
/// fast units integer over the first `integer_hours`, hard first-hour ramps.
pub fn hour_ahead_spec<'a>(
    model: &SystemModel,
    start: usize,
    inputs: &'a HourlyInputs,
    state: &'a SystemState,
    fix: &Fixings,
    opts: &ScheduleOptions,
) -> StageSpec<'a> {
    let n = HOURS_PER_DAY;
    let periods = hourly_periods(n);
    let commit = (0..model.thermal.len())
        .map(|i| match model.thermal[i].commitment_class {
            Some(CommitmentClass::Fast) | None => {
                (0..n).map(|h| Commit::Free { integer: h < opts.integer_hours }).collect()
            }
            Some(_) => match fixed_sequence(model, fix, state, i, start, n) {
                Some(seq) => seq
                    .into_iter()
                    .map(|v| v.map_or(Commit::Free { integer: false }, Commit::Fixed))
                    .collect(),
                None => (0..n).map(|h| Commit::Free { integer: h < opts.integer_hours }).collect(),
            },
        })
        .collect();
    let reserves = model
        .areas
        .iter()
        .enumerate()
        .map(|(a, area)| {
            (0..n)
                .map(|h| {
                    fix.reserves
                        .get(a)
                        .and_then(|r| r.get(start + h))
                        .copied()
                        .flatten()
                        .unwrap_or([area.regulation_mw, area.contingency_mw])
                })
                .collect()
        })
        .collect();
    let end_hour = (start + n - 1).min(fix.hours().saturating_sub(1));
    let lambda = fix.water_value.iter().map(|w| w.get(end_hour).copied().unwrap_or(0.0)).collect();
    StageSpec {
        layer: Layer::HourAhead,
        start_hour: start,
        periods,
        inputs,
        state,
        commit,
        reserves: Some(reserves),
        hard_first_ramp: true,
        gas_remaining_today: true,
        end: EndValue::WaterValue { lambda, target: None },
    }
}

/// Records the decisions a layer fixes for the layers below it.
pub fn extract_and_fix(model: &SystemModel, res: &ScheduleResult, fix: &mut Fixings) {
    let hours = fix.hours();
    let class_fixed = |c: Option<CommitmentClass>| match res.layer {
        Layer::WeekAhead => c == Some(CommitmentClass::Slow),
        Layer::DayAhead => matches!(c, Some(CommitmentClass::Slow) | Some(CommitmentClass::Intermediate)),
        Layer::HourAhead => c.is_some(),
        _ => false,
    };
    for (p, &(off, len)) in res.periods.iter().enumerate() {
        let span = if res.layer == Layer::HourAhead { 0..1.min(len) } else { 0..len };
        for dh in span {
            let h = res.start_hour + off + dh;
            if h >= hours {
                continue;
            }
            for (i, th) in model.thermal.iter().enumerate() {
                if class_fixed(th.commitment_class) {
                    fix.commitment[i][h] = Some((res.commitment[i][p], res.layer));
                }
            }
            match res.layer {
                Layer::WeekAhead => {
                    for (i, wv) in res.water_values.iter().enumerate() {
                        fix.water_value[i][h] = wv[p];
                    }
                }
                Layer::DayAhead => {
                    for (a, r) in res.reserves.iter().enumerate() {
                        fix.reserves[a][h] = Some(r[p]);
                    }
                }
                Layer::HourAhead => {
                    for (m, (bv, sv)) in res.market_buy.iter().zip(&res.market_sell).enumerate() {
                        fix.market[m][h] = Some(bv[p] - sv[p]);
                    }
                }
                _ => {}
            }
        }
        if p == 0 && res.layer == Layer::HourAhead {
            break;
        }
    }
    if res.layer == Layer::WeekAhead {
        // End-of-day storage targets from the last block of each day.
        for (p, &(off, len)) in res.periods.iter().enumerate() {
            if (off + len) % HOURS_PER_DAY == 0 {
                let day = (res.start_hour + off + len) / HOURS_PER_DAY - 1;
                for (i, h) in model.hydro.iter().enumerate() {
                    if h.is_reservoir() && day < fix.storage_target[i].len() {
                        fix.storage_target[i][day] = Some(res.storage[i][p]);
                    }
                }
            }
        }
    }
    if res.layer == Layer::DayAhead {
        for &(c, day, v) in &res.nominations {
            if day < fix.nomination[c].len() {
                fix.nomination[c][day] = Some(v);
            }
        }
    }
}

/// Builds and solves one layer's problem at `start`.
#[allow(clippy::too_many_arguments)]
pub fn run_layer(
    model: &SystemModel,
    layer: Layer,
    start: usize,
    inputs: &HourlyInputs,
    state: &SystemState,
    fix: &Fixings,
    cuts: Vec<Cut>,
    opts: &ScheduleOptions,
) -> Result<ScheduleResult, ScheduleError> {
    let spec = match layer {
        Layer::WeekAhead => week_ahead_spec(model, start, inputs, state, cuts, opts),
        Layer::DayAhead => day_ahead_spec(model, start, inputs, state, fix),
        _ => hour_ahead_spec(model, start, inputs, state, fix, opts),
    };
    let problem = build(model, &spec, opts)?;
    solve(model, &problem, opts)
}

/// Builds one layer's problem without solving it.
#[allow(clippy::too_many_arguments)]
pub fn build_layer(
    model: &SystemModel,
    layer: Layer,
    start: usize,
    inputs: &HourlyInputs,
    state: &SystemState,
    fix: &Fixings,
    cuts: Vec<Cut>,
    opts: &ScheduleOptions,
) -> Result<ScheduleProblem, ScheduleError> {
    let spec = match layer {
        Layer::WeekAhead => week_ahead_spec(model, start, inputs, state, cuts, opts),
        Layer::DayAhead => day_ahead_spec(model, start, inputs, state, fix),
        _ => hour_ahead_spec(model, start, inputs, state, fix, opts),
    };
    build(model, &spec, opts)
}
