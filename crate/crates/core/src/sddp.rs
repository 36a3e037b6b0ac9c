//! Mid-term policy: weekly stages with 21 load blocks, solved by SDDP.
//!
//! Each stage is an LP over a copper-plate system: one water-balance row
//! per reservoir for the whole week, per-block flow balances for
//! run-of-river plants, concave production rows, thermal dispatch with
//! daily fuel nominations, deficit steps, elastic demand, market segments,
//! VRE curtailment and a future-cost epigraph variable. Openings at each
//! stage are the weekly slices of every scenario (stagewise independent).
//! The backward pass adds one averaged cut per stage per sampled path.

use std::fmt::Write as _;

use cascadesim_solver::{Basis, LinearProgram, LpBuilder, LpStatus, RowSpec, SimplexSolver, SolverOptions};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calendar::{study_week_start, BlockScheme, HOURS_PER_DAY};
use crate::scenario::{scenario_rng, ScenarioSet, Variable, HOURS_PER_WEEK};
use crate::system::{SystemModel, Topology, HM3_PER_M3S_HOUR};

/// Penalty per hm³ of storage below its minimum.
pub(crate) fn storage_penalty(model: &SystemModel) -> f64 {
    100.0 * model.top_deficit_cost()
}

/// Penalty per hm³ of water released beyond spill limits.
pub(crate) fn overflow_penalty(model: &SystemModel) -> f64 {
    model.top_deficit_cost()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub week: usize,
    pub iteration: usize,
    pub intercept: f64,
    pub gradient: Vec<f64>,
}

impl Cut {
    pub fn value(&self, storages: &[f64]) -> f64 {
        self.intercept + self.gradient.iter().zip(storages).map(|(g, v)| g * v).sum::<f64>()
    }
}

/// Per-week cut sets. `cuts[t]` bounds the expected cost from the end of
/// week `t` onward as a function of the end-of-week reservoir storages.
#[derive(Debug, Clone, PartialEq)]
pub struct FutureCostFunction {
    pub reservoirs: Vec<String>,
    pub cuts: Vec<Vec<Cut>>,
}

impl FutureCostFunction {
    pub fn empty(reservoirs: Vec<String>, weeks: usize) -> Self {
        FutureCostFunction {
            reservoirs,
            cuts: vec![Vec::new(); weeks],
        }
    }

    pub fn num_weeks(&self) -> usize {
        self.cuts.len()
    }

    pub fn num_cuts(&self) -> usize {
        self.cuts.iter().map(|c| c.len()).sum()
    }

    pub fn week_cuts(&self, t: usize) -> &[Cut] {
        self.cuts.get(t).map_or(&[], |c| c.as_slice())
    }

    /// Text format: a header line, a `reservoirs` line, then one line per
    /// cut: `cut <week> <iteration> <intercept> <gradient...>`.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# cascadesim future cost function v1\n");
        s.push_str("reservoirs");
        for r in &self.reservoirs {
            s.push(' ');
            s.push_str(r);
        }
        s.push('\n');
        writeln!(s, "weeks {}", self.cuts.len()).unwrap();
        for cuts in &self.cuts {
            for c in cuts {
                write!(s, "cut {} {} {}", c.week, c.iteration, c.intercept).unwrap();
                for g in &c.gradient {
                    write!(s, " {g}").unwrap();
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut reservoirs = None;
        let mut cuts: Vec<Vec<Cut>> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut f = line.split_whitespace();
            let bad = |m: &str| format!("line {}: {m}", n + 1);
            match f.next() {
                Some("reservoirs") => reservoirs = Some(f.map(str::to_string).collect::<Vec<_>>()),
                Some("weeks") => {
                    let w: usize = f.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad week count"))?;
                    cuts.resize(w, Vec::new());
                }
                Some("cut") => {
                    let nums: Vec<&str> = f.collect();
                    let r = reservoirs.as_ref().ok_or_else(|| bad("cut before reservoirs line"))?;
                    if nums.len() != 3 + r.len() {
                        return Err(bad("wrong number of fields"));
                    }
                    let week: usize = nums[0].parse().map_err(|_| bad("bad week"))?;
                    let iteration: usize = nums[1].parse().map_err(|_| bad("bad iteration"))?;
                    let vals: Result<Vec<f64>, _> = nums[2..].iter().map(|v| v.parse::<f64>()).collect();
                    let vals = vals.map_err(|_| bad("bad number"))?;
                    if week >= cuts.len() {
                        cuts.resize(week + 1, Vec::new());
                    }
                    cuts[week].push(Cut {
                        week,
                        iteration,
                        intercept: vals[0],
                        gradient: vals[1..].to_vec(),
                    });
                }
                _ => return Err(bad("unknown record")),
            }
        }
        Ok(FutureCostFunction {
            reservoirs: reservoirs.ok_or("missing reservoirs line")?,
            cuts,
        })
    }
}

/// Expected cost-to-go after week `t`: the largest cut value, or 0 when the
/// week has no cuts.
pub fn evaluate_fcf(fcf: &FutureCostFunction, t: usize, storages: &[f64]) -> f64 {
    fcf.week_cuts(t)
        .iter()
        .map(|c| c.value(storages))
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        .unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SddpConfig {
    pub max_iterations: usize,
    /// Forward paths per iteration; `None` uses min(S, 20).
    pub forward_paths: Option<usize>,
    /// Stop when the lower bound improved by less than this relative amount
    /// over `stall_iterations` iterations.
    pub rel_tol: f64,
    pub stall_iterations: usize,
    /// Also stop when the lower bound lies inside the 95% confidence band
    /// of the forward cost.
    pub confidence_stop: bool,
    /// End-of-horizon storage targets (fraction of max storage) and the
    /// penalty per hm³ short of them.
    pub terminal_target_fraction: Option<f64>,
    pub terminal_penalty: f64,
    pub max_cuts_per_week: usize,
    pub blocks: BlockScheme,
}

impl Default for SddpConfig {
    fn default() -> Self {
        SddpConfig {
            max_iterations: 50,
            forward_paths: None,
            rel_tol: 1e-4,
            stall_iterations: 5,
            confidence_stop: true,
            terminal_target_fraction: None,
            terminal_penalty: 0.0,
            max_cuts_per_week: 5000,
            blocks: BlockScheme::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub lower_bound: f64,
    pub forward_mean: f64,
    pub forward_std: f64,
    pub cuts_added: usize,
    pub total_cuts: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SddpLog {
    pub iterations: Vec<IterationLog>,
    pub stop_reason: String,
}

impl SddpLog {
    pub fn lower_bound(&self) -> f64 {
        self.iterations.last().map_or(f64::NAN, |i| i.lower_bound)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SddpError {
    #[error("week {week}, iteration {iteration}, opening {opening}: {message}")]
    SolverFailure {
        week: usize,
        iteration: usize,
        opening: usize,
        message: String,
    },
    #[error("scenario set covers {have} hours, {need} needed for {weeks} weeks")]
    ShortHorizon { have: usize, need: usize, weeks: usize },
    #[error("missing scenario series {0}")]
    MissingSeries(String),
}

/// Opening-dependent data of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct OpeningData {
    /// Inelastic load (MW, block average) per block.
    pub load: Vec<f64>,
    /// Available VRE (MW, block average) per block.
    pub vre: Vec<f64>,
    /// Natural incremental inflow (m³/s, block average) per hydro plant and block.
    pub inflow: Vec<Vec<f64>>,
}

/// Block-average system data for week `t` of scenario `s`.
pub fn opening_data(
    model: &SystemModel,
    set: &ScenarioSet,
    blocks: &BlockScheme,
    t: usize,
    s: usize,
) -> Result<OpeningData, SddpError> {
    let start = study_week_start(t);
    let nb = blocks.per_week();
    let hourly = |var: Variable, site: &str| -> Result<Vec<f64>, SddpError> {
        let k = set
            .index_of(var, site)
            .ok_or_else(|| SddpError::MissingSeries(format!("{}/{site}", var.name())))?;
        let series = set.series(k, s);
        Ok((0..nb)
            .map(|b| {
                let hrs = blocks.hours_of(b);
                let len = hrs.len() as f64;
                hrs.map(|h| series[start + h]).sum::<f64>() / len
            })
            .collect())
    };
    let mut load = vec![0.0; nb];
    for bus in &model.network.buses {
        if let Some(site) = &bus.load_site {
            for (l, v) in load.iter_mut().zip(hourly(Variable::Load, site)?) {
                *l += v;
            }
        }
    }
    let mut vre = vec![0.0; nb];
    for u in &model.vre {
        let avail: Vec<f64> = match (&u.site, &u.profile_mw) {
            (Some(site), _) if u.is_stochastic() => {
                let var = if u.kind == crate::system::VreKind::Wind { Variable::Wind } else { Variable::Solar };
                let k = set
                    .index_of(var, site)
                    .ok_or_else(|| SddpError::MissingSeries(format!("{}/{site}", var.name())))?;
                let series = set.series(k, s);
                (0..nb)
                    .map(|b| {
                        let hrs = blocks.hours_of(b);
                        let len = hrs.len() as f64;
                        hrs.map(|h| series[start + h].clamp(0.0, u.capacity_mw)).sum::<f64>() / len
                    })
                    .collect()
            }
            (_, Some(profile)) => (0..nb)
                .map(|b| {
                    let hrs = blocks.hours_of(b);
                    let len = hrs.len() as f64;
                    hrs.map(|h| profile[h % HOURS_PER_DAY]).sum::<f64>() / len
                })
                .collect(),
            _ => vec![0.0; nb],
        };
        for (a, v) in vre.iter_mut().zip(avail) {
            *a += v;
        }
    }
    let inflow = model
        .hydro
        .iter()
        .map(|h| hourly(Variable::Inflow, &h.inflow_site))
        .collect::<Result<_, _>>()?;
    Ok(OpeningData { load, vre, inflow })
}

/// Column and row indices of a stage LP.
#[derive(Debug, Clone, PartialEq)]
pub struct StageIndex {
    pub storage_out: Vec<usize>,
    pub water_rows: Vec<usize>,
    /// Flow balance row per (run-of-river plant index into model.hydro, block).
    pub ror_rows: Vec<(usize, usize, usize)>,
    pub balance_rows: Vec<usize>,
    /// Deficit step columns per block.
    pub deficit: Vec<Vec<usize>>,
    pub curtail: Vec<usize>,
    pub turbined: Vec<Vec<usize>>,
    pub spill: Vec<Vec<usize>>,
    pub hydro_gen: Vec<Vec<usize>>,
    pub thermal_gen: Vec<Vec<usize>>,
    pub alpha: Option<usize>,
    pub alpha_floor: f64,
}

/// One weekly stage: the LP plus its index map, with a given opening and
/// incoming storage applied.
#[derive(Debug, Clone)]
pub struct StageProblem {
    pub week: usize,
    pub lp: LinearProgram,
    pub index: StageIndex,
}

impl StageProblem {
    pub fn num_blocks(&self) -> usize {
        self.index.balance_rows.len()
    }
}

struct StageLayout {
    lp: LinearProgram,
    index: StageIndex,
}

fn build_layout(model: &SystemModel, topo: &Topology, cfg: &SddpConfig, t: usize, weeks: usize) -> StageLayout {
    let blocks = &cfg.blocks;
    let nb = blocks.per_week();
    let mut b = LpBuilder::new();
    let c = HM3_PER_M3S_HOUR;
    let week_of_year = t % 52;
    let nh = model.hydro.len();

    let mut storage_out = Vec::new();
    for &r in &topo.reservoirs {
        let h = &model.hydro[r];
        storage_out.push(b.add_var(0.0, 0.0, h.storage_cap(week_of_year)));
    }
    let mut turbined = vec![Vec::with_capacity(nb); nh];
    let mut spill = vec![Vec::with_capacity(nb); nh];
    let mut hydro_gen = vec![Vec::with_capacity(nb); nh];
    let overflow_cost = overflow_penalty(model);
    for (i, h) in model.hydro.iter().enumerate() {
        for blk in 0..nb {
            turbined[i].push(b.add_var(0.0, 0.0, h.max_turbining_m3s));
            spill[i].push(b.add_var(0.0, h.min_spill_m3s, h.max_spill_m3s));
            hydro_gen[i].push(b.add_var(0.0, 0.0, h.max_generation()));
            let _ = blk;
        }
    }
    // Production rows: gen <= a_k + b_k q.
    for (i, h) in model.hydro.iter().enumerate() {
        for blk in 0..nb {
            for (a, slope) in h.production_segments() {
                b.add_row(f64::NEG_INFINITY, a, &[(hydro_gen[i][blk], 1.0), (turbined[i][blk], -slope)]);
            }
        }
    }
    // Release of plant i in block blk enters the downstream plant.
    let mut water_rows = Vec::new();
    let storage_slack_cost = storage_penalty(model);
    for (k, &r) in topo.reservoirs.iter().enumerate() {
        let h = &model.hydro[r];
        let mut coeffs = vec![(storage_out[k], 1.0)];
        for blk in 0..nb {
            let d = blocks.duration(blk) as f64 * c;
            coeffs.push((turbined[r][blk], d));
            coeffs.push((spill[r][blk], d));
            for &u in &topo.upstream[r] {
                coeffs.push((turbined[u][blk], -d));
                coeffs.push((spill[u][blk], -d));
            }
        }
        let over = b.add_var(overflow_cost, 0.0, f64::INFINITY);
        coeffs.push((over, 1.0));
        let short = b.add_var(storage_slack_cost, 0.0, f64::INFINITY);
        let row = b.add_row(0.0, 0.0, &coeffs);
        water_rows.push(row);
        // Soft minimum storage.
        b.add_row(h.min_storage_hm3, f64::INFINITY, &[(storage_out[k], 1.0), (short, 1.0)]);
    }
    let mut ror_rows = Vec::new();
    for (i, h) in model.hydro.iter().enumerate() {
        if h.is_reservoir() {
            continue;
        }
        for blk in 0..nb {
            let over = b.add_var(overflow_cost * blocks.duration(blk) as f64 * c, 0.0, f64::INFINITY);
            let mut coeffs = vec![(turbined[i][blk], 1.0), (spill[i][blk], 1.0), (over, 1.0)];
            for &u in &topo.upstream[i] {
                coeffs.push((turbined[u][blk], -1.0));
                coeffs.push((spill[u][blk], -1.0));
            }
            let row = b.add_row(0.0, 0.0, &coeffs);
            ror_rows.push((i, blk, row));
        }
    }

    let mut thermal_gen = vec![Vec::with_capacity(nb); model.thermal.len()];
    for (i, th) in model.thermal.iter().enumerate() {
        for blk in 0..nb {
            thermal_gen[i].push(b.add_var(th.variable_cost * blocks.duration(blk) as f64, 0.0, th.capacity_mw));
        }
    }
    for (ci, contract) in model.fuel_contracts.iter().enumerate() {
        for day in 0..7 {
            let nom = b.add_var(
                contract.price_per_mmbtu,
                contract.take_or_pay_min_mmbtu,
                contract.daily_nomination_max_mmbtu,
            );
            let mut coeffs = vec![(nom, -1.0)];
            for (ti, tc) in topo.thermal_contract.iter().enumerate() {
                if let Some((cj, hr)) = tc {
                    if *cj == ci {
                        for blk in day * blocks.per_day()..(day + 1) * blocks.per_day() {
                            coeffs.push((thermal_gen[ti][blk], hr * blocks.duration(blk) as f64));
                        }
                    }
                }
            }
            b.add_row(f64::NEG_INFINITY, 0.0, &coeffs);
        }
    }

    let mut balance_rows = Vec::with_capacity(nb);
    let mut deficit = Vec::with_capacity(nb);
    let mut curtail = Vec::with_capacity(nb);
    let mut min_weekly = 0.0;
    for blk in 0..nb {
        let d = blocks.duration(blk) as f64;
        let mut coeffs = Vec::new();
        for i in 0..nh {
            coeffs.push((hydro_gen[i][blk], 1.0));
        }
        for g in &thermal_gen {
            coeffs.push((g[blk], 1.0));
        }
        let mut defs = Vec::new();
        for step in &model.deficit {
            let v = b.add_var(step.cost * d, 0.0, 0.0);
            coeffs.push((v, 1.0));
            defs.push(v);
        }
        deficit.push(defs);
        let cv = b.add_var(model.curtailment_cost * d, 0.0, 0.0);
        coeffs.push((cv, -1.0));
        curtail.push(cv);
        for bus in &model.network.buses {
            for seg in &bus.elastic_segments {
                let v = b.add_var(-seg.price * d, 0.0, seg.quantity_mw);
                coeffs.push((v, -1.0));
                min_weekly -= seg.price.max(0.0) * seg.quantity_mw * d;
            }
        }
        for m in &model.network.markets {
            for seg in &m.buy {
                let v = b.add_var(seg.price * d, 0.0, seg.quantity_mw);
                coeffs.push((v, 1.0));
                min_weekly += seg.price.min(0.0) * seg.quantity_mw * d;
            }
            for seg in &m.sell {
                let v = b.add_var(-seg.price * d, 0.0, seg.quantity_mw);
                coeffs.push((v, -1.0));
                min_weekly -= seg.price.max(0.0) * seg.quantity_mw * d;
            }
        }
        balance_rows.push(b.add_row(0.0, 0.0, &coeffs));
    }

    let remaining = weeks.saturating_sub(t + 1) as f64;
    let alpha_floor = remaining * min_weekly;
    let alpha = if t + 1 < weeks {
        Some(b.add_var(1.0, alpha_floor, f64::INFINITY))
    } else {
        None
    };
    if t + 1 == weeks {
        if let Some(frac) = cfg.terminal_target_fraction {
            if cfg.terminal_penalty > 0.0 {
                for (k, &r) in topo.reservoirs.iter().enumerate() {
                    let target = frac * model.hydro[r].max_storage_hm3;
                    let short = b.add_var(cfg.terminal_penalty, 0.0, f64::INFINITY);
                    b.add_row(target, f64::INFINITY, &[(storage_out[k], 1.0), (short, 1.0)]);
                }
            }
        }
    }
    StageLayout {
        lp: b.build(),
        index: StageIndex {
            storage_out,
            water_rows,
            ror_rows,
            balance_rows,
            deficit,
            curtail,
            turbined,
            spill,
            hydro_gen,
            thermal_gen,
            alpha,
            alpha_floor,
        },
    }
}

fn cut_row(index: &StageIndex, cut: &Cut) -> RowSpec {
    let alpha = index.alpha.expect("cut on a stage with future cost");
    let mut coeffs = vec![(alpha, 1.0)];
    for (k, g) in cut.gradient.iter().enumerate() {
        coeffs.push((index.storage_out[k], -g));
    }
    RowSpec::new(coeffs, cut.intercept, f64::INFINITY)
}

/// Bounds that depend on the opening and the incoming storage.
struct StageInputs<'a> {
    data: &'a OpeningData,
    storage_in: &'a [f64],
}

fn apply_inputs(
    model: &SystemModel,
    topo: &Topology,
    blocks: &BlockScheme,
    index: &StageIndex,
    inputs: &StageInputs,
    mut set_row: impl FnMut(usize, f64, f64),
    mut set_var: impl FnMut(usize, f64, f64),
) {
    let c = HM3_PER_M3S_HOUR;
    for (k, &r) in topo.reservoirs.iter().enumerate() {
        let inflow: f64 = (0..blocks.per_week())
            .map(|b| inputs.data.inflow[r][b] * blocks.duration(b) as f64 * c)
            .sum();
        let rhs = inputs.storage_in[k] + inflow;
        set_row(index.water_rows[k], rhs, rhs);
    }
    for &(i, blk, row) in &index.ror_rows {
        let v = inputs.data.inflow[i][blk];
        set_row(row, v, v);
    }
    for (blk, &row) in index.balance_rows.iter().enumerate() {
        let load = inputs.data.load[blk];
        let vre = inputs.data.vre[blk];
        set_row(row, load - vre, load - vre);
        for (step, &col) in model.deficit.iter().zip(&index.deficit[blk]) {
            set_var(col, 0.0, step.depth * load.max(0.0));
        }
        set_var(index.curtail[blk], 0.0, vre.max(0.0));
    }
}

/// Stage LP for week `t` with the cuts of `fcf` for that week, the given
/// opening's data and incoming storages.
#[allow(clippy::too_many_arguments)]
pub fn build_stage(
    model: &SystemModel,
    set: &ScenarioSet,
    cfg: &SddpConfig,
    t: usize,
    weeks: usize,
    fcf: &FutureCostFunction,
    opening: usize,
    storage_in: &[f64],
) -> Result<StageProblem, SddpError> {
    let topo = Topology::new(model);
    let layout = build_layout(model, &topo, cfg, t, weeks);
    let data = opening_data(model, set, &cfg.blocks, t, opening)?;
    let mut lp = layout.lp;
    let index = layout.index;
    let inputs = StageInputs { data: &data, storage_in };
    let mut row_updates = Vec::new();
    let mut var_updates = Vec::new();
    apply_inputs(
        model,
        &topo,
        &cfg.blocks,
        &index,
        &inputs,
        |r, l, u| row_updates.push((r, l, u)),
        |j, l, u| var_updates.push((j, l, u)),
    );
    for (r, l, u) in row_updates {
        lp.row_lower[r] = l;
        lp.row_upper[r] = u;
    }
    for (j, l, u) in var_updates {
        lp.var_lower[j] = l;
        lp.var_upper[j] = u;
    }
    if index.alpha.is_some() {
        let rows: Vec<RowSpec> = fcf.week_cuts(t).iter().map(|c| cut_row(&index, c)).collect();
        lp.append_rows(&rows).expect("cut rows reference stage columns");
    }
    Ok(StageProblem { week: t, lp, index })
}

/// Result of one stage solve.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub objective: f64,
    /// Objective minus the future-cost term.
    pub immediate_cost: f64,
    pub storage_out: Vec<f64>,
    pub water_duals: Vec<f64>,
    pub basis: Option<Basis>,
}

/// Persistent solver state for one stage.
struct Stage {
    layout_index: StageIndex,
    solver: SimplexSolver,
    basis: Option<Basis>,
    openings: Vec<OpeningData>,
    num_cuts: usize,
}

struct Runner<'a> {
    model: &'a SystemModel,
    topo: Topology,
    cfg: &'a SddpConfig,
    stages: Vec<Stage>,
}

impl Runner<'_> {
    fn solve(&self, t: usize, solver: &mut SimplexSolver, opening: usize, storage_in: &[f64], iteration: usize) -> Result<StageOutcome, SddpError> {
        let stage = &self.stages[t];
        let inputs = StageInputs {
            data: &stage.openings[opening],
            storage_in,
        };
        let index = &stage.layout_index;
        let mut rows = Vec::new();
        let mut vars = Vec::new();
        apply_inputs(
            self.model,
            &self.topo,
            &self.cfg.blocks,
            index,
            &inputs,
            |r, l, u| rows.push((r, l, u)),
            |j, l, u| vars.push((j, l, u)),
        );
        for (r, l, u) in rows {
            solver.set_row_bounds(r, l, u);
        }
        for (j, l, u) in vars {
            solver.set_var_bounds(j, l, u);
        }
        let fail = |message: String| SddpError::SolverFailure {
            week: t,
            iteration,
            opening,
            message,
        };
        let sol = solver.solve().map_err(|e| fail(e.to_string()))?;
        if sol.status != LpStatus::Optimal {
            return Err(fail(format!("stage LP is {:?}", sol.status)));
        }
        let alpha_val = index.alpha.map_or(0.0, |a| sol.primal_values[a]);
        Ok(StageOutcome {
            objective: sol.objective_value,
            immediate_cost: sol.objective_value - alpha_val,
            storage_out: index.storage_out.iter().map(|&j| sol.primal_values[j]).collect(),
            water_duals: index.water_rows.iter().map(|&r| sol.dual_values[r]).collect(),
            basis: sol.basis,
        })
    }

    fn fresh_solver(&self, t: usize) -> SimplexSolver {
        let stage = &self.stages[t];
        let mut s = stage.solver.clone();
        if let Some(b) = &stage.basis {
            s.set_basis(b).expect("basis matches stage dimensions");
        }
        s
    }
}

fn initial_storages(model: &SystemModel, topo: &Topology) -> Vec<f64> {
    topo.reservoirs.iter().map(|&r| model.hydro[r].initial_storage_hm3).collect()
}

/// Runs SDDP over `weeks` stages. Forward paths and per-path backward
/// solves run on up to `workers` threads; the result does not depend on
/// the worker count.
pub fn run_sddp(
    model: &SystemModel,
    set: &ScenarioSet,
    weeks: usize,
    cfg: &SddpConfig,
    seed: u64,
    workers: usize,
) -> Result<(FutureCostFunction, SddpLog), SddpError> {
    let need = study_week_start(weeks.saturating_sub(1)) + HOURS_PER_WEEK;
    if weeks == 0 || set.horizon_hours() < need {
        return Err(SddpError::ShortHorizon {
            have: set.horizon_hours(),
            need,
            weeks,
        });
    }
    let topo = Topology::new(model);
    let opts = SolverOptions::default();
    let s_count = set.num_scenarios();
    let mut stages = Vec::with_capacity(weeks);
    for t in 0..weeks {
        let layout = build_layout(model, &topo, cfg, t, weeks);
        let openings = (0..s_count)
            .map(|s| opening_data(model, set, &cfg.blocks, t, s))
            .collect::<Result<Vec<_>, _>>()?;
        let solver = SimplexSolver::new(&layout.lp, opts.clone()).map_err(|e| SddpError::SolverFailure {
            week: t,
            iteration: 0,
            opening: 0,
            message: e.to_string(),
        })?;
        stages.push(Stage {
            layout_index: layout.index,
            solver,
            basis: None,
            openings,
            num_cuts: 0,
        });
    }
    let mut runner = Runner {
        model,
        topo,
        cfg,
        stages,
    };
    let reservoir_ids: Vec<String> = runner.topo.reservoirs.iter().map(|&r| model.hydro[r].id.clone()).collect();
    let mut fcf = FutureCostFunction::empty(reservoir_ids, weeks);
    let mut log = SddpLog::default();
    let paths = cfg.forward_paths.unwrap_or(s_count.min(20)).max(1);
    let x0 = initial_storages(model, &runner.topo);

    for iteration in 1..=cfg.max_iterations {
        // Forward pass: trial states per path and stage.
        let runner_ref = &runner;
        let x0_ref = &x0;
        let forward: Vec<Result<(Vec<Vec<f64>>, f64), SddpError>> = crate::par::run_pool(workers, paths, |_, k| {
            let mut rng = scenario_rng(seed, ((iteration as u64) << 32) | k as u64);
            let mut x = x0_ref.clone();
            let mut trials = Vec::with_capacity(weeks);
            let mut cost = 0.0;
            for t in 0..weeks {
                let o = rng.random_range(0..s_count);
                let mut solver = runner_ref.fresh_solver(t);
                let out = runner_ref.solve(t, &mut solver, o, &x, iteration)?;
                cost += out.immediate_cost;
                x = out.storage_out;
                trials.push(x.clone());
            }
            Ok((trials, cost))
        })
        .0;
        let mut trials = Vec::with_capacity(paths);
        let mut costs = Vec::with_capacity(paths);
        for f in forward {
            let (tr, c) = f?;
            trials.push(tr);
            costs.push(c);
        }

        // Backward pass.
        let mut added = 0;
        for t in (1..weeks).rev() {
            let runner_ref = &runner;
            let trials_ref = &trials;
            let results: Vec<Result<(Cut, Option<Basis>), SddpError>> = crate::par::run_pool(workers, paths, |_, k| {
                let state = &trials_ref[k][t - 1];
                let mut solver = runner_ref.fresh_solver(t);
                let mut mean_obj = 0.0;
                let mut mean_grad = vec![0.0; state.len()];
                let mut last_basis = None;
                for o in 0..s_count {
                    let out = runner_ref.solve(t, &mut solver, o, state, iteration)?;
                    mean_obj += out.objective / s_count as f64;
                    for (g, d) in mean_grad.iter_mut().zip(&out.water_duals) {
                        *g += d / s_count as f64;
                    }
                    last_basis = out.basis;
                }
                let intercept = mean_obj - mean_grad.iter().zip(state).map(|(g, v)| g * v).sum::<f64>();
                Ok((
                    Cut {
                        week: t - 1,
                        iteration,
                        intercept,
                        gradient: mean_grad,
                    },
                    last_basis,
                ))
            })
            .0;
            let mut new_cuts = Vec::with_capacity(paths);
            let mut basis0 = None;
            for (k, r) in results.into_iter().enumerate() {
                let (cut, basis) = r?;
                if k == 0 {
                    basis0 = basis;
                }
                new_cuts.push(cut);
            }
            runner.stages[t].basis = basis0;
            let prev = &mut runner.stages[t - 1];
            let mut rows = Vec::new();
            for cut in new_cuts {
                if prev.num_cuts >= cfg.max_cuts_per_week {
                    break;
                }
                let duplicate = fcf.cuts[t - 1]
                    .iter()
                    .any(|c| (c.intercept - cut.intercept).abs() <= 1e-9 * c.intercept.abs().max(1.0) && c.gradient == cut.gradient);
                if duplicate {
                    continue;
                }
                rows.push(cut_row(&prev.layout_index, &cut));
                fcf.cuts[t - 1].push(cut);
                prev.num_cuts += 1;
                added += 1;
            }
            prev.solver.add_rows(&rows).map_err(|e| SddpError::SolverFailure {
                week: t - 1,
                iteration,
                opening: 0,
                message: e.to_string(),
            })?;
        }

        // Lower bound: expected first-stage value over all openings.
        let mut solver = runner.fresh_solver(0);
        let mut lb = 0.0;
        let mut basis0 = None;
        for o in 0..s_count {
            let out = runner.solve(0, &mut solver, o, &x0, iteration)?;
            lb += out.objective / s_count as f64;
            if o == 0 {
                basis0 = out.basis;
            }
        }
        runner.stages[0].basis = basis0;

        let n = costs.len() as f64;
        let mean = costs.iter().sum::<f64>() / n;
        let std = if costs.len() > 1 {
            (costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        log.iterations.push(IterationLog {
            iteration,
            lower_bound: lb,
            forward_mean: mean,
            forward_std: std,
            cuts_added: added,
            total_cuts: fcf.num_cuts(),
        });
        log::debug!("sddp iteration {iteration}: lower bound {lb:.6e}, forward mean {mean:.6e}, {added} cuts");

        if weeks == 1 {
            log.stop_reason = "single stage".into();
            break;
        }
        if added == 0 {
            log.stop_reason = "no new cuts".into();
            break;
        }
        let its = &log.iterations;
        if its.len() > cfg.stall_iterations {
            let old = its[its.len() - 1 - cfg.stall_iterations].lower_bound;
            if (lb - old).abs() <= cfg.rel_tol * lb.abs().max(1.0) {
                log.stop_reason = "lower bound stalled".into();
                break;
            }
        }
        if cfg.confidence_stop && paths > 1 && iteration > 1 {
            let half = 1.96 * std / n.sqrt();
            let gap = (mean - lb).abs();
            if gap <= half && gap <= cfg.rel_tol * lb.abs().max(1.0) * 10.0 {
                log.stop_reason = "lower bound inside forward confidence band".into();
                break;
            }
        }
    }
    if log.stop_reason.is_empty() {
        log.stop_reason = "iteration limit".into();
    }
    Ok((fcf, log))
}

/// Solves a standalone stage problem from scratch.
pub fn solve_stage(problem: &StageProblem) -> Result<StageOutcome, SddpError> {
    let fail = |message: String| SddpError::SolverFailure {
        week: problem.week,
        iteration: 0,
        opening: 0,
        message,
    };
    let sol = cascadesim_solver::solve_lp(&problem.lp).map_err(|e| fail(e.to_string()))?;
    if sol.status != LpStatus::Optimal {
        return Err(fail(format!("stage LP is {:?}", sol.status)));
    }
    let alpha_val = problem.index.alpha.map_or(0.0, |a| sol.primal_values[a]);
    Ok(StageOutcome {
        objective: sol.objective_value,
        immediate_cost: sol.objective_value - alpha_val,
        storage_out: problem.index.storage_out.iter().map(|&j| sol.primal_values[j]).collect(),
        water_duals: problem.index.water_rows.iter().map(|&r| sol.dual_values[r]).collect(),
        basis: sol.basis,
    })
}
