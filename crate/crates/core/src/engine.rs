//! Scenario-chain simulation.
//!
//! Every scenario of the set is one chain: at each hour the week-ahead
//! (at week starts), day-ahead (at day starts) and hour-ahead problems
//! run on their layer's forecast, the true-up absorbs the realized
//! deviation, and the realized outcome becomes the next hour's state.
//! Chains share nothing but read-only inputs, so they run on a worker
//! pool and each writes its own store partitions, one per day.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufReader};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::calendar::{is_week_start, study_week, study_week_start, HOURS_PER_DAY};
use crate::forecast::{compute_weights, forecast_series, Dispersion, ForecastProfile};
use crate::records as m;
use crate::scenario::{generate, week_of_year, ParModel, ScenarioError, ScenarioSet, HOURS_PER_WEEK};
use crate::schedule::{build_layer, extract_and_fix, run_layer, week_span, ScheduleError, ScheduleOptions, ScheduleResult};
use crate::sddp::{run_sddp, FutureCostFunction, SddpConfig, SddpError, SddpLog};
use crate::state::{Fixings, HourlyInputs, SeriesMap, SystemState};
use crate::store::{partition_path, PartitionWriter, Record, StoreError, EXTENSION};
use crate::system::{load_system, validate, LoadError, SystemModel, Topology, Violation};
use crate::trueup::{
    self, fuel_burned, realize_hydro, realize_thermal, DeviationScenario, HourOutcome, OutageProcess, TrueUpError,
    TrueUpInput, TrueUpUnit, WINDOW,
};
use crate::{par, Layer};

/// Where the chains' exogenous inputs come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioSource {
    /// A fitted periodic autoregressive model (JSON); scenarios are generated.
    Model(PathBuf),
    /// A stored scenario set (binary, or CSV when the extension is `.csv`).
    Set(PathBuf),
}

fn default_workers() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn default_trueup_scenarios() -> usize {
    10
}

fn default_profile() -> ForecastProfile {
    ForecastProfile {
        week_ahead: Dispersion::Cv(0.10),
        day_ahead: Dispersion::Cv(0.05),
        hour_ahead: Dispersion::Cv(0.02),
        true_up: Dispersion::Cv(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: PathBuf,
    pub scenarios: ScenarioSource,
    /// Chains to simulate (scenarios `0..num_scenarios`); also the number
    /// of scenarios generated from a model.
    pub num_scenarios: usize,
    pub hours: usize,
    /// First simulated hour; must be a day start.
    #[serde(default)]
    pub start_hour: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_profile")]
    pub forecast: ForecastProfile,
    #[serde(default)]
    pub perfect_forecast: bool,
    #[serde(default = "default_true")]
    pub outages: bool,
    #[serde(default)]
    pub sddp: SddpConfig,
    #[serde(default)]
    pub schedule: ScheduleOptions,
    /// Deviation scenarios kept for the true-up's look-ahead hours.
    #[serde(default = "default_trueup_scenarios")]
    pub trueup_scenarios: usize,
    pub output_dir: PathBuf,
    #[serde(default = "default_true")]
    pub checkpoint: bool,
    /// Continue chains from their last checkpoint instead of starting over.
    #[serde(default)]
    pub resume: bool,
    /// Build every problem without solving any.
    #[serde(default)]
    pub dry_run: bool,
}

impl RunConfig {
    /// Reads a JSON config; relative paths are taken from the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let text = fs::read_to_string(path).map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_value(value, path.parent().unwrap_or(Path::new("."))).map_err(|e| match e {
            EngineError::Config(m) => EngineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Config from parsed JSON; relative paths are taken from `base`.
    pub fn from_value(value: serde_json::Value, base: &Path) -> Result<Self, EngineError> {
        let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| EngineError::Config(e.to_string()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.system);
        fix(&mut cfg.output_dir);
        match &mut cfg.scenarios {
            ScenarioSource::Model(p) | ScenarioSource::Set(p) => fix(p),
        }
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Config(m.to_string()));
        if self.hours == 0 {
            return bad("hours must be positive");
        }
        if self.num_scenarios == 0 {
            return bad("num_scenarios must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        if self.start_hour % HOURS_PER_DAY != 0 {
            return bad("start_hour must be a multiple of 24");
        }
        if self.trueup_scenarios == 0 {
            return bad("trueup_scenarios must be positive");
        }
        self.forecast.check().map_err(EngineError::Config)?;
        self.schedule.blocks.check().map_err(EngineError::Config)?;
        Ok(())
    }

    pub fn end_hour(&self) -> usize {
        self.start_hour + self.hours
    }

    pub fn profile(&self) -> ForecastProfile {
        if self.perfect_forecast {
            ForecastProfile::perfect()
        } else {
            self.forecast
        }
    }

    /// Weeks of future-cost cuts needed: through the week after the last
    /// simulated hour's week.
    pub fn sddp_weeks(&self) -> usize {
        study_week(self.end_hour() - 1) + 2
    }

    /// Scenario hours needed by the policy and every layer's look-ahead.
    pub fn required_horizon(&self) -> usize {
        let sddp = study_week_start(self.sddp_weeks() - 1) + HOURS_PER_WEEK;
        let last_week = (self.start_hour..self.end_hour()).rev().find(|&h| is_week_start(h)).unwrap_or(self.start_hour);
        let weekly = last_week + week_span(last_week);
        sddp.max(weekly).max(self.end_hour() + HOURS_PER_DAY + WINDOW)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    System(#[from] LoadError),
    #[error("system model has {} violation(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sddp(#[from] SddpError),
    #[error("scenario {scenario}: {source}")]
    Schedule {
        scenario: usize,
        #[source]
        source: ScheduleError,
    },
    #[error("scenario {scenario}, hour {hour}: {source}")]
    TrueUp {
        scenario: usize,
        hour: usize,
        #[source]
        source: TrueUpError,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
}

/// Inputs shared by every chain.
pub struct Prepared {
    pub model: SystemModel,
    pub set: ScenarioSet,
    pub fcf: FutureCostFunction,
    pub sddp_log: SddpLog,
    pub sddp_seconds: f64,
}

/// Loads the system and scenarios named by `cfg` and builds the policy.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared, EngineError> {
    cfg.check()?;
    let model = load_system(&cfg.system)?;
    let horizon = cfg.required_horizon();
    let set = match &cfg.scenarios {
        ScenarioSource::Model(p) => {
            let text = fs::read_to_string(p).map_err(|e| EngineError::Config(format!("{}: {e}", p.display())))?;
            let par: ParModel =
                serde_json::from_str(&text).map_err(|e| EngineError::Config(format!("{}: {e}", p.display())))?;
            generate(&par, cfg.num_scenarios, horizon, cfg.seed)?
        }
        ScenarioSource::Set(p) => read_set(p)?,
    };
    prepare_with(cfg, model, set)
}

pub fn read_set(path: &Path) -> Result<ScenarioSet, EngineError> {
    if path.extension().is_some_and(|e| e == "csv") {
        Ok(ScenarioSet::read_csv(&fs::read_to_string(path)?)?)
    } else {
        Ok(ScenarioSet::read_binary(&mut BufReader::new(fs::File::open(path)?))?)
    }
}

/// Builds the policy for an already loaded system and scenario set. A dry
/// run skips the policy; a resumed run reuses the stored one.
pub fn prepare_with(cfg: &RunConfig, model: SystemModel, set: ScenarioSet) -> Result<Prepared, EngineError> {
    cfg.check()?;
    let violations = validate(&model);
    if !violations.is_empty() {
        return Err(EngineError::Invalid(violations));
    }
    if set.num_scenarios() < cfg.num_scenarios {
        return Err(EngineError::Config(format!(
            "{} chains requested but the scenario set has {}",
            cfg.num_scenarios,
            set.num_scenarios()
        )));
    }
    let need = cfg.required_horizon();
    if set.horizon_hours() < need {
        return Err(EngineError::Config(format!(
            "scenario set covers {} hours, {need} needed",
            set.horizon_hours()
        )));
    }
    SeriesMap::new(&model, &set).map_err(EngineError::Config)?;
    let topo = Topology::new(&model);
    let reservoirs: Vec<String> = topo.reservoirs.iter().map(|&r| model.hydro[r].id.clone()).collect();
    let weeks = cfg.sddp_weeks();
    let t0 = Instant::now();
    let fcf_path = cfg.output_dir.join(FCF_FILE);
    let (fcf, sddp_log) = if cfg.dry_run {
        (FutureCostFunction::empty(reservoirs, weeks), SddpLog::default())
    } else if cfg.resume && fcf_path.exists() {
        let fcf = FutureCostFunction::from_text(&fs::read_to_string(&fcf_path)?).map_err(|message| EngineError::Checkpoint {
            path: fcf_path.clone(),
            message,
        })?;
        (
            fcf,
            SddpLog {
                iterations: Vec::new(),
                stop_reason: "reused stored policy".into(),
            },
        )
    } else {
        log::info!("building policy over {weeks} weeks");
        run_sddp(&model, &set, weeks, &cfg.sddp, cfg.seed, cfg.workers)?
    };
    Ok(Prepared {
        model,
        set,
        fcf,
        sddp_log,
        sddp_seconds: t0.elapsed().as_secs_f64(),
    })
}

pub const FCF_FILE: &str = "fcf.txt";
pub const SUMMARY_FILE: &str = "run.json";
const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemCounts {
    pub week_ahead: usize,
    pub day_ahead: usize,
    pub hour_ahead: usize,
    pub true_up: usize,
}

impl ProblemCounts {
    pub fn total(&self) -> usize {
        self.week_ahead + self.day_ahead + self.hour_ahead + self.true_up
    }

    fn add(&mut self, o: &ProblemCounts) {
        self.week_ahead += o.week_ahead;
        self.day_ahead += o.day_ahead;
        self.hour_ahead += o.hour_ahead;
        self.true_up += o.true_up;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub scenario: usize,
    pub problems: ProblemCounts,
    pub records: u64,
    /// Realized thermal variable cost ($).
    pub thermal_cost: f64,
    /// Planned deficit plus deviation left unserved (MWh).
    pub unserved_mwh: f64,
    /// Hour the chain resumed from, if it did.
    pub resumed_from: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainFailure {
    pub scenario: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub weeks: usize,
    pub iterations: usize,
    pub lower_bound: Option<f64>,
    pub cuts: usize,
    pub stop_reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub policy_seconds: f64,
    pub simulate_seconds: f64,
    pub records_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenarios: usize,
    pub start_hour: usize,
    pub hours: usize,
    pub workers: usize,
    pub dry_run: bool,
    pub problems: ProblemCounts,
    pub chains: Vec<ChainReport>,
    pub failures: Vec<ChainFailure>,
    pub tasks_per_worker: Vec<usize>,
    pub records: u64,
    pub policy: PolicySummary,
    pub timings: Timings,
}

/// Called at the start of every chain hour with (scenario, hour).
pub type HourHook<'a> = &'a (dyn Fn(usize, usize) + Sync);

/// Loads, builds the policy and simulates.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, EngineError> {
    let prepared = prepare(cfg)?;
    simulate(cfg, &prepared, None)
}

/// Runs every chain and writes the store, the policy and `run.json` to the
/// output directory. Chain failures are reported in the summary; the other
/// chains still complete.
pub fn simulate(cfg: &RunConfig, prep: &Prepared, hook: Option<HourHook>) -> Result<RunSummary, EngineError> {
    cfg.check()?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    if !cfg.resume {
        clear_outputs(out)?;
    }
    if !cfg.dry_run {
        write_atomic(&out.join(FCF_FILE), prep.fcf.to_text().as_bytes())?;
    }
    let ctx = ChainContext::new(cfg, prep)?;
    let t0 = Instant::now();
    let n = cfg.num_scenarios;
    let (results, tasks_per_worker) = par::run_pool(cfg.workers, n, |_, s| {
        catch_unwind(AssertUnwindSafe(|| ctx.run_chain(s, hook)))
            .unwrap_or_else(|p| Err(ChainError::Panic(panic_message(&p))))
    });
    let simulate_seconds = t0.elapsed().as_secs_f64();
    let mut chains = Vec::new();
    let mut failures = Vec::new();
    let mut problems = ProblemCounts::default();
    let mut records = 0;
    for (s, r) in results.into_iter().enumerate() {
        match r {
            Ok(rep) => {
                problems.add(&rep.problems);
                records += rep.records;
                chains.push(rep);
            }
            Err(e) => {
                log::error!("scenario {s} failed: {e}");
                failures.push(ChainFailure {
                    scenario: s,
                    error: e.to_string(),
                });
            }
        }
    }
    let summary = RunSummary {
        scenarios: n,
        start_hour: cfg.start_hour,
        hours: cfg.hours,
        workers: cfg.workers,
        dry_run: cfg.dry_run,
        problems,
        chains,
        failures,
        tasks_per_worker,
        records,
        policy: PolicySummary {
            weeks: prep.fcf.num_weeks(),
            iterations: prep.sddp_log.iterations.len(),
            lower_bound: prep.sddp_log.iterations.last().map(|i| i.lower_bound),
            cuts: prep.fcf.num_cuts(),
            stop_reason: prep.sddp_log.stop_reason.clone(),
        },
        timings: Timings {
            policy_seconds: prep.sddp_seconds,
            simulate_seconds,
            records_per_second: if simulate_seconds > 0.0 { records as f64 / simulate_seconds } else { 0.0 },
        },
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_atomic(&out.join(SUMMARY_FILE), json.as_bytes())?;
    Ok(summary)
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Removes partitions and checkpoints left by an earlier run.
fn clear_outputs(dir: &Path) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == EXTENSION) {
            fs::remove_file(&p)?;
        }
    }
    let cp = dir.join(CHECKPOINT_DIR);
    if cp.is_dir() {
        fs::remove_dir_all(cp)?;
    }
    Ok(())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

#[derive(Debug, thiserror::Error)]
enum ChainError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("panic: {0}")]
    Panic(String),
}

/// Decisions fixed for the hours still ahead, as saved in a checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FixingsWindow {
    hour: usize,
    day: usize,
    commitment: Vec<Vec<Option<(bool, Layer)>>>,
    water_value: Vec<Vec<f64>>,
    storage_target: Vec<Vec<Option<f64>>>,
    reserves: Vec<Vec<Option<[f64; 2]>>>,
    nomination: Vec<Vec<Option<f64>>>,
    market: Vec<Vec<Option<f64>>>,
}

/// Upper layers fix at most this far ahead of the current hour.
const FIX_WINDOW_HOURS: usize = 2 * HOURS_PER_WEEK;

impl FixingsWindow {
    fn take(fix: &Fixings, hour: usize) -> Self {
        let hours = fix.hours();
        let hr = hour.min(hours)..(hour + FIX_WINDOW_HOURS).min(hours);
        let day = hour / HOURS_PER_DAY;
        let days = |v: &Vec<Option<f64>>| v[day.min(v.len())..(day + FIX_WINDOW_HOURS / HOURS_PER_DAY).min(v.len())].to_vec();
        FixingsWindow {
            hour,
            day,
            commitment: fix.commitment.iter().map(|v| v[hr.clone()].to_vec()).collect(),
            water_value: fix.water_value.iter().map(|v| v[hr.clone()].to_vec()).collect(),
            storage_target: fix.storage_target.iter().map(days).collect(),
            reserves: fix.reserves.iter().map(|v| v[hr.clone()].to_vec()).collect(),
            nomination: fix.nomination.iter().map(days).collect(),
            market: fix.market.iter().map(|v| v[hr.clone()].to_vec()).collect(),
        }
    }

    fn restore(&self, fix: &mut Fixings) {
        fn put<T: Clone>(dst: &mut [Vec<T>], src: &[Vec<T>], at: usize) {
            for (d, s) in dst.iter_mut().zip(src) {
                d[at..at + s.len()].clone_from_slice(s);
            }
        }
        put(&mut fix.commitment, &self.commitment, self.hour);
        put(&mut fix.water_value, &self.water_value, self.hour);
        put(&mut fix.storage_target, &self.storage_target, self.day);
        put(&mut fix.reserves, &self.reserves, self.hour);
        put(&mut fix.nomination, &self.nomination, self.day);
        put(&mut fix.market, &self.market, self.hour);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    scenario: usize,
    next_hour: usize,
    state: SystemState,
    fixings: FixingsWindow,
    /// Records already produced for days not yet written.
    pending: Vec<Record>,
    report: ChainReport,
}

struct ChainContext<'a> {
    cfg: &'a RunConfig,
    model: &'a SystemModel,
    set: &'a ScenarioSet,
    fcf: &'a FutureCostFunction,
    topo: Topology,
    map: SeriesMap,
    profile: ForecastProfile,
    outages: OutageProcess,
    /// [scenario][area][hour] inelastic load minus stochastic VRE.
    area_net_load: Vec<Vec<Vec<f64>>>,
    /// Area of every bus and every VRE unit; stochastic flag per VRE unit.
    vre_area: Vec<usize>,
    hydro_area: Vec<usize>,
    thermal_area: Vec<usize>,
}

/// Records of a chain, grouped by day until the day is complete.
struct Pending {
    days: BTreeMap<usize, Vec<Record>>,
    scenario: u32,
    end: usize,
}

impl Pending {
    fn push(&mut self, layer: Layer, hour: usize, entity: &str, metric: &str, value: f64) {
        if hour >= self.end {
            return;
        }
        self.days.entry(hour / HOURS_PER_DAY).or_default().push(Record {
            scenario: self.scenario,
            layer,
            hour: hour as u32,
            entity: entity.to_string(),
            metric: metric.to_string(),
            value,
        });
    }

    /// Writes every day up to and including `day`; returns the row count.
    fn flush(&mut self, dir: &Path, day: usize) -> Result<u64, StoreError> {
        let mut rows = 0;
        let done: Vec<usize> = self.days.range(..=day).map(|(&d, _)| d).collect();
        for d in done {
            let recs = self.days.remove(&d).unwrap();
            let mut w = PartitionWriter::new(partition_path(dir, self.scenario, d as u32));
            for r in &recs {
                w.push_record(r)?;
            }
            rows += w.finish()? as u64;
        }
        Ok(rows)
    }
}

fn net_load(model: &SystemModel, area_of_bus: &[usize], vre_area: &[usize], na: usize, inputs: &HourlyInputs, h: usize) -> Vec<f64> {
    let mut v = vec![0.0; na];
    for (b, l) in inputs.load.iter().enumerate() {
        v[area_of_bus[b]] += l[h];
    }
    for (u, unit) in model.vre.iter().enumerate() {
        if unit.is_stochastic() {
            v[vre_area[u]] -= inputs.vre[u][h];
        }
    }
    v
}

impl<'a> ChainContext<'a> {
    fn new(cfg: &'a RunConfig, prep: &'a Prepared) -> Result<Self, EngineError> {
        let model = &prep.model;
        let set = &prep.set;
        let topo = Topology::new(model);
        let map = SeriesMap::new(model, set).map_err(EngineError::Config)?;
        let na = model.areas.len();
        let vre_area: Vec<usize> = model.vre.iter().map(|u| topo.bus_area[topo.bus_index[&u.bus]]).collect();
        let hydro_area = model.hydro.iter().map(|h| topo.bus_area[topo.bus_index[&h.bus]]).collect();
        let thermal_area = model.thermal.iter().map(|t| topo.bus_area[topo.bus_index[&t.bus]]).collect();
        let need_lookahead = !cfg.dry_run && !cfg.perfect_forecast;
        let area_net_load = if need_lookahead {
            par::map_indexed(set.num_scenarios(), |s| {
                let inputs = HourlyInputs::realization(model, &map, set, s);
                let hours = inputs.hours();
                let mut out = vec![vec![0.0; hours]; na];
                for h in 0..hours {
                    for (a, v) in net_load(model, &topo.bus_area, &vre_area, na, &inputs, h).into_iter().enumerate() {
                        out[a][h] = v;
                    }
                }
                out
            })
        } else {
            Vec::new()
        };
        Ok(ChainContext {
            cfg,
            model,
            set,
            fcf: &prep.fcf,
            map,
            profile: cfg.profile(),
            outages: OutageProcess::new(cfg.seed),
            area_net_load,
            vre_area,
            hydro_area,
            thermal_area,
            topo,
        })
    }

    fn checkpoint_path(&self, s: usize) -> PathBuf {
        self.cfg.output_dir.join(CHECKPOINT_DIR).join(format!("s{s:05}.json"))
    }

    fn load_checkpoint(&self, s: usize) -> Result<Option<Checkpoint>, EngineError> {
        let path = self.checkpoint_path(s);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path)?;
        let cp: Checkpoint = serde_json::from_str(&text).map_err(|e| EngineError::Checkpoint {
            path: path.clone(),
            message: e.to_string(),
        })?;
        if cp.scenario != s {
            return Err(EngineError::Checkpoint {
                path,
                message: format!("belongs to scenario {}", cp.scenario),
            });
        }
        Ok(Some(cp))
    }

    fn forecast(&self, s: usize, real: &HourlyInputs, layer: Layer) -> HourlyInputs {
        if self.profile.is_perfect() || self.cfg.dry_run {
            real.clone()
        } else {
            HourlyInputs::from_forecast(self.model, &self.map, &forecast_series(self.set, s, &self.profile, layer))
        }
    }

    fn run_chain(&self, s: usize, hook: Option<HourHook>) -> Result<ChainReport, ChainError> {
        let cfg = self.cfg;
        let model = self.model;
        let start = cfg.start_hour;
        let end = cfg.end_hour();
        let real = HourlyInputs::realization(model, &self.map, self.set, s);
        let fc_week = self.forecast(s, &real, Layer::WeekAhead);
        let fc_day = self.forecast(s, &real, Layer::DayAhead);
        let fc_hour = self.forecast(s, &real, Layer::HourAhead);
        let mut fix = Fixings::new(model, self.set.horizon_hours());
        let mut state = SystemState::initial(model);
        state.hour = start;
        let mut report = ChainReport {
            scenario: s,
            ..ChainReport::default()
        };
        let mut pending = Pending {
            days: BTreeMap::new(),
            scenario: s as u32,
            end,
        };
        let mut first = start;
        let resumed = if cfg.resume { self.load_checkpoint(s)? } else { None };
        if let Some(cp) = resumed {
            first = cp.next_hour;
            state = cp.state;
            cp.fixings.restore(&mut fix);
            for r in cp.pending {
                pending.days.entry(r.hour as usize / HOURS_PER_DAY).or_default().push(r);
            }
            report = cp.report;
            report.resumed_from = Some(first);
            log::info!("scenario {s}: resuming at hour {first}");
        } else if !cfg.dry_run {
            self.write_static(&mut pending, &state, start);
        }
        for h in first..end {
            if let Some(f) = hook {
                f(s, h);
            }
            if cfg.dry_run {
                self.dry_hour(s, h, &fc_week, &fc_day, &fc_hour, &state, &fix, &mut report)?;
                continue;
            }
            let sched = |source| EngineError::Schedule { scenario: s, source };
            if h == start || is_week_start(h) {
                let cuts = self.fcf.week_cuts(study_week(h)).to_vec();
                let res = run_layer(model, Layer::WeekAhead, h, &fc_week, &state, &fix, cuts, &cfg.schedule).map_err(sched)?;
                log::debug!("scenario {s} hour {h}: week-ahead {:.3}s, {} nodes", res.solve_seconds, res.nodes);
                extract_and_fix(model, &res, &mut fix);
                self.write_plan(&mut pending, &res, true);
                report.problems.week_ahead += 1;
            }
            if h % HOURS_PER_DAY == 0 {
                let res = run_layer(model, Layer::DayAhead, h, &fc_day, &state, &fix, Vec::new(), &cfg.schedule).map_err(sched)?;
                log::debug!("scenario {s} hour {h}: day-ahead {:.3}s, {} nodes", res.solve_seconds, res.nodes);
                extract_and_fix(model, &res, &mut fix);
                self.write_plan(&mut pending, &res, false);
                report.problems.day_ahead += 1;
                let day = h / HOURS_PER_DAY;
                for (c, contract) in model.fuel_contracts.iter().enumerate() {
                    state.gas_remaining_mmbtu[c] = fix.nomination[c][day].unwrap_or(contract.take_or_pay_min_mmbtu);
                }
            }
            let ha = run_layer(model, Layer::HourAhead, h, &fc_hour, &state, &fix, Vec::new(), &cfg.schedule).map_err(sched)?;
            log::trace!("scenario {s} hour {h}: hour-ahead {:.3}s, {} nodes", ha.solve_seconds, ha.nodes);
            extract_and_fix(model, &ha, &mut fix);
            report.problems.hour_ahead += 1;
            self.true_up_hour(s, h, &real, &ha, &mut state, &mut pending, &mut report)?;
            report.problems.true_up += 1;
            let day_done = (h + 1) % HOURS_PER_DAY == 0 || h + 1 == end;
            if day_done {
                let day = if h + 1 == end { usize::MAX } else { h / HOURS_PER_DAY };
                report.records += pending.flush(&cfg.output_dir, day).map_err(EngineError::from)?;
                if cfg.checkpoint {
                    self.save_checkpoint(s, h + 1, &state, &fix, &pending, &report)?;
                }
            }
        }
        Ok(report)
    }

    fn save_checkpoint(
        &self,
        s: usize,
        next_hour: usize,
        state: &SystemState,
        fix: &Fixings,
        pending: &Pending,
        report: &ChainReport,
    ) -> Result<(), EngineError> {
        let cp = Checkpoint {
            scenario: s,
            next_hour,
            state: state.clone(),
            fixings: FixingsWindow::take(fix, next_hour),
            pending: pending.days.values().flatten().cloned().collect(),
            report: report.clone(),
        };
        let path = self.checkpoint_path(s);
        fs::create_dir_all(path.parent().unwrap())?;
        write_atomic(&path, serde_json::to_string(&cp).expect("checkpoint serializes").as_bytes())?;
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn dry_hour(
        &self,
        s: usize,
        h: usize,
        fc_week: &HourlyInputs,
        fc_day: &HourlyInputs,
        fc_hour: &HourlyInputs,
        state: &SystemState,
        fix: &Fixings,
        report: &mut ChainReport,
    ) -> Result<(), EngineError> {
        let model = self.model;
        let opts = &self.cfg.schedule;
        let sched = |source| EngineError::Schedule { scenario: s, source };
        if h == self.cfg.start_hour || is_week_start(h) {
            let cuts = self.fcf.week_cuts(study_week(h)).to_vec();
            build_layer(model, Layer::WeekAhead, h, fc_week, state, fix, cuts, opts).map_err(sched)?;
            report.problems.week_ahead += 1;
        }
        if h % HOURS_PER_DAY == 0 {
            build_layer(model, Layer::DayAhead, h, fc_day, state, fix, Vec::new(), opts).map_err(sched)?;
            report.problems.day_ahead += 1;
        }
        build_layer(model, Layer::HourAhead, h, fc_hour, state, fix, Vec::new(), opts).map_err(sched)?;
        report.problems.hour_ahead += 1;
        let input = TrueUpInput {
            units: state
                .units
                .iter()
                .map(|u| TrueUpUnit {
                    on: [u.on; WINDOW],
                    planned: [u.generation_mw; WINDOW],
                    prev_generation: u.generation_mw,
                    outage: !u.available,
                })
                .collect(),
            xi_now: vec![0.0; model.areas.len()],
            scenarios: vec![DeviationScenario {
                weight: 1.0,
                xi: [vec![0.0; model.areas.len()], vec![0.0; model.areas.len()]],
            }],
        };
        trueup::build(model, &input);
        report.problems.true_up += 1;
        Ok(())
    }

    /// Deviation scenarios for the true-up's look-ahead hours, from the
    /// scenarios closest to the realization at the hour-ahead's quality.
    fn lookahead(&self, s: usize, h: usize, ha: &ScheduleResult) -> Vec<DeviationScenario> {
        let na = self.model.areas.len();
        let planned: Vec<Vec<f64>> = (1..WINDOW)
            .map(|k| {
                let mut v = vec![0.0; na];
                for (b, l) in ha.load.iter().enumerate() {
                    v[self.topo.bus_area[b]] += l[k];
                }
                for (u, unit) in self.model.vre.iter().enumerate() {
                    if unit.is_stochastic() {
                        v[self.vre_area[u]] -= ha.vre_available[u][k];
                    }
                }
                v
            })
            .collect();
        if self.area_net_load.is_empty() {
            // Perfect forecast: the only scenario is the realization.
            let real: Vec<Vec<f64>> = (1..WINDOW).map(|_| vec![0.0; na]).collect();
            return vec![DeviationScenario {
                weight: 1.0,
                xi: [real[0].clone(), real[1].clone()],
            }];
        }
        let t = h + 1;
        let totals: Vec<f64> = self.area_net_load.iter().map(|sc| sc.iter().map(|a| a[t]).sum()).collect();
        let weights = compute_weights(&totals, s, self.profile.hour_ahead);
        let top = weights.top(self.cfg.trueup_scenarios);
        let total: f64 = top.iter().map(|&(_, w)| w).sum();
        top.into_iter()
            .map(|(sc, w)| {
                let dev = |k: usize| -> Vec<f64> { (0..na).map(|a| self.area_net_load[sc][a][h + k] - planned[k - 1][a]).collect() };
                DeviationScenario {
                    weight: w / total,
                    xi: [dev(1), dev(2)],
                }
            })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn true_up_hour(
        &self,
        s: usize,
        h: usize,
        real: &HourlyInputs,
        ha: &ScheduleResult,
        state: &mut SystemState,
        pending: &mut Pending,
        report: &mut ChainReport,
    ) -> Result<(), EngineError> {
        let model = self.model;
        let na = model.areas.len();
        // Hydro follows the hour-ahead releases under the realized inflows.
        let planned_q: Vec<f64> = ha.turbined.iter().map(|q| q[0]).collect();
        let planned_s: Vec<f64> = ha.spill.iter().map(|q| q[0]).collect();
        let inflow: Vec<f64> = real.inflow.iter().map(|v| v[h]).collect();
        let hydro = realize_hydro(model, &self.topo, &state.storage_hm3, &planned_q, &planned_s, &inflow, week_of_year(h));
        // Realized deviation per area that thermal units must absorb.
        let mut xi_now = vec![0.0; na];
        for (b, l) in real.load.iter().enumerate() {
            xi_now[self.topo.bus_area[b]] += l[h] - ha.load[b][0];
        }
        let mut vre_injection = Vec::with_capacity(model.vre.len());
        for u in 0..model.vre.len() {
            let planned = ha.vre_available[u][0] - ha.curtailment[u][0];
            let actual = (real.vre[u][h] - ha.curtailment[u][0]).max(0.0);
            xi_now[self.vre_area[u]] -= actual - planned;
            vre_injection.push(actual);
        }
        for i in 0..model.hydro.len() {
            xi_now[self.hydro_area[i]] -= hydro.generation[i] - ha.hydro_gen[i][0];
        }
        for (i, u) in state.units.iter().enumerate() {
            if !u.available {
                xi_now[self.thermal_area[i]] += ha.thermal_gen[i][0];
            }
        }
        let units: Vec<TrueUpUnit> = model
            .thermal
            .iter()
            .enumerate()
            .map(|(i, th)| {
                let on = |k: usize| th.commitment_class.is_none() || ha.commitment[i][k];
                TrueUpUnit {
                    on: [on(0), on(1), on(2)],
                    planned: [ha.thermal_gen[i][0], ha.thermal_gen[i][1], ha.thermal_gen[i][2]],
                    prev_generation: state.units[i].generation_mw,
                    outage: !state.units[i].available,
                }
            })
            .collect();
        let input = TrueUpInput {
            units,
            xi_now,
            scenarios: self.lookahead(s, h, ha),
        };
        let policy = trueup::build_and_solve(model, &input).map_err(|source| EngineError::TrueUp {
            scenario: s,
            hour: h,
            source,
        })?;
        let thermal = realize_thermal(model, &input, &policy);
        let available = if self.cfg.outages {
            self.outages.step(model, state, s, h)
        } else {
            vec![true; model.thermal.len()]
        };
        let burned = fuel_burned(model, &self.topo, &thermal.generation);

        self.write_hour(pending, h, real, ha, state, &vre_injection);
        let p = Layer::TrueUp;
        for (i, th) in model.thermal.iter().enumerate() {
            pending.push(p, h, &th.id, m::THERMAL_GENERATION, thermal.generation[i]);
            pending.push(p, h, &th.id, m::COMMITMENT, f64::from(u8::from(thermal.on[i])));
            pending.push(p, h, &th.id, m::SETPOINT, policy.g0[i][0]);
            for &a in &self.topo.thermal_areas[i] {
                let ent = format!("{}@{}", th.id, model.areas[a].id);
                pending.push(p, h, &ent, m::PARTICIPATION, policy.beta[i][a]);
            }
            report.thermal_cost += th.variable_cost * thermal.generation[i];
        }
        for (i, hp) in model.hydro.iter().enumerate() {
            pending.push(p, h, &hp.id, m::HYDRO_GENERATION, hydro.generation[i]);
            pending.push(p, h, &hp.id, m::TURBINED, hydro.turbined[i]);
            pending.push(p, h, &hp.id, m::SPILL, hydro.spill[i]);
            pending.push(p, h, &hp.id, m::STORAGE_IN, hydro.storage_in[i]);
            pending.push(p, h, &hp.id, m::STORAGE_OUT, hydro.storage_out[i]);
        }
        for (a, area) in model.areas.iter().enumerate() {
            pending.push(p, h, &area.id, m::XI, input.xi_now[a]);
            pending.push(p, h, &area.id, m::DEPLOYED, thermal.deployed[a]);
            pending.push(p, h, &area.id, m::MISMATCH, thermal.mismatch[a]);
            report.unserved_mwh += thermal.mismatch[a].max(0.0);
        }
        pending.push(p, h, m::SYSTEM, m::OBJECTIVE, policy.objective);
        report.unserved_mwh += ha.deficit.iter().map(|d| d[0]).sum::<f64>();

        for (a, r) in state.reserves_mw.iter_mut().enumerate() {
            *r = ha.reserves[a][0];
        }
        for (k, v) in state.market_mw.iter_mut().enumerate() {
            *v = ha.market_buy[k][0] - ha.market_sell[k][0];
        }
        let out = HourOutcome {
            hour: h,
            thermal,
            hydro,
            available,
            fuel_burned: burned,
        };
        trueup::apply_outcome(model, state, &out);
        Ok(())
    }

    /// Static model data and the chain's initial state.
    fn write_static(&self, pending: &mut Pending, state: &SystemState, h: usize) {
        let model = self.model;
        let t = &self.topo;
        let meta = Layer::Meta;
        for (i, th) in model.thermal.iter().enumerate() {
            let u = &state.units[i];
            let id = &th.id;
            pending.push(meta, h, id, m::THERMAL_BUS, t.bus_index[&th.bus] as f64);
            pending.push(meta, h, id, m::MIN_UP_H, f64::from(th.min_up_h));
            pending.push(meta, h, id, m::MIN_DOWN_H, f64::from(th.min_down_h));
            pending.push(meta, h, id, m::RAMP_UP, th.ramp_up_mw_h);
            pending.push(meta, h, id, m::RAMP_DOWN, th.ramp_down_mw_h);
            pending.push(meta, h, id, m::CAPACITY, th.capacity_mw);
            pending.push(meta, h, id, m::MIN_GENERATION, th.min_generation_mw);
            pending.push(meta, h, id, m::INITIAL_ON, f64::from(u8::from(u.on)));
            pending.push(meta, h, id, m::INITIAL_HOURS, f64::from(u.hours_in_state));
            pending.push(meta, h, id, m::INITIAL_GENERATION, u.generation_mw);
        }
        for (i, hp) in model.hydro.iter().enumerate() {
            pending.push(meta, h, &hp.id, m::HYDRO_INDEX, i as f64);
            pending.push(meta, h, &hp.id, m::HYDRO_BUS, t.bus_index[&hp.bus] as f64);
            pending.push(meta, h, &hp.id, m::DOWNSTREAM, t.downstream[i].map_or(-1.0, |d| d as f64));
            pending.push(meta, h, &hp.id, m::IS_RESERVOIR, f64::from(u8::from(hp.is_reservoir())));
        }
        for (b, bus) in model.network.buses.iter().enumerate() {
            pending.push(meta, h, &bus.id, m::BUS_INDEX, b as f64);
        }
        for c in &model.network.circuits {
            pending.push(meta, h, &c.id, m::CIRCUIT_FROM, t.bus_index[&c.from] as f64);
            pending.push(meta, h, &c.id, m::CIRCUIT_TO, t.bus_index[&c.to] as f64);
        }
        for u in &model.vre {
            pending.push(meta, h, &u.id, m::VRE_BUS, t.bus_index[&u.bus] as f64);
        }
        for (k, mk) in model.network.markets.iter().enumerate() {
            pending.push(meta, h, &m::market_entity(k), m::MARKET_BUS, t.bus_index[&mk.bus] as f64);
        }
    }

    /// Realized inputs and the hour-ahead's first hour.
    fn write_hour(
        &self,
        pending: &mut Pending,
        h: usize,
        real: &HourlyInputs,
        ha: &ScheduleResult,
        state: &SystemState,
        vre_injection: &[f64],
    ) {
        let model = self.model;
        let (meta, p) = (Layer::Meta, Layer::HourAhead);
        for (i, th) in model.thermal.iter().enumerate() {
            pending.push(meta, h, &th.id, m::AVAILABLE, f64::from(u8::from(state.units[i].available)));
            pending.push(p, h, &th.id, m::THERMAL_GENERATION, ha.thermal_gen[i][0]);
            pending.push(p, h, &th.id, m::COMMITMENT, f64::from(u8::from(ha.commitment[i][0])));
        }
        for (i, hp) in model.hydro.iter().enumerate() {
            pending.push(meta, h, &hp.id, m::INFLOW, real.inflow[i][h]);
            pending.push(p, h, &hp.id, m::HYDRO_GENERATION, ha.hydro_gen[i][0]);
            pending.push(p, h, &hp.id, m::TURBINED, ha.turbined[i][0]);
            pending.push(p, h, &hp.id, m::SPILL, ha.spill[i][0]);
            pending.push(p, h, &hp.id, m::STORAGE, ha.storage[i][0]);
        }
        for (b, bus) in model.network.buses.iter().enumerate() {
            pending.push(meta, h, &bus.id, m::LOAD, real.load[b][h]);
            pending.push(p, h, &bus.id, m::LOAD, ha.load[b][0]);
            pending.push(p, h, &bus.id, m::DEFICIT, ha.deficit[b][0]);
            pending.push(p, h, &bus.id, m::ELASTIC_SERVED, ha.elastic_served[b][0]);
        }
        for (c, circ) in model.network.circuits.iter().enumerate() {
            pending.push(p, h, &circ.id, m::FLOW, ha.flows[c][0]);
        }
        for (u, unit) in model.vre.iter().enumerate() {
            pending.push(meta, h, &unit.id, m::VRE_AVAILABLE, real.vre[u][h]);
            pending.push(p, h, &unit.id, m::VRE_AVAILABLE, ha.vre_available[u][0]);
            pending.push(p, h, &unit.id, m::CURTAILMENT, ha.curtailment[u][0]);
            pending.push(Layer::TrueUp, h, &unit.id, m::VRE_AVAILABLE, vre_injection[u]);
        }
        for k in 0..model.network.markets.len() {
            let ent = m::market_entity(k);
            pending.push(p, h, &ent, m::MARKET_BUY, ha.market_buy[k][0]);
            pending.push(p, h, &ent, m::MARKET_SELL, ha.market_sell[k][0]);
        }
        for (a, area) in model.areas.iter().enumerate() {
            pending.push(p, h, &area.id, m::REGULATION, ha.reserves[a][0][0]);
            pending.push(p, h, &area.id, m::CONTINGENCY, ha.reserves[a][0][1]);
        }
    }

    /// Week- or day-ahead plan, one record per covered hour.
    fn write_plan(&self, pending: &mut Pending, res: &ScheduleResult, water_values: bool) {
        let model = self.model;
        let layer = res.layer;
        for (p, &(off, len)) in res.periods.iter().enumerate() {
            for dh in 0..len {
                let h = res.start_hour + off + dh;
                for (i, th) in model.thermal.iter().enumerate() {
                    pending.push(layer, h, &th.id, m::THERMAL_GENERATION, res.thermal_gen[i][p]);
                    pending.push(layer, h, &th.id, m::COMMITMENT, f64::from(u8::from(res.commitment[i][p])));
                }
                for (i, hp) in model.hydro.iter().enumerate() {
                    pending.push(layer, h, &hp.id, m::HYDRO_GENERATION, res.hydro_gen[i][p]);
                    pending.push(layer, h, &hp.id, m::STORAGE, res.storage[i][p]);
                    if water_values {
                        pending.push(layer, h, &hp.id, m::WATER_VALUE, res.water_values[i][p]);
                    }
                }
                for (b, bus) in model.network.buses.iter().enumerate() {
                    pending.push(layer, h, &bus.id, m::DEFICIT, res.deficit[b][p]);
                }
                for (a, area) in model.areas.iter().enumerate() {
                    pending.push(layer, h, &area.id, m::REGULATION, res.reserves[a][p][0]);
                    pending.push(layer, h, &area.id, m::CONTINGENCY, res.reserves[a][p][1]);
                }
            }
        }
    }
}
