//! Static power-system description: hydro cascade, thermal fleet, fuel
//! contracts, network, balancing areas, markets and non-dispatchable units.
//!
//! The input is one JSON document (see `docs/system-schema.md`). Unknown
//! fields are rejected and `schema_version` is mandatory. Loading returns
//! either a model whose invariants all hold or the complete list of
//! violations.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// m³/s sustained for one hour, in hm³.
pub const HM3_PER_M3S_HOUR: f64 = 3600.0 / 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HydroKind {
    Reservoir,
    RunOfRiver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HydroPlant {
    pub id: String,
    pub kind: HydroKind,
    pub bus: String,
    pub max_storage_hm3: f64,
    pub min_storage_hm3: f64,
    #[serde(default)]
    pub initial_storage_hm3: f64,
    pub max_turbining_m3s: f64,
    /// Piecewise-linear production curve as (flow m³/s, MW) points starting
    /// at (0, 0); must be concave and nondecreasing.
    pub production: Vec<(f64, f64)>,
    #[serde(default)]
    pub downstream: Option<String>,
    #[serde(default)]
    pub min_spill_m3s: f64,
    pub max_spill_m3s: f64,
    /// Scenario site providing natural inflow (m³/s).
    pub inflow_site: String,
    /// Optional per-week maximum storage (52 values).
    #[serde(default)]
    pub flood_control_max_storage_hm3: Option<Vec<f64>>,
}

impl HydroPlant {
    pub fn is_reservoir(&self) -> bool {
        self.kind == HydroKind::Reservoir
    }

    /// Upper storage bound in the given week of the year (0-based).
    pub fn storage_cap(&self, week_of_year: usize) -> f64 {
        match &self.flood_control_max_storage_hm3 {
            Some(levels) if !levels.is_empty() => {
                levels[week_of_year.min(levels.len() - 1)].min(self.max_storage_hm3)
            }
            _ => self.max_storage_hm3,
        }
    }

    /// Segments of the production curve as (intercept MW, slope MW per m³/s).
    pub fn production_segments(&self) -> Vec<(f64, f64)> {
        self.production
            .windows(2)
            .map(|w| {
                let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                (w[0].1 - slope * w[0].0, slope)
            })
            .collect()
    }

    /// MW produced at a given turbined flow.
    pub fn production_at(&self, flow: f64) -> f64 {
        self.production_segments()
            .iter()
            .map(|&(a, b)| a + b * flow)
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }

    pub fn max_generation(&self) -> f64 {
        self.production_at(self.max_turbining_m3s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitmentClass {
    Slow,
    Intermediate,
    Fast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalPlant {
    pub id: String,
    pub bus: String,
    pub capacity_mw: f64,
    pub min_generation_mw: f64,
    pub variable_cost: f64,
    #[serde(default)]
    pub startup_cost: f64,
    pub min_up_h: u32,
    pub min_down_h: u32,
    pub ramp_up_mw_h: f64,
    pub ramp_down_mw_h: f64,
    /// `None` marks a unit without commitment decisions (always available,
    /// minimum generation must be zero).
    #[serde(default)]
    pub commitment_class: Option<CommitmentClass>,
    #[serde(default)]
    pub fuel_contract: Option<String>,
    #[serde(default)]
    pub initial_on: bool,
    /// Hours already spent in the initial on/off state.
    #[serde(default = "default_hours_in_state")]
    pub initial_hours_in_state: u32,
    #[serde(default)]
    pub initial_generation_mw: f64,
    #[serde(default)]
    pub forced_outage_rate: f64,
    #[serde(default = "default_mttr")]
    pub mean_time_to_repair_h: f64,
}

fn default_hours_in_state() -> u32 {
    1000
}

fn default_mttr() -> f64 {
    24.0
}

impl ThermalPlant {
    pub fn is_committed(&self) -> bool {
        self.commitment_class.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuelContract {
    pub id: String,
    pub daily_nomination_max_mmbtu: f64,
    pub take_or_pay_min_mmbtu: f64,
    pub price_per_mmbtu: f64,
    /// Heat rate (MMBtu/MWh) per thermal unit id.
    pub heat_rates: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceSegment {
    pub price: f64,
    pub quantity_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: String,
    pub area: String,
    /// Scenario site with the inelastic hourly load (MW); `None` = no load.
    #[serde(default)]
    pub load_site: Option<String>,
    /// Price-responsive demand blocks (willingness to pay $/MWh, MW).
    #[serde(default)]
    pub elastic_segments: Vec<PriceSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Circuit {
    pub id: String,
    pub from: String,
    pub to: String,
    pub capacity_mw: f64,
    /// Enables a DC power-flow constraint on this circuit (p.u. on MW base).
    #[serde(default)]
    pub susceptance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Market {
    pub bus: String,
    /// Import offers, ascending price.
    pub buy: Vec<PriceSegment>,
    /// Export bids, descending price.
    #[serde(default)]
    pub sell: Vec<PriceSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub circuits: Vec<Circuit>,
    #[serde(default)]
    pub markets: Vec<Market>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalancingArea {
    pub id: String,
    pub regulation_mw: f64,
    pub contingency_mw: f64,
    /// Thermal units located elsewhere that may also carry this area's
    /// reserves.
    #[serde(default)]
    pub shared_resource_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VreKind {
    Wind,
    Solar,
    SmallHydro,
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VreUnit {
    pub id: String,
    pub kind: VreKind,
    pub bus: String,
    pub capacity_mw: f64,
    /// Scenario site (wind and solar).
    #[serde(default)]
    pub site: Option<String>,
    /// Fixed 24-hour injection profile (small hydro and independent units).
    #[serde(default)]
    pub profile_mw: Option<Vec<f64>>,
}

impl VreUnit {
    pub fn is_stochastic(&self) -> bool {
        matches!(self.kind, VreKind::Wind | VreKind::Solar)
    }
}

/// One step of the unserved-energy penalty: up to `depth` × load at `cost`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeficitStep {
    pub depth: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemModel {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub hydro: Vec<HydroPlant>,
    pub thermal: Vec<ThermalPlant>,
    #[serde(default)]
    pub fuel_contracts: Vec<FuelContract>,
    pub network: Network,
    pub areas: Vec<BalancingArea>,
    #[serde(default)]
    pub vre: Vec<VreUnit>,
    #[serde(default = "default_deficit")]
    pub deficit: Vec<DeficitStep>,
    /// Penalty per MWh of curtailed VRE.
    #[serde(default = "default_curtailment_cost")]
    pub curtailment_cost: f64,
}

pub fn default_deficit() -> Vec<DeficitStep> {
    vec![
        DeficitStep { depth: 0.05, cost: 1000.0 },
        DeficitStep { depth: 1.0, cost: 10000.0 },
    ]
}

fn default_curtailment_cost() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub entity: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.entity, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{} validation error(s):\n{}", .0.len(), .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<Violation>),
}

/// Reads, parses and validates a system file.
pub fn load_system(path: &Path) -> Result<SystemModel, LoadError> {
    let bytes = std::fs::read(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_system(&bytes, &path.display().to_string())
}

pub fn parse_system(bytes: &[u8], origin: &str) -> Result<SystemModel, LoadError> {
    let model: SystemModel = serde_json::from_slice(bytes).map_err(|e| LoadError::Parse {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let violations = validate(&model);
    if violations.is_empty() {
        Ok(model)
    } else {
        Err(LoadError::Validation(violations))
    }
}

pub fn write_system(model: &SystemModel) -> String {
    serde_json::to_string_pretty(model).expect("system model serializes")
}

/// Returns every violated invariant; empty iff the model is valid.
pub fn validate(model: &SystemModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut v = |entity: &str, message: String| {
        out.push(Violation {
            entity: entity.to_string(),
            message,
        })
    };

    if model.schema_version != SCHEMA_VERSION {
        v(
            "schema_version",
            format!("unsupported version {} (expected {SCHEMA_VERSION})", model.schema_version),
        );
    }

    let check_unique = |ids: Vec<&str>, class: &str, v: &mut dyn FnMut(&str, String)| {
        let mut seen = HashSet::new();
        for id in ids {
            if !seen.insert(id) {
                v(id, format!("duplicate {class} id"));
            }
        }
    };
    check_unique(model.hydro.iter().map(|h| h.id.as_str()).collect(), "hydro", &mut v);
    check_unique(model.thermal.iter().map(|t| t.id.as_str()).collect(), "thermal", &mut v);
    check_unique(model.fuel_contracts.iter().map(|c| c.id.as_str()).collect(), "contract", &mut v);
    check_unique(model.network.buses.iter().map(|b| b.id.as_str()).collect(), "bus", &mut v);
    check_unique(model.network.circuits.iter().map(|c| c.id.as_str()).collect(), "circuit", &mut v);
    check_unique(model.areas.iter().map(|a| a.id.as_str()).collect(), "area", &mut v);
    check_unique(model.vre.iter().map(|u| u.id.as_str()).collect(), "vre", &mut v);

    let buses: HashSet<&str> = model.network.buses.iter().map(|b| b.id.as_str()).collect();
    let areas: HashSet<&str> = model.areas.iter().map(|a| a.id.as_str()).collect();
    let thermals: HashSet<&str> = model.thermal.iter().map(|t| t.id.as_str()).collect();
    let contracts: HashSet<&str> = model.fuel_contracts.iter().map(|c| c.id.as_str()).collect();
    let hydro_ids: HashSet<&str> = model.hydro.iter().map(|h| h.id.as_str()).collect();

    for h in &model.hydro {
        let id = h.id.as_str();
        if !buses.contains(h.bus.as_str()) {
            v(id, format!("unknown bus {}", h.bus));
        }
        match h.kind {
            HydroKind::RunOfRiver => {
                if h.max_storage_hm3 != 0.0 || h.min_storage_hm3 != 0.0 {
                    v(id, "run-of-river plant must have zero storage bounds".into());
                }
                if h.min_spill_m3s != 0.0 {
                    v(id, "run-of-river plant must have zero minimum spill".into());
                }
            }
            HydroKind::Reservoir => {
                if h.min_storage_hm3 < 0.0 || h.min_storage_hm3 > h.max_storage_hm3 {
                    v(id, "storage bounds must satisfy 0 <= min <= max".into());
                }
                if h.initial_storage_hm3 < h.min_storage_hm3 || h.initial_storage_hm3 > h.max_storage_hm3 {
                    v(id, "initial storage outside [min, max]".into());
                }
            }
        }
        if h.max_turbining_m3s < 0.0 {
            v(id, "negative maximum turbining".into());
        }
        if h.min_spill_m3s < 0.0 || h.min_spill_m3s > h.max_spill_m3s {
            v(id, "spill bounds must satisfy 0 <= min <= max".into());
        }
        if h.inflow_site.is_empty() {
            v(id, "empty inflow site".into());
        }
        if h.production.len() < 2 {
            v(id, "production curve needs at least two points".into());
        } else {
            if h.production[0] != (0.0, 0.0) {
                v(id, "production curve must start at (0, 0)".into());
            }
            for (k, w) in h.production.windows(2).enumerate() {
                if w[1].0 <= w[0].0 {
                    v(id, format!("production flows not increasing at points {k} and {}", k + 1));
                }
                if w[1].1 < w[0].1 {
                    v(id, format!("production decreasing on segment {k}"));
                }
            }
            let slopes: Vec<f64> = h
                .production
                .windows(2)
                .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
                .collect();
            for k in 1..slopes.len() {
                if slopes[k] > slopes[k - 1] + 1e-12 {
                    v(
                        id,
                        format!(
                            "non-concave production: segment {} slope {} exceeds segment {} slope {}",
                            k,
                            slopes[k],
                            k - 1,
                            slopes[k - 1]
                        ),
                    );
                }
            }
            if h.production.last().unwrap().0 < h.max_turbining_m3s {
                v(id, "production curve does not cover maximum turbining".into());
            }
        }
        if let Some(d) = &h.downstream {
            if !hydro_ids.contains(d.as_str()) {
                v(id, format!("unknown downstream plant {d}"));
            }
        }
        if let Some(levels) = &h.flood_control_max_storage_hm3 {
            if levels.len() != 52 {
                v(id, format!("flood control levels need 52 weekly values, got {}", levels.len()));
            }
            if levels.iter().any(|&l| l < h.min_storage_hm3) {
                v(id, "flood control level below minimum storage".into());
            }
        }
    }
    if let Some(cycle) = find_cascade_cycle(model) {
        v(&cycle[0], format!("cascade cycle: {}", cycle.join(" -> ")));
    }

    for t in &model.thermal {
        let id = t.id.as_str();
        if !buses.contains(t.bus.as_str()) {
            v(id, format!("unknown bus {}", t.bus));
        }
        if !(0.0..=t.capacity_mw).contains(&t.min_generation_mw) {
            v(id, "minimum generation must lie in [0, capacity]".into());
        }
        if t.min_up_h < 1 {
            v(id, "min_up_time must be at least 1 h".into());
        }
        if t.min_down_h < 1 {
            v(id, "min_down_time must be at least 1 h".into());
        }
        if t.ramp_up_mw_h <= 0.0 || t.ramp_down_mw_h <= 0.0 {
            v(id, "ramp limits must be positive".into());
        }
        if t.ramp_up_mw_h < t.min_generation_mw || t.ramp_down_mw_h < t.min_generation_mw {
            v(id, "ramp limits must be at least the minimum generation".into());
        }
        if t.commitment_class.is_none() && t.min_generation_mw != 0.0 {
            v(id, "unit without commitment class must have zero minimum generation".into());
        }
        if t.variable_cost < 0.0 || t.startup_cost < 0.0 {
            v(id, "costs must be nonnegative".into());
        }
        if let Some(c) = &t.fuel_contract {
            if !contracts.contains(c.as_str()) {
                v(id, format!("unknown fuel contract {c}"));
            }
        }
        if t.initial_on {
            if t.initial_generation_mw < t.min_generation_mw || t.initial_generation_mw > t.capacity_mw {
                v(id, "initial generation outside [min, capacity] for a unit initially on".into());
            }
        } else if t.initial_generation_mw != 0.0 {
            v(id, "unit initially off must have zero initial generation".into());
        }
        if !(0.0..1.0).contains(&t.forced_outage_rate) {
            v(id, "forced outage rate must lie in [0, 1)".into());
        }
        if t.mean_time_to_repair_h < 1.0 {
            v(id, "mean time to repair must be at least 1 h".into());
        }
    }

    for c in &model.fuel_contracts {
        let id = c.id.as_str();
        if c.take_or_pay_min_mmbtu > c.daily_nomination_max_mmbtu {
            v(id, "take-or-pay minimum exceeds daily nomination maximum".into());
        }
        if c.take_or_pay_min_mmbtu < 0.0 || c.price_per_mmbtu < 0.0 {
            v(id, "contract quantities and price must be nonnegative".into());
        }
        for (unit, hr) in &c.heat_rates {
            match model.thermal.iter().find(|t| &t.id == unit) {
                None => v(id, format!("heat rate for unknown unit {unit}")),
                Some(t) if t.fuel_contract.as_deref() != Some(id) => {
                    v(id, format!("unit {unit} is not bound to this contract"))
                }
                _ => {}
            }
            if *hr <= 0.0 {
                v(id, format!("non-positive heat rate for {unit}"));
            }
        }
        for t in model.thermal.iter().filter(|t| t.fuel_contract.as_deref() == Some(id)) {
            if !c.heat_rates.iter().any(|(u, _)| u == &t.id) {
                v(id, format!("missing heat rate for unit {}", t.id));
            }
        }
    }

    for b in &model.network.buses {
        if !areas.contains(b.area.as_str()) {
            v(&b.id, format!("unknown area {}", b.area));
        }
        for s in &b.elastic_segments {
            if s.quantity_mw < 0.0 {
                v(&b.id, "negative elastic demand quantity".into());
            }
        }
    }
    for c in &model.network.circuits {
        if !buses.contains(c.from.as_str()) || !buses.contains(c.to.as_str()) {
            v(&c.id, format!("endpoint missing ({} -> {})", c.from, c.to));
        }
        if c.from == c.to {
            v(&c.id, "circuit connects a bus to itself".into());
        }
        if c.capacity_mw < 0.0 {
            v(&c.id, "negative capacity".into());
        }
        if let Some(b) = c.susceptance {
            if b <= 0.0 {
                v(&c.id, "susceptance must be positive".into());
            }
        }
    }
    for m in &model.network.markets {
        let id = format!("market@{}", m.bus);
        if !buses.contains(m.bus.as_str()) {
            v(&id, format!("unknown bus {}", m.bus));
        }
        if m.buy.windows(2).any(|w| w[1].price < w[0].price) {
            v(&id, "buy segments must be ascending in price".into());
        }
        if m.sell.windows(2).any(|w| w[1].price > w[0].price) {
            v(&id, "sell segments must be descending in price".into());
        }
        if m.buy.iter().chain(&m.sell).any(|s| s.quantity_mw < 0.0) {
            v(&id, "negative segment quantity".into());
        }
        if let (Some(b), Some(s)) = (m.buy.first(), m.sell.first()) {
            if s.price > b.price {
                v(&id, "highest sell price exceeds cheapest buy price (arbitrage)".into());
            }
        }
    }

    for a in &model.areas {
        if a.regulation_mw < 0.0 || a.contingency_mw < 0.0 {
            v(&a.id, "reserve requirement must be nonnegative".into());
        }
        for r in &a.shared_resource_ids {
            if !thermals.contains(r.as_str()) {
                v(&a.id, format!("unknown shared resource {r}"));
            }
        }
    }

    for u in &model.vre {
        if !buses.contains(u.bus.as_str()) {
            v(&u.id, format!("unknown bus {}", u.bus));
        }
        if u.capacity_mw < 0.0 {
            v(&u.id, "negative capacity".into());
        }
        if u.is_stochastic() {
            if u.site.is_none() {
                v(&u.id, "wind/solar unit needs a scenario site".into());
            }
        } else {
            match &u.profile_mw {
                Some(p) if p.len() == 24 => {
                    if p.iter().any(|&x| x < 0.0 || x > u.capacity_mw) {
                        v(&u.id, "profile value outside [0, capacity]".into());
                    }
                }
                _ => v(&u.id, "small-hydro/independent unit needs a 24-value profile".into()),
            }
        }
    }

    if model.deficit.is_empty() {
        v("deficit", "at least one deficit step required".into());
    } else {
        if model.deficit.iter().map(|d| d.depth).sum::<f64>() < 1.0 - 1e-12 {
            v("deficit", "deficit depths must cover the whole load".into());
        }
        if model.deficit.windows(2).any(|w| w[1].cost < w[0].cost) {
            v("deficit", "deficit costs must be nondecreasing".into());
        }
        if model.deficit.iter().any(|d| d.depth <= 0.0 || d.cost < 0.0) {
            v("deficit", "deficit steps need positive depth and nonnegative cost".into());
        }
    }
    if model.curtailment_cost < 0.0 {
        v("curtailment_cost", "must be nonnegative".into());
    }
    out
}

fn find_cascade_cycle(model: &SystemModel) -> Option<Vec<String>> {
    let next: HashMap<&str, &str> = model
        .hydro
        .iter()
        .filter_map(|h| h.downstream.as_deref().map(|d| (h.id.as_str(), d)))
        .collect();
    for h in &model.hydro {
        let mut path = vec![h.id.as_str()];
        let mut cur = h.id.as_str();
        while let Some(&d) = next.get(cur) {
            if let Some(pos) = path.iter().position(|&p| p == d) {
                let mut cyc: Vec<String> = path[pos..].iter().map(|s| s.to_string()).collect();
                cyc.push(d.to_string());
                return Some(cyc);
            }
            path.push(d);
            cur = d;
        }
    }
    None
}

/// Index lookups derived from a validated model.
#[derive(Debug, Clone)]
pub struct Topology {
    pub bus_index: HashMap<String, usize>,
    pub area_index: HashMap<String, usize>,
    pub hydro_index: HashMap<String, usize>,
    pub thermal_index: HashMap<String, usize>,
    /// Area of every bus.
    pub bus_area: Vec<usize>,
    /// Upstream plants feeding each hydro plant.
    pub upstream: Vec<Vec<usize>>,
    pub downstream: Vec<Option<usize>>,
    /// Hydro plants ordered upstream first.
    pub hydro_order: Vec<usize>,
    /// Reservoir plants (state variables), in model order.
    pub reservoirs: Vec<usize>,
    /// Areas each thermal unit may carry reserves for (home area first).
    pub thermal_areas: Vec<Vec<usize>>,
    /// Heat rate and contract index per thermal unit.
    pub thermal_contract: Vec<Option<(usize, f64)>>,
    /// Island id per bus, used to pick angle references.
    pub bus_island: Vec<usize>,
}

impl Topology {
    pub fn new(model: &SystemModel) -> Self {
        let index = |ids: Vec<&String>| -> HashMap<String, usize> {
            ids.into_iter().enumerate().map(|(i, s)| (s.clone(), i)).collect()
        };
        let bus_index = index(model.network.buses.iter().map(|b| &b.id).collect());
        let area_index = index(model.areas.iter().map(|a| &a.id).collect());
        let hydro_index = index(model.hydro.iter().map(|h| &h.id).collect());
        let thermal_index = index(model.thermal.iter().map(|t| &t.id).collect());
        let bus_area = model.network.buses.iter().map(|b| area_index[&b.area]).collect();
        let nh = model.hydro.len();
        let downstream: Vec<Option<usize>> = model
            .hydro
            .iter()
            .map(|h| h.downstream.as_ref().map(|d| hydro_index[d]))
            .collect();
        let mut upstream = vec![Vec::new(); nh];
        for (i, d) in downstream.iter().enumerate() {
            if let Some(d) = d {
                upstream[*d].push(i);
            }
        }
        // Topological order (upstream first), ties by model order.
        let mut indeg: Vec<usize> = upstream.iter().map(|u| u.len()).collect();
        let mut order = Vec::with_capacity(nh);
        let mut ready: Vec<usize> = (0..nh).filter(|&i| indeg[i] == 0).collect();
        while let Some(i) = ready.first().copied() {
            ready.remove(0);
            order.push(i);
            if let Some(d) = downstream[i] {
                indeg[d] -= 1;
                if indeg[d] == 0 {
                    ready.push(d);
                    ready.sort_unstable();
                }
            }
        }
        let reservoirs = (0..nh).filter(|&i| model.hydro[i].is_reservoir()).collect();
        let thermal_areas = model
            .thermal
            .iter()
            .map(|t| {
                let home = bus_area_of(model, &area_index, &t.bus);
                let mut v = vec![home];
                for (ai, a) in model.areas.iter().enumerate() {
                    if ai != home && a.shared_resource_ids.iter().any(|r| r == &t.id) {
                        v.push(ai);
                    }
                }
                v
            })
            .collect();
        let contract_index: HashMap<&str, usize> = model
            .fuel_contracts
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.as_str(), i))
            .collect();
        let thermal_contract = model
            .thermal
            .iter()
            .map(|t| {
                t.fuel_contract.as_ref().map(|c| {
                    let ci = contract_index[c.as_str()];
                    let hr = model.fuel_contracts[ci]
                        .heat_rates
                        .iter()
                        .find(|(u, _)| u == &t.id)
                        .map(|(_, h)| *h)
                        .unwrap_or(0.0);
                    (ci, hr)
                })
            })
            .collect();
        let nb = model.network.buses.len();
        let mut island: Vec<usize> = (0..nb).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for c in &model.network.circuits {
            let a = find(&mut island, bus_index[&c.from]);
            let b = find(&mut island, bus_index[&c.to]);
            if a != b {
                island[a.max(b)] = a.min(b);
            }
        }
        let bus_island = (0..nb).map(|b| find(&mut island, b)).collect();
        Topology {
            bus_index,
            area_index,
            hydro_index,
            thermal_index,
            bus_area,
            upstream,
            downstream,
            hydro_order: order,
            reservoirs,
            thermal_areas,
            thermal_contract,
            bus_island,
        }
    }

    pub fn num_areas(&self) -> usize {
        self.area_index.len()
    }
}

fn bus_area_of(model: &SystemModel, area_index: &HashMap<String, usize>, bus: &str) -> usize {
    let b = model.network.buses.iter().find(|b| b.id == bus).expect("validated bus");
    area_index[&b.area]
}

impl SystemModel {
    pub fn max_thermal_cost(&self) -> f64 {
        self.thermal.iter().map(|t| t.variable_cost).fold(0.0, f64::max)
    }

    pub fn top_deficit_cost(&self) -> f64 {
        self.deficit.iter().map(|d| d.cost).fold(0.0, f64::max)
    }

    /// Names of all scenario sites referenced by the model, by variable.
    pub fn scenario_sites(&self) -> Vec<(crate::scenario::Variable, String)> {
        use crate::scenario::Variable;
        let mut out = Vec::new();
        for h in &self.hydro {
            out.push((Variable::Inflow, h.inflow_site.clone()));
        }
        for u in &self.vre {
            if let Some(s) = &u.site {
                let var = if u.kind == VreKind::Wind { Variable::Wind } else { Variable::Solar };
                out.push((var, s.clone()));
            }
        }
        for b in &self.network.buses {
            if let Some(s) = &b.load_site {
                out.push((Variable::Load, s.clone()));
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn minimal_json() -> String {
        r#"{
          "schema_version": 1,
          "hydro": [],
          "thermal": [{"id": "T1", "bus": "B1", "capacity_mw": 100, "min_generation_mw": 0,
                       "variable_cost": 20, "min_up_h": 1, "min_down_h": 1,
                       "ramp_up_mw_h": 100, "ramp_down_mw_h": 100}],
          "network": {"buses": [{"id": "B1", "area": "A1", "load_site": "L1"}], "circuits": []},
          "areas": [{"id": "A1", "regulation_mw": 0, "contingency_mw": 0}]
        }"#
        .to_string()
    }

    #[test]
    fn minimal_file_loads() {
        let m = parse_system(minimal_json().as_bytes(), "inline").unwrap();
        assert_eq!(m.thermal.len(), 1);
        assert!(validate(&m).is_empty());
    }

    #[test]
    fn unknown_field_is_a_parse_error() {
        let bad = minimal_json().replace("\"hydro\": []", "\"hydro\": [], \"colour\": 1");
        match parse_system(bad.as_bytes(), "inline") {
            Err(LoadError::Parse { line, .. }) => assert!(line > 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_min_up_names_the_plant() {
        let mut m = parse_system(minimal_json().as_bytes(), "inline").unwrap();
        m.thermal[0].min_up_h = 0;
        let v = validate(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].entity, "T1");
    }

    #[test]
    fn round_trip_is_identity() {
        let m = parse_system(minimal_json().as_bytes(), "inline").unwrap();
        let again = parse_system(write_system(&m).as_bytes(), "again").unwrap();
        assert_eq!(m, again);
    }
}
