//! Operating state handed from the true-up back to the planning layers, and
//! the decisions each planning layer fixes for the layers below it.

use serde::{Deserialize, Serialize};

use crate::scenario::{ScenarioSet, Variable};
use crate::system::{SystemModel, ThermalPlant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitState {
    pub on: bool,
    /// Consecutive hours in the current on/off state (outage hours count
    /// as off).
    pub hours_in_state: u32,
    pub generation_mw: f64,
    /// False while on forced outage.
    pub available: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    /// Absolute hour of the next decision.
    pub hour: usize,
    /// Storage per hydro plant (zero for run-of-river).
    pub storage_hm3: Vec<f64>,
    pub units: Vec<UnitState>,
    /// Fuel still available today under each contract's nomination.
    pub gas_remaining_mmbtu: Vec<f64>,
    /// Reserves allocated for the current hour, per area: [regulation, contingency].
    pub reserves_mw: Vec<[f64; 2]>,
    /// Net purchase per market bus decided for the current hour.
    pub market_mw: Vec<f64>,
}

impl SystemState {
    pub fn initial(model: &SystemModel) -> Self {
        SystemState {
            hour: 0,
            storage_hm3: model
                .hydro
                .iter()
                .map(|h| if h.is_reservoir() { h.initial_storage_hm3 } else { 0.0 })
                .collect(),
            units: model
                .thermal
                .iter()
                .map(|t| UnitState {
                    on: t.initial_on || t.commitment_class.is_none(),
                    hours_in_state: t.initial_hours_in_state,
                    generation_mw: if t.initial_on { t.initial_generation_mw } else { 0.0 },
                    available: true,
                })
                .collect(),
            gas_remaining_mmbtu: model.fuel_contracts.iter().map(|c| c.take_or_pay_min_mmbtu).collect(),
            reserves_mw: vec![[0.0; 2]; model.areas.len()],
            market_mw: vec![0.0; model.network.markets.len()],
        }
    }

    /// Checks physical bounds; returns a description of the first problem.
    pub fn check(&self, model: &SystemModel) -> Result<(), String> {
        for (h, &v) in model.hydro.iter().zip(&self.storage_hm3) {
            if !v.is_finite() || v < -1e-9 || v > h.max_storage_hm3 + 1e-6 {
                return Err(format!("storage of {} out of bounds: {v}", h.id));
            }
        }
        for (t, u) in model.thermal.iter().zip(&self.units) {
            if !u.generation_mw.is_finite() || u.generation_mw < -1e-9 || u.generation_mw > t.capacity_mw + 1e-6 {
                return Err(format!("generation of {} out of bounds: {}", t.id, u.generation_mw));
            }
        }
        Ok(())
    }
}

/// Advances a unit's on/off counter by one hour.
pub fn advance_counter(unit: &mut UnitState, on: bool) {
    if on == unit.on {
        unit.hours_in_state = unit.hours_in_state.saturating_add(1);
    } else {
        unit.on = on;
        unit.hours_in_state = 1;
    }
}

/// Whether a unit in `state` may switch to `target` at the next hour.
pub fn may_switch(plant: &ThermalPlant, state: &UnitState, target: bool) -> bool {
    if target == state.on {
        return true;
    }
    if target {
        state.available && state.hours_in_state >= plant.min_down_h
    } else {
        state.hours_in_state >= plant.min_up_h && state.generation_mw <= plant.ramp_down_mw_h + 1e-9
    }
}

/// Hour-by-hour on/off sequence that follows `desired` as closely as the
/// unit's minimum up and down times (counted from `state`) allow. Switches
/// are delayed, never advanced. The first hour also respects availability
/// and the ramp-down limit from the current output. A forced outage in the
/// first hour counts as a shutdown for the minimum down time.
pub fn repair_commitment(plant: &ThermalPlant, state: &UnitState, desired: &[bool]) -> Vec<bool> {
    let mut out = Vec::with_capacity(desired.len());
    let mut on = state.on;
    let mut count = state.hours_in_state;
    for (k, &want) in desired.iter().enumerate() {
        let next = if k == 0 && !state.available {
            false
        } else if want == on {
            on
        } else if want {
            if count >= plant.min_down_h { true } else { on }
        } else {
            let ramp_ok = k > 0 || state.generation_mw <= plant.ramp_down_mw_h + 1e-9;
            if count >= plant.min_up_h && ramp_ok { false } else { on }
        };
        if next == on {
            count = count.saturating_add(1);
        } else {
            on = next;
            count = 1;
        }
        out.push(on);
    }
    out
}

/// Index of each model entity's scenario series.
#[derive(Debug, Clone)]
pub struct SeriesMap {
    pub bus_load: Vec<Option<usize>>,
    pub vre: Vec<Option<usize>>,
    pub inflow: Vec<usize>,
}

impl SeriesMap {
    pub fn new(model: &SystemModel, set: &ScenarioSet) -> Result<Self, String> {
        let find = |var: Variable, site: &str| {
            set.index_of(var, site)
                .ok_or_else(|| format!("scenario set lacks {}/{site}", var.name()))
        };
        let bus_load = model
            .network
            .buses
            .iter()
            .map(|b| b.load_site.as_deref().map(|s| find(Variable::Load, s)).transpose())
            .collect::<Result<_, _>>()?;
        let vre = model
            .vre
            .iter()
            .map(|u| {
                if u.is_stochastic() {
                    let var = if u.kind == crate::system::VreKind::Wind { Variable::Wind } else { Variable::Solar };
                    u.site.as_deref().map(|s| find(var, s)).transpose()
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_, _>>()?;
        let inflow = model
            .hydro
            .iter()
            .map(|h| find(Variable::Inflow, &h.inflow_site))
            .collect::<Result<_, _>>()?;
        Ok(SeriesMap { bus_load, vre, inflow })
    }
}

/// Hourly values of every exogenous input over the whole horizon, either a
/// realization or a layer forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyInputs {
    /// Inelastic load per bus (MW).
    pub load: Vec<Vec<f64>>,
    /// Available output per VRE unit (MW).
    pub vre: Vec<Vec<f64>>,
    /// Natural incremental inflow per hydro plant (m³/s).
    pub inflow: Vec<Vec<f64>>,
}

impl HourlyInputs {
    /// Builds inputs from per-series hourly values (`series[k][h]`).
    pub fn from_series(model: &SystemModel, map: &SeriesMap, hours: usize, series: impl Fn(usize, usize) -> f64) -> Self {
        let load = map
            .bus_load
            .iter()
            .map(|k| (0..hours).map(|h| k.map_or(0.0, |k| series(k, h).max(0.0))).collect())
            .collect();
        let vre = model
            .vre
            .iter()
            .zip(&map.vre)
            .map(|(u, k)| {
                (0..hours)
                    .map(|h| match (k, &u.profile_mw) {
                        (Some(k), _) => series(*k, h).clamp(0.0, u.capacity_mw),
                        (None, Some(p)) => p[h % 24],
                        _ => 0.0,
                    })
                    .collect()
            })
            .collect();
        let inflow = map
            .inflow
            .iter()
            .map(|&k| (0..hours).map(|h| series(k, h).max(0.0)).collect())
            .collect();
        HourlyInputs { load, vre, inflow }
    }

    pub fn realization(model: &SystemModel, map: &SeriesMap, set: &ScenarioSet, scenario: usize) -> Self {
        Self::from_series(model, map, set.horizon_hours(), |k, h| set.value(k, scenario, h))
    }

    pub fn from_forecast(model: &SystemModel, map: &SeriesMap, fc: &crate::forecast::Forecast) -> Self {
        let hours = fc.values.first().map_or(0, |v| v.len());
        Self::from_series(model, map, hours, |k, h| fc.get(k, h))
    }

    pub fn hours(&self) -> usize {
        self.inflow
            .first()
            .or(self.load.first())
            .or(self.vre.first())
            .map_or(0, |v| v.len())
    }

    fn avg(series: &[f64], start: usize, len: usize) -> f64 {
        series[start..start + len].iter().sum::<f64>() / len as f64
    }

    pub fn load_avg(&self, bus: usize, start: usize, len: usize) -> f64 {
        Self::avg(&self.load[bus], start, len)
    }

    pub fn vre_avg(&self, unit: usize, start: usize, len: usize) -> f64 {
        Self::avg(&self.vre[unit], start, len)
    }

    pub fn inflow_avg(&self, plant: usize, start: usize, len: usize) -> f64 {
        Self::avg(&self.inflow[plant], start, len)
    }
}

/// Decisions fixed by upper layers, indexed by absolute hour or day.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Fixings {
    /// Planned on/off per unit per hour, with the layer that fixed it.
    pub commitment: Vec<Vec<Option<(bool, crate::Layer)>>>,
    /// Water value per hydro plant per hour ($/hm³), from the week-ahead.
    pub water_value: Vec<Vec<f64>>,
    /// End-of-day storage target per hydro plant per day.
    pub storage_target: Vec<Vec<Option<f64>>>,
    /// Reserves allocated per area per hour.
    pub reserves: Vec<Vec<Option<[f64; 2]>>>,
    /// Gas nomination per contract per day.
    pub nomination: Vec<Vec<Option<f64>>>,
    /// Net market purchase per market per hour, from the hour-ahead.
    pub market: Vec<Vec<Option<f64>>>,
}

impl Fixings {
    pub fn new(model: &SystemModel, hours: usize) -> Self {
        let days = hours.div_ceil(24) + 1;
        Fixings {
            commitment: vec![vec![None; hours]; model.thermal.len()],
            water_value: vec![vec![0.0; hours]; model.hydro.len()],
            storage_target: vec![vec![None; days]; model.hydro.len()],
            reserves: vec![vec![None; hours]; model.areas.len()],
            nomination: vec![vec![None; days]; model.fuel_contracts.len()],
            market: vec![vec![None; hours]; model.network.markets.len()],
        }
    }

    pub fn hours(&self) -> usize {
        self.water_value
            .first()
            .map(|v| v.len())
            .or(self.commitment.first().map(|v| v.len()))
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::CommitmentClass;

    fn plant(up: u32, down: u32) -> ThermalPlant {
        ThermalPlant {
            id: "G".into(),
            bus: "B".into(),
            capacity_mw: 100.0,
            min_generation_mw: 20.0,
            variable_cost: 10.0,
            startup_cost: 0.0,
            min_up_h: up,
            min_down_h: down,
            ramp_up_mw_h: 50.0,
            ramp_down_mw_h: 50.0,
            commitment_class: Some(CommitmentClass::Slow),
            fuel_contract: None,
            initial_on: false,
            initial_hours_in_state: 10,
            initial_generation_mw: 0.0,
            forced_outage_rate: 0.0,
            mean_time_to_repair_h: 10.0,
        }
    }

    #[test]
    fn counter_advances_and_resets() {
        let mut u = UnitState {
            on: true,
            hours_in_state: 2,
            generation_mw: 30.0,
            available: true,
        };
        advance_counter(&mut u, true);
        assert_eq!(u.hours_in_state, 3);
        advance_counter(&mut u, false);
        assert_eq!((u.on, u.hours_in_state), (false, 1));
    }

    #[test]
    fn repair_delays_early_shutdown() {
        let p = plant(4, 2);
        let st = UnitState {
            on: true,
            hours_in_state: 2,
            generation_mw: 30.0,
            available: true,
        };
        let out = repair_commitment(&p, &st, &[false, false, false, false]);
        assert_eq!(out, vec![true, true, false, false]);
    }

    #[test]
    fn repair_keeps_unit_on_when_output_exceeds_ramp_down() {
        let p = plant(1, 1);
        let st = UnitState {
            on: true,
            hours_in_state: 9,
            generation_mw: 90.0,
            available: true,
        };
        assert_eq!(repair_commitment(&p, &st, &[false, false]), vec![true, false]);
    }

    #[test]
    fn outage_shutdown_starts_the_min_down_clock() {
        let p = plant(1, 8);
        let st = UnitState {
            on: true,
            hours_in_state: 20,
            generation_mw: 90.0,
            available: false,
        };
        let out = repair_commitment(&p, &st, &[true; 10]);
        assert_eq!(out, [vec![false; 8], vec![true; 2]].concat());
    }
}
