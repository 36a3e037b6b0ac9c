//! Feasibility audit of a finished run, computed from the store alone.
//!
//! Checks, per scenario: minimum up/down times and ramp limits on the
//! realized (true-up) thermal schedule, the water balance of every
//! realized hydro hour and the chaining of storage between hours, the
//! nodal power balance of the hour-ahead dispatch that was executed, and
//! conservation of each area's realized deviation.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::records as m;
use crate::store::{Query, Record, Store, StoreError};
use crate::Layer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub water_hm3: f64,
    pub bus_mw: f64,
    pub ramp_mw: f64,
    pub area_mw: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            water_hm3: 1e-9,
            bus_mw: 1e-6,
            ramp_mw: 1e-6,
            area_mw: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    MinUp,
    MinDown,
    RampUp,
    RampDown,
    WaterBalance,
    StorageChain,
    BusBalance,
    AreaConservation,
    MissingData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub scenario: u32,
    pub hour: u32,
    pub entity: String,
    pub check: Check,
    /// Size of the violation in the check's unit (hours, MW or hm³).
    pub amount: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub scenarios: usize,
    pub hours_checked: usize,
    pub max_water_residual: f64,
    pub max_bus_residual: f64,
    pub max_area_residual: f64,
    pub findings: Vec<Finding>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn count(&self, check: Check) -> usize {
        self.findings.iter().filter(|f| f.check == check).count()
    }
}

/// Records of one scenario: (layer, entity, metric) -> hour -> value.
#[derive(Default)]
struct Scenario {
    series: HashMap<(Layer, String, String), BTreeMap<u32, f64>>,
}

impl Scenario {
    fn series(&self, layer: Layer, entity: &str, metric: &str) -> Option<&BTreeMap<u32, f64>> {
        self.series.get(&(layer, entity.to_string(), metric.to_string()))
    }

    fn get(&self, layer: Layer, entity: &str, metric: &str, hour: u32) -> Option<f64> {
        self.series(layer, entity, metric)?.get(&hour).copied()
    }

    /// Static value: the only (first) entry of a meta series.
    fn param(&self, entity: &str, metric: &str) -> Option<f64> {
        self.series(Layer::Meta, entity, metric)?.values().next().copied()
    }

    /// Entities carrying `metric` in `layer`, sorted.
    fn entities(&self, layer: Layer, metric: &str) -> Vec<String> {
        let mut v: Vec<String> = self
            .series
            .keys()
            .filter(|(l, _, mm)| *l == layer && mm == metric)
            .map(|(_, e, _)| e.clone())
            .collect();
        v.sort();
        v
    }
}

/// Audits every scenario in the store.
pub fn audit(store: &Store, tol: &Tolerances) -> Result<AuditReport, StoreError> {
    let q = Query {
        layers: Some(vec![Layer::Meta, Layer::HourAhead, Layer::TrueUp]),
        ..Query::default()
    };
    Ok(audit_records(&store.query(&q)?, tol))
}

pub fn audit_records(records: &[Record], tol: &Tolerances) -> AuditReport {
    let mut by_scenario: BTreeMap<u32, Scenario> = BTreeMap::new();
    for r in records {
        by_scenario
            .entry(r.scenario)
            .or_default()
            .series
            .entry((r.layer, r.entity.clone(), r.metric.clone()))
            .or_default()
            .insert(r.hour, r.value);
    }
    let mut report = AuditReport {
        scenarios: by_scenario.len(),
        ..AuditReport::default()
    };
    for (&s, sc) in &by_scenario {
        audit_scenario(s, sc, tol, &mut report);
    }
    report
}

fn audit_scenario(s: u32, sc: &Scenario, tol: &Tolerances, rep: &mut AuditReport) {
    let find = |hour: u32, entity: &str, check: Check, amount: f64, rep: &mut AuditReport| {
        rep.findings.push(Finding {
            scenario: s,
            hour,
            entity: entity.to_string(),
            check,
            amount,
        })
    };
    let units = sc.entities(Layer::TrueUp, m::THERMAL_GENERATION);
    let hours: Vec<u32> = sc
        .series(Layer::TrueUp, m::SYSTEM, m::OBJECTIVE)
        .map(|v| v.keys().copied().collect())
        .unwrap_or_default();
    rep.hours_checked += hours.len();

    for unit in &units {
        let p = |metric: &str| sc.param(unit, metric);
        let (Some(min_up), Some(min_down), Some(ru), Some(rd), Some(on0), Some(h0), Some(g0)) = (
            p(m::MIN_UP_H),
            p(m::MIN_DOWN_H),
            p(m::RAMP_UP),
            p(m::RAMP_DOWN),
            p(m::INITIAL_ON),
            p(m::INITIAL_HOURS),
            p(m::INITIAL_GENERATION),
        ) else {
            find(0, unit, Check::MissingData, 0.0, rep);
            continue;
        };
        let mut cur_on = on0 > 0.5;
        let mut run = h0;
        let mut prev_g = if cur_on { g0 } else { 0.0 };
        let mut prev_avail = true;
        for &h in &hours {
            let (Some(g), Some(c)) = (
                sc.get(Layer::TrueUp, unit, m::THERMAL_GENERATION, h),
                sc.get(Layer::TrueUp, unit, m::COMMITMENT, h),
            ) else {
                find(h, unit, Check::MissingData, 0.0, rep);
                break;
            };
            let avail = sc.get(Layer::Meta, unit, m::AVAILABLE, h).is_none_or(|a| a > 0.5);
            let on = c > 0.5;
            if on != cur_on {
                if cur_on && avail && run < min_up {
                    find(h, unit, Check::MinUp, min_up - run, rep);
                }
                if !cur_on && run < min_down {
                    find(h, unit, Check::MinDown, min_down - run, rep);
                }
                cur_on = on;
                run = 1.0;
            } else {
                run += 1.0;
            }
            if avail && prev_avail {
                if g - prev_g > ru + tol.ramp_mw {
                    find(h, unit, Check::RampUp, g - prev_g - ru, rep);
                }
                if prev_g - g > rd + tol.ramp_mw {
                    find(h, unit, Check::RampDown, prev_g - g - rd, rep);
                }
            }
            prev_g = g;
            prev_avail = avail;
        }
    }

    // Water balance and storage chaining.
    let plants = sc.entities(Layer::Meta, m::HYDRO_INDEX);
    let mut by_index: Vec<(usize, String)> = plants
        .iter()
        .filter_map(|p| sc.param(p, m::HYDRO_INDEX).map(|i| (i as usize, p.clone())))
        .collect();
    by_index.sort();
    let names: Vec<String> = by_index.into_iter().map(|(_, n)| n).collect();
    let mut upstream: Vec<Vec<usize>> = vec![Vec::new(); names.len()];
    for (i, n) in names.iter().enumerate() {
        if let Some(d) = sc.param(n, m::DOWNSTREAM) {
            if d >= 0.0 && (d as usize) < names.len() {
                upstream[d as usize].push(i);
            }
        }
    }
    let hm3 = 3600.0 / 1e6;
    for (i, n) in names.iter().enumerate() {
        if sc.param(n, m::IS_RESERVOIR).is_none_or(|r| r < 0.5) {
            continue;
        }
        let mut prev_out: Option<f64> = None;
        for &h in &hours {
            let val = |e: &str, metric: &str| sc.get(Layer::TrueUp, e, metric, h);
            let (Some(v_in), Some(v_out), Some(q), Some(sp), Some(inflow)) = (
                val(n, m::STORAGE_IN),
                val(n, m::STORAGE_OUT),
                val(n, m::TURBINED),
                val(n, m::SPILL),
                sc.get(Layer::Meta, n, m::INFLOW, h),
            ) else {
                find(h, n, Check::MissingData, 0.0, rep);
                break;
            };
            let mut up = 0.0;
            for &k in &upstream[i] {
                up += val(&names[k], m::TURBINED).unwrap_or(f64::NAN) + val(&names[k], m::SPILL).unwrap_or(f64::NAN);
            }
            let residual = (v_out - v_in - hm3 * (inflow + up - q - sp)).abs();
            let residual = if residual.is_nan() { f64::INFINITY } else { residual };
            rep.max_water_residual = rep.max_water_residual.max(residual);
            if residual > tol.water_hm3 {
                find(h, n, Check::WaterBalance, residual, rep);
            }
            if let Some(po) = prev_out {
                let gap = (v_in - po).abs();
                if gap > tol.water_hm3 {
                    find(h, n, Check::StorageChain, gap, rep);
                }
            }
            prev_out = Some(v_out);
        }
    }

    // Nodal balance of the executed hour-ahead dispatch.
    let buses = sc.entities(Layer::Meta, m::BUS_INDEX);
    let mut bus_names: Vec<(usize, String)> = buses
        .iter()
        .filter_map(|b| sc.param(b, m::BUS_INDEX).map(|i| (i as usize, b.clone())))
        .collect();
    bus_names.sort();
    let nb = bus_names.len();
    let injections: Vec<(String, &str, Vec<(&str, f64)>)> = {
        let mut v = Vec::new();
        for u in sc.entities(Layer::Meta, m::THERMAL_BUS) {
            v.push((u, m::THERMAL_BUS, vec![(m::THERMAL_GENERATION, 1.0)]));
        }
        for u in sc.entities(Layer::Meta, m::HYDRO_BUS) {
            v.push((u, m::HYDRO_BUS, vec![(m::HYDRO_GENERATION, 1.0)]));
        }
        for u in sc.entities(Layer::Meta, m::VRE_BUS) {
            v.push((u, m::VRE_BUS, vec![(m::VRE_AVAILABLE, 1.0), (m::CURTAILMENT, -1.0)]));
        }
        for u in sc.entities(Layer::Meta, m::MARKET_BUS) {
            v.push((u, m::MARKET_BUS, vec![(m::MARKET_BUY, 1.0), (m::MARKET_SELL, -1.0)]));
        }
        v
    };
    let circuits = sc.entities(Layer::Meta, m::CIRCUIT_FROM);
    for &h in &hours {
        let mut r = vec![0.0; nb];
        let mut missing = false;
        let mut get = |e: &str, metric: &str| {
            sc.get(Layer::HourAhead, e, metric, h).unwrap_or_else(|| {
                missing = true;
                0.0
            })
        };
        for (k, (_, bus)) in bus_names.iter().enumerate() {
            r[k] += get(bus, m::DEFICIT) - get(bus, m::LOAD) - get(bus, m::ELASTIC_SERVED);
        }
        for (e, bus_metric, terms) in &injections {
            let Some(b) = sc.param(e, bus_metric) else { continue };
            for (metric, sign) in terms {
                r[b as usize] += sign * get(e, metric);
            }
        }
        for c in &circuits {
            let (Some(f), Some(t)) = (sc.param(c, m::CIRCUIT_FROM), sc.param(c, m::CIRCUIT_TO)) else {
                continue;
            };
            let flow = get(c, m::FLOW);
            r[f as usize] -= flow;
            r[t as usize] += flow;
        }
        if missing {
            find(h, "network", Check::MissingData, 0.0, rep);
            continue;
        }
        for (k, (_, bus)) in bus_names.iter().enumerate() {
            let res = r[k].abs();
            rep.max_bus_residual = rep.max_bus_residual.max(res);
            if res > tol.bus_mw {
                find(h, bus, Check::BusBalance, res, rep);
            }
        }
    }

    // Each area's realized deviation is either deployed or left as mismatch.
    for area in sc.entities(Layer::TrueUp, m::XI) {
        for &h in &hours {
            let val = |metric: &str| sc.get(Layer::TrueUp, &area, metric, h);
            let (Some(xi), Some(d), Some(mm)) = (val(m::XI), val(m::DEPLOYED), val(m::MISMATCH)) else {
                find(h, &area, Check::MissingData, 0.0, rep);
                continue;
            };
            let res = (xi - d - mm).abs();
            rep.max_area_residual = rep.max_area_residual.max(res);
            if res > tol.area_mw {
                find(h, &area, Check::AreaConservation, res, rep);
            }
        }
    }
}
