use cascadesim_core::audit::{audit_records, Check, Tolerances};
use cascadesim_core::records as m;
use cascadesim_core::store::Record;
use cascadesim_core::Layer;

const HOURS: u32 = 6;

/// One unit, one reservoir, one bus and one area that balance exactly.
fn clean() -> Vec<Record> {
    let mut v = Vec::new();
    let mut meta = |e: &str, metric: &str, x: f64| v.push(Record::new(0, Layer::Meta, 0, e, metric, x));
    meta("T1", m::THERMAL_BUS, 0.0);
    meta("T1", m::MIN_UP_H, 3.0);
    meta("T1", m::MIN_DOWN_H, 2.0);
    meta("T1", m::RAMP_UP, 50.0);
    meta("T1", m::RAMP_DOWN, 50.0);
    meta("T1", m::CAPACITY, 100.0);
    meta("T1", m::MIN_GENERATION, 20.0);
    meta("T1", m::INITIAL_ON, 1.0);
    meta("T1", m::INITIAL_HOURS, 5.0);
    meta("T1", m::INITIAL_GENERATION, 50.0);
    meta("R1", m::HYDRO_INDEX, 0.0);
    meta("R1", m::HYDRO_BUS, 0.0);
    meta("R1", m::DOWNSTREAM, -1.0);
    meta("R1", m::IS_RESERVOIR, 1.0);
    meta("B", m::BUS_INDEX, 0.0);
    for h in 0..HOURS {
        let mut push = |layer, e: &str, metric: &str, x: f64| v.push(Record::new(0, layer, h, e, metric, x));
        if h > 0 {
            push(Layer::Meta, "R1", m::INFLOW, 100.0);
        }
        push(Layer::TrueUp, "T1", m::THERMAL_GENERATION, 50.0);
        push(Layer::TrueUp, "T1", m::COMMITMENT, 1.0);
        push(Layer::TrueUp, "R1", m::TURBINED, 100.0);
        push(Layer::TrueUp, "R1", m::SPILL, 0.0);
        push(Layer::TrueUp, "R1", m::STORAGE_IN, 10.0);
        push(Layer::TrueUp, "R1", m::STORAGE_OUT, 10.0);
        push(Layer::TrueUp, "A", m::XI, 5.0);
        push(Layer::TrueUp, "A", m::DEPLOYED, 5.0);
        push(Layer::TrueUp, "A", m::MISMATCH, 0.0);
        push(Layer::TrueUp, m::SYSTEM, m::OBJECTIVE, 0.0);
        push(Layer::HourAhead, "T1", m::THERMAL_GENERATION, 50.0);
        push(Layer::HourAhead, "R1", m::HYDRO_GENERATION, 80.0);
        push(Layer::HourAhead, "B", m::LOAD, 130.0);
        push(Layer::HourAhead, "B", m::DEFICIT, 0.0);
        push(Layer::HourAhead, "B", m::ELASTIC_SERVED, 0.0);
    }
    // The Meta inflow at the static hour 0 shares a key with the static block.
    v.push(Record::new(0, Layer::Meta, 0, "R1", m::INFLOW, 100.0));
    v
}

fn set(recs: &mut [Record], layer: Layer, hour: u32, entity: &str, metric: &str, value: f64) {
    let r = recs
        .iter_mut()
        .find(|r| r.layer == layer && r.hour == hour && r.entity == entity && r.metric == metric)
        .expect("record exists");
    r.value = value;
}

fn set_unit(recs: &mut [Record], hour: u32, on: bool, gen: f64) {
    set(recs, Layer::TrueUp, hour, "T1", m::COMMITMENT, f64::from(u8::from(on)));
    set(recs, Layer::TrueUp, hour, "T1", m::THERMAL_GENERATION, gen);
    set(recs, Layer::HourAhead, hour, "T1", m::THERMAL_GENERATION, gen);
    // Keep the bus balanced through the deficit slack.
    set(recs, Layer::HourAhead, hour, "B", m::DEFICIT, 50.0 - gen);
}

#[test]
fn balanced_records_are_clean() {
    let rep = audit_records(&clean(), &Tolerances::default());
    assert!(rep.is_clean(), "{:?}", rep.findings);
    assert_eq!(rep.scenarios, 1);
    assert_eq!(rep.hours_checked, HOURS as usize);
    assert_eq!(rep.max_water_residual, 0.0);
    assert_eq!(rep.max_bus_residual, 0.0);
}

#[test]
fn ramp_jumps_are_reported_in_both_directions() {
    let mut r = clean();
    set_unit(&mut r, 2, true, 100.0 + 10.0);
    let rep = audit_records(&r, &Tolerances::default());
    assert_eq!(rep.count(Check::RampUp), 1);
    assert_eq!(rep.count(Check::RampDown), 1);
    let up = rep.findings.iter().find(|f| f.check == Check::RampUp).unwrap();
    assert_eq!((up.hour, up.amount), (2, 10.0));
}

#[test]
fn short_runs_break_min_up_and_min_down() {
    let mut r = clean();
    // Off at hour 1 only: one hour down against a two-hour minimum.
    set_unit(&mut r, 1, false, 0.0);
    let rep = audit_records(&r, &Tolerances::default());
    assert_eq!(rep.count(Check::MinDown), 1);
    assert_eq!(rep.count(Check::MinUp), 0);

    let mut r = clean();
    // Off for hours 1-2, on for 3-4, off again at 5: a two-hour run.
    for (h, on) in [(1, false), (2, false), (3, true), (4, true), (5, false)] {
        set_unit(&mut r, h, on, if on { 50.0 } else { 0.0 });
    }
    let rep = audit_records(&r, &Tolerances::default());
    assert_eq!(rep.count(Check::MinUp), 1, "{:?}", rep.findings);
    assert_eq!(rep.count(Check::MinDown), 0);
    let f = rep.findings.iter().find(|f| f.check == Check::MinUp).unwrap();
    assert_eq!((f.hour, f.amount), (5, 1.0));
}

#[test]
fn forced_outages_are_exempt_from_min_up_and_ramps() {
    let mut r = clean();
    set_unit(&mut r, 0, true, 50.0);
    set_unit(&mut r, 1, false, 0.0);
    set_unit(&mut r, 2, false, 0.0);
    r.push(Record::new(0, Layer::Meta, 1, "T1", m::AVAILABLE, 0.0));
    // Fresh start after the outage with the unit's initial run too short.
    set(&mut r, Layer::Meta, 0, "T1", m::INITIAL_HOURS, 1.0);
    let rep = audit_records(&r, &Tolerances::default());
    assert!(rep.is_clean(), "{:?}", rep.findings);
}

#[test]
fn water_imbalance_and_broken_chain_are_reported() {
    let mut r = clean();
    set(&mut r, Layer::TrueUp, 3, "R1", m::STORAGE_OUT, 10.0 + 1e-6);
    let rep = audit_records(&r, &Tolerances::default());
    assert_eq!(rep.count(Check::WaterBalance), 1);
    assert_eq!(rep.count(Check::StorageChain), 1);
    let chain = rep.findings.iter().find(|f| f.check == Check::StorageChain).unwrap();
    assert_eq!(chain.hour, 4);
    assert!((rep.max_water_residual - 1e-6).abs() < 1e-12);

    // Below tolerance passes.
    let mut r = clean();
    set(&mut r, Layer::TrueUp, 3, "R1", m::STORAGE_OUT, 10.0 + 1e-12);
    set(&mut r, Layer::TrueUp, 4, "R1", m::STORAGE_IN, 10.0 + 1e-12);
    assert!(audit_records(&r, &Tolerances::default()).is_clean());
}

#[test]
fn upstream_releases_enter_the_water_balance() {
    let mut r = clean();
    r.push(Record::new(0, Layer::Meta, 0, "UP", m::HYDRO_INDEX, 1.0));
    r.push(Record::new(0, Layer::Meta, 0, "UP", m::DOWNSTREAM, 0.0));
    r.push(Record::new(0, Layer::Meta, 0, "UP", m::IS_RESERVOIR, 0.0));
    for h in 0..HOURS {
        r.push(Record::new(0, Layer::TrueUp, h, "UP", m::TURBINED, 20.0));
        r.push(Record::new(0, Layer::TrueUp, h, "UP", m::SPILL, 5.0));
    }
    let rep = audit_records(&r, &Tolerances::default());
    assert_eq!(rep.count(Check::WaterBalance), HOURS as usize);
    // Turbining the extra 25 m³/s restores the balance.
    for h in 0..HOURS {
        set(&mut r, Layer::TrueUp, h, "R1", m::TURBINED, 125.0);
    }
    let rep = audit_records(&r, &Tolerances::default());
    assert!(rep.is_clean(), "{:?}", rep.findings);
}

#[test]
fn bus_and_area_residuals_are_reported() {
    let mut r = clean();
    set(&mut r, Layer::HourAhead, 1, "B", m::LOAD, 131.0);
    set(&mut r, Layer::TrueUp, 5, "A", m::MISMATCH, 0.5);
    let rep = audit_records(&r, &Tolerances::default());
    assert_eq!(rep.count(Check::BusBalance), 1);
    assert_eq!(rep.count(Check::AreaConservation), 1);
    assert_eq!(rep.max_bus_residual, 1.0);
    assert_eq!(rep.max_area_residual, 0.5);
}

#[test]
fn missing_records_are_reported() {
    let mut r = clean();
    r.retain(|x| !(x.hour == 3 && x.layer == Layer::TrueUp && x.metric == m::COMMITMENT));
    let rep = audit_records(&r, &Tolerances::default());
    assert_eq!(rep.count(Check::MissingData), 1);
}
