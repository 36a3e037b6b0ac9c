#!/usr/bin/env python3
"""Writes the fixture systems, scenario models and run configs.

Run from anywhere: python3 fixtures/make_fixtures.py
"""

import json
import math
from pathlib import Path

HERE = Path(__file__).resolve().parent
WEEKS = 52


def write(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1) + "\n")


def reservoir(id, bus, max_hm3, initial, qmax, production, downstream=None, flood=None):
    h = {
        "id": id,
        "kind": "reservoir",
        "bus": bus,
        "max_storage_hm3": max_hm3,
        "min_storage_hm3": round(0.1 * max_hm3, 3),
        "initial_storage_hm3": initial,
        "max_turbining_m3s": qmax,
        "production": production,
        "downstream": downstream,
        "min_spill_m3s": 0.0,
        "max_spill_m3s": 5000.0,
        "inflow_site": f"{id}_in",
    }
    if flood:
        h["flood_control_max_storage_hm3"] = flood
    return h


def run_of_river(id, bus, qmax, production, downstream=None):
    return {
        "id": id,
        "kind": "run_of_river",
        "bus": bus,
        "max_storage_hm3": 0.0,
        "min_storage_hm3": 0.0,
        "max_turbining_m3s": qmax,
        "production": production,
        "downstream": downstream,
        "max_spill_m3s": 5000.0,
        "inflow_site": f"{id}_in",
    }


def thermal(id, bus, cap, pmin, cost, cls, up, down, ramp, startup=0.0, on=None, fuel=None, outage=0.0, mttr=24.0):
    t = {
        "id": id,
        "bus": bus,
        "capacity_mw": cap,
        "min_generation_mw": pmin,
        "variable_cost": cost,
        "startup_cost": startup,
        "min_up_h": up,
        "min_down_h": down,
        "ramp_up_mw_h": ramp,
        "ramp_down_mw_h": ramp,
        "commitment_class": cls,
        "forced_outage_rate": outage,
        "mean_time_to_repair_h": mttr,
    }
    if fuel:
        t["fuel_contract"] = fuel
    if on is not None:
        t["initial_on"] = True
        t["initial_generation_mw"] = on
        t["initial_hours_in_state"] = 48
    else:
        t["initial_hours_in_state"] = 48
    return t


def bus(id, area, load=None):
    b = {"id": id, "area": area}
    if load:
        b["load_site"] = load
    return b


def circuit(id, a, b, cap):
    return {"id": id, "from": a, "to": b, "capacity_mw": cap}


def area(id, reg, cont, shared=()):
    return {"id": id, "regulation_mw": reg, "contingency_mw": cont, "shared_resource_ids": list(shared)}


def site(variable, name, mean, std, phi, cap=None, log=False):
    """Hourly AR(1) site with diurnal standardization (52 x 24 seasons)."""
    s = {
        "variable": variable,
        "site": name,
        "log_transform": log,
        "mean": mean,
        "std": std,
        "phi": [[phi]] * WEEKS,
        "sigma": [math.sqrt(1.0 - phi * phi)] * WEEKS,
        "initial": [0.0],
    }
    if cap is not None:
        s["cap"] = cap
    return s


def seasonal(base, amplitude, phase=0.0):
    return [base * (1.0 + amplitude * math.cos(2 * math.pi * (w - phase) / WEEKS)) for w in range(WEEKS)]


def load_site(name, peak):
    mean, std = [], []
    for w in range(WEEKS):
        season = 1.0 + 0.08 * math.cos(2 * math.pi * (w - 28) / WEEKS)
        for h in range(24):
            shape = 0.72 + 0.28 * math.sin(math.pi * max(0, h - 5) / 18.0) ** 1.5
            m = peak * season * shape
            mean.append(round(m, 4))
            std.append(round(0.04 * m, 4))
    return site("load", name, mean, std, 0.95)


def inflow_site(name, base, amplitude, phase):
    weekly = seasonal(base, amplitude, phase)
    mean = [round(weekly[w], 4) for w in range(WEEKS) for _ in range(24)]
    std = [round(0.2 * weekly[w], 4) for w in range(WEEKS) for _ in range(24)]
    return site("inflow", name, mean, std, 0.98)


def wind_site(name, cap):
    mean = [round(0.35 * cap * (1 + 0.2 * math.cos(2 * math.pi * w / WEEKS)), 4) for w in range(WEEKS) for _ in range(24)]
    std = [round(0.3 * cap, 4)] * (WEEKS * 24)
    return site("wind", name, mean, std, 0.9, cap=cap)


def solar_site(name, cap):
    mean, std = [], []
    for w in range(WEEKS):
        season = 1.0 + 0.25 * math.cos(2 * math.pi * (w - 25) / WEEKS)
        for h in range(24):
            sun = max(0.0, math.sin(math.pi * (h - 6) / 12.0)) if 6 <= h <= 18 else 0.0
            m = 0.75 * cap * season * sun
            mean.append(round(m, 4))
            std.append(round(0.25 * m, 4))
    return site("solar", name, mean, std, 0.8, cap=cap)


def par_model(sites, correlated=()):
    n = len(sites)
    corr = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    names = [s["site"] for s in sites]
    for a, b, r in correlated:
        i, j = names.index(a), names.index(b)
        corr[i][j] = corr[j][i] = r
    return {"order": 1, "periodicity": {"weekly": {"diurnal": True}}, "sites": sites, "correlation": corr}


def system(name, hydro, thermal_units, buses, circuits, areas, vre=(), contracts=(), markets=()):
    return {
        "schema_version": 1,
        "name": name,
        "hydro": hydro,
        "thermal": thermal_units,
        "fuel_contracts": list(contracts),
        "network": {"buses": buses, "circuits": circuits, "markets": list(markets)},
        "areas": areas,
        "vre": list(vre),
    }


def minimal():
    hydro = [reservoir("R1", "B1", 200.0, 120.0, 150.0, [[0.0, 0.0], [150.0, 100.0]])]
    units = [
        thermal("T1", "B1", 120.0, 40.0, 30.0, "intermediate", 4, 4, 60.0, startup=500.0, on=80.0),
        thermal("T2", "B1", 60.0, 5.0, 80.0, "fast", 1, 1, 60.0, startup=50.0),
    ]
    sys = system(
        "minimal",
        hydro,
        units,
        [bus("B1", "A1", "L1")],
        [],
        [area("A1", 5.0, 10.0)],
    )
    sites = [load_site("L1", 190.0), inflow_site("R1_in", 60.0, 0.3, 10)]
    cfg = {
        "system": "system.json",
        "scenarios": {"model": "par.json"},
        "num_scenarios": 3,
        "hours": 24,
        "seed": 7,
        "workers": 1,
        "output_dir": "out",
        "sddp": {"max_iterations": 8, "forward_paths": 3},
    }
    write(HERE / "minimal" / "system.json", sys)
    write(HERE / "minimal" / "par.json", par_model(sites))
    write(HERE / "minimal" / "config.json", cfg)


def cyclic():
    hydro = [
        reservoir("UP", "B1", 100.0, 50.0, 100.0, [[0.0, 0.0], [100.0, 80.0]], downstream="DOWN"),
        reservoir("DOWN", "B1", 100.0, 50.0, 100.0, [[0.0, 0.0], [100.0, 80.0]], downstream="UP"),
    ]
    units = [thermal("T1", "B1", 200.0, 0.0, 40.0, None, 1, 1, 200.0)]
    sys = system("cyclic", hydro, units, [bus("B1", "A1", "L1")], [], [area("A1", 0.0, 0.0)])
    write(HERE / "cyclic" / "system.json", sys)


def desk():
    flood = [round(300.0 - 40.0 * max(0.0, math.cos(2 * math.pi * (w - 4) / WEEKS)), 3) for w in range(WEEKS)]
    hydro = [
        reservoir("R1", "N1", 600.0, 400.0, 300.0, [[0.0, 0.0], [150.0, 110.0], [300.0, 200.0]], downstream="ROR1"),
        run_of_river("ROR1", "N2", 200.0, [[0.0, 0.0], [200.0, 60.0]], downstream="R2"),
        reservoir("R2", "C1", 300.0, 200.0, 250.0, [[0.0, 0.0], [250.0, 150.0]], flood=flood),
        reservoir("R3", "S1", 400.0, 250.0, 180.0, [[0.0, 0.0], [90.0, 70.0], [180.0, 120.0]], downstream="ROR2"),
        run_of_river("ROR2", "S2", 150.0, [[0.0, 0.0], [150.0, 40.0]]),
        reservoir("R4", "C2", 150.0, 100.0, 120.0, [[0.0, 0.0], [120.0, 100.0]]),
    ]
    units = [
        thermal("TS1", "N2", 300.0, 120.0, 25.0, "slow", 24, 12, 120.0, startup=8000.0, on=200.0, outage=0.02, mttr=48.0),
        thermal("TS2", "C2", 250.0, 100.0, 28.0, "slow", 24, 12, 100.0, startup=6000.0, on=150.0, outage=0.02, mttr=48.0),
        thermal("TS3", "S2", 200.0, 80.0, 32.0, "slow", 16, 8, 80.0, startup=4000.0, outage=0.03, mttr=36.0),
        thermal("TI1", "C1", 150.0, 50.0, 15.0, "intermediate", 8, 6, 75.0, startup=1500.0, on=60.0, fuel="G1", outage=0.03),
        thermal("TI2", "N1", 120.0, 40.0, 50.0, "intermediate", 6, 4, 60.0, startup=1000.0, outage=0.03),
        thermal("TI3", "S1", 100.0, 30.0, 55.0, "intermediate", 6, 4, 50.0, startup=800.0, outage=0.03),
        thermal("TF1", "N2", 80.0, 10.0, 90.0, "fast", 1, 1, 80.0, startup=100.0, outage=0.05, mttr=12.0),
        thermal("TF2", "C1", 60.0, 10.0, 100.0, "fast", 1, 1, 60.0, startup=80.0, outage=0.05, mttr=12.0),
        thermal("TF3", "S2", 50.0, 5.0, 110.0, "fast", 2, 1, 50.0, startup=60.0, outage=0.05, mttr=12.0),
        thermal("TF4", "C2", 40.0, 0.0, 150.0, None, 1, 1, 40.0),
    ]
    contracts = [
        {
            "id": "G1",
            "daily_nomination_max_mmbtu": 30000.0,
            "take_or_pay_min_mmbtu": 4000.0,
            "price_per_mmbtu": 4.0,
            "heat_rates": [["TI1", 7.5]],
        }
    ]
    buses = [
        bus("N1", "A1", "load_n1"),
        bus("N2", "A1"),
        bus("C1", "A2", "load_c1"),
        bus("C2", "A2", "load_c2"),
        bus("S1", "A3", "load_s1"),
        bus("S2", "A3"),
    ]
    circuits = [
        circuit("L1", "N1", "N2", 400.0),
        circuit("L2", "N1", "C1", 300.0),
        circuit("L3", "N2", "C1", 300.0),
        circuit("L4", "C1", "C2", 350.0),
        circuit("L5", "C2", "S1", 250.0),
        circuit("L6", "S1", "S2", 300.0),
        circuit("L7", "C2", "S2", 200.0),
        circuit("L8", "N2", "S2", 150.0),
    ]
    areas = [
        area("A1", 20.0, 40.0),
        area("A2", 25.0, 50.0, shared=["TI3"]),
        area("A3", 15.0, 30.0, shared=["TS2"]),
    ]
    vre = [
        {"id": "W1", "kind": "wind", "bus": "N1", "capacity_mw": 150.0, "site": "wind_n"},
        {"id": "W2", "kind": "wind", "bus": "S2", "capacity_mw": 100.0, "site": "wind_s"},
        {"id": "PV1", "kind": "solar", "bus": "C2", "capacity_mw": 120.0, "site": "solar_c"},
        {"id": "SH1", "kind": "small_hydro", "bus": "S1", "capacity_mw": 12.0, "profile_mw": [10.0] * 24},
    ]
    markets = [
        {
            "bus": "N2",
            "buy": [{"price": 80.0, "quantity_mw": 100.0}, {"price": 120.0, "quantity_mw": 100.0}],
            "sell": [{"price": 20.0, "quantity_mw": 100.0}],
        },
        {"bus": "S2", "buy": [{"price": 95.0, "quantity_mw": 150.0}]},
    ]
    sys = system("desk", hydro, units, buses, circuits, areas, vre, contracts, markets)
    sites = [
        inflow_site("R1_in", 120.0, 0.4, 6),
        inflow_site("ROR1_in", 20.0, 0.4, 6),
        inflow_site("R2_in", 60.0, 0.4, 8),
        inflow_site("R3_in", 80.0, 0.35, 10),
        inflow_site("ROR2_in", 10.0, 0.35, 10),
        inflow_site("R4_in", 50.0, 0.3, 12),
        wind_site("wind_n", 150.0),
        wind_site("wind_s", 100.0),
        solar_site("solar_c", 120.0),
        load_site("load_n1", 420.0),
        load_site("load_c1", 380.0),
        load_site("load_c2", 300.0),
        load_site("load_s1", 260.0),
    ]
    # Equicorrelated blocks keep the matrix positive definite.
    blocks = [
        (["R1_in", "ROR1_in", "R2_in"], 0.7),
        (["R3_in", "ROR2_in"], 0.8),
        (["wind_n", "wind_s"], 0.5),
        (["load_n1", "load_c1", "load_c2", "load_s1"], 0.6),
    ]
    correlated = [(a, b, r) for names, r in blocks for i, a in enumerate(names) for b in names[i + 1 :]]
    cfg = {
        "system": "system.json",
        "scenarios": {"model": "par.json"},
        "num_scenarios": 10,
        "hours": 168,
        "seed": 2024,
        "workers": 4,
        "output_dir": "out",
        "sddp": {"max_iterations": 10, "forward_paths": 5},
        "schedule": {"mip_rel_gap": 1e-4},
    }
    write(HERE / "desk" / "system.json", sys)
    write(HERE / "desk" / "par.json", par_model(sites, correlated))
    write(HERE / "desk" / "config.json", cfg)


if __name__ == "__main__":
    minimal()
    cyclic()
    desk()
