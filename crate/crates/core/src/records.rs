//! Metric names written by the engine and read back by the auditor and the
//! CLI. Each metric belongs to one entity kind, so an entity id only has to
//! be unique within its kind.
//!
//! Static `Meta` records sit at the chain's first hour; indices refer to the
//! model's ordering of buses and hydro plants (`-1` for none).

// Thermal units.
pub const THERMAL_BUS: &str = "thermal_bus";
pub const MIN_UP_H: &str = "min_up_h";
pub const MIN_DOWN_H: &str = "min_down_h";
pub const RAMP_UP: &str = "ramp_up_mw_h";
pub const RAMP_DOWN: &str = "ramp_down_mw_h";
pub const CAPACITY: &str = "capacity_mw";
pub const MIN_GENERATION: &str = "min_generation_mw";
pub const INITIAL_ON: &str = "initial_on";
pub const INITIAL_HOURS: &str = "initial_hours_in_state";
pub const INITIAL_GENERATION: &str = "initial_generation_mw";
pub const AVAILABLE: &str = "available";
pub const THERMAL_GENERATION: &str = "thermal_generation";
pub const COMMITMENT: &str = "commitment";
pub const SETPOINT: &str = "setpoint";

// Hydro plants.
pub const HYDRO_INDEX: &str = "hydro_index";
pub const HYDRO_BUS: &str = "hydro_bus";
pub const DOWNSTREAM: &str = "downstream";
pub const IS_RESERVOIR: &str = "is_reservoir";
pub const INFLOW: &str = "inflow";
pub const HYDRO_GENERATION: &str = "hydro_generation";
pub const TURBINED: &str = "turbined";
pub const SPILL: &str = "spill";
pub const STORAGE: &str = "storage";
pub const STORAGE_IN: &str = "storage_in";
pub const STORAGE_OUT: &str = "storage_out";
pub const WATER_VALUE: &str = "water_value";

// Buses, circuits, VRE units and markets.
pub const BUS_INDEX: &str = "bus_index";
pub const LOAD: &str = "load";
pub const DEFICIT: &str = "deficit";
pub const ELASTIC_SERVED: &str = "elastic_served";
pub const CIRCUIT_FROM: &str = "circuit_from";
pub const CIRCUIT_TO: &str = "circuit_to";
pub const FLOW: &str = "flow";
pub const VRE_BUS: &str = "vre_bus";
pub const VRE_AVAILABLE: &str = "vre_available";
pub const CURTAILMENT: &str = "curtailment";
pub const MARKET_BUS: &str = "market_bus";
pub const MARKET_BUY: &str = "market_buy";
pub const MARKET_SELL: &str = "market_sell";

// Balancing areas.
pub const REGULATION: &str = "regulation";
pub const CONTINGENCY: &str = "contingency";
pub const XI: &str = "deviation";
pub const DEPLOYED: &str = "deployed";
pub const MISMATCH: &str = "mismatch";
/// Entity `<unit>@<area>`.
pub const PARTICIPATION: &str = "participation";

// Whole system.
pub const SYSTEM: &str = "system";
pub const OBJECTIVE: &str = "objective";
pub const THERMAL_COST: &str = "thermal_cost";

pub fn market_entity(index: usize) -> String {
    format!("market{index}")
}
