//! Multiscale hydrothermal scheduling simulator.
//!
//! A mid-term SDDP policy feeds week-, day- and hour-ahead unit-commitment
//! problems, and an hourly affine-decision-rule true-up evaluates each
//! hour against the realized scenario. Scenario chains run independently
//! on a worker pool and append their decisions to a columnar store.

pub mod audit;
pub mod calendar;
pub mod engine;
pub mod forecast;
pub mod linalg;
pub mod par;
pub mod records;
pub mod scenario;
pub mod schedule;
pub mod sddp;
pub mod state;
pub mod store;
pub mod system;
pub mod trueup;

use serde::{Deserialize, Serialize};

/// Decision layers, in top-down order. `Meta` marks bookkeeping records in
/// the result store (scenario inputs, outages, state snapshots).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Meta,
    WeekAhead,
    DayAhead,
    HourAhead,
    TrueUp,
}

impl Layer {
    pub const ALL: [Layer; 5] = [Layer::Meta, Layer::WeekAhead, Layer::DayAhead, Layer::HourAhead, Layer::TrueUp];

    pub fn name(self) -> &'static str {
        match self {
            Layer::Meta => "meta",
            Layer::WeekAhead => "week_ahead",
            Layer::DayAhead => "day_ahead",
            Layer::HourAhead => "hour_ahead",
            Layer::TrueUp => "true_up",
        }
    }

    pub fn parse(s: &str) -> Option<Layer> {
        Layer::ALL.into_iter().find(|l| l.name() == s)
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Layer> {
        Layer::ALL.get(c as usize).copied()
    }
}
