//! Deterministic propagation simulator.
//!
//! Every draw follows the link budget
//!
//! ```text
//! rsrp = tx_ref - (l_pl + chi_pl + l_b_eff + chi_b)
//! ```
//!
//! where `tx_ref` is the RSRP at the reference distance `d0`, `l_pl` the
//! log-distance path loss beyond `d0` plus a per-site terrain offset, and the
//! `chi` terms zero-mean Gaussian shadowing in dB. Readings weaker than the
//! modem sensitivity come out censored.
//!
//! The simulator implements [`ModemBackend`](crate::protocol::ModemBackend)
//! and speaks the same serving-cell grammar as real hardware.

mod geometry;
mod modem;
mod propagation;
mod scenario;
pub mod survey;

pub use geometry::{distance_m, offset_geo, Local};
pub use modem::{derived_indicators, render_wire, sample_from_draw, SimModem, RSRQ_DB, RSSI_OFFSET_DB, SINR_OFFSET_DB};
pub use propagation::{
    draw_sample, effective_building_loss, free_space_loss, path_loss, Placement, PropagationDraw,
};
pub use scenario::{BuildingModel, FloorAdjustment, GnssModel, PlanBinding, Scenario, DEFAULT_METERS_PER_PIXEL};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("distance {distance_m} m is below the reference distance {d0_m} m")]
    DistanceBelowReference { distance_m: f64, d0_m: f64 },
    #[error("floor {floor} outside building {building} ({min}..={max})")]
    FloorOutOfRange {
        building: String,
        floor: i32,
        min: i32,
        max: i32,
    },
    #[error("unknown building {0:?}")]
    UnknownBuilding(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}
