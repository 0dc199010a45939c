//! Measurement station for LTE building attenuation campaigns.
//!
//! Signal samples come from a [`protocol::ModemBackend`], either a serial
//! modem or the built-in [`sim`] propagation simulator. [`campaign`] binds
//! them to GNSS or floor-plan positions, [`persistence`] writes the CSV
//! files and [`analysis`] computes building loss, floor height gain and
//! spread statistics.

pub mod clock;
pub mod model;
pub mod protocol;
pub mod sim;
pub mod campaign;
pub mod persistence;
pub mod analysis;
pub mod sweep;
