//! Modem wire protocol: AT serving-cell responses, NMEA GGA sentences and the
//! backend abstraction shared by real hardware and the simulator.
//!
//! The serving-cell grammar is a repository convention modeled on
//! Quectel-style `+QENG` output:
//!
//! ```text
//! +QENG: "servingcell",<state>,"<rat>","<duplex>",<mcc>,<mnc>,<cid-hex>,<pcid-hex>,
//!        <earfcn>,<band>,<ul-bw>,<dl-bw>,<tac-hex>,<rsrp>,<rsrq>,<rssi>,<sinr>
//! OK
//! ```
//!
//! Exactly 17 payload fields. An rsrp of `-999` or an empty rsrp field means
//! the reading is below the modem's sensitivity.

mod at;
mod backend;
mod nmea;
pub mod serial;

pub use at::{
    parse_serving_cell, render_serving_cell, AtResponse, AtStatus, CellIdentity,
    CENSORED_SENTINEL,
};
pub use backend::{
    read_fix_average, read_signal, Capabilities, ModemBackend, PositionHint, FIX_RETRY_FACTOR,
};
pub use nmea::{nmea_checksum, parse_gga, render_gga, FixQuality, GnssFix};

use crate::model::Violation;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("malformed serving-cell response: {0}")]
    MalformedResponse(String),
    #[error("serving cell uses unsupported radio access technology {0:?}")]
    UnsupportedRat(String),
    #[error("NMEA checksum mismatch: sentence says {expected:02X}, computed {computed:02X}")]
    ChecksumMismatch { expected: u8, computed: u8 },
    #[error("GNSS receiver reports no fix")]
    NoFix,
    #[error("malformed NMEA sentence: {0}")]
    MalformedSentence(String),
    #[error("no response terminator within {0:?}")]
    Timeout(std::time::Duration),
    #[error("modem answered ERROR: {0}")]
    ErrorStatus(String),
    #[error("backend lacks the {0} capability")]
    MissingCapability(&'static str),
    #[error("only {got} of {wanted} valid GNSS fixes before the retry budget ran out")]
    InsufficientFixes { wanted: usize, got: usize },
    #[error("sample failed validation: {}", fmt_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("transport error: {0}")]
    Transport(String),
}

fn fmt_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
