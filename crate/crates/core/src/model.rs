//! Domain types shared by every part of the measurement station.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

/// Lowest RSRP the modem can report. Anything weaker is "no reception".
pub const SENSITIVITY_FLOOR_DBM: f64 = -140.0;
/// Upper end of the LTE RSRP reporting range.
pub const RSRP_CEILING_DBM: f64 = -44.0;

pub const RSRQ_RANGE_DB: (i32, i32) = (-34, 3);
pub const SINR_RANGE_DB: (i32, i32) = (-23, 40);

/// Reference signal received power, either a reading in dBm or censored.
///
/// A censored reading carries no number and is excluded from every
/// aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rsrp {
    Dbm(i32),
    Censored,
}

impl Rsrp {
    pub fn dbm(self) -> Option<f64> {
        match self {
            Rsrp::Dbm(v) => Some(f64::from(v)),
            Rsrp::Censored => None,
        }
    }

    pub fn is_censored(self) -> bool {
        matches!(self, Rsrp::Censored)
    }
}

/// One modem readout of the serving cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalSample {
    pub rsrp: Rsrp,
    pub rsrq: i32,
    pub rssi: i32,
    pub sinr: i32,
    pub tac: u32,
    pub cid: u32,
    pub utc: DateTime<Utc>,
}

impl SignalSample {
    pub fn date(&self) -> NaiveDate {
        self.utc.date_naive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks the reporting-range invariants of a sample.
///
/// Returns every violated field rather than stopping at the first one.
pub fn validate_sample(s: &SignalSample) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if let Rsrp::Dbm(v) = s.rsrp {
        let v = f64::from(v);
        if v < SENSITIVITY_FLOOR_DBM {
            out.push(Violation {
                field: "rsrp",
                message: format!("rsrp below {SENSITIVITY_FLOOR_DBM} dBm ({v})"),
            });
        } else if v > RSRP_CEILING_DBM {
            out.push(Violation {
                field: "rsrp",
                message: format!("rsrp above {RSRP_CEILING_DBM} dBm ({v})"),
            });
        }
    }
    if s.rsrq < RSRQ_RANGE_DB.0 || s.rsrq > RSRQ_RANGE_DB.1 {
        out.push(Violation {
            field: "rsrq",
            message: format!(
                "rsrq {} outside [{}, {}] dB",
                s.rsrq, RSRQ_RANGE_DB.0, RSRQ_RANGE_DB.1
            ),
        });
    }
    if s.sinr < SINR_RANGE_DB.0 || s.sinr > SINR_RANGE_DB.1 {
        out.push(Violation {
            field: "sinr",
            message: format!(
                "sinr {} outside [{}, {}] dB",
                s.sinr, SINR_RANGE_DB.0, SINR_RANGE_DB.1
            ),
        });
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// `X.Y`: position X, sample Y at that position (Y starts at 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MeasurementId {
    pub position_id: u32,
    pub sample_id: u32,
}

impl MeasurementId {
    pub fn new(position_id: u32, sample_id: u32) -> Self {
        Self {
            position_id,
            sample_id,
        }
    }
}

impl fmt::Display for MeasurementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.position_id, self.sample_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid measurement id {0:?}, expected X.Y")]
pub struct ParseIdError(pub String);

impl FromStr for MeasurementId {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseIdError(s.to_string());
        let (x, y) = s.split_once('.').ok_or_else(err)?;
        let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
        if !digits(x) || !digits(y) {
            return Err(err());
        }
        Ok(Self {
            position_id: x.parse().map_err(|_| err())?,
            sample_id: y.parse().map_err(|_| err())?,
        })
    }
}

impl Serialize for MeasurementId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MeasurementId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// WGS-84 position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPosition {
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
}

impl GeoPosition {
    pub fn new(latitude: f64, longitude: f64, altitude: f64) -> Self {
        Self {
            latitude,
            longitude,
            altitude,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.latitude.abs() <= 90.0
            && self.longitude.abs() <= 180.0
            && self.latitude.is_finite()
            && self.longitude.is_finite()
            && self.altitude.is_finite()
    }
}

/// Pixel coordinates on an uploaded floor plan image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanPosition {
    pub map_id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndoorMeta {
    pub room_id: String,
    /// -1 is a (partially) underground level.
    pub floor: i32,
    /// Set for balconies, terraces and similar plan positions outdoors.
    pub outdoor_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Position {
    Geo(GeoPosition),
    Plan { plan: PlanPosition, meta: IndoorMeta },
}

/// A signal sample bound to where it was taken.
///
/// Plan positions always carry indoor metadata and geodetic positions never
/// do; the `Position` enum makes the other combinations unrepresentable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub id: MeasurementId,
    pub position: Position,
    pub sample: SignalSample,
}

impl MeasurementRecord {
    pub fn is_outdoor(&self) -> bool {
        matches!(self.position, Position::Geo(_))
    }

    pub fn meta(&self) -> Option<&IndoorMeta> {
        match &self.position {
            Position::Plan { meta, .. } => Some(meta),
            Position::Geo(_) => None,
        }
    }

    pub fn plan(&self) -> Option<&PlanPosition> {
        match &self.position {
            Position::Plan { plan, .. } => Some(plan),
            Position::Geo(_) => None,
        }
    }

    pub fn floor(&self) -> Option<i32> {
        self.meta().map(|m| m.floor)
    }
}
