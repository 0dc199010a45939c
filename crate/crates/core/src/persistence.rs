//! CSV export/import and on-disk campaign directories.
//!
//! Outdoor and indoor records go to separate files with fixed column
//! orders. Censored RSRP is an empty field, timestamps are ISO-8601 UTC
//! with millisecond precision, floats use the shortest representation that
//! parses back to the same value.

use std::fs;
use std::io;
use std::path::Path;

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::campaign::{Campaign, FloorPlan};
use crate::model::{
    validate_sample, GeoPosition, IndoorMeta, MeasurementId, MeasurementRecord, PlanPosition,
    Position, Rsrp, SignalSample,
};

pub const OUTDOOR_COLUMNS: [&str; 12] = [
    "id", "latitude", "longitude", "altitude", "utc", "date", "tac", "cid", "rsrp", "rsrq", "rssi",
    "sinr",
];

pub const INDOOR_COLUMNS: [&str; 15] = [
    "id", "utc", "date", "tac", "cid", "rsrp", "rsrq", "rssi", "sinr", "room", "floor",
    "outdoor_flag", "map", "x", "y",
];

pub const OUTDOOR_FILE: &str = "outdoor.csv";
pub const INDOOR_FILE: &str = "indoor.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PLAN_DIR: &str = "plans";

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("{file}: header mismatch at column {index}: expected {expected:?}, found {found:?}")]
    SchemaMismatch {
        file: &'static str,
        index: usize,
        expected: String,
        found: String,
    },
    #[error("{file} line {line}, field {field}: {message}")]
    RowError {
        file: &'static str,
        line: u64,
        field: String,
        message: String,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("plan {0}: {1}")]
    Plan(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvFiles {
    pub outdoor: Vec<u8>,
    pub indoor: Vec<u8>,
}

fn utc_str(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn rsrp_str(r: Rsrp) -> String {
    match r {
        Rsrp::Dbm(v) => v.to_string(),
        Rsrp::Censored => String::new(),
    }
}

fn hex(v: u32) -> String {
    format!("{v:X}")
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

/// Renders both CSV files. Rows keep record order.
pub fn export_csv(campaign: &Campaign) -> CsvFiles {
    let mut out = writer();
    let mut ind = writer();
    out.write_record(OUTDOOR_COLUMNS).expect("in-memory write");
    ind.write_record(INDOOR_COLUMNS).expect("in-memory write");
    for r in campaign.records() {
        let s = &r.sample;
        match &r.position {
            Position::Geo(p) => out.write_record([
                r.id.to_string(),
                p.latitude.to_string(),
                p.longitude.to_string(),
                p.altitude.to_string(),
                utc_str(&s.utc),
                s.date().to_string(),
                hex(s.tac),
                hex(s.cid),
                rsrp_str(s.rsrp),
                s.rsrq.to_string(),
                s.rssi.to_string(),
                s.sinr.to_string(),
            ]),
            Position::Plan { plan, meta } => ind.write_record([
                r.id.to_string(),
                utc_str(&s.utc),
                s.date().to_string(),
                hex(s.tac),
                hex(s.cid),
                rsrp_str(s.rsrp),
                s.rsrq.to_string(),
                s.rssi.to_string(),
                s.sinr.to_string(),
                meta.room_id.clone(),
                meta.floor.to_string(),
                meta.outdoor_flag.to_string(),
                plan.map_id.clone(),
                plan.x.to_string(),
                plan.y.to_string(),
            ]),
        }
        .expect("in-memory write");
    }
    CsvFiles {
        outdoor: out.into_inner().expect("in-memory flush"),
        indoor: ind.into_inner().expect("in-memory flush"),
    }
}

struct Row<'a> {
    file: &'static str,
    line: u64,
    cols: &'static [&'static str],
    rec: &'a csv::StringRecord,
}

impl Row<'_> {
    fn err(&self, field: &str, message: impl Into<String>) -> PersistError {
        PersistError::RowError {
            file: self.file,
            line: self.line,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn raw(&self, field: &str) -> &str {
        let i = self.cols.iter().position(|c| *c == field).expect("known column");
        self.rec.get(i).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, field: &str) -> Result<T, PersistError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(field)
            .parse()
            .map_err(|e: T::Err| self.err(field, format!("{:?}: {e}", self.raw(field))))
    }

    fn hex(&self, field: &str) -> Result<u32, PersistError> {
        u32::from_str_radix(self.raw(field), 16)
            .map_err(|e| self.err(field, format!("{:?}: {e}", self.raw(field))))
    }

    fn float(&self, field: &str) -> Result<f64, PersistError> {
        let v: f64 = self.parse(field)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(field, "not finite"))
        }
    }

    fn sample(&self) -> Result<SignalSample, PersistError> {
        let utc = DateTime::parse_from_rfc3339(self.raw("utc"))
            .map_err(|e| self.err("utc", e.to_string()))?
            .with_timezone(&Utc);
        let date: NaiveDate = self.parse("date")?;
        if date != utc.date_naive() {
            return Err(self.err("date", format!("{date} does not match utc {}", self.raw("utc"))));
        }
        let rsrp = match self.raw("rsrp") {
            "" => Rsrp::Censored,
            _ => Rsrp::Dbm(self.parse("rsrp")?),
        };
        let s = SignalSample {
            rsrp,
            rsrq: self.parse("rsrq")?,
            rssi: self.parse("rssi")?,
            sinr: self.parse("sinr")?,
            tac: self.hex("tac")?,
            cid: self.hex("cid")?,
            utc,
        };
        validate_sample(&s).map_err(|v| self.err(v[0].field, v[0].message.clone()))?;
        Ok(s)
    }
}

fn read_file(
    bytes: &[u8],
    file: &'static str,
    cols: &'static [&'static str],
    mut row: impl FnMut(&Row) -> Result<MeasurementRecord, PersistError>,
) -> Result<Vec<MeasurementRecord>, PersistError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut it = rdr.records();
    let header = it.next().transpose()?.unwrap_or_default();
    for i in 0..cols.len().max(header.len()) {
        let (exp, found) = (cols.get(i).copied().unwrap_or(""), header.get(i).unwrap_or(""));
        if exp != found {
            return Err(PersistError::SchemaMismatch {
                file,
                index: i,
                expected: exp.to_string(),
                found: found.to_string(),
            });
        }
    }
    let mut out = Vec::new();
    for rec in it {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let r = Row {
            file,
            line,
            cols,
            rec: &rec,
        };
        if rec.len() != cols.len() {
            return Err(r.err("*", format!("expected {} fields, got {}", cols.len(), rec.len())));
        }
        out.push(row(&r)?);
    }
    Ok(out)
}

fn parse_records(outdoor: &[u8], indoor: &[u8]) -> Result<Vec<MeasurementRecord>, PersistError> {
    let mut recs = read_file(outdoor, OUTDOOR_FILE, &OUTDOOR_COLUMNS, |r| {
        let pos = GeoPosition::new(r.float("latitude")?, r.float("longitude")?, r.float("altitude")?);
        if !pos.is_valid() {
            return Err(r.err("latitude", "position out of range"));
        }
        Ok(MeasurementRecord {
            id: r.parse::<MeasurementId>("id")?,
            position: Position::Geo(pos),
            sample: r.sample()?,
        })
    })?;
    recs.extend(read_file(indoor, INDOOR_FILE, &INDOOR_COLUMNS, |r| {
        let (x, y) = (r.float("x")?, r.float("y")?);
        if x < 0.0 || y < 0.0 {
            return Err(r.err("x", "plan coordinates must be non-negative"));
        }
        Ok(MeasurementRecord {
            id: r.parse::<MeasurementId>("id")?,
            position: Position::Plan {
                plan: PlanPosition {
                    map_id: r.raw("map").to_string(),
                    x,
                    y,
                },
                meta: IndoorMeta {
                    room_id: r.raw("room").to_string(),
                    floor: r.parse("floor")?,
                    outdoor_flag: r.parse("outdoor_flag")?,
                },
            },
            sample: r.sample()?,
        })
    })?);
    let mut seen = std::collections::HashSet::new();
    for r in &recs {
        if !seen.insert(r.id) {
            return Err(PersistError::RowError {
                file: if r.is_outdoor() { OUTDOOR_FILE } else { INDOOR_FILE },
                line: 0,
                field: "id".into(),
                message: format!("duplicate id {}", r.id),
            });
        }
    }
    Ok(recs)
}

/// Rebuilds a campaign from the two CSV files. Plans are not part of the
/// CSV files; see [`load_dir`].
pub fn import_csv(outdoor: &[u8], indoor: &[u8]) -> Result<Campaign, PersistError> {
    Ok(Campaign::from_records("imported", "", parse_records(outdoor, indoor)?, 1))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    campaign_id: String,
    building_label: String,
    next_position_id: u32,
    plans: Vec<PlanEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PlanEntry {
    id: String,
    file: String,
    content_type: String,
}

/// Writes `manifest.json`, both CSV files and plan images into `dir`.
pub fn save_dir(campaign: &Campaign, dir: &Path) -> Result<(), PersistError> {
    fs::create_dir_all(dir.join(PLAN_DIR))?;
    for p in campaign.plans() {
        let path = dir.join(PLAN_DIR).join(&p.file_name);
        if !path.exists() {
            fs::write(path, p.image.as_slice())?;
        }
    }
    let files = export_csv(campaign);
    write_atomic(&dir.join(OUTDOOR_FILE), &files.outdoor)?;
    write_atomic(&dir.join(INDOOR_FILE), &files.indoor)?;
    let manifest = Manifest {
        campaign_id: campaign.campaign_id.clone(),
        building_label: campaign.building_label.clone(),
        next_position_id: campaign.next_position_id(),
        plans: campaign
            .plans()
            .map(|p| PlanEntry {
                id: p.id.clone(),
                file: p.file_name.clone(),
                content_type: p.content_type.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| PersistError::Manifest(e.to_string()))?;
    write_atomic(&dir.join(MANIFEST_FILE), &json)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PersistError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

/// Loads a directory written by [`save_dir`].
pub fn load_dir(dir: &Path) -> Result<Campaign, PersistError> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)
        .map_err(|e| PersistError::Manifest(e.to_string()))?;
    let records = parse_records(&fs::read(dir.join(OUTDOOR_FILE))?, &fs::read(dir.join(INDOOR_FILE))?)?;
    let mut c = Campaign::from_records(
        manifest.campaign_id,
        manifest.building_label,
        records,
        manifest.next_position_id,
    );
    for e in manifest.plans {
        let bytes = fs::read(dir.join(PLAN_DIR).join(&e.file))?;
        let plan = FloorPlan::decode(&e.file, bytes).map_err(|err| PersistError::Plan(e.id.clone(), err.to_string()))?;
        c.insert_plan(plan)
            .map_err(|err| PersistError::Plan(e.id.clone(), err.to_string()))?;
    }
    Ok(c)
}
