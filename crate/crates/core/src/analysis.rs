//! Attenuation statistics over measurement records.
//!
//! All aggregates run in the dB domain over non-censored RSRP only; censored
//! counts are carried alongside. SDs use the n-1 denominator. Quartiles use
//! linear interpolation between closest ranks: for sorted `x` of length `n`,
//! `h = (n - 1) p` and `q = x[floor(h)] + (h - floor(h)) (x[floor(h)+1] - x[floor(h)])`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::{MeasurementRecord, Rsrp, SENSITIVITY_FLOOR_DBM};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("no non-censored samples")]
    EmptyAfterCensoring,
    #[error("no room has two or more non-censored samples")]
    NoEligibleRooms,
    #[error("need at least two floors with data, found {0}")]
    InsufficientFloors(usize),
    #[error("{0} side has no non-censored samples")]
    EmptySide(Side),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Outdoor,
    Indoor,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Outdoor => "outdoor",
            Side::Indoor => "indoor",
        })
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample SD; 0 for a single value.
fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Quantile of already sorted data by linear interpolation.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    match sorted.get(lo + 1) {
        Some(next) => sorted[lo] + (h - lo as f64) * (next - sorted[lo]),
        None => sorted[lo],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescriptiveStats {
    pub count: usize,
    pub censored_count: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    /// `None` below four samples.
    pub quartiles: Option<Quartiles>,
    /// max - min.
    pub spread: f64,
}

pub fn describe_rsrp(values: impl IntoIterator<Item = Rsrp>) -> Result<DescriptiveStats, AnalysisError> {
    let mut censored = 0;
    let mut v: Vec<f64> = values
        .into_iter()
        .filter_map(|r| {
            censored += usize::from(r.is_censored());
            r.dbm()
        })
        .collect();
    if v.is_empty() {
        return Err(AnalysisError::EmptyAfterCensoring);
    }
    v.sort_by(f64::total_cmp);
    let (min, max) = (v[0], v[v.len() - 1]);
    Ok(DescriptiveStats {
        count: v.len(),
        censored_count: censored,
        mean: mean(&v),
        sd: sd(&v),
        min,
        max,
        quartiles: (v.len() >= 4).then(|| Quartiles {
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
        }),
        spread: max - min,
    })
}

pub fn describe<'a>(
    records: impl IntoIterator<Item = &'a MeasurementRecord>,
) -> Result<DescriptiveStats, AnalysisError> {
    describe_rsrp(records.into_iter().map(|r| r.sample.rsrp))
}

/// Plan records that count as indoor: the outdoor flag (balconies and the
/// like) is not inside the building.
pub fn is_indoor(r: &MeasurementRecord) -> bool {
    r.meta().is_some_and(|m| !m.outdoor_flag)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoomSd {
    pub floor: i32,
    pub room_id: String,
    pub count: usize,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoomSdSummary {
    pub rooms: Vec<RoomSd>,
    /// Rooms with fewer than two non-censored samples.
    pub excluded: Vec<(i32, String)>,
    /// Unweighted mean of the per-room SDs.
    pub mean_sd: f64,
}

/// Per-room SD of indoor records, rooms keyed by (floor, room id).
pub fn room_sd_summary<'a>(
    records: impl IntoIterator<Item = &'a MeasurementRecord>,
) -> Result<RoomSdSummary, AnalysisError> {
    let mut rooms: BTreeMap<(i32, &str), Vec<f64>> = BTreeMap::new();
    for r in records.into_iter().filter(|r| is_indoor(r)) {
        let m = r.meta().expect("indoor record");
        let e = rooms.entry((m.floor, m.room_id.as_str())).or_default();
        e.extend(r.sample.rsrp.dbm());
    }
    let mut out = RoomSdSummary {
        rooms: Vec::new(),
        excluded: Vec::new(),
        mean_sd: 0.0,
    };
    for ((floor, room), v) in rooms {
        if v.len() < 2 {
            out.excluded.push((floor, room.to_string()));
        } else {
            out.rooms.push(RoomSd {
                floor,
                room_id: room.to_string(),
                count: v.len(),
                sd: sd(&v),
            });
        }
    }
    if out.rooms.is_empty() {
        return Err(AnalysisError::NoEligibleRooms);
    }
    out.mean_sd = out.rooms.iter().map(|r| r.sd).sum::<f64>() / out.rooms.len() as f64;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FloorStat {
    pub floor: i32,
    pub count: usize,
    pub censored_count: usize,
    pub best: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FloorGainSeries {
    pub floors: Vec<FloorStat>,
    /// Floors where every sample was censored.
    pub censored_floors: Vec<i32>,
    /// Floors entering the fit.
    pub fit_floors: Vec<i32>,
    /// Least-squares slope of per-floor mean RSRP against floor index, dB/floor.
    pub slope: f64,
    pub intercept: f64,
}

impl FloorGainSeries {
    pub fn floor(&self, floor: i32) -> Option<&FloorStat> {
        self.floors.iter().find(|f| f.floor == floor)
    }

    /// Change of best RSRP between two floors.
    pub fn best_gain(&self, from: i32, to: i32) -> Option<f64> {
        Some(self.floor(to)?.best - self.floor(from)?.best)
    }

    /// Number of consecutive floor steps (among floors with data) where the
    /// best RSRP goes up, and the total number of steps.
    pub fn increasing_steps(&self) -> (usize, usize) {
        let steps = self.floors.windows(2);
        let n = steps.len();
        (self.floors.windows(2).filter(|w| w[1].best > w[0].best).count(), n)
    }
}

/// Per-floor best and mean RSRP of indoor records. The slope is fitted over
/// floors in `fit` that have data.
pub fn floor_height_gain<'a>(
    records: impl IntoIterator<Item = &'a MeasurementRecord>,
    fit: impl std::ops::RangeBounds<i32>,
) -> Result<FloorGainSeries, AnalysisError> {
    let mut by_floor: BTreeMap<i32, (Vec<f64>, usize)> = BTreeMap::new();
    for r in records.into_iter().filter(|r| is_indoor(r)) {
        let e = by_floor.entry(r.floor().expect("indoor record")).or_default();
        match r.sample.rsrp.dbm() {
            Some(v) => e.0.push(v),
            None => e.1 += 1,
        }
    }
    let mut floors = Vec::new();
    let mut censored_floors = Vec::new();
    for (floor, (v, censored)) in by_floor {
        if v.is_empty() {
            censored_floors.push(floor);
            continue;
        }
        floors.push(FloorStat {
            floor,
            count: v.len(),
            censored_count: censored,
            best: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: mean(&v),
        });
    }
    let pts: Vec<(f64, f64)> = floors
        .iter()
        .filter(|f| fit.contains(&f.floor))
        .map(|f| (f64::from(f.floor), f.mean))
        .collect();
    if pts.len() < 2 {
        return Err(AnalysisError::InsufficientFloors(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(FloorGainSeries {
        fit_floors: floors
            .iter()
            .filter(|f| fit.contains(&f.floor))
            .map(|f| f.floor)
            .collect(),
        floors,
        censored_floors,
        slope,
        intercept: my - slope * mx,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildingLossEstimate {
    pub outdoor_mean: f64,
    pub outdoor_sd: f64,
    pub outdoor_count: usize,
    pub indoor_mean: f64,
    pub indoor_sd: f64,
    pub indoor_count: usize,
    pub indoor_censored: usize,
    pub loss_mean: f64,
    /// Root-sum-square of both sides' SDs.
    pub loss_sd: f64,
    /// Censored indoor samples were dropped, so the true loss is higher.
    pub lower_bound: bool,
}

impl BuildingLossEstimate {
    /// From already aggregated means and SDs, e.g. a published table.
    pub fn from_summaries(outdoor_mean: f64, outdoor_sd: f64, indoor_mean: f64, indoor_sd: f64) -> Self {
        Self {
            outdoor_mean,
            outdoor_sd,
            outdoor_count: 0,
            indoor_mean,
            indoor_sd,
            indoor_count: 0,
            indoor_censored: 0,
            loss_mean: outdoor_mean - indoor_mean,
            loss_sd: outdoor_sd.hypot(indoor_sd),
            lower_bound: false,
        }
    }
}

/// Floors compared against the outdoor reference.
pub const LOSS_FLOORS: [i32; 2] = [0, 1];

/// Building loss from two sets of readings. Callers pick the sides; see
/// [`building_loss_of`] for the usual selection.
pub fn building_loss(
    outdoor: impl IntoIterator<Item = Rsrp>,
    indoor: impl IntoIterator<Item = Rsrp>,
) -> Result<BuildingLossEstimate, AnalysisError> {
    let err = |side| move |e| match e {
        AnalysisError::EmptyAfterCensoring => AnalysisError::EmptySide(side),
        e => e,
    };
    let o = describe_rsrp(outdoor).map_err(err(Side::Outdoor))?;
    let i = describe_rsrp(indoor).map_err(err(Side::Indoor))?;
    let mut est = BuildingLossEstimate::from_summaries(o.mean, o.sd, i.mean, i.sd);
    est.outdoor_count = o.count;
    est.indoor_count = i.count;
    est.indoor_censored = i.censored_count;
    est.lower_bound = i.censored_count > 0;
    Ok(est)
}

/// Geodetic records against indoor records on floors 0 and 1.
pub fn building_loss_of(records: &[MeasurementRecord]) -> Result<BuildingLossEstimate, AnalysisError> {
    building_loss(
        records.iter().filter(|r| r.is_outdoor()).map(|r| r.sample.rsrp),
        records
            .iter()
            .filter(|r| is_indoor(r) && LOSS_FLOORS.contains(&r.floor().unwrap_or(i32::MIN)))
            .map(|r| r.sample.rsrp),
    )
}

/// Attenuation of one floor relative to the outdoor mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FloorAttenuation {
    Estimate {
        floor: i32,
        loss_mean: f64,
        censored_count: usize,
    },
    /// Every sample censored: the loss exceeds outdoor mean minus the
    /// sensitivity floor, and nothing more can be said.
    LowerBound { floor: i32, exceeds_db: f64 },
}

impl FloorAttenuation {
    pub fn floor(&self) -> i32 {
        match self {
            Self::Estimate { floor, .. } | Self::LowerBound { floor, .. } => *floor,
        }
    }
}

impl std::fmt::Display for FloorAttenuation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Estimate {
                loss_mean,
                censored_count: 0,
                ..
            } => write!(f, "{loss_mean:.1} dB"),
            Self::Estimate {
                loss_mean,
                censored_count,
                ..
            } => write!(f, "{loss_mean:.1} dB (lower bound, {censored_count} censored)"),
            Self::LowerBound { exceeds_db, .. } => write!(f, "> {exceeds_db:.1} dB (no reception)"),
        }
    }
}

/// Per-floor attenuation against the mean of the geodetic records.
pub fn floor_attenuation(records: &[MeasurementRecord]) -> Result<Vec<FloorAttenuation>, AnalysisError> {
    let outdoor = describe(records.iter().filter(|r| r.is_outdoor()))
        .map_err(|_| AnalysisError::EmptySide(Side::Outdoor))?;
    let mut by_floor: BTreeMap<i32, Vec<Rsrp>> = BTreeMap::new();
    for r in records.iter().filter(|r| is_indoor(r)) {
        by_floor.entry(r.floor().expect("indoor")).or_default().push(r.sample.rsrp);
    }
    Ok(by_floor
        .into_iter()
        .map(|(floor, v)| match describe_rsrp(v) {
            Ok(s) => FloorAttenuation::Estimate {
                floor,
                loss_mean: outdoor.mean - s.mean,
                censored_count: s.censored_count,
            },
            Err(_) => FloorAttenuation::LowerBound {
                floor,
                exceeds_db: outdoor.mean - SENSITIVITY_FLOOR_DBM,
            },
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorBin {
    Good,
    Fair,
    Poor,
    Bad,
    /// No reception.
    None,
}

impl std::str::FromStr for ColorBin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "good" => Self::Good,
            "fair" => Self::Fair,
            "poor" => Self::Poor,
            "bad" => Self::Bad,
            "none" => Self::None,
            _ => return Err(format!("unknown bin {s:?}")),
        })
    }
}

/// Lower edges of the good/fair/poor bins, dBm. Anything below `poor` is bad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorScale {
    pub good: f64,
    pub fair: f64,
    pub poor: f64,
}

impl Default for ColorScale {
    fn default() -> Self {
        Self {
            good: -95.0,
            fair: -105.0,
            poor: -120.0,
        }
    }
}

impl ColorScale {
    pub fn bin(&self, rsrp: Rsrp) -> ColorBin {
        match rsrp.dbm() {
            None => ColorBin::None,
            Some(v) if v >= self.good => ColorBin::Good,
            Some(v) if v >= self.fair => ColorBin::Fair,
            Some(v) if v >= self.poor => ColorBin::Poor,
            Some(_) => ColorBin::Bad,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub id: String,
    pub map_id: String,
    pub x: f64,
    pub y: f64,
    pub floor: i32,
    pub room_id: String,
    pub outdoor_flag: bool,
    pub rsrp: Option<i32>,
    pub bin: ColorBin,
}

/// One point per plan record; censored records keep their place with
/// `rsrp: None` and the no-reception bin.
pub fn scatter3d_export<'a>(
    records: impl IntoIterator<Item = &'a MeasurementRecord>,
    scale: &ColorScale,
) -> Vec<ScatterPoint> {
    records
        .into_iter()
        .filter_map(|r| {
            let (plan, meta) = (r.plan()?, r.meta()?);
            Some(ScatterPoint {
                id: r.id.to_string(),
                map_id: plan.map_id.clone(),
                x: plan.x,
                y: plan.y,
                floor: meta.floor,
                room_id: meta.room_id.clone(),
                outdoor_flag: meta.outdoor_flag,
                rsrp: r.sample.rsrp.dbm().map(|v| v as i32),
                bin: scale.bin(r.sample.rsrp),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildingReport {
    pub building: String,
    pub all: Option<DescriptiveStats>,
    pub outdoor: Option<DescriptiveStats>,
    pub indoor: Option<DescriptiveStats>,
    pub per_floor: BTreeMap<i32, DescriptiveStats>,
    pub loss: Option<BuildingLossEstimate>,
    pub floor_attenuation: Vec<FloorAttenuation>,
    pub floor_gain: Option<FloorGainSeries>,
    pub rooms: Option<RoomSdSummary>,
    /// Why a section is missing.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub buildings: Vec<BuildingReport>,
}

fn keep<T>(notes: &mut Vec<String>, what: &str, r: Result<T, AnalysisError>) -> Option<T> {
    r.map_err(|e| notes.push(format!("{what}: {e}"))).ok()
}

/// Everything the text report shows for one building. The floor-gain fit
/// covers floors >= 1, where the floor term applies.
pub fn building_report(building: &str, records: &[MeasurementRecord]) -> BuildingReport {
    let mut notes = Vec::new();
    let mut per_floor: BTreeMap<i32, Vec<Rsrp>> = BTreeMap::new();
    for r in records.iter().filter(|r| is_indoor(r)) {
        per_floor.entry(r.floor().expect("indoor")).or_default().push(r.sample.rsrp);
    }
    BuildingReport {
        building: building.to_string(),
        all: keep(&mut notes, "all", describe(records)),
        outdoor: keep(&mut notes, "outdoor", describe(records.iter().filter(|r| r.is_outdoor()))),
        indoor: keep(&mut notes, "indoor", describe(records.iter().filter(|r| is_indoor(r)))),
        per_floor: per_floor
            .into_iter()
            .filter_map(|(f, v)| Some((f, describe_rsrp(v).ok()?)))
            .collect(),
        loss: keep(&mut notes, "building loss", building_loss_of(records)),
        floor_attenuation: keep(&mut notes, "floor attenuation", floor_attenuation(records))
            .unwrap_or_default(),
        floor_gain: keep(&mut notes, "floor gain", floor_height_gain(records, 1..)),
        rooms: keep(&mut notes, "rooms", room_sd_summary(records)),
        notes,
    }
}

/// Reports for several buildings, one per (label, records) pair. Runs in
/// parallel with the `parallel` feature.
pub fn analysis_report(campaigns: &[(&str, &[MeasurementRecord])]) -> AnalysisReport {
    #[cfg(feature = "parallel")]
    use rayon::prelude::*;
    #[cfg(feature = "parallel")]
    let it = campaigns.par_iter();
    #[cfg(not(feature = "parallel"))]
    let it = campaigns.iter();
    AnalysisReport {
        buildings: it.map(|(b, r)| building_report(b, r)).collect(),
    }
}

fn stats_line(out: &mut String, label: &str, s: &DescriptiveStats) {
    let _ = write!(
        out,
        "  {label:<10} n={:<5} mean={:>7.1} sd={:>4.1} min={:>5} max={:>5} spread={:>4}",
        s.count, s.mean, s.sd, s.min, s.max, s.spread
    );
    if let Some(q) = &s.quartiles {
        let _ = write!(out, " q1={:.1} med={:.1} q3={:.1}", q.q1, q.median, q.q3);
    }
    if s.censored_count > 0 {
        let _ = write!(out, " censored={}", s.censored_count);
    }
    out.push('\n');
}

impl AnalysisReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for b in &self.buildings {
            let _ = writeln!(out, "== building {} ==", b.building);
            out.push_str("RSRP [dBm]\n");
            for (label, s) in [("all", &b.all), ("outdoor", &b.outdoor), ("indoor", &b.indoor)] {
                if let Some(s) = s {
                    stats_line(&mut out, label, s);
                }
            }
            for (f, s) in &b.per_floor {
                stats_line(&mut out, &format!("floor {f}"), s);
            }
            if let Some(l) = &b.loss {
                let _ = writeln!(
                    out,
                    "Building loss (floors 0-1): {:.1} dB, sd {:.1} dB (outdoor {:.1}/{:.1}, indoor {:.1}/{:.1}){}",
                    l.loss_mean,
                    l.loss_sd,
                    l.outdoor_mean,
                    l.outdoor_sd,
                    l.indoor_mean,
                    l.indoor_sd,
                    if l.lower_bound { ", lower bound" } else { "" }
                );
            }
            if !b.floor_attenuation.is_empty() {
                out.push_str("Attenuation per floor\n");
                for a in &b.floor_attenuation {
                    let _ = writeln!(out, "  floor {:>3}: {a}", a.floor());
                }
            }
            if let Some(g) = &b.floor_gain {
                out.push_str("Best RSRP per floor\n");
                let mut lines: Vec<(i32, String)> = g
                    .floors
                    .iter()
                    .map(|f| (f.floor, format!("{:>5} dBm", f.best)))
                    .chain(g.censored_floors.iter().map(|&f| (f, "no reception".into())))
                    .collect();
                lines.sort_by_key(|l| l.0);
                for (f, text) in lines {
                    let _ = writeln!(out, "  floor {f:>3}: {text}");
                }
                let (up, n) = g.increasing_steps();
                let _ = writeln!(
                    out,
                    "Floor height gain: {:.2} dB/floor over floors {:?}; best RSRP rises on {up} of {n} steps",
                    g.slope, g.fit_floors
                );
            }
            if let Some(r) = &b.rooms {
                let _ = writeln!(
                    out,
                    "Mean room SD: {:.2} dB over {} rooms ({} excluded)",
                    r.mean_sd,
                    r.rooms.len(),
                    r.excluded.len()
                );
            }
            for n in &b.notes {
                let _ = writeln!(out, "note: {n}");
            }
            out.push('\n');
        }
        out
    }
}
