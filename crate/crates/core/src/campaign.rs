//! Measurement sessions: settings, repeated sampling, position binding, ID
//! assignment and floor plans.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::model::{
    GeoPosition, IndoorMeta, MeasurementId, MeasurementRecord, PlanPosition, Position, SignalSample,
};
use crate::protocol::{read_fix_average, read_signal, ModemBackend, PositionHint, ProtocolError};

/// Assumed DRX/eDRX cycle when none is configured.
pub const DEFAULT_DRX_CYCLE: Duration = Duration::from_millis(2560);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSettings {
    /// GNSS fixes averaged per outdoor position.
    pub gnss_fix_count: u32,
    pub samples_per_position: u32,
    /// Seconds between consecutive signal reads.
    pub interval_s: f64,
}

impl Default for MeasurementSettings {
    fn default() -> Self {
        Self {
            gnss_fix_count: 3,
            samples_per_position: 5,
            interval_s: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{invariant}: {message}")]
pub struct SettingsError {
    pub invariant: &'static str,
    pub message: String,
}

/// Settings checked against the configured DRX cycle. The modem only
/// refreshes its idle-mode estimate once per cycle, so shorter intervals
/// would read stale values.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidSettings {
    gnss_fix_count: usize,
    samples_per_position: usize,
    interval: Duration,
}

impl MeasurementSettings {
    pub fn validate(&self, drx_cycle: Duration) -> Result<ValidSettings, SettingsError> {
        if self.gnss_fix_count < 1 {
            return Err(SettingsError {
                invariant: "gnss_fix_count_positive",
                message: "at least one GNSS fix is required".into(),
            });
        }
        if self.samples_per_position < 1 {
            return Err(SettingsError {
                invariant: "samples_per_position_positive",
                message: "at least one sample per position is required".into(),
            });
        }
        let interval = Duration::try_from_secs_f64(self.interval_s).map_err(|_| SettingsError {
            invariant: "interval_exceeds_drx_cycle",
            message: format!("interval {} s is not a valid duration", self.interval_s),
        })?;
        if interval <= drx_cycle {
            return Err(SettingsError {
                invariant: "interval_exceeds_drx_cycle",
                message: format!(
                    "interval {} s must exceed the DRX cycle of {} s",
                    self.interval_s,
                    drx_cycle.as_secs_f64()
                ),
            });
        }
        Ok(ValidSettings {
            gnss_fix_count: self.gnss_fix_count as usize,
            samples_per_position: self.samples_per_position as usize,
            interval,
        })
    }
}

impl ValidSettings {
    pub fn samples_per_position(&self) -> usize {
        self.samples_per_position
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error(transparent)]
    Backend(#[from] ProtocolError),
    #[error("unknown plan {0:?}")]
    UnknownPlan(String),
    #[error("({x}, {y}) lies outside plan {map_id} ({width}x{height} px)")]
    OutOfBounds {
        map_id: String,
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },
    #[error("plan {0:?} already exists")]
    DuplicatePlanId(String),
    #[error("cannot decode plan image: {0}")]
    UndecodableImage(String),
    #[error("invalid plan name {0:?}")]
    InvalidPlanName(String),
}

/// An uploaded floor plan. Its id is the image file stem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FloorPlan {
    pub id: String,
    pub file_name: String,
    pub content_type: String,
    pub width: u32,
    pub height: u32,
    #[serde(skip)]
    pub image: Arc<Vec<u8>>,
}

impl FloorPlan {
    /// Decodes `bytes` as a raster image named `name` (e.g. `eg-floor1.png`).
    pub fn decode(name: &str, bytes: Vec<u8>) -> Result<Self, CampaignError> {
        let file_name = Path::new(name)
            .file_name()
            .and_then(|f| f.to_str())
            .ok_or_else(|| CampaignError::InvalidPlanName(name.to_string()))?
            .to_string();
        let id = Path::new(&file_name)
            .file_stem()
            .and_then(|s| s.to_str())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| CampaignError::InvalidPlanName(name.to_string()))?
            .to_string();
        let format = image::guess_format(&bytes)
            .map_err(|e| CampaignError::UndecodableImage(e.to_string()))?;
        let img = image::load_from_memory_with_format(&bytes, format)
            .map_err(|e| CampaignError::UndecodableImage(e.to_string()))?;
        Ok(Self {
            id,
            file_name,
            content_type: format.to_mime_type().to_string(),
            width: img.width(),
            height: img.height(),
            image: Arc::new(bytes),
        })
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x < f64::from(self.width) && y < f64::from(self.height)
    }
}

/// Samples taken at one position, not yet numbered.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingPosition {
    pub position: Position,
    pub samples: Vec<SignalSample>,
}

fn sample_series<B: ModemBackend + ?Sized>(
    settings: &ValidSettings,
    backend: &mut B,
    clock: &dyn Clock,
) -> Result<Vec<SignalSample>, ProtocolError> {
    let mut samples = Vec::with_capacity(settings.samples_per_position);
    for i in 0..settings.samples_per_position {
        if i > 0 {
            clock.sleep(settings.interval);
        }
        samples.push(read_signal(backend, clock)?);
    }
    Ok(samples)
}

/// Averages GNSS fixes, then takes the configured number of samples.
/// Nothing is returned unless the whole position succeeds.
pub fn sample_outdoor<B: ModemBackend + ?Sized>(
    settings: &ValidSettings,
    backend: &mut B,
    clock: &dyn Clock,
) -> Result<PendingPosition, CampaignError> {
    backend.locate(&PositionHint::Outdoor);
    let pos: GeoPosition = read_fix_average(backend, settings.gnss_fix_count)?;
    let samples = sample_series(settings, backend, clock)?;
    Ok(PendingPosition {
        position: Position::Geo(pos),
        samples,
    })
}

/// Samples at a clicked plan position. Censored readings are kept.
pub fn sample_indoor<B: ModemBackend + ?Sized>(
    settings: &ValidSettings,
    backend: &mut B,
    clock: &dyn Clock,
    plan: &FloorPlan,
    click: PlanPosition,
    meta: IndoorMeta,
) -> Result<PendingPosition, CampaignError> {
    if click.map_id != plan.id {
        return Err(CampaignError::UnknownPlan(click.map_id));
    }
    if !plan.contains(click.x, click.y) {
        return Err(CampaignError::OutOfBounds {
            map_id: click.map_id,
            x: click.x,
            y: click.y,
            width: plan.width,
            height: plan.height,
        });
    }
    backend.locate(&PositionHint::Indoor {
        map_id: click.map_id.clone(),
        x: click.x,
        y: click.y,
        floor: meta.floor,
        outdoor_flag: meta.outdoor_flag,
    });
    let samples = sample_series(settings, backend, clock)?;
    Ok(PendingPosition {
        position: Position::Plan { plan: click, meta },
        samples,
    })
}

/// One building's measurement campaign. Records are append-only and
/// position ids strictly increase.
#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub campaign_id: String,
    pub building_label: String,
    records: Vec<MeasurementRecord>,
    plans: BTreeMap<String, FloorPlan>,
    next_position_id: u32,
}

impl Campaign {
    pub fn new(campaign_id: impl Into<String>, building_label: impl Into<String>) -> Self {
        Self {
            campaign_id: campaign_id.into(),
            building_label: building_label.into(),
            records: Vec::new(),
            plans: BTreeMap::new(),
            next_position_id: 1,
        }
    }

    /// Rebuilds a campaign from stored records. Records are ordered by id
    /// and the position counter resumes after the highest id seen (or at
    /// `next_position_id` if that is larger).
    pub fn from_records(
        campaign_id: impl Into<String>,
        building_label: impl Into<String>,
        mut records: Vec<MeasurementRecord>,
        next_position_id: u32,
    ) -> Self {
        records.sort_by_key(|r| r.id);
        let after = records.last().map_or(1, |r| r.id.position_id + 1);
        Self {
            campaign_id: campaign_id.into(),
            building_label: building_label.into(),
            records,
            plans: BTreeMap::new(),
            next_position_id: after.max(next_position_id),
        }
    }

    pub fn records(&self) -> &[MeasurementRecord] {
        &self.records
    }

    pub fn record(&self, id: MeasurementId) -> Option<&MeasurementRecord> {
        self.records
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn next_position_id(&self) -> u32 {
        self.next_position_id
    }

    pub fn plans(&self) -> impl Iterator<Item = &FloorPlan> {
        self.plans.values()
    }

    pub fn plan(&self, id: &str) -> Option<&FloorPlan> {
        self.plans.get(id)
    }

    pub fn insert_plan(&mut self, plan: FloorPlan) -> Result<&FloorPlan, CampaignError> {
        use std::collections::btree_map::Entry;
        match self.plans.entry(plan.id.clone()) {
            Entry::Occupied(_) => Err(CampaignError::DuplicatePlanId(plan.id)),
            Entry::Vacant(v) => Ok(v.insert(plan)),
        }
    }

    pub fn upload_plan(&mut self, name: &str, bytes: Vec<u8>) -> Result<&FloorPlan, CampaignError> {
        let plan = FloorPlan::decode(name, bytes)?;
        if self.plans.contains_key(&plan.id) {
            return Err(CampaignError::DuplicatePlanId(plan.id));
        }
        self.insert_plan(plan)
    }

    /// Numbers a finished position `X.1..X.k` and appends it.
    pub fn commit(&mut self, pending: PendingPosition) -> &[MeasurementRecord] {
        let x = self.next_position_id;
        self.next_position_id += 1;
        let start = self.records.len();
        self.records
            .extend(pending.samples.into_iter().enumerate().map(|(i, sample)| {
                MeasurementRecord {
                    id: MeasurementId::new(x, i as u32 + 1),
                    position: pending.position.clone(),
                    sample,
                }
            }));
        &self.records[start..]
    }

    pub fn measure_outdoor<B: ModemBackend + ?Sized>(
        &mut self,
        settings: &ValidSettings,
        backend: &mut B,
        clock: &dyn Clock,
    ) -> Result<Vec<MeasurementRecord>, CampaignError> {
        let pending = sample_outdoor(settings, backend, clock)?;
        Ok(self.commit(pending).to_vec())
    }

    pub fn measure_indoor<B: ModemBackend + ?Sized>(
        &mut self,
        settings: &ValidSettings,
        backend: &mut B,
        clock: &dyn Clock,
        click: PlanPosition,
        meta: IndoorMeta,
    ) -> Result<Vec<MeasurementRecord>, CampaignError> {
        let plan = self
            .plans
            .get(&click.map_id)
            .ok_or_else(|| CampaignError::UnknownPlan(click.map_id.clone()))?;
        let pending = sample_indoor(settings, backend, clock, plan, click, meta)?;
        Ok(self.commit(pending).to_vec())
    }
}

/// A blank white PNG, handy for synthetic plans.
pub fn blank_plan_png(width: u32, height: u32) -> Vec<u8> {
    let img = image::RgbImage::from_pixel(width.max(1), height.max(1), image::Rgb([255, 255, 255]));
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .expect("encoding a PNG in memory cannot fail");
    out.into_inner()
}
