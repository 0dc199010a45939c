//! Synthetic campaigns: walks a simulated building the way an operator
//! would, through the regular campaign code and a virtual clock.
//!
//! Outdoors the walk circles the footprint at a small standoff. Indoors
//! every floor gets one plan image covering the footprint, with rooms laid
//! out in two rows (north and south of a corridor) and a fixed pattern of
//! points per room. Every floor uses the same points, so floors differ only
//! by their building loss.

use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};

use super::modem::{local_to_plan, perimeter};
use super::{Local, Placement, PlanBinding, Scenario, SimError, SimModem};
use crate::campaign::{
    blank_plan_png, Campaign, CampaignError, MeasurementSettings, SettingsError, DEFAULT_DRX_CYCLE,
};
use crate::clock::{Clock, VirtualClock};
use crate::model::{IndoorMeta, PlanPosition};

/// Point pattern within a room, as fractions of its width and depth.
const ROOM_PATTERN: [(f64, f64); 9] = [
    (0.5, 0.5),
    (0.25, 0.25),
    (0.75, 0.25),
    (0.25, 0.75),
    (0.75, 0.75),
    (0.5, 0.25),
    (0.5, 0.75),
    (0.25, 0.5),
    (0.75, 0.5),
];

/// Time spent walking between positions.
const WALK_TIME: Duration = Duration::from_secs(20);

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyPlan {
    pub building: String,
    pub outdoor_positions: usize,
    pub standoff_m: f64,
    /// Inclusive; `None` surveys every floor of the building.
    pub floors: Option<(i32, i32)>,
    /// Split evenly over the two rows.
    pub rooms_per_floor: usize,
    /// Up to 9.
    pub points_per_room: usize,
    pub settings: MeasurementSettings,
    pub meters_per_pixel: f64,
    pub start: DateTime<Utc>,
}

impl SurveyPlan {
    /// 24 outdoor positions at 3 m, 6 rooms per floor with 5 points each,
    /// default settings.
    pub fn new(building: impl Into<String>) -> Self {
        Self {
            building: building.into(),
            outdoor_positions: 24,
            standoff_m: 3.0,
            floors: None,
            rooms_per_floor: 6,
            points_per_room: 5,
            settings: MeasurementSettings::default(),
            meters_per_pixel: 0.1,
            start: Utc.with_ymd_and_hms(2024, 5, 14, 8, 0, 0).unwrap(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SurveyError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Settings(#[from] SettingsError),
    #[error(transparent)]
    Campaign(#[from] CampaignError),
    #[error("survey plan: {0}")]
    Plan(String),
}

pub fn plan_id(building: &str, floor: i32) -> String {
    format!("{building}_floor{floor}")
}

/// Room id and plan pixel of every indoor point on one floor.
pub fn room_points(
    scenario: &Scenario,
    plan: &SurveyPlan,
) -> Result<Vec<(String, f64, f64)>, SurveyError> {
    let b = scenario.building(&plan.building)?;
    let cols = plan.rooms_per_floor.div_ceil(2).max(1);
    let (w, d) = (b.size_m[0] / cols as f64, b.size_m[1] / 2.0);
    let mut out = Vec::new();
    for room in 0..plan.rooms_per_floor {
        let (row, col) = (room / cols, room % cols);
        let west = -b.size_m[0] / 2.0 + col as f64 * w;
        let north = b.size_m[1] / 2.0 - row as f64 * d;
        for &(fx, fy) in ROOM_PATTERN.iter().take(plan.points_per_room) {
            let local = Local::new(west + fx * w, north - fy * d);
            let (x, y) = local_to_plan(b, plan.meters_per_pixel, local);
            out.push((format!("{:02}", room + 1), x.round(), y.round()));
        }
    }
    Ok(out)
}

/// Runs the survey and returns the finished campaign.
pub fn run_survey(scenario: &Scenario, plan: &SurveyPlan) -> Result<Campaign, SurveyError> {
    if plan.points_per_room > ROOM_PATTERN.len() {
        return Err(SurveyError::Plan(format!(
            "at most {} points per room",
            ROOM_PATTERN.len()
        )));
    }
    let b = scenario.building(&plan.building)?.clone();
    let (lo, hi) = plan.floors.unwrap_or((b.min_floor, b.max_floor));
    if lo < b.min_floor || hi > b.max_floor {
        return Err(SimError::FloorOutOfRange {
            building: b.id.clone(),
            floor: if lo < b.min_floor { lo } else { hi },
            min: b.min_floor,
            max: b.max_floor,
        }
        .into());
    }

    let mut scenario = scenario.clone();
    scenario.plans.retain(|p| p.building != b.id);
    for f in lo..=hi {
        scenario.plans.push(PlanBinding {
            map_id: plan_id(&b.id, f),
            building: b.id.clone(),
            meters_per_pixel: plan.meters_per_pixel,
        });
    }
    let points = room_points(&scenario, plan)?;
    let mut modem = SimModem::new(scenario)?;
    modem.set_outdoor_route(
        perimeter(&b, plan.standoff_m, plan.outdoor_positions)
            .into_iter()
            .map(Placement::Outdoor)
            .collect(),
    );
    let settings = plan.settings.validate(DEFAULT_DRX_CYCLE)?;
    let clock = VirtualClock::new(plan.start);

    let mut campaign = Campaign::new(format!("survey-{}", b.id), b.id.clone());
    let png = blank_plan_png(
        (b.size_m[0] / plan.meters_per_pixel).ceil() as u32,
        (b.size_m[1] / plan.meters_per_pixel).ceil() as u32,
    );
    for f in lo..=hi {
        campaign.upload_plan(&format!("{}.png", plan_id(&b.id, f)), png.clone())?;
    }

    for _ in 0..plan.outdoor_positions {
        campaign.measure_outdoor(&settings, &mut modem, &clock)?;
        clock.sleep(WALK_TIME);
    }
    for f in lo..=hi {
        for (room, x, y) in &points {
            let click = PlanPosition {
                map_id: plan_id(&b.id, f),
                x: *x,
                y: *y,
            };
            let meta = IndoorMeta {
                room_id: format!("{f}.{room}"),
                floor: f,
                outdoor_flag: false,
            };
            campaign.measure_indoor(&settings, &mut modem, &clock, click, meta)?;
            clock.sleep(WALK_TIME);
        }
    }
    Ok(campaign)
}
