use chrono::{DateTime, NaiveTime, Utc};
use rand::Rng;
use rand_distr::StandardNormal;

use super::geometry::{offset_geo, Local};
use super::propagation::{draw_rng, draw_sample, Placement, PropagationDraw};
use super::{Scenario, SimError, DEFAULT_METERS_PER_PIXEL};
use crate::model::{Rsrp, SignalSample, SENSITIVITY_FLOOR_DBM};
use crate::protocol::{
    render_gga, render_serving_cell, AtResponse, Capabilities, CellIdentity, FixQuality,
    ModemBackend, PositionHint, ProtocolError,
};

/// RSSI over the 1.4 MHz narrowband sits this far above RSRP.
pub const RSSI_OFFSET_DB: i32 = 26;
/// 10·log10(6 RB) + RSRP − RSSI, rounded.
pub const RSRQ_DB: i32 = -18;
/// SINR = RSRP + this, clamped to the reporting range.
pub const SINR_OFFSET_DB: i32 = 125;

/// GNSS streams live in the upper half of the stream space so they never
/// collide with signal draws.
const GNSS_STREAM_BASE: u64 = 1 << 63;

/// Standoff of the default outdoor walk around the first building.
const WALK_STANDOFF_M: f64 = 3.0;
const WALK_POINTS: usize = 16;

/// RSRQ, RSSI and SINR that accompany a reported RSRP. Censored readings use
/// the sensitivity floor.
pub fn derived_indicators(rsrp: Rsrp) -> (i32, i32, i32) {
    let base = match rsrp {
        Rsrp::Dbm(v) => v,
        Rsrp::Censored => SENSITIVITY_FLOOR_DBM as i32,
    };
    let sinr = (base + SINR_OFFSET_DB).clamp(crate::model::SINR_RANGE_DB.0, crate::model::SINR_RANGE_DB.1);
    (RSRQ_DB, base + RSSI_OFFSET_DB, sinr)
}

pub fn sample_from_draw(draw: &PropagationDraw, cell: &CellIdentity, utc: DateTime<Utc>) -> SignalSample {
    let (rsrq, rssi, sinr) = derived_indicators(draw.rsrp);
    SignalSample {
        rsrp: draw.rsrp,
        rsrq,
        rssi,
        sinr,
        tac: cell.tac,
        cid: cell.cid,
        utc,
    }
}

/// Serving-cell response for a draw, bit-exact to the hardware grammar.
pub fn render_wire(draw: &PropagationDraw, cell: &CellIdentity) -> AtResponse {
    render_serving_cell(cell, &sample_from_draw(draw, cell, DateTime::UNIX_EPOCH))
}

/// The simulator as a modem backend.
///
/// Owns an RNG position (draw counter) like a physical modem owns its
/// serial line, so one instance serves one session at a time.
#[derive(Debug, Clone)]
pub struct SimModem {
    scenario: Scenario,
    placement: Placement,
    route: Vec<Placement>,
    route_next: usize,
    draws: u64,
    fixes: u64,
    last: Option<PropagationDraw>,
}

impl SimModem {
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        scenario.validate()?;
        let route = scenario
            .buildings
            .first()
            .map(|b| perimeter(b, WALK_STANDOFF_M, WALK_POINTS))
            .unwrap_or_default()
            .into_iter()
            .map(Placement::Outdoor)
            .collect::<Vec<_>>();
        let placement = route
            .first()
            .cloned()
            .unwrap_or(Placement::Outdoor(scenario.bs));
        Ok(Self {
            scenario,
            placement,
            route,
            route_next: 0,
            draws: 0,
            fixes: 0,
            last: None,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn placement(&self) -> &Placement {
        &self.placement
    }

    pub fn place(&mut self, placement: Placement) {
        self.placement = placement;
    }

    /// Outdoor positions visited, in order, by successive outdoor hints.
    pub fn set_outdoor_route(&mut self, route: Vec<Placement>) {
        self.route = route;
        self.route_next = 0;
    }

    pub fn last_draw(&self) -> Option<&PropagationDraw> {
        self.last.as_ref()
    }

    pub fn draw_count(&self) -> u64 {
        self.draws
    }

    /// Draws at the current placement and advances the counter.
    pub fn draw(&mut self) -> Result<PropagationDraw, SimError> {
        let d = draw_sample(&self.scenario, &self.placement, self.draws)?;
        self.draws += 1;
        self.last = Some(d.clone());
        Ok(d)
    }

    fn true_position(&self) -> crate::model::GeoPosition {
        match &self.placement {
            Placement::Outdoor(p) => *p,
            Placement::Indoor {
                building, local, ..
            } => self
                .scenario
                .building(building)
                .map(|b| offset_geo(&b.anchor, *local))
                .unwrap_or(self.scenario.bs),
        }
    }

    fn plan_placement(&self, map_id: &str, x: f64, y: f64, floor: i32, exposed: bool) -> Option<Placement> {
        let (building, mpp) = match self.scenario.plans.iter().find(|p| p.map_id == map_id) {
            Some(p) => (self.scenario.building(&p.building).ok()?, p.meters_per_pixel),
            None => (self.scenario.buildings.first()?, DEFAULT_METERS_PER_PIXEL),
        };
        let floor = floor.clamp(building.min_floor, building.max_floor);
        Some(Placement::Indoor {
            building: building.id.clone(),
            floor,
            local: plan_to_local(building, mpp, x, y),
            exposed,
        })
    }
}

/// Plan pixel to local meters: the image covers the footprint with its
/// top-left corner at the north-west corner, y growing southwards.
pub(crate) fn plan_to_local(b: &super::BuildingModel, mpp: f64, x: f64, y: f64) -> Local {
    Local::new(x * mpp - b.size_m[0] / 2.0, b.size_m[1] / 2.0 - y * mpp)
}

pub(crate) fn local_to_plan(b: &super::BuildingModel, mpp: f64, p: Local) -> (f64, f64) {
    ((p.east + b.size_m[0] / 2.0) / mpp, (b.size_m[1] / 2.0 - p.north) / mpp)
}

/// Evenly spaced points on a rectangle `standoff` meters outside the
/// footprint.
pub(crate) fn perimeter(b: &super::BuildingModel, standoff: f64, n: usize) -> Vec<crate::model::GeoPosition> {
    let w = b.size_m[0] + 2.0 * standoff;
    let h = b.size_m[1] + 2.0 * standoff;
    let total = 2.0 * (w + h);
    (0..n)
        .map(|i| {
            let s = total * i as f64 / n as f64;
            let local = if s < w {
                Local::new(-w / 2.0 + s, h / 2.0)
            } else if s < w + h {
                Local::new(w / 2.0, h / 2.0 - (s - w))
            } else if s < 2.0 * w + h {
                Local::new(w / 2.0 - (s - w - h), -h / 2.0)
            } else {
                Local::new(-w / 2.0, -h / 2.0 + (s - 2.0 * w - h))
            };
            offset_geo(&b.anchor, local)
        })
        .collect()
}

impl ModemBackend for SimModem {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            signal_readout: true,
            gnss: true,
        }
    }

    fn query_serving_cell(&mut self) -> Result<AtResponse, ProtocolError> {
        let d = self
            .draw()
            .map_err(|e| ProtocolError::Transport(e.to_string()))?;
        Ok(render_wire(&d, &self.scenario.cell))
    }

    fn query_gga(&mut self) -> Result<String, ProtocolError> {
        let k = self.fixes;
        self.fixes += 1;
        let mut rng = draw_rng(self.scenario.seed, GNSS_STREAM_BASE + k);
        let t = NaiveTime::from_num_seconds_from_midnight_opt((43_200 + k % 43_200) as u32, 0)
            .unwrap_or_default();
        if rng.gen::<f64>() < self.scenario.gnss.no_fix_probability {
            return Ok(render_gga(t, None));
        }
        let sigma = self.scenario.gnss.sigma_m;
        let e: f64 = rng.sample(StandardNormal);
        let n: f64 = rng.sample(StandardNormal);
        let p = offset_geo(&self.true_position(), Local::new(sigma * e, sigma * n));
        Ok(render_gga(t, Some((&p, FixQuality::Standard))))
    }

    fn locate(&mut self, hint: &PositionHint) {
        match hint {
            PositionHint::Outdoor => {
                if let Some(p) = self.route.get(self.route_next % self.route.len().max(1)) {
                    self.placement = p.clone();
                    self.route_next += 1;
                }
            }
            PositionHint::Indoor {
                map_id,
                x,
                y,
                floor,
                outdoor_flag,
            } => {
                if let Some(p) = self.plan_placement(map_id, *x, *y, *floor, *outdoor_flag) {
                    self.placement = p;
                }
            }
        }
    }
}
