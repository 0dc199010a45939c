use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geometry::{to_local, Local};
use super::SimError;
use crate::model::GeoPosition;
use crate::protocol::CellIdentity;

pub const DEFAULT_METERS_PER_PIXEL: f64 = 0.1;

/// The simulated world: one base station and the buildings around it.
///
/// Loaded from TOML; see `fixtures/*.toml` for annotated examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_frequency")]
    pub frequency_mhz: f64,
    pub bs: GeoPosition,
    /// RSRP received at `d0_m` from the base station, dBm.
    pub tx_power_rsrp_ref: f64,
    pub d0_m: f64,
    pub path_loss_exponent: f64,
    /// SD of the outdoor shadowing term, dB.
    pub sigma_pl: f64,
    #[serde(default)]
    pub cell: CellIdentity,
    #[serde(default)]
    pub gnss: GnssModel,
    #[serde(default)]
    pub buildings: Vec<BuildingModel>,
    /// How uploaded plan ids map onto buildings (used by the HTTP service).
    #[serde(default)]
    pub plans: Vec<PlanBinding>,
}

fn default_frequency() -> f64 {
    450.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnssModel {
    /// Horizontal SD of each simulated fix, meters.
    pub sigma_m: f64,
    /// Chance that a fix request returns a no-fix sentence.
    pub no_fix_probability: f64,
}

impl Default for GnssModel {
    fn default() -> Self {
        Self {
            sigma_m: 1.5,
            no_fix_probability: 0.0,
        }
    }
}

/// One building. The footprint is an axis-aligned rectangle centred on
/// `anchor`, `size_m = [east-west, north-south]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingModel {
    pub id: String,
    pub anchor: GeoPosition,
    pub size_m: [f64; 2],
    pub min_floor: i32,
    pub max_floor: i32,
    /// Mean building loss at floors 0 and 1, dB.
    pub l_b: f64,
    /// SD of the indoor variability term, dB.
    pub sigma_b: f64,
    /// Gain per floor above floor 1, dB.
    pub floor_gain: f64,
    /// Added below floor 0, dB.
    pub basement_extra_loss: f64,
    /// Added on the half of the building facing away from the BS, dB.
    pub facade_away_penalty: f64,
    /// Site-specific correction to the outdoor path loss (terrain, LOS), dB.
    #[serde(default)]
    pub path_loss_offset: f64,
    /// Site-specific outdoor shadowing SD, overriding the scenario's.
    #[serde(default)]
    pub sigma_pl: Option<f64>,
    /// Extra loss on individual floors (furniture, surrounding buildings).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub floor_adjustments: Vec<FloorAdjustment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloorAdjustment {
    pub floor: i32,
    /// dB, may be negative.
    pub extra_loss: f64,
}

impl BuildingModel {
    pub fn floor_adjustment(&self, floor: i32) -> f64 {
        self.floor_adjustments
            .iter()
            .filter(|a| a.floor == floor)
            .map(|a| a.extra_loss)
            .sum()
    }

    pub fn floors(&self) -> std::ops::RangeInclusive<i32> {
        self.min_floor..=self.max_floor
    }

    pub fn contains(&self, p: Local, margin: f64) -> bool {
        p.east.abs() <= self.size_m[0] / 2.0 + margin && p.north.abs() <= self.size_m[1] / 2.0 + margin
    }

    /// Unit vector from the building centre towards the base station.
    pub fn bs_direction(&self, bs: &GeoPosition) -> Local {
        let v = to_local(&self.anchor, bs);
        let n = v.norm();
        Local::new(v.east / n, v.north / n)
    }

    /// Whether a local point lies on the BS-facing half of the footprint.
    pub fn toward_bs(&self, bs: &GeoPosition, p: Local) -> bool {
        self.bs_direction(bs).dot(p) >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanBinding {
    pub map_id: String,
    pub building: String,
    #[serde(default = "default_mpp")]
    pub meters_per_pixel: f64,
}

fn default_mpp() -> f64 {
    DEFAULT_METERS_PER_PIXEL
}

impl Default for Scenario {
    /// A single office building 3.7 km from the base station, with outdoor
    /// readings around -100 dBm.
    fn default() -> Self {
        let bs = GeoPosition::new(50.6983, 7.0995, 250.0);
        let anchor = super::geometry::offset_geo(&bs, Local::new(0.0, 3700.0));
        Self {
            seed: 42,
            frequency_mhz: 450.0,
            bs,
            tx_power_rsrp_ref: -83.0,
            d0_m: 1000.0,
            path_loss_exponent: 3.0,
            sigma_pl: 6.0,
            cell: CellIdentity::default(),
            gnss: GnssModel::default(),
            buildings: vec![BuildingModel {
                id: "default".into(),
                anchor: GeoPosition::new(anchor.latitude, anchor.longitude, 60.0),
                size_m: [60.0, 20.0],
                min_floor: -1,
                max_floor: 4,
                l_b: 20.0,
                sigma_b: 4.0,
                floor_gain: 2.0,
                basement_extra_loss: 30.0,
                facade_away_penalty: 10.0,
                path_loss_offset: 0.0,
                sigma_pl: None,
                floor_adjustments: Vec::new(),
            }],
            plans: Vec::new(),
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let s: Scenario =
            toml::from_str(text).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::InvalidScenario(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if !(self.path_loss_exponent > 0.0) {
            return bad(format!("path_loss_exponent must be > 0, got {}", self.path_loss_exponent));
        }
        if !(self.sigma_pl >= 0.0) {
            return bad(format!("sigma_pl must be >= 0, got {}", self.sigma_pl));
        }
        if !(self.d0_m > 0.0) {
            return bad(format!("d0_m must be > 0, got {}", self.d0_m));
        }
        if !(self.frequency_mhz > 0.0) {
            return bad(format!("frequency_mhz must be > 0, got {}", self.frequency_mhz));
        }
        if !self.bs.is_valid() {
            return bad("bs position out of range".into());
        }
        if !(0.0..=1.0).contains(&self.gnss.no_fix_probability) || !(self.gnss.sigma_m >= 0.0) {
            return bad("gnss model out of range".into());
        }
        let mut ids = HashSet::new();
        for b in &self.buildings {
            if !ids.insert(b.id.as_str()) {
                return bad(format!("duplicate building id {:?}", b.id));
            }
            let nonneg = [
                ("l_b", b.l_b),
                ("sigma_b", b.sigma_b),
                ("floor_gain", b.floor_gain),
                ("basement_extra_loss", b.basement_extra_loss),
                ("facade_away_penalty", b.facade_away_penalty),
            ];
            for (name, v) in nonneg {
                if !(v >= 0.0) {
                    return bad(format!("building {}: {name} must be >= 0, got {v}", b.id));
                }
            }
            if let Some(s) = b.sigma_pl {
                if !(s >= 0.0) {
                    return bad(format!("building {}: sigma_pl must be >= 0", b.id));
                }
            }
            if b.min_floor > b.max_floor {
                return bad(format!("building {}: min_floor > max_floor", b.id));
            }
            if !(b.size_m[0] > 0.0 && b.size_m[1] > 0.0) {
                return bad(format!("building {}: footprint must be positive", b.id));
            }
            if !b.anchor.is_valid() {
                return bad(format!("building {}: anchor out of range", b.id));
            }
        }
        for p in &self.plans {
            if !ids.contains(p.building.as_str()) {
                return bad(format!("plan {} refers to unknown building {}", p.map_id, p.building));
            }
            if !(p.meters_per_pixel > 0.0) {
                return bad(format!("plan {}: meters_per_pixel must be > 0", p.map_id));
            }
        }
        Ok(())
    }

    pub fn building(&self, id: &str) -> Result<&BuildingModel, SimError> {
        self.buildings
            .iter()
            .find(|b| b.id == id)
            .ok_or_else(|| SimError::UnknownBuilding(id.to_string()))
    }

    pub fn building_mut(&mut self, id: &str) -> Result<&mut BuildingModel, SimError> {
        self.buildings
            .iter_mut()
            .find(|b| b.id == id)
            .ok_or_else(|| SimError::UnknownBuilding(id.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips_through_toml() {
        let s = Scenario::default();
        assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn rejects_invalid_values() {
        let mut s = Scenario::default();
        s.path_loss_exponent = 0.0;
        assert!(s.validate().is_err());
        let mut s = Scenario::default();
        s.buildings[0].l_b = -1.0;
        assert!(s.validate().is_err());
        let mut s = Scenario::default();
        s.d0_m = 0.0;
        assert!(s.validate().is_err());
        let mut s = Scenario::default();
        s.sigma_pl = f64::NAN;
        assert!(s.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = format!("bogus = 1\n{}", Scenario::default().to_toml());
        assert!(Scenario::from_toml(&text).is_err());
    }

    #[test]
    fn shipped_fixtures_load() {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
        let mut d = Scenario::load(format!("{dir}/default.toml")).unwrap();
        assert_eq!(d.plans.len(), 3);
        d.plans.clear();
        assert_eq!(d, Scenario::default());
        let bonn = Scenario::load(format!("{dir}/bonn.toml")).unwrap();
        let ids: Vec<_> = bonn.buildings.iter().map(|b| b.id.as_str()).collect();
        assert_eq!(ids, ["A", "B", "C"]);
        let km: Vec<_> = bonn
            .buildings
            .iter()
            .map(|b| (super::super::distance_m(&bonn.bs, &b.anchor) / 100.0).round() / 10.0)
            .collect();
        assert_eq!(km, [3.7, 10.0, 5.0]);
    }
}
