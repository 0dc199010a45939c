use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::geometry::{distance_m, offset_geo, to_local, Local};
use super::{BuildingModel, Scenario, SimError};
use crate::model::{GeoPosition, Rsrp, RSRP_CEILING_DBM, SENSITIVITY_FLOOR_DBM};

/// Outdoor positions within this distance of a footprint take that
/// building's site corrections.
const SITE_MARGIN_M: f64 = 50.0;

/// Free-space loss, `d` in km and `f` in MHz.
pub fn free_space_loss(d_km: f64, f_mhz: f64) -> f64 {
    32.44 + 20.0 * d_km.log10() + 20.0 * f_mhz.log10()
}

/// Log-distance path loss anchored at the free-space loss at `d0`.
pub fn path_loss(d_m: f64, scenario: &Scenario) -> Result<f64, SimError> {
    if !(d_m >= scenario.d0_m) {
        return Err(SimError::DistanceBelowReference {
            distance_m: d_m,
            d0_m: scenario.d0_m,
        });
    }
    let anchor = free_space_loss(scenario.d0_m / 1000.0, scenario.frequency_mhz);
    Ok(anchor + 10.0 * scenario.path_loss_exponent * (d_m / scenario.d0_m).log10())
}

/// Mean building loss at `floor`, before the random term.
pub fn effective_building_loss(
    b: &BuildingModel,
    floor: i32,
    toward_bs: bool,
) -> Result<f64, SimError> {
    if !b.floors().contains(&floor) {
        return Err(SimError::FloorOutOfRange {
            building: b.id.clone(),
            floor,
            min: b.min_floor,
            max: b.max_floor,
        });
    }
    let mut l = b.l_b - b.floor_gain * f64::from((floor - 1).max(0));
    if floor < 0 {
        l += b.basement_extra_loss;
    }
    if !toward_bs {
        l += b.facade_away_penalty;
    }
    l += b.floor_adjustment(floor);
    Ok(l.max(0.0))
}

/// Where the virtual modem is.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Placement {
    Outdoor(GeoPosition),
    /// Inside (or, when `exposed`, on a balcony of) a building, in local
    /// meters from its anchor.
    Indoor {
        building: String,
        floor: i32,
        local: Local,
        exposed: bool,
    },
}

/// One realisation of the link budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagationDraw {
    pub distance_m: f64,
    pub l_pl: f64,
    pub chi_pl: f64,
    pub l_b_eff: f64,
    pub chi_b: f64,
    /// Unrounded received power.
    pub rsrp_dbm: f64,
    /// What the modem reports: whole dBm, censored below the sensitivity
    /// floor, capped at the top of the reporting range.
    pub rsrp: Rsrp,
    pub toward_bs: Option<bool>,
}

impl PropagationDraw {
    pub fn total_loss(&self) -> f64 {
        self.l_pl + self.chi_pl + self.l_b_eff + self.chi_b
    }
}

fn report(rsrp_dbm: f64) -> Rsrp {
    if rsrp_dbm < SENSITIVITY_FLOOR_DBM {
        Rsrp::Censored
    } else {
        Rsrp::Dbm(rsrp_dbm.min(RSRP_CEILING_DBM).round() as i32)
    }
}

/// Per-draw generator: ChaCha8 keyed by the scenario seed, stream = draw
/// counter. Draw `k` is reproducible on its own, independent of how many
/// draws came before.
pub(crate) fn draw_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws one sample at `placement`.
///
/// Draw order: one standard normal for the outdoor shadowing term, then one
/// for the building term. The second is consumed outdoors too and discarded.
/// Positions closer than `d0` are evaluated at `d0`.
pub fn draw_sample(
    scenario: &Scenario,
    placement: &Placement,
    counter: u64,
) -> Result<PropagationDraw, SimError> {
    let mut rng = draw_rng(scenario.seed, counter);
    let z_pl: f64 = rng.sample(StandardNormal);
    let z_b: f64 = rng.sample(StandardNormal);

    let (geo, site, indoor) = match placement {
        Placement::Outdoor(p) => {
            let site = scenario
                .buildings
                .iter()
                .find(|b| b.contains(to_local(&b.anchor, p), SITE_MARGIN_M));
            (*p, site, None)
        }
        Placement::Indoor {
            building,
            floor,
            local,
            exposed,
        } => {
            let b = scenario.building(building)?;
            let toward = b.toward_bs(&scenario.bs, *local);
            let l_b = effective_building_loss(b, *floor, toward)?;
            let indoor = if *exposed { None } else { Some((l_b, b.sigma_b, toward)) };
            (offset_geo(&b.anchor, *local), Some(b), indoor)
        }
    };

    let distance = distance_m(&scenario.bs, &geo);
    let pl = path_loss(distance.max(scenario.d0_m), scenario)?
        - path_loss(scenario.d0_m, scenario)?;
    let offset = site.map_or(0.0, |b| b.path_loss_offset);
    let sigma_pl = site.and_then(|b| b.sigma_pl).unwrap_or(scenario.sigma_pl);

    let l_pl = pl + offset;
    let chi_pl = sigma_pl * z_pl;
    let (l_b_eff, chi_b, toward_bs) = match indoor {
        Some((l_b, sigma_b, toward)) => (l_b, sigma_b * z_b, Some(toward)),
        None => (0.0, 0.0, None),
    };
    let rsrp_dbm = scenario.tx_power_rsrp_ref - (l_pl + chi_pl + l_b_eff + chi_b);
    Ok(PropagationDraw {
        distance_m: distance,
        l_pl,
        chi_pl,
        l_b_eff,
        chi_b,
        rsrp_dbm,
        rsrp: report(rsrp_dbm),
        toward_bs,
    })
}
