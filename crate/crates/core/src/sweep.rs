//! Seed sweeps: the same experiment repeated over many simulator seeds.
//!
//! [`for_seeds`] fans out over rayon's pool when the `parallel` feature is
//! on (the default) and runs in order otherwise. Results come back in seed
//! order either way, and every trial owns its own simulator, so both paths
//! produce identical output.

use chrono::{TimeZone, Utc};

use crate::analysis::{building_loss, floor_height_gain, BuildingLossEstimate, FloorGainSeries};
use crate::clock::VirtualClock;
use crate::model::Rsrp;
use crate::protocol::{read_signal, ProtocolError};
use crate::sim::survey::{run_survey, SurveyError, SurveyPlan};
use crate::sim::{offset_geo, Local, Placement, Scenario, SimError, SimModem};

/// Runs `f` once per seed.
pub fn for_seeds<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        seeds.par_iter().map(|&s| f(s)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        for_seeds_sequential(seeds, f)
    }
}

/// Always sequential; the baseline for benchmarks and equivalence checks.
pub fn for_seeds_sequential<T, F: Fn(u64) -> T>(seeds: &[u64], f: F) -> Vec<T> {
    seeds.iter().map(|&s| f(s)).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum TrialError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Survey(#[from] SurveyError),
    #[error(transparent)]
    Analysis(#[from] crate::analysis::AnalysisError),
}

/// Reads `n` samples outdoors around `building` (3 m standoff) and `n`
/// indoors spread over floors 0 and 1, through the wire format, then
/// estimates the building loss.
pub fn recovery_trial(
    scenario: &Scenario,
    building: &str,
    n: usize,
    seed: u64,
) -> Result<BuildingLossEstimate, TrialError> {
    let mut scenario = scenario.clone();
    scenario.seed = seed;
    let b = scenario.building(building)?.clone();
    let mut modem = SimModem::new(scenario)?;
    let clock = VirtualClock::new(Utc.with_ymd_and_hms(2024, 5, 14, 8, 0, 0).unwrap());
    let (hw, hd) = (b.size_m[0] / 2.0, b.size_m[1] / 2.0);

    let mut outdoor = Vec::with_capacity(n);
    for i in 0..n {
        // Walk the perimeter, alternating between the long sides and the ends.
        let t = (i as f64 + 0.5) / n as f64 * 2.0 - 1.0;
        let local = match i % 4 {
            0 => Local::new(t * hw, hd + 3.0),
            1 => Local::new(t * hw, -hd - 3.0),
            2 => Local::new(hw + 3.0, t * hd),
            _ => Local::new(-hw - 3.0, t * hd),
        };
        modem.place(Placement::Outdoor(offset_geo(&b.anchor, local)));
        outdoor.push(read_signal(&mut modem, &clock)?.rsrp);
    }
    let mut indoor = Vec::with_capacity(n);
    for i in 0..n {
        let (fx, fy) = ((i % 17) as f64 / 16.0, (i / 17 % 7) as f64 / 6.0);
        modem.place(Placement::Indoor {
            building: b.id.clone(),
            floor: (i % 2) as i32,
            local: Local::new((fx * 2.0 - 1.0) * hw * 0.9, (fy * 2.0 - 1.0) * hd * 0.9),
            exposed: false,
        });
        indoor.push(read_signal(&mut modem, &clock)?.rsrp);
    }
    Ok(building_loss(outdoor, indoor)?)
}

/// Full survey of `building` followed by the floor-gain fit over `fit`.
pub fn floor_gain_trial(
    scenario: &Scenario,
    plan: &SurveyPlan,
    fit: std::ops::RangeFrom<i32>,
    seed: u64,
) -> Result<FloorGainSeries, TrialError> {
    let mut scenario = scenario.clone();
    scenario.seed = seed;
    let c = run_survey(&scenario, plan)?;
    Ok(floor_height_gain(c.records(), fit)?)
}

/// Share of censored readings, handy when checking basements.
pub fn censored_share(values: &[Rsrp]) -> f64 {
    values.iter().filter(|r| r.is_censored()).count() as f64 / values.len().max(1) as f64
}
