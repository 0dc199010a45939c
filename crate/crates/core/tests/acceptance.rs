//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lte_mapper_core::analysis::{
    building_report, describe, floor_attenuation, floor_height_gain, BuildingLossEstimate,
    FloorAttenuation,
};
use lte_mapper_core::campaign::{blank_plan_png, Campaign, MeasurementSettings, DEFAULT_DRX_CYCLE};
use lte_mapper_core::clock::{Clock, VirtualClock};
use lte_mapper_core::model::{IndoorMeta, MeasurementId, PlanPosition, SENSITIVITY_FLOOR_DBM};
use lte_mapper_core::persistence::{export_csv, import_csv};
use lte_mapper_core::protocol::{
    parse_serving_cell, AtResponse, Capabilities, ModemBackend, PositionHint, ProtocolError,
};
use lte_mapper_core::sim::survey::{run_survey, SurveyPlan};
use lte_mapper_core::sim::{
    draw_sample, render_wire, sample_from_draw, Local, Placement, Scenario, SimModem,
};
use lte_mapper_core::sweep::{for_seeds, recovery_trial};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fixture(name: &str) -> Scenario {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "fixtures", name].iter().collect();
    Scenario::load(p).expect("fixture loads")
}

fn t0() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 5, 14, 9, 0, 0).unwrap()
}

fn published_arithmetic() -> Outcome {
    let a = BuildingLossEstimate::from_summaries(-101.0, 6.7, -122.4, 4.2);
    let b = BuildingLossEstimate::from_summaries(-98.3, 4.5, -101.5, 7.2);
    let c = BuildingLossEstimate::from_summaries(-101.0, 4.6, -116.5, 5.6);
    let near = |x: f64, y: f64, tol: f64| (x - y).abs() <= tol;
    // The printed loss for A (22.4) does not follow from its printed means.
    let a_flagged = near(a.loss_mean, 21.4, 0.05) && !near(a.loss_mean, 22.4, 0.5);
    let pass = near(b.loss_mean, 3.2, 0.05)
        && near(c.loss_mean, 15.5, 0.05)
        && near(b.loss_sd, 8.4, 0.15)
        && near(b.loss_sd, 8.49, 0.005)
        && near(c.loss_sd, 7.2, 0.15)
        && near(c.loss_sd, 7.24, 0.01)
        && near(a.loss_sd, 7.9, 0.05)
        && a_flagged;
    outcome(
        pass,
        format!(
            "B {:.2}/{:.3} dB, C {:.2}/{:.3} dB, A {:.2}/{:.3} dB (printed 22.4 inconsistent with its means)",
            b.loss_mean, b.loss_sd, c.loss_mean, c.loss_sd, a.loss_mean, a.loss_sd
        ),
    )
}

fn oracle_recovery() -> Outcome {
    let mut s = Scenario::default();
    s.buildings[0].facade_away_penalty = 0.0;
    let b = &s.buildings[0];
    assert_eq!((b.l_b, b.sigma_b, s.sigma_pl), (20.0, 4.0, 6.0));
    let started = Instant::now();
    let seeds: Vec<u64> = (1..=20).collect();
    let est = for_seeds(&seeds, |seed| recovery_trial(&s, "default", 500, seed).unwrap());
    let elapsed = started.elapsed();
    let ok = est.iter().filter(|e| (e.loss_mean - 20.0).abs() <= 1.5).count();
    let worst = est
        .iter()
        .map(|e| (e.loss_mean - 20.0).abs())
        .fold(0.0, f64::max);
    outcome(
        ok >= 19 && elapsed < Duration::from_secs(10),
        format!(
            "{ok}/20 seeds within 20 +/- 1.5 dB (largest error {worst:.2} dB), {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn floor_gain() -> Outcome {
    // Noise free: identical points on every floor.
    let mut quiet = Scenario::default();
    quiet.sigma_pl = 0.0;
    quiet.buildings[0].sigma_b = 0.0;
    let mut plan = SurveyPlan::new("default");
    plan.outdoor_positions = 0;
    plan.settings.samples_per_position = 1;
    let c = run_survey(&quiet, &plan).unwrap();
    let exact = floor_height_gain(c.records(), 1..).unwrap().slope;

    // Default noise, ten rooms per floor.
    let mut plan = SurveyPlan::new("default");
    plan.outdoor_positions = 0;
    plan.rooms_per_floor = 10;
    let c = run_survey(&Scenario::default(), &plan).unwrap();
    let noisy = floor_height_gain(c.records(), 1..).unwrap().slope;

    // Building B fixture as shipped.
    let bonn = fixture("bonn.toml");
    let c = run_survey(&bonn, &SurveyPlan::new("B")).unwrap();
    let g = floor_height_gain(c.records(), 0..).unwrap();
    let best: Vec<f64> = g.floors.iter().map(|f| f.best).collect();
    let monotone = g.floors.first().map(|f| f.floor) == Some(0)
        && g.floors.windows(2).all(|w| w[1].best > w[0].best);
    let basement_dark = g.censored_floors == [-1];

    outcome(
        (exact - 2.0).abs() <= 1e-9 && (noisy - 2.0).abs() <= 0.5 && monotone && basement_dark,
        format!(
            "noise-free slope {exact:.12}, noisy slope {noisy:.3}, B best per floor 0.. {best:?}, censored floors {:?}",
            g.censored_floors
        ),
    )
}

fn spread_band() -> Outcome {
    let bonn = fixture("bonn.toml");
    let seeds: Vec<u64> = (100..120).collect();
    let runs = for_seeds(&seeds, |seed| {
        let mut s = bonn.clone();
        s.seed = seed;
        let c = run_survey(&s, &SurveyPlan::new("B")).unwrap();
        (c.records().len(), describe(c.records()).unwrap().spread)
    });
    let n = runs.iter().map(|r| r.0).min().unwrap_or(0);
    let spreads: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let ok = spreads.iter().filter(|s| (40.0..=50.0).contains(*s)).count();
    outcome(
        ok >= 18 && n >= 1000,
        format!("{ok}/20 seeds in [40, 50] dB, {n} samples per campaign, spreads {spreads:?}"),
    )
}

fn censoring_contract() -> Outcome {
    let s = Scenario::default();
    let cell = s.cell.clone();
    let b = &s.buildings[0];
    let mut failures = Vec::new();
    let mut censored_draws = 0;
    let mut campaign = Campaign::new("censoring", "default");
    campaign
        .upload_plan("basement.png", blank_plan_png(600, 200))
        .unwrap();
    for k in 0..4000u64 {
        let floor = [-1, 0, 1, 4][(k % 4) as usize];
        let local = Local::new((k % 50) as f64 - 25.0, (k % 17) as f64 - 8.0);
        let p = Placement::Indoor {
            building: b.id.clone(),
            floor,
            local,
            exposed: false,
        };
        let d = draw_sample(&s, &p, k).unwrap();
        let below = d.rsrp_dbm < SENSITIVITY_FLOOR_DBM;
        censored_draws += usize::from(below);
        if below != d.rsrp.is_censored() {
            failures.push(format!("draw {k}: {} vs {:?}", d.rsrp_dbm, d.rsrp));
        }
        let parsed = parse_serving_cell(&render_wire(&d, &cell), t0()).unwrap();
        if parsed.rsrp.is_censored() != below {
            failures.push(format!("wire {k}"));
        }
        if floor == -1 {
            campaign.commit(lte_mapper_core::campaign::PendingPosition {
                position: lte_mapper_core::model::Position::Plan {
                    plan: PlanPosition {
                        map_id: "basement".into(),
                        x: 300.0,
                        y: 100.0,
                    },
                    meta: IndoorMeta {
                        room_id: "K.01".into(),
                        floor: -1,
                        outdoor_flag: false,
                    },
                },
                samples: vec![parsed],
            });
        }
    }
    let files = export_csv(&campaign);
    let back = import_csv(&files.outdoor, &files.indoor).unwrap();
    let before: Vec<bool> = campaign.records().iter().map(|r| r.sample.rsrp.is_censored()).collect();
    let after: Vec<bool> = back.records().iter().map(|r| r.sample.rsrp.is_censored()).collect();
    if before != after {
        failures.push("csv round trip changed censoring".into());
    }

    // Analysis on a basement with no reception at all.
    let mut quiet = s.clone();
    quiet.sigma_pl = 2.0;
    quiet.buildings[0].sigma_b = 2.0;
    quiet.buildings[0].basement_extra_loss = 60.0;
    let mut plan = SurveyPlan::new("default");
    plan.floors = Some((-1, 1));
    plan.outdoor_positions = 8;
    let c = run_survey(&quiet, &plan).unwrap();
    let att = floor_attenuation(c.records()).unwrap();
    let basement = att.iter().find(|a| a.floor() == -1).cloned();
    let text = lte_mapper_core::analysis::AnalysisReport {
        buildings: vec![building_report("default", c.records())],
    }
    .to_text();
    let flagged = matches!(basement, Some(FloorAttenuation::LowerBound { exceeds_db, .. }) if exceeds_db > 40.0);
    let line = text.lines().find(|l| l.trim_start().starts_with("floor  -1:")).unwrap_or("");
    if !flagged || !line.contains("> ") {
        failures.push(format!("basement reported as {basement:?} / {line:?}"));
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "{censored_draws} of 4000 draws censored, all survived wire, CSV and analysis; basement line {:?}",
                line.trim()
            )
        } else {
            failures.join("; ")
        },
    )
}

fn fuzz_line(rng: &mut ChaCha8Rng, base: &str) -> String {
    let mut b: Vec<u8> = base.as_bytes().to_vec();
    match rng.gen_range(0..6) {
        0 => {
            for _ in 0..rng.gen_range(1..8) {
                let i = rng.gen_range(0..b.len());
                b[i] = rng.gen();
            }
        }
        1 => b.truncate(rng.gen_range(0..b.len())),
        2 => {
            let mut f: Vec<&str> = base.split(',').collect();
            let i = rng.gen_range(0..f.len());
            f.remove(i);
            return f.join(",");
        }
        3 => {
            let mut f: Vec<String> = base.split(',').map(String::from).collect();
            let i = rng.gen_range(0..f.len());
            f[i] = match rng.gen_range(0..5) {
                0 => String::new(),
                1 => "-999".into(),
                2 => "99999999999999999999".into(),
                3 => "\"".into(),
                _ => "-1e9".into(),
            };
            return f.join(",");
        }
        4 => {
            let n = rng.gen_range(0..120);
            return (0..n).map(|_| rng.gen_range(b' '..=b'~') as char).collect();
        }
        _ => {
            let i = rng.gen_range(0..b.len());
            let extra = b[i..].to_vec();
            b.extend(extra);
        }
    }
    String::from_utf8_lossy(&b).into_owned()
}

fn round_trips() -> Outcome {
    let s = Scenario::default();
    let base = "+QENG: \"servingcell\",\"NOCONN\",\"eMTC\",\"FDD\",262,99,1A2B,5F,3,72,2,4,2E1,-121,-15,-95,9";
    let mut rng = ChaCha8Rng::seed_from_u64(450);
    let mut crashes = 0;
    let mut accepted = 0;
    for _ in 0..10_000 {
        let line = fuzz_line(&mut rng, base);
        let status_ok = rng.gen_bool(0.8);
        let resp = if status_ok {
            AtResponse::ok(vec![line])
        } else {
            AtResponse {
                lines: vec![line],
                status: lte_mapper_core::protocol::AtStatus::Error,
            }
        };
        match catch_unwind(AssertUnwindSafe(|| parse_serving_cell(&resp, t0()))) {
            Err(_) => crashes += 1,
            Ok(r) => accepted += usize::from(r.is_ok()),
        }
    }

    let mut mismatches = 0;
    for k in 0..10_000u64 {
        let floor = (k % 6) as i32 - 1;
        let p = Placement::Indoor {
            building: "default".into(),
            floor,
            local: Local::new((k % 60) as f64 - 30.0, (k % 20) as f64 - 10.0),
            exposed: k % 7 == 0,
        };
        let d = draw_sample(&s, &p, k).unwrap();
        let want = sample_from_draw(&d, &s.cell, t0());
        if parse_serving_cell(&render_wire(&d, &s.cell), t0()).ok() != Some(want) {
            mismatches += 1;
        }
    }

    let c = fifty_record_campaign();
    let first = export_csv(&c);
    let again = export_csv(&import_csv(&first.outdoor, &first.indoor).unwrap());
    let csv_ok = first == again && c.records().len() == 50;

    outcome(
        crashes == 0 && mismatches == 0 && csv_ok,
        format!(
            "fuzz: 10000 lines, {crashes} panics, {accepted} parsed; render/parse: {mismatches} mismatches in 10000; CSV on {} records byte-identical: {csv_ok}",
            c.records().len()
        ),
    )
}

fn fifty_record_campaign() -> Campaign {
    let s = Scenario::default();
    let mut modem = SimModem::new(s).unwrap();
    let clock = VirtualClock::new(t0());
    let settings = MeasurementSettings::default()
        .validate(DEFAULT_DRX_CYCLE)
        .unwrap();
    let mut c = Campaign::new("roundtrip", "default");
    c.upload_plan("floor0.png", blank_plan_png(600, 200)).unwrap();
    for _ in 0..4 {
        c.measure_outdoor(&settings, &mut modem, &clock).unwrap();
    }
    for (i, floor) in [-1, 0, 0, 1, 2, 3].into_iter().enumerate() {
        let click = PlanPosition {
            map_id: "floor0".into(),
            x: 50.0 + 90.0 * i as f64,
            y: 40.5 + 20.0 * i as f64,
        };
        let meta = IndoorMeta {
            room_id: format!("{floor}.0{i}, \"lab\""),
            floor,
            outdoor_flag: i == 5,
        };
        c.measure_indoor(&settings, &mut modem, &clock, click, meta).unwrap();
    }
    c
}

/// Delegates to the simulator but fails the `fail_at`-th signal query.
struct Flaky {
    inner: SimModem,
    fail_at: usize,
    queries: usize,
}

impl ModemBackend for Flaky {
    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }
    fn query_serving_cell(&mut self) -> Result<AtResponse, ProtocolError> {
        self.queries += 1;
        if self.queries == self.fail_at {
            return Err(ProtocolError::Timeout(Duration::from_secs(5)));
        }
        self.inner.query_serving_cell()
    }
    fn query_gga(&mut self) -> Result<String, ProtocolError> {
        self.inner.query_gga()
    }
    fn locate(&mut self, hint: &PositionHint) {
        self.inner.locate(hint)
    }
}

fn procedure_invariants() -> Outcome {
    let mut problems = Vec::new();
    let settings = MeasurementSettings {
        gnss_fix_count: 3,
        samples_per_position: 5,
        interval_s: 3.0,
    }
    .validate(DEFAULT_DRX_CYCLE)
    .unwrap();
    let clock = VirtualClock::new(t0());

    // A failure on the third of five reads leaves nothing behind.
    let mut flaky = Flaky {
        inner: SimModem::new(Scenario::default()).unwrap(),
        fail_at: 3,
        queries: 0,
    };
    let mut c = Campaign::new("atomic", "default");
    c.upload_plan("floor1.png", blank_plan_png(600, 200)).unwrap();
    if c.measure_outdoor(&settings, &mut flaky, &clock).is_ok() || !c.records().is_empty() {
        problems.push("outdoor failure left records".to_string());
    }
    flaky.fail_at = 8;
    let click = PlanPosition {
        map_id: "floor1".into(),
        x: 100.0,
        y: 100.0,
    };
    let meta = IndoorMeta {
        room_id: "1.01".into(),
        floor: 1,
        outdoor_flag: false,
    };
    if c.measure_indoor(&settings, &mut flaky, &clock, click.clone(), meta.clone()).is_ok()
        || !c.records().is_empty()
    {
        problems.push("indoor failure left records".to_string());
    }
    let mut no_fix = Scenario::default();
    no_fix.gnss.no_fix_probability = 1.0;
    let mut modem = SimModem::new(no_fix).unwrap();
    if c.measure_outdoor(&settings, &mut modem, &clock).is_ok() || !c.records().is_empty() {
        problems.push("fix failure left records".to_string());
    }

    // Successful positions: k records each, spaced by the interval.
    let mut modem = SimModem::new(Scenario::default()).unwrap();
    let mut sizes = Vec::new();
    for i in 0..30 {
        let recs = if i % 2 == 0 {
            c.measure_outdoor(&settings, &mut modem, &clock).unwrap()
        } else {
            c.measure_indoor(&settings, &mut modem, &clock, click.clone(), meta.clone())
                .unwrap()
        };
        sizes.push(recs.len());
        for w in recs.windows(2) {
            if w[1].sample.utc - w[0].sample.utc < chrono::TimeDelta::from_std(settings.interval()).unwrap() {
                problems.push(format!("{} and {} closer than the interval", w[0].id, w[1].id));
            }
        }
        clock.sleep(Duration::from_secs(7));
    }
    if sizes.iter().any(|&n| n != 5) {
        problems.push(format!("position sizes {sizes:?}"));
    }
    let mut seen = std::collections::HashSet::new();
    for r in c.records() {
        let text = r.id.to_string();
        if text.parse::<MeasurementId>().ok() != Some(r.id) || text.split('.').count() != 2 {
            problems.push(format!("id {text} does not round-trip"));
        }
        if !seen.insert(r.id) {
            problems.push(format!("id {text} repeated"));
        }
    }
    let first = c.records().first().map(|r| r.id.to_string()).unwrap_or_default();
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!(
                "3 failed positions left 0 records; 30 positions x 5 samples, >= 3 s apart, {} unique ids from {first}",
                seen.len()
            )
        } else {
            problems.join("; ")
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("published loss arithmetic", published_arithmetic),
        ("simulator-oracle recovery", oracle_recovery),
        ("floor height gain", floor_gain),
        ("spread band", spread_band),
        ("censoring contract", censoring_contract),
        ("wire and CSV round-trips", round_trips),
        ("procedure invariants", procedure_invariants),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!o.pass);
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
