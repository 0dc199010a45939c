use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{parse_gga, parse_serving_cell, AtResponse, ProtocolError};
use crate::clock::Clock;
use crate::model::{validate_sample, GeoPosition, SignalSample};

/// Deadline for one AT exchange.
pub const AT_TIMEOUT: Duration = Duration::from_secs(5);

/// Failed fix reads tolerated per requested fix.
pub const FIX_RETRY_FACTOR: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub signal_readout: bool,
    pub gnss: bool,
}

/// Where the operator says the sensor is. Hardware ignores it; the simulator
/// uses it to place its virtual modem.
#[derive(Debug, Clone, PartialEq)]
pub enum PositionHint {
    Outdoor,
    Indoor {
        map_id: String,
        x: f64,
        y: f64,
        floor: i32,
        outdoor_flag: bool,
    },
}

/// A modem that answers serving-cell and GNSS queries.
///
/// Implementations are owned by one session at a time and every call is a
/// complete, serialized request/response exchange.
pub trait ModemBackend: Send {
    fn capabilities(&self) -> Capabilities;

    /// Issues the serving-cell query and returns the raw response.
    fn query_serving_cell(&mut self) -> Result<AtResponse, ProtocolError>;

    /// Returns one raw GGA sentence from the GNSS receiver.
    fn query_gga(&mut self) -> Result<String, ProtocolError>;

    fn locate(&mut self, _hint: &PositionHint) {}
}

impl<B: ModemBackend + ?Sized> ModemBackend for Box<B> {
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }
    fn query_serving_cell(&mut self) -> Result<AtResponse, ProtocolError> {
        (**self).query_serving_cell()
    }
    fn query_gga(&mut self) -> Result<String, ProtocolError> {
        (**self).query_gga()
    }
    fn locate(&mut self, hint: &PositionHint) {
        (**self).locate(hint)
    }
}

/// Reads, parses and validates one serving-cell sample, timestamped when the
/// response is parsed.
pub fn read_signal<B: ModemBackend + ?Sized>(
    backend: &mut B,
    clock: &dyn Clock,
) -> Result<SignalSample, ProtocolError> {
    if !backend.capabilities().signal_readout {
        return Err(ProtocolError::MissingCapability("signal_readout"));
    }
    let resp = backend.query_serving_cell()?;
    let sample = parse_serving_cell(&resp, clock.now())?;
    validate_sample(&sample).map_err(ProtocolError::Invalid)?;
    Ok(sample)
}

/// Arithmetic mean of `n` valid GNSS fixes.
///
/// Sentences without a fix, with a bad checksum or otherwise unparseable are
/// re-requested; at most `FIX_RETRY_FACTOR * n` such failures are tolerated.
/// Transport errors abort immediately.
pub fn read_fix_average<B: ModemBackend + ?Sized>(
    backend: &mut B,
    n: usize,
) -> Result<GeoPosition, ProtocolError> {
    if !backend.capabilities().gnss {
        return Err(ProtocolError::MissingCapability("gnss"));
    }
    assert!(n >= 1, "at least one fix is required");
    let budget = FIX_RETRY_FACTOR * n;
    let mut fixes = Vec::with_capacity(n);
    let mut failures = 0;
    while fixes.len() < n {
        match backend.query_gga().and_then(|s| parse_gga(&s)) {
            Ok(fix) => fixes.push(fix.position),
            Err(
                ProtocolError::NoFix
                | ProtocolError::ChecksumMismatch { .. }
                | ProtocolError::MalformedSentence(_),
            ) => {
                failures += 1;
                if failures > budget {
                    return Err(ProtocolError::InsufficientFixes {
                        wanted: n,
                        got: fixes.len(),
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(mean_position(&fixes))
}

pub(crate) fn mean_position(fixes: &[GeoPosition]) -> GeoPosition {
    let k = fixes.len() as f64;
    let (la, lo, al) = fixes.iter().fold((0.0, 0.0, 0.0), |(a, b, c), p| {
        (a + p.latitude, b + p.longitude, c + p.altitude)
    });
    GeoPosition::new(la / k, lo / k, al / k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::VirtualClock;
    use crate::model::Rsrp;
    use crate::protocol::{render_gga, AtStatus, FixQuality};
    use chrono::{NaiveTime, TimeZone, Utc};
    use std::collections::VecDeque;

    struct Scripted {
        caps: Capabilities,
        signal: VecDeque<AtResponse>,
        gga: VecDeque<String>,
        gga_calls: usize,
    }

    impl Scripted {
        fn new(signal: bool, gnss: bool) -> Self {
            Self {
                caps: Capabilities {
                    signal_readout: signal,
                    gnss,
                },
                signal: VecDeque::new(),
                gga: VecDeque::new(),
                gga_calls: 0,
            }
        }

        fn push_fix(&mut self, p: Option<GeoPosition>) {
            let t = NaiveTime::from_hms_opt(12, 0, 0).unwrap();
            self.gga
                .push_back(render_gga(t, p.as_ref().map(|p| (p, FixQuality::Standard))));
        }
    }

    impl ModemBackend for Scripted {
        fn capabilities(&self) -> Capabilities {
            self.caps
        }
        fn query_serving_cell(&mut self) -> Result<AtResponse, ProtocolError> {
            self.signal
                .pop_front()
                .ok_or(ProtocolError::Timeout(AT_TIMEOUT))
        }
        fn query_gga(&mut self) -> Result<String, ProtocolError> {
            self.gga_calls += 1;
            self.gga
                .pop_front()
                .ok_or(ProtocolError::Timeout(AT_TIMEOUT))
        }
    }

    fn clock() -> VirtualClock {
        VirtualClock::new(Utc.with_ymd_and_hms(2024, 5, 14, 10, 0, 0).unwrap())
    }

    const LINE: &str = r#"+QENG: "servingcell","NOCONN","eMTC","FDD",262,99,1A2B,5F,3,72,2,4,2E1,-121,-15,-95,9"#;

    #[test]
    fn reads_a_sample() {
        let mut b = Scripted::new(true, false);
        b.signal.push_back(AtResponse::ok(vec![LINE.into()]));
        let c = clock();
        let s = read_signal(&mut b, &c).unwrap();
        assert_eq!(s.rsrp, Rsrp::Dbm(-121));
        assert_eq!(s.utc, c.now());
    }

    #[test]
    fn requires_capability() {
        let mut b = Scripted::new(false, true);
        assert_eq!(
            read_signal(&mut b, &clock()),
            Err(ProtocolError::MissingCapability("signal_readout"))
        );
        let mut b = Scripted::new(true, false);
        assert_eq!(
            read_fix_average(&mut b, 1),
            Err(ProtocolError::MissingCapability("gnss"))
        );
    }

    #[test]
    fn error_status_yields_no_sample() {
        let mut b = Scripted::new(true, false);
        b.signal.push_back(AtResponse {
            lines: vec![],
            status: AtStatus::Error,
        });
        assert!(matches!(
            read_signal(&mut b, &clock()),
            Err(ProtocolError::ErrorStatus(_))
        ));
        assert!(matches!(
            read_signal(&mut b, &clock()),
            Err(ProtocolError::Timeout(_))
        ));
    }

    #[test]
    fn out_of_range_hardware_values_are_rejected() {
        let mut b = Scripted::new(true, false);
        b.signal
            .push_back(AtResponse::ok(vec![LINE.replace(",-121,", ",-150,")]));
        assert!(matches!(
            read_signal(&mut b, &clock()),
            Err(ProtocolError::Invalid(_))
        ));
    }

    #[test]
    fn averages_identical_fixes() {
        let mut b = Scripted::new(false, true);
        for _ in 0..3 {
            b.push_fix(Some(GeoPosition::new(50.0, 7.0, 100.0)));
        }
        let p = read_fix_average(&mut b, 3).unwrap();
        assert!((p.latitude - 50.0).abs() < 1e-9);
        assert!((p.longitude - 7.0).abs() < 1e-9);
        assert!((p.altitude - 100.0).abs() < 1e-9);
    }

    #[test]
    fn averages_latitudes() {
        let mut b = Scripted::new(false, true);
        b.push_fix(Some(GeoPosition::new(50.000, 7.0, 100.0)));
        b.push_fix(Some(GeoPosition::new(50.002, 7.0, 100.0)));
        let p = read_fix_average(&mut b, 2).unwrap();
        assert!((p.latitude - 50.001).abs() < 1e-9);
    }

    #[test]
    fn retries_past_missing_fixes() {
        let lats = [50.0, 50.1, 50.2, 50.3, 50.4];
        let mut b = Scripted::new(false, true);
        b.push_fix(Some(GeoPosition::new(lats[0], 7.0, 100.0)));
        b.push_fix(None);
        b.push_fix(Some(GeoPosition::new(lats[1], 7.0, 100.0)));
        b.push_fix(Some(GeoPosition::new(lats[2], 7.0, 100.0)));
        b.push_fix(None);
        b.push_fix(Some(GeoPosition::new(lats[3], 7.0, 100.0)));
        b.push_fix(Some(GeoPosition::new(lats[4], 7.0, 100.0)));
        let p = read_fix_average(&mut b, 5).unwrap();
        assert_eq!(b.gga_calls, 7);
        assert!((p.latitude - 50.2).abs() < 1e-9);
    }

    #[test]
    fn gives_up_after_the_budget() {
        let mut b = Scripted::new(false, true);
        b.push_fix(Some(GeoPosition::new(50.0, 7.0, 100.0)));
        for _ in 0..20 {
            b.push_fix(None);
        }
        assert_eq!(
            read_fix_average(&mut b, 2),
            Err(ProtocolError::InsufficientFixes { wanted: 2, got: 1 })
        );
        // one good read plus 3*2 tolerated failures plus the one that broke the budget
        assert_eq!(b.gga_calls, 8);
    }
}
