use chrono::{NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::model::GeoPosition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixQuality {
    Standard,
    Differential,
}

/// A valid GNSS position fix. Sentences without a fix never produce one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnssFix {
    pub position: GeoPosition,
    pub quality: FixQuality,
    pub utc: NaiveTime,
    pub satellites: u8,
}

/// XOR of every byte between `$` and `*`.
pub fn nmea_checksum(body: &str) -> u8 {
    body.bytes().fold(0, |acc, b| acc ^ b)
}

fn bad(msg: impl Into<String>) -> ProtocolError {
    ProtocolError::MalformedSentence(msg.into())
}

/// `ddmm.mmmm` / `dddmm.mmmm` to decimal degrees.
fn angle(field: &str, deg_digits: usize, hemi: &str, pos: char, neg: char) -> Result<f64, ProtocolError> {
    let dot = field.find('.').unwrap_or(field.len());
    if dot != deg_digits + 2 || !field.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
        return Err(bad(format!("bad coordinate {field:?}")));
    }
    let deg: f64 = field[..deg_digits]
        .parse()
        .map_err(|_| bad(format!("bad degrees in {field:?}")))?;
    let min: f64 = field[deg_digits..]
        .parse()
        .map_err(|_| bad(format!("bad minutes in {field:?}")))?;
    if min >= 60.0 {
        return Err(bad(format!("minutes out of range in {field:?}")));
    }
    let v = deg + min / 60.0;
    match hemi.chars().next() {
        Some(c) if c == pos && hemi.len() == 1 => Ok(v),
        Some(c) if c == neg && hemi.len() == 1 => Ok(-v),
        _ => Err(bad(format!("bad hemisphere {hemi:?}"))),
    }
}

fn utc(field: &str) -> Result<NaiveTime, ProtocolError> {
    let err = || bad(format!("bad UTC field {field:?}"));
    if field.len() < 6 || !field.is_char_boundary(6) {
        return Err(err());
    }
    let (hms, frac) = field.split_at(6);
    if !hms.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err());
    }
    let h = hms[0..2].parse().map_err(|_| err())?;
    let m = hms[2..4].parse().map_err(|_| err())?;
    let s = hms[4..6].parse().map_err(|_| err())?;
    let nanos = if frac.is_empty() {
        0
    } else {
        let digits = frac.strip_prefix('.').ok_or_else(err)?;
        if digits.is_empty() || digits.len() > 9 || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let v: u32 = digits.parse().map_err(|_| err())?;
        v * 10u32.pow(9 - digits.len() as u32)
    };
    NaiveTime::from_hms_nano_opt(h, m, s, nanos).ok_or_else(err)
}

/// Parses a `$--GGA` sentence. The checksum is mandatory and verified
/// before any field is interpreted.
pub fn parse_gga(sentence: &str) -> Result<GnssFix, ProtocolError> {
    let s = sentence.trim_end_matches(['\r', '\n']);
    let body = s
        .strip_prefix('$')
        .ok_or_else(|| bad("sentence must start with '$'"))?;
    let (body, sum) = body
        .rsplit_once('*')
        .ok_or_else(|| bad("missing '*hh' checksum"))?;
    if sum.len() != 2 || !sum.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(bad(format!("bad checksum field {sum:?}")));
    }
    let expected = u8::from_str_radix(sum, 16).map_err(|_| bad("bad checksum"))?;
    let computed = nmea_checksum(body);
    if expected != computed {
        return Err(ProtocolError::ChecksumMismatch { expected, computed });
    }

    let f: Vec<&str> = body.split(',').collect();
    let kind = f[0];
    if kind.len() != 5 || !kind.is_char_boundary(2) || &kind[2..] != "GGA" {
        return Err(bad(format!("not a GGA sentence: {kind:?}")));
    }
    if f.len() < 10 {
        return Err(bad(format!("GGA needs at least 10 fields, got {}", f.len())));
    }
    let quality = match f[6] {
        "0" => return Err(ProtocolError::NoFix),
        "2" | "4" | "5" => FixQuality::Differential,
        q if q.len() == 1 && q.as_bytes()[0].is_ascii_digit() => FixQuality::Standard,
        q => return Err(bad(format!("bad fix quality {q:?}"))),
    };
    let latitude = angle(f[2], 2, f[3], 'N', 'S')?;
    let longitude = angle(f[4], 3, f[5], 'E', 'W')?;
    if latitude.abs() > 90.0 || longitude.abs() > 180.0 {
        return Err(bad("coordinate out of range"));
    }
    let satellites = if f[7].is_empty() {
        0
    } else {
        f[7].parse()
            .map_err(|_| bad(format!("bad satellite count {:?}", f[7])))?
    };
    let altitude: f64 = f[9]
        .parse()
        .map_err(|_| bad(format!("bad altitude {:?}", f[9])))?;
    if !altitude.is_finite() {
        return Err(bad("non-finite altitude"));
    }
    Ok(GnssFix {
        position: GeoPosition {
            latitude,
            longitude,
            altitude,
        },
        quality,
        utc: utc(f[1])?,
        satellites,
    })
}

fn fmt_angle(v: f64, deg_digits: usize, pos: char, neg: char) -> (String, char) {
    let a = v.abs();
    let mut deg = a.trunc();
    let mut min = (a - deg) * 60.0;
    // rounding to 6 decimals can carry into the degree field
    if format!("{min:.6}").starts_with("60") {
        deg += 1.0;
        min = 0.0;
    }
    let s = format!("{:0w$}{:09.6}", deg as u32, min, w = deg_digits);
    (s, if v < 0.0 { neg } else { pos })
}

/// Renders a `$GPGGA` sentence with a valid checksum. `fix = None` renders a
/// no-fix sentence with empty position fields.
pub fn render_gga(utc: NaiveTime, fix: Option<(&GeoPosition, FixQuality)>) -> String {
    let t = format!(
        "{:02}{:02}{:02}.{:02}",
        utc.hour(),
        utc.minute(),
        utc.second(),
        utc.nanosecond() / 10_000_000 % 100
    );
    let body = match fix {
        None => format!("GPGGA,{t},,,,,0,00,99.9,,M,,M,,"),
        Some((p, q)) => {
            let (lat, ns) = fmt_angle(p.latitude, 2, 'N', 'S');
            let (lon, ew) = fmt_angle(p.longitude, 3, 'E', 'W');
            let q = match q {
                FixQuality::Standard => 1,
                FixQuality::Differential => 2,
            };
            format!(
                "GPGGA,{t},{lat},{ns},{lon},{ew},{q},08,0.9,{:.1},M,47.0,M,,",
                p.altitude
            )
        }
    };
    format!("${body}*{:02X}", nmea_checksum(&body))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_sum(body: &str) -> String {
        format!("${body}*{:02X}", nmea_checksum(body))
    }

    #[test]
    fn converts_ddmm_to_degrees() {
        let s = with_sum("GPGGA,120000.00,5043.216,N,00706.000,E,1,08,0.9,171.0,M,47.0,M,,");
        let fix = parse_gga(&s).unwrap();
        // 50 + 43.216/60, 7 + 6/60
        assert!((fix.position.latitude - 50.720_266_666_666_67).abs() < 1e-12);
        assert!((fix.position.longitude - 7.1).abs() < 1e-12);
        assert_eq!(fix.position.altitude, 171.0);
        assert_eq!(fix.quality, FixQuality::Standard);
        assert_eq!(fix.utc, NaiveTime::from_hms_opt(12, 0, 0).unwrap());
        assert_eq!(fix.satellites, 8);
    }

    #[test]
    fn south_and_west_are_negative() {
        let s = with_sum("GNGGA,120000.00,5043.216,S,00706.000,W,2,08,0.9,171.0,M,47.0,M,,");
        let fix = parse_gga(&s).unwrap();
        assert!(fix.position.latitude < 0.0 && fix.position.longitude < 0.0);
        assert!((fix.position.latitude + 50.720_266_666_666_67).abs() < 1e-12);
        assert_eq!(fix.quality, FixQuality::Differential);
    }

    #[test]
    fn quality_zero_is_no_fix() {
        let s = with_sum("GPGGA,120000.00,,,,,0,00,99.9,,M,,M,,");
        assert_eq!(parse_gga(&s), Err(ProtocolError::NoFix));
    }

    #[test]
    fn checks_the_checksum() {
        let s = with_sum("GPGGA,120000.00,5043.216,N,00706.000,E,1,08,0.9,171.0,M,47.0,M,,");
        let tampered = s.replace("5043", "5044");
        assert!(matches!(
            parse_gga(&tampered),
            Err(ProtocolError::ChecksumMismatch { .. })
        ));
        let no_sum = s.split('*').next().unwrap();
        assert!(matches!(
            parse_gga(no_sum),
            Err(ProtocolError::MalformedSentence(_))
        ));
    }

    #[test]
    fn known_checksum() {
        // widely published reference sentence
        let s = "$GPGGA,092750.000,5321.6802,N,00630.3372,W,1,8,1.03,61.7,M,55.2,M,,*76";
        let fix = parse_gga(s).unwrap();
        assert!((fix.position.latitude - (53.0 + 21.6802 / 60.0)).abs() < 1e-12);
        assert!((fix.position.longitude + (6.0 + 30.3372 / 60.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_other_sentences() {
        let s = with_sum("GPRMC,120000.00,A,5043.216,N,00706.000,E,0.0,0.0,140524,,");
        assert!(matches!(parse_gga(&s), Err(ProtocolError::MalformedSentence(_))));
    }

    #[test]
    fn render_then_parse() {
        let p = GeoPosition::new(50.720_266, -7.1, 171.0);
        let t = NaiveTime::from_hms_milli_opt(9, 30, 5, 250).unwrap();
        let s = render_gga(t, Some((&p, FixQuality::Standard)));
        let fix = parse_gga(&s).unwrap();
        assert!((fix.position.latitude - p.latitude).abs() < 1e-7);
        assert!((fix.position.longitude - p.longitude).abs() < 1e-7);
        assert_eq!(fix.utc, t);
        assert_eq!(parse_gga(&render_gga(t, None)), Err(ProtocolError::NoFix));
    }
}
