use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::model::{Rsrp, SignalSample};

/// Wire marker for an rsrp reading below the modem's sensitivity.
pub const CENSORED_SENTINEL: i32 = -999;

const PREFIX: &str = "+QENG:";
const FIELD_COUNT: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AtStatus {
    Ok,
    Error,
    Timeout,
}

/// Lines received for one AT exchange, without the terminator line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtResponse {
    pub lines: Vec<String>,
    pub status: AtStatus,
}

impl AtResponse {
    pub fn ok(lines: Vec<String>) -> Self {
        Self {
            lines,
            status: AtStatus::Ok,
        }
    }

    /// The response as it appears on the serial line, `\r\n` framed.
    pub fn to_wire(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            out.push_str("\r\n");
            out.push_str(l);
            out.push_str("\r\n");
        }
        match self.status {
            AtStatus::Ok => out.push_str("\r\nOK\r\n"),
            AtStatus::Error => out.push_str("\r\nERROR\r\n"),
            AtStatus::Timeout => {}
        }
        out
    }
}

/// Static identity of the serving cell, the fields of the `+QENG` line that
/// are not signal indicators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellIdentity {
    pub state: String,
    pub rat: String,
    pub duplex: String,
    pub mcc: u16,
    pub mnc: u16,
    pub cid: u32,
    pub pcid: u32,
    pub earfcn: u32,
    pub band: u16,
    pub ul_bw: u8,
    pub dl_bw: u8,
    pub tac: u32,
}

impl Default for CellIdentity {
    fn default() -> Self {
        Self {
            state: "NOCONN".into(),
            rat: "eMTC".into(),
            duplex: "FDD".into(),
            mcc: 262,
            mnc: 99,
            cid: 0x1A2B,
            pcid: 0x5F,
            earfcn: 3,
            band: 72,
            ul_bw: 2,
            dl_bw: 4,
            tac: 0x2E1,
        }
    }
}

fn malformed(msg: impl Into<String>) -> ProtocolError {
    ProtocolError::MalformedResponse(msg.into())
}

fn unquote(field: &str) -> Option<&str> {
    field.strip_prefix('"')?.strip_suffix('"')
}

fn quoted<'a>(field: &'a str, name: &str) -> Result<&'a str, ProtocolError> {
    unquote(field).ok_or_else(|| malformed(format!("{name} must be quoted, got {field:?}")))
}

fn dec<T: std::str::FromStr>(field: &str, name: &str) -> Result<T, ProtocolError> {
    field
        .trim()
        .parse()
        .map_err(|_| malformed(format!("{name} is not a decimal number: {field:?}")))
}

fn hex(field: &str, name: &str) -> Result<u32, ProtocolError> {
    let f = field.trim();
    if f.is_empty() || f.len() > 8 || !f.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(malformed(format!("{name} is not hexadecimal: {field:?}")));
    }
    u32::from_str_radix(f, 16).map_err(|_| malformed(format!("{name} overflows: {field:?}")))
}

/// Parses a serving-cell response into a signal sample stamped with `utc`.
pub fn parse_serving_cell(
    resp: &AtResponse,
    utc: DateTime<Utc>,
) -> Result<SignalSample, ProtocolError> {
    match resp.status {
        AtStatus::Ok => {}
        AtStatus::Error => return Err(ProtocolError::ErrorStatus(resp.lines.join(" | "))),
        AtStatus::Timeout => return Err(ProtocolError::Timeout(super::backend::AT_TIMEOUT)),
    }
    let line = resp
        .lines
        .iter()
        .map(|l| l.trim())
        .find(|l| l.starts_with(PREFIX))
        .ok_or_else(|| malformed("no +QENG line in response"))?;
    let (_, sample) = parse_line(line, utc)?;
    Ok(sample)
}

fn parse_line(line: &str, utc: DateTime<Utc>) -> Result<(CellIdentity, SignalSample), ProtocolError> {
    let payload = line
        .strip_prefix(PREFIX)
        .ok_or_else(|| malformed("missing +QENG: prefix"))?
        .trim_start();
    let f: Vec<&str> = payload.split(',').collect();

    if quoted(f[0], "record type")? != "servingcell" {
        return Err(malformed(format!("not a servingcell record: {}", f[0])));
    }
    if let Some(rat) = f.get(2) {
        let rat = quoted(rat, "rat")?;
        if rat != "eMTC" && rat != "LTE" {
            return Err(ProtocolError::UnsupportedRat(rat.to_string()));
        }
    }
    if f.len() != FIELD_COUNT {
        return Err(malformed(format!(
            "expected {FIELD_COUNT} fields, got {}",
            f.len()
        )));
    }

    let state = unquote(f[1]).unwrap_or(f[1]);
    if state.is_empty() || state.contains('"') {
        return Err(malformed(format!("bad state field {:?}", f[1])));
    }
    let cell = CellIdentity {
        state: state.to_string(),
        rat: quoted(f[2], "rat")?.to_string(),
        duplex: quoted(f[3], "duplex")?.to_string(),
        mcc: dec(f[4], "mcc")?,
        mnc: dec(f[5], "mnc")?,
        cid: hex(f[6], "cid")?,
        pcid: hex(f[7], "pcid")?,
        earfcn: dec(f[8], "earfcn")?,
        band: dec(f[9], "band")?,
        ul_bw: dec(f[10], "ul_bw")?,
        dl_bw: dec(f[11], "dl_bw")?,
        tac: hex(f[12], "tac")?,
    };

    let rsrp = if f[13].trim().is_empty() {
        Rsrp::Censored
    } else {
        match dec::<i32>(f[13], "rsrp")? {
            CENSORED_SENTINEL => Rsrp::Censored,
            v => Rsrp::Dbm(v),
        }
    };
    let sample = SignalSample {
        rsrp,
        rsrq: dec(f[14], "rsrq")?,
        rssi: dec(f[15], "rssi")?,
        sinr: dec(f[16], "sinr")?,
        tac: cell.tac,
        cid: cell.cid,
        utc,
    };
    Ok((cell, sample))
}

/// Renders a serving-cell response for `sample`. The sample's tac/cid take
/// precedence over those in `cell`.
pub fn render_serving_cell(cell: &CellIdentity, sample: &SignalSample) -> AtResponse {
    let rsrp = match sample.rsrp {
        Rsrp::Dbm(v) => v,
        Rsrp::Censored => CENSORED_SENTINEL,
    };
    let line = format!(
        "{PREFIX} \"servingcell\",\"{}\",\"{}\",\"{}\",{},{},{:X},{:X},{},{},{},{},{:X},{},{},{},{}",
        cell.state,
        cell.rat,
        cell.duplex,
        cell.mcc,
        cell.mnc,
        sample.cid,
        cell.pcid,
        cell.earfcn,
        cell.band,
        cell.ul_bw,
        cell.dl_bw,
        sample.tac,
        rsrp,
        sample.rsrq,
        sample.rssi,
        sample.sinr,
    );
    AtResponse::ok(vec![line])
}
