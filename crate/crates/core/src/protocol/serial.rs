//! AT exchanges over a byte transport (a serial port on real hardware).

use std::io::{self, Read, Write};
use std::time::{Duration, Instant};

use super::backend::AT_TIMEOUT;
use super::{AtResponse, AtStatus, Capabilities, ModemBackend, ProtocolError};

pub const SERVING_CELL_QUERY: &str = "AT+QENG=\"servingcell\"";
pub const GGA_QUERY: &str = "AT+QGPSGNMEA=\"GGA\"";
pub const GNSS_ON: &str = "AT+QGPS=1";
/// `+CME ERROR` code for "GNSS session already running".
const CME_SESSION_ACTIVE: &str = "+CME ERROR: 504";
/// `+CME ERROR` code for "not fixed now".
const CME_NOT_FIXED: &str = "+CME ERROR: 516";

/// Line-oriented AT command channel over any `Read + Write` transport.
///
/// The transport's own read timeout should be short; the exchange deadline
/// is enforced here.
pub struct AtPort<T> {
    io: T,
    timeout: Duration,
    pending: Vec<u8>,
}

impl<T: Read + Write> AtPort<T> {
    pub fn new(io: T) -> Self {
        Self {
            io,
            timeout: AT_TIMEOUT,
            pending: Vec::new(),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn into_inner(self) -> T {
        self.io
    }

    fn transport(e: io::Error) -> ProtocolError {
        ProtocolError::Transport(e.to_string())
    }

    /// Sends `command` and collects response lines up to the terminator.
    pub fn exchange(&mut self, command: &str) -> Result<AtResponse, ProtocolError> {
        self.pending.clear();
        self.io
            .write_all(format!("{command}\r").as_bytes())
            .and_then(|_| self.io.flush())
            .map_err(Self::transport)?;

        let deadline = Instant::now() + self.timeout;
        let mut lines = Vec::new();
        let mut buf = [0u8; 256];
        loop {
            while let Some(nl) = self.pending.iter().position(|&b| b == b'\n') {
                let raw: Vec<u8> = self.pending.drain(..=nl).collect();
                let line = String::from_utf8_lossy(&raw).trim().to_string();
                if line.is_empty() || line == command {
                    continue;
                }
                if line == "OK" {
                    return Ok(AtResponse {
                        lines,
                        status: AtStatus::Ok,
                    });
                }
                if line == "ERROR" || line.starts_with("+CME ERROR") || line.starts_with("+CMS ERROR")
                {
                    lines.push(line);
                    return Ok(AtResponse {
                        lines,
                        status: AtStatus::Error,
                    });
                }
                lines.push(line);
            }
            if Instant::now() >= deadline {
                return Ok(AtResponse {
                    lines,
                    status: AtStatus::Timeout,
                });
            }
            match self.io.read(&mut buf) {
                Ok(0) => std::thread::sleep(Duration::from_millis(5)),
                Ok(k) => self.pending.extend_from_slice(&buf[..k]),
                Err(e)
                    if matches!(
                        e.kind(),
                        io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock | io::ErrorKind::Interrupted
                    ) => {}
                Err(e) => return Err(Self::transport(e)),
            }
        }
    }
}

/// Physical modem with a GNSS receiver, driven over a serial line.
pub struct SerialModem<T> {
    port: AtPort<T>,
}

impl<T: Read + Write + Send> SerialModem<T> {
    /// Wraps the port and switches the GNSS engine on.
    pub fn open(port: AtPort<T>) -> Result<Self, ProtocolError> {
        let mut m = Self { port };
        let resp = m.port.exchange(GNSS_ON)?;
        match resp.status {
            AtStatus::Ok => {}
            AtStatus::Error if resp.lines.iter().any(|l| l == CME_SESSION_ACTIVE) => {}
            AtStatus::Error => return Err(ProtocolError::ErrorStatus(resp.lines.join(" | "))),
            AtStatus::Timeout => return Err(ProtocolError::Timeout(m.port.timeout)),
        }
        Ok(m)
    }

    pub fn into_port(self) -> AtPort<T> {
        self.port
    }
}

impl<T: Read + Write + Send> ModemBackend for SerialModem<T> {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            signal_readout: true,
            gnss: true,
        }
    }

    fn query_serving_cell(&mut self) -> Result<AtResponse, ProtocolError> {
        let resp = self.port.exchange(SERVING_CELL_QUERY)?;
        if resp.status == AtStatus::Timeout {
            return Err(ProtocolError::Timeout(self.port.timeout));
        }
        Ok(resp)
    }

    fn query_gga(&mut self) -> Result<String, ProtocolError> {
        let resp = self.port.exchange(GGA_QUERY)?;
        match resp.status {
            AtStatus::Ok => resp
                .lines
                .iter()
                .find_map(|l| l.strip_prefix("+QGPSGNMEA:").map(|s| s.trim().to_string()))
                .ok_or_else(|| ProtocolError::MalformedSentence("no +QGPSGNMEA line".into())),
            AtStatus::Error if resp.lines.iter().any(|l| l == CME_NOT_FIXED) => {
                Err(ProtocolError::NoFix)
            }
            AtStatus::Error => Err(ProtocolError::ErrorStatus(resp.lines.join(" | "))),
            AtStatus::Timeout => Err(ProtocolError::Timeout(self.port.timeout)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::VirtualClock;
    use crate::model::Rsrp;
    use crate::protocol::{read_fix_average, read_signal};
    use chrono::{TimeZone, Utc};
    use std::collections::VecDeque;

    /// Replays one scripted reply per written command, echoing the command
    /// first like a modem with ATE1.
    #[derive(Default)]
    struct FakeLine {
        replies: VecDeque<&'static str>,
        out: VecDeque<u8>,
        written: Vec<u8>,
    }

    impl Write for FakeLine {
        fn write(&mut self, b: &[u8]) -> io::Result<usize> {
            self.written.extend_from_slice(b);
            if b.ends_with(b"\r") {
                self.out.extend(b.iter().copied());
                self.out.push_back(b'\n');
                if let Some(r) = self.replies.pop_front() {
                    self.out.extend(r.bytes());
                }
            }
            Ok(b.len())
        }
        fn flush(&mut self) -> io::Result<()> {
            Ok(())
        }
    }

    impl Read for FakeLine {
        fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
            if self.out.is_empty() {
                return Err(io::ErrorKind::TimedOut.into());
            }
            // dribble a few bytes at a time like a UART
            let k = buf.len().min(self.out.len()).min(7);
            for b in buf.iter_mut().take(k) {
                *b = self.out.pop_front().unwrap();
            }
            Ok(k)
        }
    }

    const QENG: &str = "\r\n+QENG: \"servingcell\",\"NOCONN\",\"eMTC\",\"FDD\",262,99,1A2B,5F,3,72,2,4,2E1,-121,-15,-95,9\r\n\r\nOK\r\n";

    fn port(replies: &[&'static str]) -> AtPort<FakeLine> {
        AtPort::new(FakeLine {
            replies: replies.iter().copied().collect(),
            ..Default::default()
        })
        .with_timeout(Duration::from_millis(50))
    }

    #[test]
    fn full_exchange() {
        let mut m = SerialModem::open(port(&["\r\nOK\r\n", QENG])).unwrap();
        let clock = VirtualClock::new(Utc.with_ymd_and_hms(2024, 5, 14, 10, 0, 0).unwrap());
        let s = read_signal(&mut m, &clock).unwrap();
        assert_eq!(s.rsrp, Rsrp::Dbm(-121));
        let written = String::from_utf8(m.into_port().into_inner().written).unwrap();
        assert_eq!(written, "AT+QGPS=1\rAT+QENG=\"servingcell\"\r");
    }

    #[test]
    fn gnss_already_on_is_fine() {
        assert!(SerialModem::open(port(&["\r\n+CME ERROR: 504\r\n"])).is_ok());
        assert!(SerialModem::open(port(&["\r\n+CME ERROR: 3\r\n"])).is_err());
    }

    #[test]
    fn silent_modem_times_out() {
        let mut p = port(&[]);
        let r = p.exchange("AT").unwrap();
        assert_eq!(r.status, AtStatus::Timeout);
        let mut m = SerialModem::open(port(&["\r\nOK\r\n"])).unwrap();
        assert!(matches!(
            m.query_serving_cell(),
            Err(ProtocolError::Timeout(_))
        ));
    }

    #[test]
    fn fix_retries_not_fixed_errors() {
        let gga = "\r\n+QGPSGNMEA: $GPGGA,092750.000,5321.6802,N,00630.3372,W,1,8,1.03,61.7,M,55.2,M,,*76\r\n\r\nOK\r\n";
        let mut m = SerialModem::open(port(&[
            "\r\nOK\r\n",
            "\r\n+CME ERROR: 516\r\n",
            gga,
        ]))
        .unwrap();
        let p = read_fix_average(&mut m, 1).unwrap();
        assert!((p.altitude - 61.7).abs() < 1e-9);
    }
}
