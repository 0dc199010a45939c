use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, DurationRound, TimeDelta, Utc};

/// Time source for sample timestamps and inter-sample waits.
pub trait Clock: Send + Sync {
    /// Current time, truncated to whole milliseconds.
    fn now(&self) -> DateTime<Utc>;
    fn sleep(&self, d: Duration);
}

fn truncate_ms(t: DateTime<Utc>) -> DateTime<Utc> {
    t.duration_trunc(TimeDelta::milliseconds(1)).unwrap_or(t)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        truncate_ms(Utc::now())
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Clock that only advances when slept on. Used by tests and offline surveys.
#[derive(Debug)]
pub struct VirtualClock {
    now: Mutex<DateTime<Utc>>,
}

impl VirtualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self {
            now: Mutex::new(truncate_ms(start)),
        }
    }

    pub fn advance(&self, d: Duration) {
        let mut now = self.now.lock().unwrap();
        *now += TimeDelta::from_std(d).expect("duration out of range");
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> DateTime<Utc> {
        truncate_ms(*self.now.lock().unwrap())
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }
}
