use std::sync::atomic::{AtomicI64, Ordering};
use std::time::Duration;

use chrono::{DateTime, Utc};

/// Time source for timestamps, latency measurement and injected delays.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
    fn sleep(&self, d: Duration);

    /// True when `sleep` only advances virtual time. Work that measures
    /// latency must then run sequentially to stay reproducible.
    fn is_simulated(&self) -> bool {
        false
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Virtual clock: `sleep` advances time instantly. Used for replayable
/// scenario runs where measured latencies must be reproducible.
#[derive(Debug)]
pub struct SimulatedClock {
    micros: AtomicI64,
}

impl SimulatedClock {
    pub fn starting_at(t: DateTime<Utc>) -> Self {
        SimulatedClock { micros: AtomicI64::new(t.timestamp_micros()) }
    }

    pub fn advance(&self, d: Duration) {
        self.micros.fetch_add(d.as_micros() as i64, Ordering::SeqCst);
    }
}

impl Clock for SimulatedClock {
    fn now(&self) -> DateTime<Utc> {
        DateTime::from_timestamp_micros(self.micros.load(Ordering::SeqCst)).expect("simulated time in range")
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }

    fn is_simulated(&self) -> bool {
        true
    }
}

/// Whole milliseconds elapsed between two instants, floored at zero.
pub fn elapsed_ms(from: DateTime<Utc>, to: DateTime<Utc>) -> u64 {
    (to - from).num_milliseconds().max(0) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn simulated_sleep_advances() {
        let t0 = Utc.with_ymd_and_hms(2023, 10, 18, 0, 0, 0).unwrap();
        let c = SimulatedClock::starting_at(t0);
        c.sleep(Duration::from_millis(1200));
        assert_eq!(elapsed_ms(t0, c.now()), 1200);
    }
}
