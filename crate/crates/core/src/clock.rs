//! Injected time source.
//!
//! Every timestamp in the system comes from a [`Clock`], so the state
//! machines stay pure and scripted runs are reproducible.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

/// Milliseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn millis(self) -> u64 {
        self.0
    }

    pub fn saturating_add(self, d: Duration) -> Timestamp {
        Timestamp(self.0.saturating_add(d.as_millis() as u64))
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;

    /// Waits for `d`. Scripted clocks advance instead of blocking.
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        let since = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default();
        Timestamp(since.as_millis() as u64)
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// A manually driven clock. Each `now()` call returns the current value and
/// then moves the clock forward by `tick` so successive events are ordered.
#[derive(Debug)]
pub struct ScriptedClock {
    now: AtomicU64,
    tick: u64,
}

impl ScriptedClock {
    pub fn new(start: Timestamp) -> Self {
        Self::with_tick(start, 1_000)
    }

    pub fn with_tick(start: Timestamp, tick_ms: u64) -> Self {
        Self {
            now: AtomicU64::new(start.0),
            tick: tick_ms,
        }
    }

    pub fn advance(&self, d: Duration) {
        self.now.fetch_add(d.as_millis() as u64, Ordering::SeqCst);
    }

    pub fn peek(&self) -> Timestamp {
        Timestamp(self.now.load(Ordering::SeqCst))
    }
}

impl Default for ScriptedClock {
    fn default() -> Self {
        // 2017-06-01T00:00:00Z
        Self::new(Timestamp(1_496_275_200_000))
    }
}

impl Clock for ScriptedClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.now.fetch_add(self.tick, Ordering::SeqCst))
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_clock_ticks_and_sleeps() {
        let clock = ScriptedClock::with_tick(Timestamp(10), 5);
        assert_eq!(clock.now(), Timestamp(10));
        assert_eq!(clock.now(), Timestamp(15));
        clock.sleep(Duration::from_millis(100));
        assert_eq!(clock.peek(), Timestamp(120));
    }
}
