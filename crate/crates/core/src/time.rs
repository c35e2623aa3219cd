//! Simulated time.
//!
//! All simulator arithmetic runs on integer picoseconds so that event order,
//! serialization times and token-bucket refills are exact and reproducible.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

pub const PS_PER_SEC: u64 = 1_000_000_000_000;

/// A point (or span) in simulated time, in picoseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }

    /// Converts seconds to the nearest picosecond. Negative input clamps to zero.
    pub fn from_secs(secs: f64) -> Self {
        if secs <= 0.0 {
            return SimTime::ZERO;
        }
        SimTime((secs * PS_PER_SEC as f64).round() as u64)
    }

    pub fn as_ps(self) -> u64 {
        self.0
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / PS_PER_SEC as f64
    }

    pub fn as_micros(self) -> f64 {
        self.0 as f64 / 1_000_000.0
    }

    /// Time needed to clock `bits` onto a link running at `rate_bps`,
    /// rounded up to the next picosecond.
    pub fn transmission(bits: u64, rate_bps: u64) -> Self {
        let num = bits as u128 * PS_PER_SEC as u128;
        let rate = rate_bps as u128;
        SimTime(num.div_ceil(rate) as u64)
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}s", self.as_secs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transmission_at_gigabit_is_one_ns_per_bit() {
        assert_eq!(SimTime::transmission(4256, 1_000_000_000), SimTime(4_256_000));
    }

    #[test]
    fn transmission_rounds_up() {
        // 1 bit at 3 bps = 333_333_333_333.33 ps
        assert_eq!(SimTime::transmission(1, 3), SimTime(333_333_333_334));
    }

    #[test]
    fn secs_round_trip() {
        let t = SimTime::from_secs(2.5);
        assert_eq!(t.as_ps(), 2_500_000_000_000);
        assert_eq!(t.as_secs(), 2.5);
        assert_eq!(SimTime::from_secs(-1.0), SimTime::ZERO);
    }
}
