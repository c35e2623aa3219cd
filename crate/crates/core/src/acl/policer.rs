use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::{wire_bits, Frame};
use crate::time::{SimTime, PS_PER_SEC};

/// Rate and burst sizes of a policed rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolicerConfig {
    pub cir_bps: u64,
    pub normal_burst_bits: u64,
    pub excess_burst_bits: u64,
}

impl PolicerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.cir_bps == 0 || self.normal_burst_bits == 0 || self.excess_burst_bits == 0 {
            return Err("policer rates and bursts must be positive".into());
        }
        if self.normal_burst_bits > self.excess_burst_bits {
            return Err(format!(
                "normal burst {} exceeds excess burst {}",
                self.normal_burst_bits, self.excess_burst_bits
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PoliceOutcome {
    Conform,
    Exceed,
    Violate,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicerError {
    #[error("policer clock went backwards: {now} < {last}")]
    ClockWentBackwards { now: SimTime, last: SimTime },
}

/// Single token bucket filled at the committed rate and capped at the
/// excess burst. A frame conforms if it fits in the tokens available up to
/// the normal burst, exceeds if it fits in the tokens up to the excess
/// burst, and violates otherwise. Violating frames leave the bucket alone.
///
/// Tokens are tracked in bit-picoseconds per second (bits * 10^12) so refill
/// at any rate is exact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Policer {
    config: PolicerConfig,
    tokens: u128,
    last_update: SimTime,
}

const SCALE: u128 = PS_PER_SEC as u128;

impl Policer {
    /// A fresh bucket holding `normal_burst_bits`.
    pub fn new(config: PolicerConfig, start: SimTime) -> Self {
        Policer { config, tokens: config.normal_burst_bits as u128 * SCALE, last_update: start }
    }

    pub fn config(&self) -> &PolicerConfig {
        &self.config
    }

    /// Available tokens, in bits (fractional part truncated).
    pub fn tokens_bits(&self) -> u64 {
        (self.tokens / SCALE) as u64
    }

    pub fn last_update(&self) -> SimTime {
        self.last_update
    }

    pub fn police(&mut self, frame: &Frame, now: SimTime) -> Result<PoliceOutcome, PolicerError> {
        self.police_bits(wire_bits(frame), now)
    }

    pub fn police_bits(&mut self, bits: u64, now: SimTime) -> Result<PoliceOutcome, PolicerError> {
        if now < self.last_update {
            return Err(PolicerError::ClockWentBackwards { now, last: self.last_update });
        }
        let elapsed = (now - self.last_update).as_ps() as u128;
        let cap = self.config.excess_burst_bits as u128 * SCALE;
        self.tokens = (self.tokens + self.config.cir_bps as u128 * elapsed).min(cap);
        self.last_update = now;

        let need = bits as u128 * SCALE;
        let normal = self.config.normal_burst_bits as u128 * SCALE;
        let outcome = if need <= self.tokens.min(normal) {
            PoliceOutcome::Conform
        } else if need <= self.tokens {
            PoliceOutcome::Exceed
        } else {
            return Ok(PoliceOutcome::Violate);
        };
        self.tokens -= need;
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(cir: u64, nb: u64, eb: u64) -> PolicerConfig {
        PolicerConfig { cir_bps: cir, normal_burst_bits: nb, excess_burst_bits: eb }
    }

    #[test]
    fn fresh_bucket_conforms() {
        let mut p = Policer::new(cfg(1_000_000, 10_000, 20_000), SimTime::ZERO);
        assert_eq!(p.police_bits(4256, SimTime::ZERO), Ok(PoliceOutcome::Conform));
        assert_eq!(p.tokens_bits(), 10_000 - 4256);
    }

    #[test]
    fn empty_bucket_violates_without_debit() {
        let mut p = Policer::new(cfg(1_000_000, 4256, 4256), SimTime::ZERO);
        assert_eq!(p.police_bits(4256, SimTime::ZERO), Ok(PoliceOutcome::Conform));
        assert_eq!(p.tokens_bits(), 0);
        assert_eq!(p.police_bits(4256, SimTime::ZERO), Ok(PoliceOutcome::Violate));
        assert_eq!(p.tokens_bits(), 0);
    }

    #[test]
    fn tokens_above_normal_burst_are_excess() {
        // Bucket refills to 20_000 but only 10_000 count as conforming.
        let mut p = Policer::new(cfg(1_000_000, 10_000, 20_000), SimTime::ZERO);
        let later = SimTime::from_secs(1.0);
        assert_eq!(p.police_bits(15_000, later), Ok(PoliceOutcome::Exceed));
        assert_eq!(p.tokens_bits(), 5_000);
        assert_eq!(p.police_bits(5_000, later), Ok(PoliceOutcome::Conform));
    }

    #[test]
    fn backwards_clock() {
        let mut p = Policer::new(cfg(1, 1, 1), SimTime::from_ps(10));
        assert!(p.police_bits(1, SimTime::from_ps(5)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(cfg(1, 2, 1).validate().is_err());
        assert!(cfg(0, 1, 1).validate().is_err());
        assert!(cfg(1, 1, 1).validate().is_ok());
    }
}
