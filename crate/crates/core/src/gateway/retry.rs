use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponential backoff with full jitter: the wait before retry `k` (1-based)
/// is uniform in `[0, min(max_delay, base * factor^(k-1))]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_secs: f64,
    pub factor: f64,
    pub max_delay_secs: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay_secs: 1.0,
            factor: 2.0,
            max_delay_secs: 60.0,
        }
    }
}

impl RetryPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.max_attempts == 0 {
            return Err(Error::Config(
                "retry.max_attempts must be at least 1".into(),
            ));
        }
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.base_delay_secs)
            || !finite_nonneg(self.max_delay_secs)
            || self.factor.is_nan()
            || self.factor < 1.0
        {
            return Err(Error::Config(
                "retry delays must be finite and non-negative, factor >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Upper bound of the jitter window before retry number `retry` (1-based).
    pub fn ceiling(&self, retry: u32) -> Duration {
        let exp = self.factor.powi(retry.saturating_sub(1).min(64) as i32);
        Duration::from_secs_f64((self.base_delay_secs * exp).min(self.max_delay_secs))
    }

    pub fn delay<R: Rng + ?Sized>(&self, retry: u32, rng: &mut R) -> Duration {
        let cap = self.ceiling(retry).as_secs_f64();
        if cap == 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(rng.gen_range(0.0..=cap))
        }
    }
}

/// Statuses worth another attempt: rate limiting and server errors.
pub fn is_retryable_status(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}
