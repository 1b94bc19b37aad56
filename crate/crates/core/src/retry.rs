//! Bounded retries with exponential backoff for remote services.

use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff_ms: 1000,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(attempts: u32) -> Self {
        Self {
            attempts,
            initial_backoff_ms: 0,
        }
    }

    pub fn backoff(&self, failures: u32) -> Duration {
        Duration::from_millis(
            self.initial_backoff_ms
                .saturating_mul(1 << failures.min(16)),
        )
    }

    /// Runs `op` until it succeeds or `attempts` are used up; returns the last error.
    pub fn run<T, E: std::fmt::Display>(
        &self,
        mut op: impl FnMut() -> Result<T, E>,
    ) -> Result<T, E> {
        let attempts = self.attempts.max(1);
        let mut failures = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if failures + 1 < attempts => {
                    tracing::warn!(attempt = failures + 1, error = %e, "request failed, retrying");
                    std::thread::sleep(self.backoff(failures));
                    failures += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}
