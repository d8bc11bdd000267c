//! Exponential backoff with deterministic jitter.

use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::hashing::unit_interval;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub budget: u32,
    pub base_delay_ms: u64,
    pub factor: f64,
    /// Relative jitter, e.g. 0.2 for ±20%.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            budget: 3,
            base_delay_ms: 500,
            factor: 2.0,
            jitter: 0.2,
        }
    }
}

impl RetryPolicy {
    pub fn immediate(budget: u32) -> Self {
        Self {
            budget,
            base_delay_ms: 0,
            factor: 2.0,
            jitter: 0.0,
        }
    }

    /// Delay before retry number `retry` (1-based). Jitter is derived from
    /// `key` so a given request always backs off the same way; each delay is
    /// clamped to be at least the previous one.
    pub fn delay(&self, key: &str, retry: u32) -> Duration {
        let mut previous = 0.0f64;
        let mut current = 0.0f64;
        for k in 1..=retry {
            let u = unit_interval(&[key, &k.to_string()]);
            let spread = 1.0 + self.jitter * (2.0 * u - 1.0);
            let raw = self.base_delay_ms as f64 * self.factor.powi(k as i32 - 1) * spread;
            current = raw.max(previous);
            previous = current;
        }
        Duration::from_micros((current * 1000.0).round() as u64)
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, duration: Duration);
}

#[derive(Debug, Default)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, duration: Duration) {
        if !duration.is_zero() {
            std::thread::sleep(duration);
        }
    }
}

/// Records requested delays without sleeping.
#[derive(Debug, Default)]
pub struct RecordingSleeper {
    pub slept: Mutex<Vec<Duration>>,
}

impl Sleeper for RecordingSleeper {
    fn sleep(&self, duration: Duration) {
        self.slept.lock().expect("sleeper lock").push(duration);
    }
}

/// Outcome class of one failed attempt.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AttemptError {
    #[error("transient: {0}")]
    Transient(String),
    #[error("permanent: {0}")]
    Permanent(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RetryFailure {
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("refused on attempt {attempts}: {message}")]
    Permanent { attempts: u32, message: String },
}

/// Runs `op` until it succeeds, fails permanently, or the retry budget is
/// spent. Returns the value and the number of attempts made.
pub fn with_retry<T>(
    policy: &RetryPolicy,
    sleeper: &dyn Sleeper,
    key: &str,
    mut op: impl FnMut(u32) -> Result<T, AttemptError>,
) -> Result<(T, u32), RetryFailure> {
    let mut attempt = 1;
    loop {
        match op(attempt) {
            Ok(value) => return Ok((value, attempt)),
            Err(AttemptError::Permanent(message)) => {
                return Err(RetryFailure::Permanent {
                    attempts: attempt,
                    message,
                })
            }
            Err(AttemptError::Transient(last)) => {
                if attempt > policy.budget {
                    return Err(RetryFailure::Exhausted {
                        attempts: attempt,
                        last,
                    });
                }
                sleeper.sleep(policy.delay(key, attempt));
                attempt += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn script(
        outcomes: Vec<Result<u32, AttemptError>>,
    ) -> impl FnMut(u32) -> Result<u32, AttemptError> {
        let mut it = outcomes.into_iter();
        move |_| it.next().expect("script long enough")
    }

    #[test]
    fn succeeds_after_two_transients() {
        let sleeper = RecordingSleeper::default();
        let t = || AttemptError::Transient("429".into());
        let (v, attempts) = with_retry(
            &RetryPolicy::default(),
            &sleeper,
            "r",
            script(vec![Err(t()), Err(t()), Ok(7)]),
        )
        .unwrap();
        assert_eq!((v, attempts), (7, 3));
        assert_eq!(sleeper.slept.lock().unwrap().len(), 2);
    }

    #[test]
    fn budget_three_allows_four_attempts() {
        let sleeper = RecordingSleeper::default();
        let t = || Err(AttemptError::Transient("503".into()));
        let err = with_retry(
            &RetryPolicy::default(),
            &sleeper,
            "r",
            script(vec![t(), t(), t(), t()]),
        )
        .unwrap_err();
        assert_eq!(
            err,
            RetryFailure::Exhausted {
                attempts: 4,
                last: "503".into()
            }
        );
    }

    #[test]
    fn permanent_stops_immediately() {
        let sleeper = RecordingSleeper::default();
        let err = with_retry(
            &RetryPolicy::default(),
            &sleeper,
            "r",
            script(vec![Err(AttemptError::Permanent("401".into()))]),
        )
        .unwrap_err();
        assert_eq!(
            err,
            RetryFailure::Permanent {
                attempts: 1,
                message: "401".into()
            }
        );
        assert!(sleeper.slept.lock().unwrap().is_empty());
    }

    #[test]
    fn default_delays_bracket_nominal_schedule() {
        let p = RetryPolicy::default();
        for (retry, nominal) in [(1u32, 500.0), (2, 1000.0), (3, 2000.0)] {
            let d = p.delay("req-1", retry).as_secs_f64() * 1000.0;
            assert!(
                d >= nominal * 0.8 - 1e-6 && d <= nominal * 1.2 + 1e-6,
                "retry {retry}: {d}"
            );
        }
    }

    proptest! {
        #[test]
        fn delays_non_decreasing(key in "[a-z0-9]{1,10}", base in 0u64..5000, factor in 1.0f64..3.0, jitter in 0.0f64..0.9) {
            let p = RetryPolicy { budget: 8, base_delay_ms: base, factor, jitter };
            let delays: Vec<Duration> = (1..=8).map(|k| p.delay(&key, k)).collect();
            prop_assert!(delays.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
