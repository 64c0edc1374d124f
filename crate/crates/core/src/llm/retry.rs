use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Exponential backoff for transient backend failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 5, base_delay_ms: 500, max_delay_ms: 30_000 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.min(63)).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }

    /// All delays the policy can produce, in order.
    pub fn delays(&self) -> impl Iterator<Item = Duration> + '_ {
        (0..self.max_retries).map(|r| self.delay(r))
    }
}

/// Outcome of a single attempt.
pub enum Attempt<T, E> {
    Done(T),
    /// Retry if budget remains; the string describes the failure.
    Transient(String),
    Fatal(E),
}

/// Why [`run`] gave up.
pub enum Failure<E> {
    Fatal(E),
    Exhausted { attempts: u32, last: String },
}

/// Runs `op` until it succeeds, fails fatally or exhausts the retry budget.
/// Returns the value and the number of retries used.
pub fn run<T, E>(policy: &RetryPolicy, mut op: impl FnMut() -> Attempt<T, E>) -> Result<(T, u32), Failure<E>> {
    let mut retries = 0;
    loop {
        match op() {
            Attempt::Done(v) => return Ok((v, retries)),
            Attempt::Fatal(e) => return Err(Failure::Fatal(e)),
            Attempt::Transient(msg) => {
                if retries >= policy.max_retries {
                    return Err(Failure::Exhausted { attempts: retries + 1, last: msg });
                }
                log::warn!("transient backend failure ({msg}); retry {} of {}", retries + 1, policy.max_retries);
                thread::sleep(policy.delay(retries));
                retries += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exponential_and_capped() {
        let p = RetryPolicy { max_retries: 6, base_delay_ms: 100, max_delay_ms: 1000 };
        let d: Vec<u64> = p.delays().map(|d| d.as_millis() as u64).collect();
        assert_eq!(d, [100, 200, 400, 800, 1000, 1000]);
    }

    #[test]
    fn attempts_bounded_by_budget() {
        let p = RetryPolicy { max_retries: 2, base_delay_ms: 0, max_delay_ms: 0 };
        let mut calls = 0;
        let r: Result<((), u32), Failure<()>> = run(&p, || {
            calls += 1;
            Attempt::Transient("503".into())
        });
        assert!(matches!(r, Err(Failure::Exhausted { attempts: 3, .. })));
        assert_eq!(calls, 3);
    }

    #[test]
    fn succeeds_after_transients() {
        let p = RetryPolicy { max_retries: 3, base_delay_ms: 1, max_delay_ms: 2 };
        let mut calls = 0;
        let r: Result<(u8, u32), Failure<()>> = run(&p, || {
            calls += 1;
            if calls < 3 { Attempt::Transient("429".into()) } else { Attempt::Done(7) }
        });
        assert!(matches!(r, Ok((7, 2))));
    }

    proptest! {
        #[test]
        fn delays_never_decrease(base in 0u64..10_000, cap in 0u64..100_000, n in 0u32..80) {
            let p = RetryPolicy { max_retries: n, base_delay_ms: base, max_delay_ms: cap };
            let d: Vec<Duration> = p.delays().collect();
            prop_assert_eq!(d.len(), n as usize);
            prop_assert!(d.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
