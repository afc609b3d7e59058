//! Bounded-concurrency batch execution with retry and pacing.

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use tokio::time::Instant;

use super::ProviderError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchPolicy {
    pub max_in_flight: usize,
    /// Request starts per second across the whole batch.
    pub per_provider_rate: f64,
    pub retry_limit: u32,
    #[serde(with = "millis")]
    pub backoff_base: Duration,
}

impl Default for FetchPolicy {
    fn default() -> Self {
        Self {
            max_in_flight: 10,
            per_provider_rate: 50.0,
            retry_limit: 3,
            backoff_base: Duration::from_millis(500),
        }
    }
}

impl FetchPolicy {
    /// Pacing effectively disabled; for local fixtures.
    pub fn local() -> Self {
        Self {
            per_provider_rate: 1.0e6,
            backoff_base: Duration::from_millis(1),
            ..Self::default()
        }
    }

    fn start_interval(&self) -> Duration {
        Duration::from_secs_f64(1.0 / self.per_provider_rate)
    }

    /// Delay before retry number `retry` (0-based).
    fn backoff(&self, retry: u32, hint: Option<Duration>) -> Duration {
        let exponential = self.backoff_base.saturating_mul(1u32 << retry.min(16));
        hint.map_or(exponential, |h| h.max(exponential))
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

/// The outcome of one request in a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Keyed<K, T> {
    pub key: K,
    pub result: Result<T, ProviderError>,
    pub attempts: u32,
}

struct Pacer {
    interval: Duration,
    next_start: Mutex<Option<Instant>>,
}

impl Pacer {
    async fn wait_turn(&self) {
        let slot = {
            let mut next = self.next_start.lock().await;
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot
        };
        tokio::time::sleep_until(slot).await;
    }
}

/// Runs `call` for every key with at most `policy.max_in_flight` calls
/// outstanding. Results come back in input order whatever order the calls
/// complete in. Transient failures are retried up to `policy.retry_limit`
/// times with exponential backoff; other failures stay attached to their key
/// and never abort the batch.
pub async fn fetch_many<K, T, F, Fut>(
    requests: Vec<K>,
    policy: &FetchPolicy,
    call: F,
) -> Vec<Keyed<K, T>>
where
    K: Clone,
    F: Fn(K) -> Fut,
    Fut: Future<Output = Result<T, ProviderError>>,
{
    let total = requests.len();
    let max_in_flight = policy.max_in_flight.max(1);
    let pacer = Arc::new(Pacer {
        interval: policy.start_interval(),
        next_start: Mutex::new(None),
    });
    let call = &call;

    let mut slots: Vec<Option<Keyed<K, T>>> = (0..total).map(|_| None).collect();
    let mut completions = stream::iter(requests.into_iter().enumerate())
        .map(|(index, key)| {
            let pacer = Arc::clone(&pacer);
            async move {
                let mut attempts = 0;
                let result = loop {
                    pacer.wait_turn().await;
                    attempts += 1;
                    match call(key.clone()).await {
                        Err(e) if e.is_transient() && attempts <= policy.retry_limit => {
                            let hint = match &e {
                                ProviderError::RateLimited { retry_after, .. } => *retry_after,
                                _ => None,
                            };
                            let delay = policy.backoff(attempts - 1, hint);
                            tracing::debug!(attempt = attempts, ?delay, error = %e, "retrying");
                            tokio::time::sleep(delay).await;
                        }
                        other => break other,
                    }
                };
                (index, Keyed { key, result, attempts })
            }
        })
        .buffer_unordered(max_in_flight);

    while let Some((index, keyed)) = completions.next().await {
        slots[index] = Some(keyed);
    }
    slots
        .into_iter()
        .map(|slot| slot.expect("every request completes exactly once"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn quick() -> FetchPolicy {
        FetchPolicy {
            backoff_base: Duration::from_millis(1),
            per_provider_rate: 1.0e6,
            ..FetchPolicy::default()
        }
    }

    #[tokio::test]
    async fn results_follow_input_order() {
        let keys: Vec<u64> = (0..100).collect();
        let out = fetch_many(keys, &quick(), |k| async move {
            tokio::time::sleep(Duration::from_micros((97 * k) % 13 * 100)).await;
            Ok::<_, ProviderError>(k * 2)
        })
        .await;
        assert_eq!(out.len(), 100);
        for (i, item) in out.iter().enumerate() {
            assert_eq!(item.key, i as u64);
            assert_eq!(item.result, Ok(i as u64 * 2));
        }
    }

    #[tokio::test]
    async fn rate_limited_twice_then_success() {
        let calls = AtomicUsize::new(0);
        let out = fetch_many(vec!["only"], &quick(), |_| {
            let n = calls.fetch_add(1, Ordering::SeqCst);
            async move {
                if n < 2 {
                    Err(ProviderError::RateLimited {
                        provider: "test",
                        retry_after: None,
                    })
                } else {
                    Ok(n)
                }
            }
        })
        .await;
        assert_eq!(out[0].result, Ok(2));
        assert_eq!(out[0].attempts, 3);
    }

    #[tokio::test]
    async fn retries_stop_at_limit() {
        let policy = FetchPolicy { retry_limit: 2, ..quick() };
        let out = fetch_many(vec![1], &policy, |_| async {
            Err::<(), _>(ProviderError::Unavailable {
                provider: "test",
                reason: "down".into(),
            })
        })
        .await;
        assert!(out[0].result.is_err());
        assert_eq!(out[0].attempts, 3);
    }

    #[tokio::test]
    async fn failures_are_isolated() {
        let out = fetch_many((0..5).collect::<Vec<i32>>(), &quick(), |k| async move {
            if k == 3 {
                Err(ProviderError::UnmappedTrack(k.to_string()))
            } else {
                Ok(k)
            }
        })
        .await;
        assert_eq!(out.iter().filter(|k| k.result.is_ok()).count(), 4);
        assert_eq!(out[3].result, Err(ProviderError::UnmappedTrack("3".into())));
        assert_eq!(out[3].attempts, 1);
    }

    #[tokio::test]
    async fn empty_batch() {
        let out = fetch_many(Vec::<u8>::new(), &quick(), |k| async move { Ok::<_, ProviderError>(k) }).await;
        assert!(out.is_empty());
    }

    #[test]
    fn backoff_grows_and_respects_hint() {
        let p = FetchPolicy::default();
        assert_eq!(p.backoff(0, None), Duration::from_millis(500));
        assert_eq!(p.backoff(2, None), Duration::from_millis(2000));
        assert_eq!(p.backoff(0, Some(Duration::from_secs(3))), Duration::from_secs(3));
    }

    #[tokio::test(start_paused = true)]
    async fn pacing_spaces_request_starts() {
        let policy = FetchPolicy { per_provider_rate: 10.0, ..quick() };
        let begin = Instant::now();
        let starts = fetch_many((0..5).collect::<Vec<u8>>(), &policy, |_| async {
            Ok::<_, ProviderError>(Instant::now())
        })
        .await;
        let last = starts.iter().map(|k| *k.result.as_ref().unwrap()).max().unwrap();
        assert!(last - begin >= Duration::from_millis(400));
    }
}
