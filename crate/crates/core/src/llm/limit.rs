//! Bounded in-flight request limiting.

use std::sync::{Arc, Condvar, Mutex};

use super::{ChatClient, ChatRequest, ChatResponse, LlmError};

struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut permits = self.permits.lock().expect("semaphore lock");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("semaphore wait");
        }
        *permits -= 1;
    }

    fn release(&self) {
        let mut permits = self.permits.lock().expect("semaphore lock");
        *permits += 1;
        self.available.notify_one();
    }
}

/// A client wrapper allowing at most `n` in-flight requests; excess callers
/// block until a permit frees up.
pub struct LimitedClient {
    inner: Arc<dyn ChatClient>,
    semaphore: Semaphore,
}

/// Wraps `inner` with an in-flight limit of `n` requests. `n = 0` is a
/// configuration error.
pub fn with_concurrency_limit(
    inner: Arc<dyn ChatClient>,
    n: usize,
) -> Result<LimitedClient, LlmError> {
    if n == 0 {
        return Err(LlmError::Config(
            "concurrency limit must be at least 1".to_string(),
        ));
    }
    Ok(LimitedClient {
        inner,
        semaphore: Semaphore::new(n),
    })
}

impl ChatClient for LimitedClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        self.semaphore.acquire();
        let result = self.inner.complete(request);
        self.semaphore.release();
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockChatClient, RequestDefaults};
    use std::sync::atomic::{AtomicI64, Ordering};
    use std::time::Duration;

    struct GaugedClient {
        inner: MockChatClient,
        in_flight: AtomicI64,
        max_seen: AtomicI64,
    }

    impl ChatClient for GaugedClient {
        fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
            let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            self.max_seen.fetch_max(now, Ordering::SeqCst);
            let result = self.inner.complete(request);
            self.in_flight.fetch_sub(1, Ordering::SeqCst);
            result
        }
    }

    fn run_with_limit(limit: usize, calls: usize) -> i64 {
        let gauged = Arc::new(GaugedClient {
            inner: MockChatClient::new()
                .with_regex_rule(".*", "ok")
                .unwrap()
                .with_delay(Duration::from_millis(15)),
            in_flight: AtomicI64::new(0),
            max_seen: AtomicI64::new(0),
        });
        let limited = Arc::new(with_concurrency_limit(gauged.clone(), limit).unwrap());

        std::thread::scope(|scope| {
            for i in 0..calls {
                let limited = limited.clone();
                scope.spawn(move || {
                    let req = RequestDefaults::default().user_request(format!("call {i}"));
                    limited.complete(&req).unwrap();
                });
            }
        });
        gauged.max_seen.load(Ordering::SeqCst)
    }

    #[test]
    fn limit_one_is_strictly_serial() {
        assert_eq!(run_with_limit(1, 6), 1);
    }

    #[test]
    fn limit_four_caps_in_flight_requests() {
        let max = run_with_limit(4, 10);
        assert!(max <= 4, "observed {max} in-flight with limit 4");
        assert!(max >= 2, "expected some overlap, saw {max}");
    }

    #[test]
    fn zero_limit_is_a_configuration_error() {
        let inner: Arc<dyn ChatClient> = Arc::new(MockChatClient::new());
        assert!(matches!(
            with_concurrency_limit(inner, 0),
            Err(LlmError::Config(_))
        ));
    }
}
