use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Token bucket shared by all in-flight requests of a client.
#[derive(Debug)]
pub struct RateLimiter {
    inner: Option<Mutex<Bucket>>,
}

#[derive(Debug)]
struct Bucket {
    rate_per_sec: f64,
    capacity: f64,
    tokens: f64,
    last: Instant,
}

impl RateLimiter {
    pub fn unlimited() -> Self {
        RateLimiter { inner: None }
    }

    /// `rate_per_sec` tokens refill continuously up to `burst`.
    pub fn new(rate_per_sec: f64, burst: u32) -> Self {
        if rate_per_sec <= 0.0 || !rate_per_sec.is_finite() {
            return Self::unlimited();
        }
        let capacity = f64::from(burst.max(1));
        RateLimiter {
            inner: Some(Mutex::new(Bucket { rate_per_sec, capacity, tokens: capacity, last: Instant::now() })),
        }
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        let Some(bucket) = &self.inner else { return };
        loop {
            let wait = {
                let mut b = bucket.lock().expect("rate limiter poisoned");
                let now = Instant::now();
                let elapsed = now.duration_since(b.last).as_secs_f64();
                b.tokens = (b.tokens + elapsed * b.rate_per_sec).min(b.capacity);
                b.last = now;
                if b.tokens >= 1.0 {
                    b.tokens -= 1.0;
                    return;
                }
                (1.0 - b.tokens) / b.rate_per_sec
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

impl Default for RateLimiter {
    fn default() -> Self {
        Self::unlimited()
    }
}
