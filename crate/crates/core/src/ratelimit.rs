//! Token-bucket rate limiting for outbound queries.

use std::time::Duration;

use tokio::sync::Mutex;
use tokio::time::Instant;

/// Token bucket refilled at `rate` tokens per second, holding at most
/// `burst` tokens. Waiters are served in arrival order.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    burst: u32,
    // Theoretical arrival time of the next token (GCRA form of the bucket).
    next_free: Mutex<Option<Instant>>,
}

impl RateLimiter {
    /// `None` when `per_second` is not a positive finite rate.
    pub fn per_second(per_second: f64, burst: u32) -> Option<Self> {
        if !(per_second.is_finite() && per_second > 0.0) {
            return None;
        }
        Some(RateLimiter {
            interval: Duration::from_secs_f64(1.0 / per_second),
            burst: burst.max(1),
            next_free: Mutex::new(None),
        })
    }

    pub fn per_minute(per_minute: f64, burst: u32) -> Option<Self> {
        Self::per_second(per_minute / 60.0, burst)
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    /// Wait until a token is available and take it.
    pub async fn acquire(&self) {
        let wake_at = {
            let mut next = self.next_free.lock().await;
            let now = Instant::now();
            let tolerance = self.interval * (self.burst - 1);
            let tat = next.unwrap_or(now).max(now);
            let allowed_at = tat.checked_sub(tolerance).unwrap_or(now).max(now);
            *next = Some(tat + self.interval);
            allowed_at
        };
        tokio::time::sleep_until(wake_at).await;
    }
}
