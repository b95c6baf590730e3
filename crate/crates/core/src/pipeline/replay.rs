//! Token-bucket pacing for session replay, the session-level analogue of a
//! rate-controlled packet replay tool.

use std::time::{Duration, Instant};

/// Emits at most `rate` sessions/s with a burst allowance of one second's
/// worth of tokens.
#[derive(Debug)]
pub struct Pacer {
    rate: f64,
    burst: f64,
    tokens: f64,
    last_refill: Instant,
}

impl Pacer {
    pub fn new(rate: f64) -> Pacer {
        assert!(rate > 0.0, "pacer rate must be positive");
        // Start with a full bucket so the first second can burst.
        Pacer { rate, burst: rate, tokens: rate, last_refill: Instant::now() }
    }

    fn refill(&mut self) {
        let now = Instant::now();
        let elapsed = now.duration_since(self.last_refill).as_secs_f64();
        self.tokens = (self.tokens + elapsed * self.rate).min(self.burst);
        self.last_refill = now;
    }

    /// Blocks until one token is available, then consumes it.
    pub fn wait(&mut self) {
        self.refill();
        if self.tokens < 1.0 {
            let deficit = 1.0 - self.tokens;
            std::thread::sleep(Duration::from_secs_f64(deficit / self.rate));
            self.refill();
        }
        self.tokens -= 1.0;
    }
}
