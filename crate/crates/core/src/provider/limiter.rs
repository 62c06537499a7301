use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Monotonic time source that can also wait.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    start: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            start: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.start.elapsed()
    }
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Manually advanced clock; `sleep` advances time instantly.
#[derive(Debug, Default)]
pub struct FakeClock {
    now: Mutex<Duration>,
}

impl FakeClock {
    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }
    fn sleep(&self, d: Duration) {
        self.advance(d);
    }
}

impl<C: Clock + ?Sized> Clock for std::sync::Arc<C> {
    fn now(&self) -> Duration {
        (**self).now()
    }
    fn sleep(&self, d: Duration) {
        (**self).sleep(d)
    }
}

const WINDOW: Duration = Duration::from_secs(60);

/// At most `per_minute` acquisitions in any sliding 60-second window.
#[derive(Debug)]
pub struct RateLimiter<C> {
    clock: C,
    per_minute: usize,
    recent: Mutex<VecDeque<Duration>>,
}

impl<C: Clock> RateLimiter<C> {
    pub fn new(clock: C, per_minute: u32) -> Self {
        Self {
            clock,
            per_minute: per_minute.max(1) as usize,
            recent: Mutex::new(VecDeque::new()),
        }
    }

    pub fn clock(&self) -> &C {
        &self.clock
    }

    /// Blocks until a slot is free, then records the request time.
    pub fn acquire(&self) -> Duration {
        loop {
            let wait = {
                let mut q = self.recent.lock().unwrap();
                let now = self.clock.now();
                while q.front().is_some_and(|&t| now >= t + WINDOW) {
                    q.pop_front();
                }
                if q.len() < self.per_minute {
                    q.push_back(now);
                    return now;
                }
                q[0] + WINDOW - now
            };
            self.clock.sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;

    #[test]
    fn never_exceeds_cap_in_any_window() {
        let clock = Arc::new(FakeClock::default());
        let limiter = RateLimiter::new(clock.clone(), 7);
        let mut times = Vec::new();
        for i in 0..40 {
            if i % 3 == 0 {
                clock.advance(Duration::from_millis(1700));
            }
            times.push(limiter.acquire());
        }
        for (i, &t) in times.iter().enumerate() {
            let in_window = times[i..].iter().take_while(|&&u| u < t + WINDOW).count();
            assert!(in_window <= 7, "{in_window} requests starting at {t:?}");
        }
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn under_cap_does_not_wait() {
        let clock = Arc::new(FakeClock::default());
        let limiter = RateLimiter::new(clock.clone(), 5);
        for _ in 0..5 {
            assert_eq!(limiter.acquire(), Duration::ZERO);
        }
        assert_eq!(limiter.acquire(), WINDOW);
    }
}
