use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

const PERIOD: Duration = Duration::from_millis(100);

fn status_kib(field: &str) -> Option<u64> {
    let text = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = text.lines().find(|l| l.starts_with(field))?;
    line[field.len()..].trim().trim_end_matches("kB").trim().parse().ok()
}

/// Current resident set size in KiB, if the platform exposes it.
pub fn current_rss_kib() -> Option<u64> {
    status_kib("VmRSS:")
}

/// Samples resident memory every 100 ms on a background thread.
pub struct MemorySampler {
    peak_kib: Arc<AtomicU64>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MemorySampler {
    pub fn start() -> Self {
        let peak_kib = Arc::new(AtomicU64::new(current_rss_kib().unwrap_or(0)));
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let (peak, stop) = (peak_kib.clone(), stop.clone());
            std::thread::Builder::new()
                .name("rss-sampler".into())
                .spawn(move || {
                    while !stop.load(Ordering::Relaxed) {
                        if let Some(kib) = current_rss_kib() {
                            peak.fetch_max(kib, Ordering::Relaxed);
                        }
                        std::thread::sleep(PERIOD);
                    }
                })
                .ok()
        };
        Self {
            peak_kib,
            stop,
            handle,
        }
    }

    /// Highest resident size seen so far, including the kernel's high-water mark, in MiB.
    pub fn peak_mib(&self) -> Option<f64> {
        let sampled = self.peak_kib.load(Ordering::Relaxed);
        let hwm = status_kib("VmHWM:").unwrap_or(0);
        let kib = sampled.max(hwm);
        (kib > 0).then(|| kib as f64 / 1024.0)
    }
}

impl Drop for MemorySampler {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
