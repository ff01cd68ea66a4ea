//! Pipeline counters, a log-linear latency histogram and an input-rate
//! estimate. Time is always passed in so the recorder stays deterministic.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

const LINEAR: u64 = 64;
const SUB_BUCKETS: u64 = 32;

/// Latency histogram with about 3% relative resolution above 64 µs and
/// exact buckets below.
#[derive(Debug, Clone, Default)]
pub struct LatencyHistogram {
    counts: Vec<u64>,
    total: u64,
    max: u64,
}

fn bucket_of(v: u64) -> usize {
    if v < LINEAR {
        return v as usize;
    }
    let msb = 63 - v.leading_zeros() as u64;
    let shift = msb - 5;
    (LINEAR + (msb - 6) * SUB_BUCKETS + ((v >> shift) - SUB_BUCKETS)) as usize
}

/// Largest value that falls in bucket `b`.
fn bucket_upper(b: usize) -> u64 {
    let b = b as u64;
    if b < LINEAR {
        return b;
    }
    let msb = (b - LINEAR) / SUB_BUCKETS + 6;
    let shift = msb - 5;
    let mantissa = (b - LINEAR) % SUB_BUCKETS + SUB_BUCKETS;
    ((mantissa + 1) << shift) - 1
}

impl LatencyHistogram {
    pub fn record(&mut self, micros: u64) {
        let b = bucket_of(micros);
        if self.counts.len() <= b {
            self.counts.resize(b + 1, 0);
        }
        self.counts[b] += 1;
        self.total += 1;
        self.max = self.max.max(micros);
    }

    pub fn count(&self) -> u64 {
        self.total
    }

    pub fn max(&self) -> u64 {
        self.max
    }

    /// Upper bound of the bucket holding the `q` quantile, 0 when empty.
    pub fn quantile(&self, q: f64) -> u64 {
        if self.total == 0 {
            return 0;
        }
        let rank = ((q.clamp(0.0, 1.0) * self.total as f64).ceil() as u64).max(1);
        let mut seen = 0;
        for (b, &c) in self.counts.iter().enumerate() {
            seen += c;
            if seen >= rank {
                return bucket_upper(b).min(self.max);
            }
        }
        self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub ts_us: u64,
    pub frames_in: u64,
    pub frames_rejected: u64,
    pub events_out: u64,
    pub commands_sent: u64,
    pub p50_us: u64,
    pub p95_us: u64,
    pub p99_us: u64,
    pub fps: f64,
}

impl MetricsSnapshot {
    /// One metrics JSONL record.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "ts_us": self.ts_us,
            "frames_in": self.frames_in,
            "p50_us": self.p50_us,
            "p95_us": self.p95_us,
            "fps": self.fps,
        })
        .to_string()
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipelineMetrics {
    frames_in: u64,
    frames_rejected: u64,
    events_out: u64,
    commands_sent: u64,
    latency: LatencyHistogram,
    recent_ingest: VecDeque<u64>,
}

const RATE_WINDOW_US: u64 = 1_000_000;

impl PipelineMetrics {
    pub fn record_frame(&mut self, now_us: u64) {
        self.frames_in += 1;
        self.recent_ingest.push_back(now_us);
        self.trim(now_us);
    }

    pub fn record_rejected(&mut self) {
        self.frames_rejected += 1;
    }

    pub fn record_events(&mut self, n: usize) {
        self.events_out += n as u64;
    }

    pub fn record_commands(&mut self, n: usize) {
        self.commands_sent += n as u64;
    }

    /// Frame ingest to command enqueue.
    pub fn record_latency(&mut self, micros: u64) {
        self.latency.record(micros);
    }

    pub fn latency(&self) -> &LatencyHistogram {
        &self.latency
    }

    fn trim(&mut self, now_us: u64) {
        while let Some(&t) = self.recent_ingest.front() {
            if now_us.saturating_sub(t) >= RATE_WINDOW_US {
                self.recent_ingest.pop_front();
            } else {
                break;
            }
        }
    }

    pub fn snapshot(&mut self, now_us: u64) -> MetricsSnapshot {
        self.trim(now_us);
        MetricsSnapshot {
            ts_us: now_us,
            frames_in: self.frames_in,
            frames_rejected: self.frames_rejected,
            events_out: self.events_out,
            commands_sent: self.commands_sent,
            p50_us: self.latency.quantile(0.50),
            p95_us: self.latency.quantile(0.95),
            p99_us: self.latency.quantile(0.99),
            fps: self.recent_ingest.len() as f64 * 1e6 / RATE_WINDOW_US as f64,
        }
    }
}
