//! Per-run measurement: bandwidth over a window, latency percentiles,
//! amplification, CPU time and a per-step latency breakdown.

use serde::Serialize;

use crate::kernel::SimTime;
use crate::workload::AmplificationLedger;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepStat {
    pub name: String,
    pub mean_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub path: String,
    pub window_ns: u64,
    pub end_ns: u64,
    /// Requests completed inside the window.
    pub requests: u64,
    /// Totals over the whole run.
    pub bytes_useful: u64,
    pub bytes_fetched: u64,
    pub useful_bandwidth: f64,
    pub raw_bandwidth: f64,
    pub iops: f64,
    pub latency_mean_ns: f64,
    pub latency_p50_ns: u64,
    pub latency_p99_ns: u64,
    pub amplification: f64,
    pub cpu_busy_time_ns: u64,
    /// Device commands accepted for processing.
    pub injected: u64,
    pub completions: u64,
    pub rejections: u64,
    pub host_cpu_events: u64,
    pub ssd_events: u64,
    /// `(time, requests in flight)` samples.
    #[serde(skip)]
    pub timeline: Vec<(u64, u64)>,
    #[serde(skip)]
    pub steps: Vec<StepStat>,
}

/// Column order of [`MetricsReport::scalars`].
pub const METRIC_COLUMNS: &[&str] = &[
    "useful_bandwidth",
    "raw_bandwidth",
    "iops",
    "latency_mean_ns",
    "latency_p50_ns",
    "latency_p99_ns",
    "amplification",
    "cpu_busy_time_ns",
    "requests",
    "bytes_useful",
    "bytes_fetched",
    "injected",
    "completions",
    "rejections",
    "host_cpu_events",
    "ssd_events",
    "window_ns",
    "end_ns",
];

impl MetricsReport {
    /// Scalar metrics in [`METRIC_COLUMNS`] order.
    pub fn scalars(&self) -> Vec<(&'static str, f64)> {
        let values = [
            self.useful_bandwidth,
            self.raw_bandwidth,
            self.iops,
            self.latency_mean_ns,
            self.latency_p50_ns as f64,
            self.latency_p99_ns as f64,
            self.amplification,
            self.cpu_busy_time_ns as f64,
            self.requests as f64,
            self.bytes_useful as f64,
            self.bytes_fetched as f64,
            self.injected as f64,
            self.completions as f64,
            self.rejections as f64,
            self.host_cpu_events as f64,
            self.ssd_events as f64,
            self.window_ns as f64,
            self.end_ns as f64,
        ];
        METRIC_COLUMNS.iter().copied().zip(values).collect()
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.scalars()
            .into_iter()
            .find(|(name, _)| *name == metric)
            .map(|(_, v)| v)
    }
}

#[derive(Debug, Clone, Copy)]
struct Done {
    at: u64,
    latency: u64,
    useful: u64,
    fetched: u64,
}

#[derive(Debug, Clone)]
pub struct Collector {
    path: &'static str,
    warmup: u64,
    done: Vec<Done>,
    ledger: AmplificationLedger,
    step_names: &'static [&'static str],
    step_sums: Vec<u128>,
    step_count: u64,
    timeline: Vec<(u64, u64)>,
    pub cpu_busy_ns: u64,
    pub injected: u64,
    pub completions: u64,
    pub rejections: u64,
}

impl Collector {
    pub fn new(path: &'static str, warmup: SimTime, step_names: &'static [&'static str]) -> Self {
        Self {
            path,
            warmup: warmup.as_ns(),
            done: Vec::new(),
            ledger: AmplificationLedger::default(),
            step_names,
            step_sums: vec![0; step_names.len()],
            step_count: 0,
            timeline: Vec::new(),
            cpu_busy_ns: 0,
            injected: 0,
            completions: 0,
            rejections: 0,
        }
    }

    /// Records a finished request. `stamps` holds one timestamp per step
    /// boundary: `stamps[0]` is the start, `stamps[i+1]` ends step `i`.
    pub fn request_done(&mut self, stamps: &[SimTime], useful: u64, fetched: u64) {
        debug_assert_eq!(stamps.len(), self.step_names.len() + 1);
        debug_assert!(stamps.windows(2).all(|w| w[0] <= w[1]), "step times regress: {stamps:?}");
        let start = stamps[0];
        let end = *stamps.last().expect("stamps");
        self.ledger.record(fetched, useful);
        self.done.push(Done {
            at: end.as_ns(),
            latency: end.saturating_sub(start),
            useful,
            fetched,
        });
        for (i, w) in stamps.windows(2).enumerate() {
            self.step_sums[i] += u128::from(w[1].saturating_sub(w[0]));
        }
        self.step_count += 1;
    }

    pub fn sample(&mut self, at: SimTime, inflight: u64) {
        self.timeline.push((at.as_ns(), inflight));
    }

    pub fn ledger(&self) -> &AmplificationLedger {
        &self.ledger
    }

    /// Closes the window at `end` and derives the report. A window that would
    /// be empty after warmup falls back to starting at zero.
    pub fn finish(self, end: SimTime, host_cpu_events: u64, ssd_events: u64) -> MetricsReport {
        let end = end.as_ns();
        let start = if self.warmup < end { self.warmup } else { 0 };
        let window = end - start;
        let mut latencies = Vec::new();
        let (mut useful, mut fetched) = (0u64, 0u64);
        for d in self.done.iter().filter(|d| d.at >= start && d.at <= end) {
            latencies.push(d.latency);
            useful += d.useful;
            fetched += d.fetched;
        }
        latencies.sort_unstable();
        let secs = window as f64 / 1e9;
        let per_s = |x: f64| if window == 0 { 0.0 } else { x / secs };
        let requests = latencies.len() as u64;
        let mean = if requests == 0 {
            0.0
        } else {
            latencies.iter().map(|&l| l as f64).sum::<f64>() / requests as f64
        };
        let steps = self
            .step_names
            .iter()
            .zip(&self.step_sums)
            .map(|(name, &sum)| StepStat {
                name: (*name).to_string(),
                mean_ns: if self.step_count == 0 {
                    0.0
                } else {
                    sum as f64 / self.step_count as f64
                },
            })
            .collect();
        MetricsReport {
            path: self.path.to_string(),
            window_ns: window,
            end_ns: end,
            requests,
            bytes_useful: self.ledger.bytes_useful,
            bytes_fetched: self.ledger.bytes_fetched,
            useful_bandwidth: per_s(useful as f64),
            raw_bandwidth: per_s(fetched as f64),
            iops: per_s(requests as f64),
            latency_mean_ns: mean,
            latency_p50_ns: percentile(&latencies, 50),
            latency_p99_ns: percentile(&latencies, 99),
            amplification: self.ledger.amplification(),
            cpu_busy_time_ns: self.cpu_busy_ns,
            injected: self.injected,
            completions: self.completions,
            rejections: self.rejections,
            host_cpu_events,
            ssd_events,
            timeline: self.timeline,
            steps,
        }
    }
}

/// Nearest-rank percentile of sorted data.
pub fn percentile(sorted: &[u64], p: u32) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (u64::from(p) * sorted.len() as u64).div_ceil(100).max(1);
    sorted[rank as usize - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<u64> = (1..=100).collect();
        assert_eq!(percentile(&v, 50), 50);
        assert_eq!(percentile(&v, 99), 99);
        assert_eq!(percentile(&[7], 99), 7);
        assert_eq!(percentile(&[], 50), 0);
    }

    #[test]
    fn window_excludes_warmup() {
        let mut c = Collector::new("t", SimTime(100), &["a"]);
        c.request_done(&[SimTime(0), SimTime(50)], 10, 20);
        c.request_done(&[SimTime(100), SimTime(150)], 10, 20);
        c.request_done(&[SimTime(150), SimTime(200)], 10, 20);
        let r = c.finish(SimTime(1_100), 0, 0);
        assert_eq!(r.requests, 2);
        assert_eq!(r.window_ns, 1_000);
        assert!((r.useful_bandwidth - 20.0 / 1e-6).abs() < 1e-3);
        assert_eq!(r.bytes_useful, 30);
        assert_eq!(r.amplification, 2.0);
        assert!(r.useful_bandwidth <= r.raw_bandwidth);
    }

    #[test]
    fn empty_run_reports_zeros() {
        let r = Collector::new("t", SimTime(100), &[]).finish(SimTime::ZERO, 0, 0);
        assert_eq!(r.requests, 0);
        assert_eq!(r.useful_bandwidth, 0.0);
        assert_eq!(r.amplification, 1.0);
    }
}
