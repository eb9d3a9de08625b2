//! Link traces: Mahimahi-format delivery opportunities, rate CSVs and a
//! seeded synthetic generator for 5G-style capacity processes.
//!
//! A trace is a sorted list of millisecond timestamps; each grants one
//! MTU-sized delivery opportunity. Unused opportunities are lost. When the
//! simulation outlives the trace, it loops with period `duration_ms`.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::Serialize;

use crate::cc::MTU_BYTES;
use crate::error::{Error, Result};

/// Megabits per second carried by one opportunity per millisecond.
pub const MBPS_PER_PKT_PER_MS: f64 = (MTU_BYTES * 8) as f64 / 1000.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkTrace {
    opportunities_ms: Vec<u64>,
    duration_ms: u64,
}

impl LinkTrace {
    /// A trace whose loop period is its last timestamp.
    pub fn from_timestamps(opportunities_ms: Vec<u64>) -> Result<Self> {
        let last = *opportunities_ms.last().ok_or(Error::EmptyTrace)?;
        Self::new(opportunities_ms, last)
    }

    /// A trace with an explicit loop period, which must cover every
    /// timestamp and be at least 1 ms.
    pub fn new(opportunities_ms: Vec<u64>, duration_ms: u64) -> Result<Self> {
        if let Some(i) = opportunities_ms.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::TraceParse {
                line: i + 2,
                reason: "timestamps must be non-decreasing".into(),
            });
        }
        if duration_ms == 0 {
            return Err(Error::param(
                "duration_ms",
                "trace duration must be >= 1 ms",
            ));
        }
        if opportunities_ms.last().is_some_and(|&l| l > duration_ms) {
            return Err(Error::param(
                "duration_ms",
                "shorter than the last timestamp",
            ));
        }
        Ok(Self {
            opportunities_ms,
            duration_ms,
        })
    }

    pub fn opportunities_ms(&self) -> &[u64] {
        &self.opportunities_ms
    }

    pub fn duration_ms(&self) -> u64 {
        self.duration_ms
    }

    pub fn len(&self) -> usize {
        self.opportunities_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opportunities_ms.is_empty()
    }

    /// Average capacity over one loop period.
    pub fn mean_mbps(&self) -> f64 {
        self.len() as f64 * MBPS_PER_PKT_PER_MS / self.duration_ms as f64
    }

    /// Absolute time in microseconds of opportunity `k` on the looped trace.
    #[inline]
    pub fn opportunity_us(&self, k: u64) -> u64 {
        let n = self.opportunities_ms.len() as u64;
        let cycle = k / n;
        (cycle * self.duration_ms + self.opportunities_ms[(k % n) as usize]) * 1000
    }

    /// Index of the first looped opportunity at or after `t_us`.
    pub fn first_at_or_after(&self, t_us: u64) -> u64 {
        if t_us == 0 {
            return 0;
        }
        let n = self.opportunities_ms.len() as u64;
        let period_us = self.duration_ms * 1000;
        // A timestamp equal to the period belongs to the end of its cycle,
        // so offsets are taken in (0, period].
        let cycle = (t_us - 1) / period_us;
        let offset = t_us - cycle * period_us;
        let i = self
            .opportunities_ms
            .partition_point(|&ms| ms * 1000 < offset) as u64;
        cycle * n + i
    }

    /// Serialize in Mahimahi format: one timestamp per line.
    pub fn to_mahimahi(&self) -> String {
        let mut out = String::with_capacity(self.len() * 6);
        for ms in &self.opportunities_ms {
            let _ = writeln!(out, "{ms}");
        }
        out
    }

    /// Opportunities falling into consecutive windows of `window_ms`,
    /// counting `(i*w, (i+1)*w]`.
    pub fn window_counts(&self, window_ms: u64) -> Vec<u64> {
        let n_windows = (self.duration_ms / window_ms).max(1) as usize;
        let mut counts = vec![0u64; n_windows];
        for &ms in &self.opportunities_ms {
            let idx = (ms.saturating_sub(1) / window_ms) as usize;
            if idx < n_windows {
                counts[idx] += 1;
            }
        }
        counts
    }
}

/// Parse a Mahimahi trace: one integer millisecond timestamp per line.
/// Blank lines are ignored; duplicates grant several opportunities at the
/// same instant.
pub fn parse_mahimahi(text: &str) -> Result<LinkTrace> {
    let mut opps = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let ms: u64 = line.parse().map_err(|_| Error::TraceParse {
            line: i + 1,
            reason: format!("not an integer: {line:?}"),
        })?;
        if opps.last().is_some_and(|&prev| ms < prev) {
            return Err(Error::TraceParse {
                line: i + 1,
                reason: "timestamps must be non-decreasing".into(),
            });
        }
        opps.push(ms);
    }
    if opps.is_empty() {
        return Err(Error::EmptyTrace);
    }
    LinkTrace::from_timestamps(opps)
}

/// Convert a piecewise-constant rate schedule into per-millisecond
/// opportunities. `segments` holds `(start_ms, end_ms, mbps)`; fractional
/// packets carry over between milliseconds. The opportunity earned during
/// millisecond `(t, t+1]` is stamped `t + 1`.
pub fn rate_schedule_to_trace(segments: &[(u64, u64, f64)], duration_ms: u64) -> Result<LinkTrace> {
    let mut opps = Vec::new();
    let mut acc = 0.0_f64;
    for &(start, end, mbps) in segments {
        if !(mbps.is_finite() && mbps >= 0.0) {
            return Err(Error::param(
                "mbps",
                format!("rate must be >= 0, got {mbps}"),
            ));
        }
        let per_ms = mbps / MBPS_PER_PKT_PER_MS;
        for t in start..end {
            acc += per_ms;
            while acc >= 1.0 {
                opps.push(t + 1);
                acc -= 1.0;
            }
        }
    }
    LinkTrace::new(opps, duration_ms.max(1))
}

/// Parse a `time_s,mbps` CSV (header required). Each row's rate holds until
/// the next row; the final row lasts as long as the interval before it, or
/// one second when it is the only row.
pub fn parse_rate_csv(text: &str) -> Result<LinkTrace> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::TraceParse {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if headers.len() != 2 || &headers[0] != "time_s" || &headers[1] != "mbps" {
        return Err(Error::TraceParse {
            line: 1,
            reason: "expected header `time_s,mbps`".into(),
        });
    }
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::TraceParse {
            line,
            reason: e.to_string(),
        })?;
        let field = |j: usize| -> Result<f64> {
            rec.get(j)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::TraceParse {
                    line,
                    reason: format!("bad number in column {}", j + 1),
                })
        };
        let (t, r) = (field(0)?, field(1)?);
        if r < 0.0 {
            return Err(Error::TraceParse {
                line,
                reason: "negative rate".into(),
            });
        }
        if t < 0.0 || rows.last().is_some_and(|&(prev, _)| t <= prev) {
            return Err(Error::TraceParse {
                line,
                reason: "time_s must increase".into(),
            });
        }
        rows.push((t, r));
    }
    if rows.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let to_ms = |s: f64| (s * 1000.0).round() as u64;
    let mut segments = Vec::with_capacity(rows.len());
    for (i, &(t, r)) in rows.iter().enumerate() {
        let end = match rows.get(i + 1) {
            Some(&(next, _)) => to_ms(next),
            None if i > 0 => to_ms(t) + (to_ms(t) - to_ms(rows[i - 1].0)),
            None => to_ms(t) + 1000,
        };
        segments.push((to_ms(t), end, r));
    }
    let duration = segments.last().map(|s| s.1).unwrap_or(1);
    rate_schedule_to_trace(&segments, duration)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Stationary,
    Walking,
    Driving,
    /// Two-level square wave between `mean * (1 - cov)` and `mean * (1 + cov)`.
    Step,
}

impl Scenario {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "stationary" => Ok(Scenario::Stationary),
            "walking" => Ok(Scenario::Walking),
            "driving" => Ok(Scenario::Driving),
            "step" => Ok(Scenario::Step),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticSpec {
    pub scenario: Scenario,
    pub mean_mbps: f64,
    /// Coefficient of variation of the capacity draws.
    pub cov: f64,
    /// Interval between capacity changes.
    pub coherence_ms: u64,
    pub duration_ms: u64,
    pub seed: u64,
}

/// Preset table: name, scenario, mean Mbps, cov, coherence ms.
const PRESETS: &[(&str, Scenario, f64, f64, u64)] = &[
    ("constant", Scenario::Stationary, 48.0, 0.0, 1000),
    ("stationary", Scenario::Stationary, 100.0, 0.15, 1000),
    ("walking", Scenario::Walking, 100.0, 0.35, 500),
    ("driving", Scenario::Driving, 100.0, 0.6, 200),
    ("step", Scenario::Step, 100.0, 0.5, 5000),
    ("city-drive", Scenario::Driving, 100.0, 0.6, 200),
    ("beach-stationary", Scenario::Stationary, 60.0, 0.15, 1000),
    ("rma", Scenario::Walking, 40.0, 0.35, 500),
    ("uma", Scenario::Driving, 80.0, 0.6, 200),
    ("indoor-walking", Scenario::Walking, 80.0, 0.35, 500),
    ("indoor-stationary", Scenario::Stationary, 50.0, 0.15, 1000),
];

/// The six traces of the default comparison grid.
pub const COMPARE_GRID_PRESETS: [&str; 6] = [
    "city-drive",
    "beach-stationary",
    "rma",
    "uma",
    "indoor-walking",
    "indoor-stationary",
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|p| p.0)
}

impl SyntheticSpec {
    pub fn preset(name: &str, duration_ms: u64, seed: u64) -> Result<Self> {
        let &(_, scenario, mean_mbps, cov, coherence_ms) = PRESETS
            .iter()
            .find(|p| p.0 == name)
            .ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
        Ok(Self {
            scenario,
            mean_mbps,
            cov,
            coherence_ms,
            duration_ms,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_mbps.is_finite() && self.mean_mbps > 0.0) {
            return Err(Error::param("mean_mbps", "must be > 0"));
        }
        if !(self.cov.is_finite() && self.cov >= 0.0) {
            return Err(Error::param("cov", "must be >= 0"));
        }
        if self.coherence_ms < 1 {
            return Err(Error::param("coherence_ms", "must be >= 1"));
        }
        if self.duration_ms < 1 {
            return Err(Error::param("duration_ms", "must be >= 1"));
        }
        Ok(())
    }

    /// Per-interval capacities in Mbps.
    pub fn capacity_schedule(&self) -> Result<Vec<(u64, u64, f64)>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let lognormal = if self.cov > 0.0 {
            let sigma2 = (1.0 + self.cov * self.cov).ln();
            let mu = self.mean_mbps.ln() - sigma2 / 2.0;
            Some(
                LogNormal::new(mu, sigma2.sqrt())
                    .map_err(|e| Error::param("cov", e.to_string()))?,
            )
        } else {
            None
        };
        let mut segments = Vec::new();
        let mut start = 0;
        let mut i = 0u64;
        while start < self.duration_ms {
            let end = (start + self.coherence_ms).min(self.duration_ms);
            let rate = match (self.scenario, &lognormal) {
                (Scenario::Step, _) => {
                    let sign = if i.is_multiple_of(2) { 1.0 } else { -1.0 };
                    self.mean_mbps * (1.0 + sign * self.cov)
                }
                (_, Some(dist)) => dist.sample(&mut rng),
                (_, None) => self.mean_mbps,
            };
            segments.push((start, end, rate.max(0.0)));
            start = end;
            i += 1;
        }
        Ok(segments)
    }
}

/// Generate a synthetic trace; deterministic per seed.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<LinkTrace> {
    let segments = spec.capacity_schedule()?;
    rate_schedule_to_trace(&segments, spec.duration_ms)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceStats {
    pub mean_mbps: f64,
    pub std_mbps: f64,
    pub min_mbps: f64,
    pub max_mbps: f64,
}

pub const STATS_WINDOW_MS: u64 = 100;

/// Capacity statistics over 100 ms windows (population standard deviation).
pub fn trace_stats(trace: &LinkTrace) -> TraceStats {
    let window = STATS_WINDOW_MS.min(trace.duration_ms());
    let rates: Vec<f64> = trace
        .window_counts(window)
        .into_iter()
        .map(|c| c as f64 * MBPS_PER_PKT_PER_MS / window as f64)
        .collect();
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let var = rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    TraceStats {
        mean_mbps: mean,
        std_mbps: var.sqrt(),
        min_mbps: rates.iter().copied().fold(f64::INFINITY, f64::min),
        max_mbps: rates.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}
