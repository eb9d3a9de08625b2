//! Histogram-based delay controller.
//!
//! Each RTT sample is pushed into a short FIFO backlog whose mean is
//! quantized into one of `X` fixed-width delay buckets. The histogram of
//! bucket hits gives `alpha`, the empirical probability of being at or below
//! the current bucket. The window then moves towards the centre bucket:
//!
//! ```text
//! b <  X/2:  cwnd += alpha * (X/2 - b)     * max_delta
//! b >= X/2:  cwnd -= alpha * (b - X/2 - 1) * max_delta
//! ```
//!
//! The update is applied literally, including the `b == X/2` case where the
//! decrease multiplier is `-1` (a net increase of `alpha * max_delta`).
//! Setting `strict_pseudocode = false` turns that bucket into a zero-change
//! band instead.
//!
//! With the default [`Cadence::PerRtt`] an ACK counts as a measurement only
//! once the RTT of the previous measurement has elapsed, so the rule runs
//! about once per round trip. [`Cadence::PerAck`] feeds every ACK.

use std::collections::VecDeque;

use crate::cc::{CcDecision, CcEvent, CongestionControl, RttSample, WindowBounds};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HeraParams {
    /// Number of histogram buckets `X`; even and at least 2.
    pub num_buckets: usize,
    /// Bucket width `B` in milliseconds.
    pub bucket_size_ms: f64,
    /// Per-step scale `max_delta`.
    pub max_delta: f64,
    /// Backlog FIFO length `N`.
    pub backlog_len: usize,
    /// Maximum total count kept in the histogram before aging.
    pub histogram_limit: u64,
    pub bounds: WindowBounds,
    /// Apply the `b == X/2` branch exactly as the update rule reads.
    pub strict_pseudocode: bool,
    /// Which ACK samples count as a new RTT measurement.
    pub cadence: Cadence,
}

/// Sampling policy for feeding RTT measurements into the update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cadence {
    /// Every ACK is a measurement.
    PerAck,
    /// One measurement per round trip: an ACK is used only once the RTT of
    /// the previously used sample has elapsed.
    PerRtt,
}

impl Default for HeraParams {
    fn default() -> Self {
        Self {
            num_buckets: 10,
            bucket_size_ms: 15.0,
            max_delta: 10.0,
            backlog_len: 10,
            histogram_limit: 10_000,
            bounds: WindowBounds::default(),
            strict_pseudocode: true,
            cadence: Cadence::PerRtt,
        }
    }
}

impl HeraParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_buckets < 2 {
            return Err(Error::param("num_buckets", "must be >= 2"));
        }
        if !self.num_buckets.is_multiple_of(2) {
            return Err(Error::param("num_buckets", "must be even"));
        }
        if !(self.bucket_size_ms.is_finite() && self.bucket_size_ms > 0.0) {
            return Err(Error::param("bucket_size_ms", "must be > 0"));
        }
        if !(self.max_delta.is_finite() && self.max_delta > 0.0) {
            return Err(Error::param("max_delta", "must be > 0"));
        }
        if self.backlog_len < 1 {
            return Err(Error::param("backlog_len", "must be >= 1"));
        }
        if self.histogram_limit < self.num_buckets as u64 {
            return Err(Error::param("histogram_limit", "must be >= num_buckets"));
        }
        self.bounds.validate()
    }

    /// Centre threshold `X/2`.
    #[inline]
    pub fn half(&self) -> usize {
        self.num_buckets / 2
    }
}

/// Fixed-length FIFO of recent RTT samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RttBacklog {
    samples: VecDeque<f64>,
    capacity: usize,
}

impl RttBacklog {
    pub fn new(capacity: usize) -> Self {
        Self {
            samples: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn from_samples(capacity: usize, samples: &[f64]) -> Self {
        let mut backlog = Self::new(capacity);
        for &s in samples {
            if backlog.samples.len() == capacity {
                backlog.samples.pop_front();
            }
            backlog.samples.push_back(s);
        }
        backlog
    }

    /// Push `rtt_ms` (evicting the oldest sample when full) and return the
    /// arithmetic mean of the retained samples, summed oldest first.
    pub fn push_and_mean(&mut self, rtt_ms: f64) -> Result<f64> {
        if !rtt_ms.is_finite() || rtt_ms <= 0.0 {
            return Err(Error::InvalidRtt(rtt_ms));
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(rtt_ms);
        Ok(self.mean())
    }

    fn mean(&self) -> f64 {
        let sum: f64 = self.samples.iter().sum();
        sum / self.samples.len() as f64
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().copied()
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }
}

/// Map a backlog mean onto a bucket: `min(floor(mean / B), X - 1)`.
pub fn bucket_index(mean_ms: f64, params: &HeraParams) -> usize {
    let raw = (mean_ms / params.bucket_size_ms).floor();
    let top = params.num_buckets - 1;
    if raw >= top as f64 {
        top
    } else if raw > 0.0 {
        raw as usize
    } else {
        0
    }
}

/// Frequency table of bucket hits.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayHistogram {
    counts: Vec<u64>,
    total: u64,
}

impl DelayHistogram {
    pub fn new(num_buckets: usize) -> Self {
        Self {
            counts: vec![0; num_buckets],
            total: 0,
        }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    /// Count one hit in bucket `b`. When the new total would exceed `limit`
    /// every count is halved (floor) first.
    pub fn record(&mut self, b: usize, limit: u64) {
        if self.total + 1 > limit {
            for c in &mut self.counts {
                *c /= 2;
            }
            self.total = self.counts.iter().sum();
        }
        self.counts[b] += 1;
        self.total += 1;
    }

    /// Share of the mass in buckets `0..=b`.
    pub fn cumulative_alpha(&self, b: usize) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::EmptyHistogram);
        }
        let upto: u64 = self.counts[..=b.min(self.counts.len() - 1)].iter().sum();
        Ok(upto as f64 / self.total as f64)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Controller state: parameters, backlog, histogram and window.
#[derive(Debug, Clone, PartialEq)]
pub struct Hera {
    params: HeraParams,
    backlog: RttBacklog,
    histogram: DelayHistogram,
    cwnd: f64,
    losses_seen: u64,
    timeouts_seen: u64,
    next_update_ms: f64,
}

impl Hera {
    pub fn new(params: HeraParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            backlog: RttBacklog::new(params.backlog_len),
            histogram: DelayHistogram::new(params.num_buckets),
            cwnd: params.bounds.initial_cwnd,
            params,
            losses_seen: 0,
            timeouts_seen: 0,
            next_update_ms: f64::NEG_INFINITY,
        })
    }

    /// Build a state from explicit components, e.g. a pre-seeded histogram.
    pub fn from_parts(
        params: HeraParams,
        backlog: RttBacklog,
        histogram: DelayHistogram,
        cwnd: f64,
    ) -> Result<Self> {
        params.validate()?;
        if histogram.counts().len() != params.num_buckets {
            return Err(Error::param(
                "histogram",
                "bucket count differs from num_buckets",
            ));
        }
        if backlog.capacity() != params.backlog_len {
            return Err(Error::param("backlog", "capacity differs from backlog_len"));
        }
        let cwnd = params.bounds.clamp(cwnd);
        Ok(Self {
            params,
            backlog,
            histogram,
            cwnd,
            losses_seen: 0,
            timeouts_seen: 0,
            next_update_ms: f64::NEG_INFINITY,
        })
    }

    pub fn params(&self) -> &HeraParams {
        &self.params
    }

    pub fn backlog(&self) -> &RttBacklog {
        &self.backlog
    }

    pub fn histogram(&self) -> &DelayHistogram {
        &self.histogram
    }

    pub fn cwnd(&self) -> f64 {
        self.cwnd
    }

    pub fn losses_seen(&self) -> u64 {
        self.losses_seen
    }

    pub fn timeouts_seen(&self) -> u64 {
        self.timeouts_seen
    }

    /// Window change before clamping for bucket `b` and mass `alpha`.
    fn step(&self, b: usize, alpha: f64) -> f64 {
        let half = self.params.half();
        if b < half {
            alpha * (half - b) as f64 * self.params.max_delta
        } else if b == half && !self.params.strict_pseudocode {
            0.0
        } else {
            let mult = b as i64 - half as i64 - 1;
            -(alpha * mult as f64 * self.params.max_delta)
        }
    }

    /// Handle an ACK, feeding it to the update rule when the cadence
    /// treats it as a new measurement.
    pub fn on_ack(&mut self, sample: &RttSample) -> Result<CcDecision> {
        sample.validate()?;
        if self.params.cadence == Cadence::PerRtt {
            if sample.now_ms < self.next_update_ms {
                return Ok(self.decision());
            }
            self.next_update_ms = sample.now_ms + sample.rtt_ms;
        }
        self.update(sample.rtt_ms)
    }

    /// One step of the update rule for a single RTT measurement.
    pub fn update(&mut self, rtt_ms: f64) -> Result<CcDecision> {
        if !rtt_ms.is_finite() || rtt_ms <= 0.0 {
            return Err(Error::InvalidRtt(rtt_ms));
        }
        let mean = self.backlog.push_and_mean(rtt_ms)?;
        let b = bucket_index(mean, &self.params);
        self.histogram.record(b, self.params.histogram_limit);
        let alpha = self.histogram.cumulative_alpha(b)?;
        self.cwnd += self.step(b, alpha);
        self.cwnd = self.params.bounds.clamp(self.cwnd);
        Ok(self.decision())
    }

    /// Non-congestive losses do not move the window.
    pub fn on_loss(&mut self, lost_packets: u32) -> CcDecision {
        self.losses_seen += u64::from(lost_packets);
        self.decision()
    }

    /// Timeout: fall back to the initial window and forget the backlog; the
    /// histogram is kept.
    pub fn on_timeout(&mut self) -> CcDecision {
        self.timeouts_seen += 1;
        self.cwnd = self.params.bounds.initial_cwnd;
        self.backlog.clear();
        self.next_update_ms = f64::NEG_INFINITY;
        self.decision()
    }

    /// Unclamped window change the update rule applies for bucket `b` and
    /// mass `alpha`.
    pub fn preview_step(&self, b: usize, alpha: f64) -> f64 {
        self.step(b, alpha)
    }
}

impl CongestionControl for Hera {
    fn name(&self) -> &'static str {
        "hera"
    }

    fn on_event(&mut self, event: &CcEvent) -> Result<CcDecision> {
        event.validate()?;
        match event {
            CcEvent::Ack(sample) => self.on_ack(sample),
            CcEvent::Loss { lost_packets } => Ok(self.on_loss(*lost_packets)),
            CcEvent::Timeout => Ok(self.on_timeout()),
        }
    }

    fn decision(&self) -> CcDecision {
        CcDecision {
            cwnd_pkts: self.cwnd,
            pacing_rate_pps: None,
        }
    }

    fn bounds(&self) -> WindowBounds {
        self.params.bounds
    }
}
