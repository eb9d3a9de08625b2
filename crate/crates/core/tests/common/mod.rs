//! Reference models used by the integration tests. They are written from
//! the algorithm descriptions, without calling into the crate's logic.

#![allow(dead_code)]

use std::collections::BTreeMap;

use herasim::netsim::{Outcome, PacketRecord};
use herasim::{LinkTrace, SimOutput};

/// Straight-line transcription of the histogram update rule, one call per
/// RTT measurement.
pub struct OracleHera {
    pub x: usize,
    pub bucket_ms: f64,
    pub max_delta: f64,
    pub n: usize,
    pub limit: u64,
    pub cwnd_min: f64,
    pub cwnd_max: f64,
    pub backlog: Vec<f64>,
    pub hist: Vec<u64>,
    pub cwnd: f64,
}

impl OracleHera {
    pub fn new(x: usize, bucket_ms: f64, max_delta: f64, n: usize, limit: u64) -> Self {
        Self {
            x,
            bucket_ms,
            max_delta,
            n,
            limit,
            cwnd_min: 2.0,
            cwnd_max: 10000.0,
            backlog: Vec::new(),
            hist: vec![0; x],
            cwnd: 10.0,
        }
    }

    pub fn step(&mut self, rtt: f64) -> f64 {
        // backlog
        self.backlog.push(rtt);
        if self.backlog.len() > self.n {
            self.backlog.remove(0);
        }
        let mut sum = 0.0;
        for v in &self.backlog {
            sum += v;
        }
        let mu = sum / self.backlog.len() as f64;

        // bucket
        let mut b = (mu / self.bucket_ms).floor() as usize;
        if b > self.x - 1 {
            b = self.x - 1;
        }

        // histogram with aging
        let total: u64 = self.hist.iter().sum();
        if total + 1 > self.limit {
            for c in self.hist.iter_mut() {
                *c /= 2;
            }
        }
        self.hist[b] += 1;

        // alpha
        let total: u64 = self.hist.iter().sum();
        let mut below = 0u64;
        for c in &self.hist[0..=b] {
            below += c;
        }
        let alpha = below as f64 / total as f64;

        // window
        let half = self.x / 2;
        if b < half {
            self.cwnd += alpha * (half - b) as f64 * self.max_delta;
        } else {
            let m = b as i64 - half as i64 - 1;
            self.cwnd -= alpha * m as f64 * self.max_delta;
        }
        if self.cwnd < self.cwnd_min {
            self.cwnd = self.cwnd_min;
        }
        if self.cwnd > self.cwnd_max {
            self.cwnd = self.cwnd_max;
        }
        self.cwnd
    }
}

/// Millisecond-step model of one fixed-window flow over a looping trace
/// with an unbounded FIFO and no loss. `owd_ms` must be a whole number of
/// milliseconds. Returns `(sent_ms, delivered_ms)` for every packet
/// delivered before `horizon_ms`.
pub fn fixed_window_oracle(
    timestamps_ms: &[u64],
    period_ms: u64,
    window: u64,
    owd_ms: u64,
    horizon_ms: u64,
) -> Vec<(u64, u64)> {
    let mut opps = vec![0u32; horizon_ms as usize + 1];
    let mut cycle = 0;
    'outer: loop {
        for &ts in timestamps_ms {
            let t = cycle * period_ms + ts;
            if t > horizon_ms {
                break 'outer;
            }
            opps[t as usize] += 1;
        }
        cycle += 1;
    }

    let mut sent: Vec<u64> = Vec::new();
    let mut delivered: Vec<Option<u64>> = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    let slots = horizon_ms as usize + owd_ms as usize * 2 + 2;
    let mut acks_at = vec![0u64; slots];
    let mut arrivals_at: Vec<Vec<usize>> = vec![Vec::new(); slots];
    let mut in_flight = 0u64;
    for t in 0..horizon_ms {
        // acks arriving now free window space
        in_flight -= acks_at[t as usize];
        while in_flight < window {
            arrivals_at[(t + owd_ms) as usize].push(sent.len());
            sent.push(t);
            delivered.push(None);
            in_flight += 1;
        }
        // packets reaching the bottleneck now
        queue.extend(arrivals_at[t as usize].drain(..));
        for _ in 0..opps[t as usize] {
            match queue.pop_front() {
                Some(seq) => {
                    delivered[seq] = Some(t);
                    acks_at[(t + owd_ms) as usize] += 1;
                }
                None => break,
            }
        }
    }
    sent.iter()
        .zip(&delivered)
        .filter_map(|(&s, d)| d.map(|d| (s, d)))
        .collect()
}

/// `(sum x)^2 / (n sum x^2)` written out directly.
pub fn jain_formula(x: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut s2 = 0.0;
    for v in x {
        s += v;
        s2 += v * v;
    }
    s * s / (x.len() as f64 * s2)
}

/// Opportunity instants (µs) before the end of the run, with multiplicity.
fn opportunities(trace: &LinkTrace, end_us: u64) -> BTreeMap<u64, usize> {
    let mut m = BTreeMap::new();
    for k in 0.. {
        let t = trace.opportunity_us(k);
        if t >= end_us {
            break;
        }
        *m.entry(t).or_insert(0) += 1;
    }
    m
}

fn all_records(out: &SimOutput) -> impl Iterator<Item = &PacketRecord> {
    out.flows.iter().flat_map(|f| f.records.iter())
}

fn owd_us(out: &SimOutput) -> u64 {
    (out.config.base_owd_ms * 1000.0).round() as u64
}

/// Sorted arrival times at the bottleneck of packets that entered the queue,
/// and sorted departure times of those that left it.
fn queue_times(out: &SimOutput) -> (Vec<u64>, Vec<u64>) {
    let owd = owd_us(out);
    let mut arr = Vec::new();
    let mut dep = Vec::new();
    for r in all_records(out) {
        match r.outcome {
            Outcome::Dropped(_) => {}
            Outcome::InFlight => {
                if r.sent_us + owd < out.end_us {
                    arr.push(r.sent_us + owd);
                }
            }
            Outcome::Delivered { at_us } => {
                arr.push(r.sent_us + owd);
                dep.push(at_us);
            }
        }
    }
    arr.sort_unstable();
    dep.sort_unstable();
    (arr, dep)
}

fn count_le(v: &[u64], t: u64) -> usize {
    v.partition_point(|&x| x <= t)
}

fn count_lt(v: &[u64], t: u64) -> usize {
    v.partition_point(|&x| x < t)
}

/// Conservation, work conservation, droptail capacity, per-flow FIFO and
/// the delay floor, checked from the packet log alone.
pub fn check_sim_invariants(out: &SimOutput, trace: &LinkTrace) -> Result<(), String> {
    let opps = opportunities(trace, out.end_us);
    let (arr, dep) = queue_times(out);
    let owd = out.config.base_owd_ms;

    // conservation: departures only at opportunities and never more than granted
    let mut dep_at: BTreeMap<u64, usize> = BTreeMap::new();
    for &d in &dep {
        *dep_at.entry(d).or_insert(0) += 1;
    }
    for (t, n) in &dep_at {
        let granted = opps.get(t).copied().unwrap_or(0);
        if *n > granted {
            return Err(format!(
                "{n} departures at {t} us with {granted} opportunities"
            ));
        }
    }

    // work conservation: every opportunity is used while packets wait
    for (&t, &granted) in &opps {
        let waiting = count_le(&arr, t) - count_lt(&dep, t);
        let used = dep_at.get(&t).copied().unwrap_or(0);
        if used != granted.min(waiting) {
            return Err(format!(
                "{used} of {granted} opportunities used at {t} us with {waiting} waiting"
            ));
        }
    }

    // droptail capacity after each arrival instant
    for &a in &arr {
        let queued = count_le(&arr, a) - count_le(&dep, a);
        if queued > out.config.queue_capacity_pkts {
            return Err(format!("{queued} packets queued at {a} us"));
        }
    }

    for f in &out.flows {
        // per-flow FIFO on both paths
        let mut last_sent = 0;
        let mut last_delivered = 0;
        for r in &f.records {
            if r.sent_us < last_sent {
                return Err(format!("flow {} sends out of order", f.flow_id));
            }
            last_sent = r.sent_us;
            if let Some(d) = r.delivered_us() {
                if d < last_delivered {
                    return Err(format!("reordered delivery in flow {}", f.flow_id));
                }
                last_delivered = d;
            }
        }
        // delay floor
        for r in &f.records {
            if let Some(rtt) = r.rtt_ms(owd) {
                if rtt < 2.0 * owd - 1e-9 {
                    return Err(format!("rtt {rtt} below floor"));
                }
            }
        }
    }
    Ok(())
}
