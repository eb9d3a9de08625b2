//! Deterministic discrete-event simulation of a single trace-driven
//! bottleneck.
//!
//! Forward path: sender -> fixed one-way delay -> shared droptail FIFO ->
//! one MTU packet per trace opportunity -> receiver. Reverse path: fixed
//! one-way delay, never congested. Each delivered packet produces one ACK
//! carrying `rtt = delivered + base_owd - sent`.
//!
//! Time is kept in integer microseconds. Events are ordered by
//! `(time, kind, flow, seq)`, so runs are fully reproducible for a given
//! `(config, trace, flows)`.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cc::{CcEvent, CongestionControl, RttSample, MSS_BYTES, MTU_BYTES};
use crate::error::{Error, Result};
use crate::protocol::CcSpec;
use crate::traces::LinkTrace;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// One-way propagation delay applied in each direction.
    pub base_owd_ms: f64,
    pub queue_capacity_pkts: usize,
    /// Bernoulli loss probability applied before enqueue.
    pub loss_rate: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub mtu_bytes: u64,
    pub rto_min_ms: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            base_owd_ms: 10.0,
            queue_capacity_pkts: 2000,
            loss_rate: 0.0,
            duration_s: 60.0,
            seed: 1,
            mtu_bytes: MTU_BYTES,
            rto_min_ms: 200.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        // A zero propagation delay could yield zero RTT samples, which the
        // controller contract rejects.
        if !(self.base_owd_ms.is_finite() && self.base_owd_ms > 0.0) {
            return Err(Error::param("base_owd_ms", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.loss_rate) {
            return Err(Error::param("loss_rate", "must lie in [0, 1)"));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::param("duration_s", "must be > 0"));
        }
        if self.mtu_bytes == 0 {
            return Err(Error::param("mtu_bytes", "must be > 0"));
        }
        if !(self.rto_min_ms > 0.0) {
            return Err(Error::param("rto_min_ms", "must be > 0"));
        }
        Ok(())
    }

    pub fn duration_us(&self) -> u64 {
        (self.duration_s * 1e6).round() as u64
    }

    fn owd_us(&self) -> u64 {
        (self.base_owd_ms * 1000.0).round() as u64
    }
}

/// Application sender attached to a flow.
#[derive(Debug, Clone, PartialEq)]
pub enum AppModel {
    /// Always backlogged stream of fixed-size blocks.
    Bulk { block_bytes: u64 },
    /// Periodic state updates of `update_bytes` every `interval_ms`.
    Interactive { update_bytes: u64, interval_ms: f64 },
    /// Data is queued explicitly through [`Simulator::enqueue_bytes`].
    OnDemand,
}

pub const DEFAULT_BLOCK_BYTES: u64 = 128 * 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub cc: CcSpec,
    pub app: AppModel,
    pub start_s: f64,
}

impl FlowSpec {
    pub fn bulk(cc: CcSpec) -> Self {
        Self {
            cc,
            app: AppModel::Bulk {
                block_bytes: DEFAULT_BLOCK_BYTES,
            },
            start_s: 0.0,
        }
    }

    pub fn starting_at(mut self, start_s: f64) -> Self {
        self.start_s = start_s;
        self
    }

    fn validate(&self) -> Result<()> {
        match self.app {
            AppModel::Bulk { block_bytes: 0 } => {
                return Err(Error::param("block_bytes", "must be > 0"))
            }
            AppModel::Interactive {
                update_bytes,
                interval_ms,
            } => {
                if update_bytes == 0 {
                    return Err(Error::param("update_bytes", "must be > 0"));
                }
                if !(interval_ms.is_finite() && interval_ms > 0.0) {
                    return Err(Error::param("interval_ms", "must be > 0"));
                }
            }
            _ => {}
        }
        if !(self.start_s.is_finite() && self.start_s >= 0.0) {
            return Err(Error::param("start_s", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    QueueFull,
    RandomLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    InFlight,
    Delivered { at_us: u64 },
    Dropped(DropReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketRecord {
    pub flow_id: u32,
    pub seq: u64,
    pub sent_us: u64,
    pub outcome: Outcome,
    pub size_bytes: u64,
}

impl PacketRecord {
    pub fn sent_ms(&self) -> f64 {
        self.sent_us as f64 / 1000.0
    }

    pub fn delivered_us(&self) -> Option<u64> {
        match self.outcome {
            Outcome::Delivered { at_us } => Some(at_us),
            _ => None,
        }
    }

    pub fn delivered_ms(&self) -> Option<f64> {
        self.delivered_us().map(|us| us as f64 / 1000.0)
    }

    pub fn is_dropped(&self) -> bool {
        matches!(self.outcome, Outcome::Dropped(_))
    }

    /// Sender-to-receiver delay.
    pub fn one_way_ms(&self) -> Option<f64> {
        self.delivered_us()
            .map(|d| (d - self.sent_us) as f64 / 1000.0)
    }

    /// RTT reported by the ACK of this packet.
    pub fn rtt_ms(&self, base_owd_ms: f64) -> Option<f64> {
        self.one_way_ms().map(|owd| owd + base_owd_ms)
    }
}

/// Per-flow output of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowLog {
    pub flow_id: u32,
    pub protocol: &'static str,
    pub records: Vec<PacketRecord>,
    /// Loss reactions handed to the controller (one per recovery episode).
    pub loss_events: u64,
    pub timeouts: u64,
}

impl FlowLog {
    pub fn dropped(&self) -> u64 {
        self.records.iter().filter(|r| r.is_dropped()).count() as u64
    }

    pub fn delivered_bytes(&self) -> u64 {
        self.records
            .iter()
            .filter(|r| r.delivered_us().is_some())
            .map(|r| r.size_bytes)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub config: SimConfig,
    pub flows: Vec<FlowLog>,
    /// Simulated time at which the run stopped.
    pub end_us: u64,
}

impl SimOutput {
    /// Write the per-packet log as
    /// `flow_id,seq,sent_ms,delivered_ms,size_bytes,dropped`.
    pub fn write_packet_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "flow_id,seq,sent_ms,delivered_ms,size_bytes,dropped")?;
        for flow in &self.flows {
            for r in &flow.records {
                let delivered = r
                    .delivered_ms()
                    .map(|d| format!("{d:.6}"))
                    .unwrap_or_default();
                writeln!(
                    w,
                    "{},{},{:.6},{},{},{}",
                    r.flow_id,
                    r.seq,
                    r.sent_ms(),
                    delivered,
                    r.size_bytes,
                    u8::from(r.is_dropped())
                )?;
            }
        }
        Ok(())
    }
}

/// Throughput in Mbps of packets delivered inside `[start_ms, end_ms)`.
pub fn delivered_throughput<'a, I>(records: I, start_ms: f64, end_ms: f64) -> Result<f64>
where
    I: IntoIterator<Item = &'a PacketRecord>,
{
    if !(end_ms > start_ms) {
        return Err(Error::EmptyWindow(format!("[{start_ms}, {end_ms}) ms")));
    }
    let (lo, hi) = (
        (start_ms * 1000.0).round() as u64,
        (end_ms * 1000.0).round() as u64,
    );
    let bytes: u64 = records
        .into_iter()
        .filter(|r| r.delivered_us().is_some_and(|d| d >= lo && d < hi))
        .map(|r| r.size_bytes)
        .sum();
    Ok(bytes as f64 * 8.0 / ((end_ms - start_ms) * 1000.0))
}

// Event kinds, in tie-break order.
const DEPARTURE: u8 = 0;
const ARRIVAL: u8 = 1;
const ACK: u8 = 2;
const PACE: u8 = 3;
const APP: u8 = 4;
const RTO: u8 = 5;
const START: u8 = 6;

type EventKey = Reverse<(u64, u8, u32, u64)>;

struct FlowState {
    cc: Box<dyn CongestionControl>,
    app: AppModel,
    started: bool,
    next_seq: u64,
    in_flight: u64,
    /// Packets waiting for the window (unused for bulk flows).
    backlog_pkts: u64,
    cwnd: f64,
    pacing_pps: Option<f64>,
    next_send_us: u64,
    pace_pending: bool,
    unreported_drops: VecDeque<u64>,
    recovery_seq: Option<u64>,
    srtt_ms: Option<f64>,
    rttvar_ms: f64,
    last_progress_us: u64,
    rto_pending: bool,
    delivered_pkts: u64,
    target_pkts: Option<u64>,
    log: FlowLog,
}

impl FlowState {
    fn has_data(&self) -> bool {
        matches!(self.app, AppModel::Bulk { .. }) || self.backlog_pkts > 0
    }

    fn rto_us(&self, min_ms: f64) -> u64 {
        let ms = match self.srtt_ms {
            Some(srtt) => (srtt + 4.0 * self.rttvar_ms).max(min_ms),
            None => min_ms.max(1000.0),
        };
        (ms * 1000.0).round() as u64
    }
}

/// Why [`Simulator::run_until`] returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Deadline,
    /// The flow reached its delivery target.
    Milestone(u32),
}

pub struct Simulator {
    config: SimConfig,
    owd_us: u64,
    trace: LinkTrace,
    flows: Vec<FlowState>,
    queue: VecDeque<(u32, u64)>,
    events: BinaryHeap<EventKey>,
    now_us: u64,
    rng: ChaCha8Rng,
    departure_scheduled: Option<u64>,
    next_opportunity: u64,
    milestone: Option<u32>,
}

impl Simulator {
    pub fn new(config: SimConfig, trace: LinkTrace, flows: &[FlowSpec]) -> Result<Self> {
        config.validate()?;
        if trace.is_empty() {
            return Err(Error::EmptyTrace);
        }
        if flows.is_empty() {
            return Err(Error::NoFlows);
        }
        let mut states = Vec::with_capacity(flows.len());
        for (i, spec) in flows.iter().enumerate() {
            spec.validate()?;
            let cc = spec.cc.build()?;
            let decision = cc.decision();
            states.push(FlowState {
                log: FlowLog {
                    flow_id: i as u32,
                    protocol: cc.name(),
                    records: Vec::new(),
                    loss_events: 0,
                    timeouts: 0,
                },
                cc,
                app: spec.app.clone(),
                started: false,
                next_seq: 0,
                in_flight: 0,
                backlog_pkts: 0,
                cwnd: decision.cwnd_pkts,
                pacing_pps: decision.pacing_rate_pps,
                next_send_us: 0,
                pace_pending: false,
                unreported_drops: VecDeque::new(),
                recovery_seq: None,
                srtt_ms: None,
                rttvar_ms: 0.0,
                last_progress_us: 0,
                rto_pending: false,
                delivered_pkts: 0,
                target_pkts: None,
            });
        }
        let mut sim = Self {
            owd_us: config.owd_us(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            trace,
            flows: states,
            queue: VecDeque::new(),
            events: BinaryHeap::new(),
            now_us: 0,
            departure_scheduled: None,
            next_opportunity: 0,
            milestone: None,
        };
        for (i, spec) in flows.iter().enumerate() {
            let at = (spec.start_s * 1e6).round() as u64;
            sim.push(at, START, i as u32, 0);
        }
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn cwnd(&self, flow: u32) -> f64 {
        self.flows[flow as usize].cwnd
    }

    /// Packets of `flow` delivered to the receiver so far.
    pub fn delivered_pkts(&self, flow: u32) -> u64 {
        self.flows[flow as usize].delivered_pkts
    }

    /// Queue `bytes` of application data on an on-demand flow.
    pub fn enqueue_bytes(&mut self, flow: u32, bytes: u64) {
        let pkts = bytes.div_ceil(MSS_BYTES);
        self.flows[flow as usize].backlog_pkts += pkts;
        let now = self.now_us;
        self.try_send(flow, now);
    }

    /// Stop [`run_until`](Self::run_until) once `flow` has delivered
    /// `delivered_pkts` packets in total.
    pub fn set_delivery_target(&mut self, flow: u32, delivered_pkts: u64) {
        self.flows[flow as usize].target_pkts = Some(delivered_pkts);
    }

    #[inline]
    fn push(&mut self, t: u64, kind: u8, flow: u32, seq: u64) {
        self.events.push(Reverse((t, kind, flow, seq)));
    }

    /// Process every event strictly before `deadline_us`, or until a
    /// delivery target is reached.
    pub fn run_until(&mut self, deadline_us: u64) -> Result<StopReason> {
        while let Some(&Reverse((t, kind, flow, seq))) = self.events.peek() {
            if t >= deadline_us {
                break;
            }
            self.events.pop();
            self.now_us = t;
            match kind {
                DEPARTURE => self.on_departure(t),
                ARRIVAL => self.on_arrival(t, flow, seq),
                ACK => self.on_ack(t, flow, seq)?,
                PACE => {
                    self.flows[flow as usize].pace_pending = false;
                    self.try_send(flow, t);
                }
                APP => self.on_app(t, flow),
                RTO => self.on_rto(t, flow)?,
                START => self.on_start(t, flow),
                _ => unreachable!("unknown event kind {kind}"),
            }
            if let Some(f) = self.milestone.take() {
                return Ok(StopReason::Milestone(f));
            }
        }
        self.now_us = self.now_us.max(deadline_us);
        Ok(StopReason::Deadline)
    }

    pub fn finish(self) -> SimOutput {
        SimOutput {
            end_us: self.now_us,
            config: self.config,
            flows: self.flows.into_iter().map(|f| f.log).collect(),
        }
    }

    fn on_start(&mut self, t: u64, flow: u32) {
        let f = &mut self.flows[flow as usize];
        f.started = true;
        if matches!(f.app, AppModel::Interactive { .. }) {
            self.push(t, APP, flow, 0);
        }
        self.try_send(flow, t);
    }

    fn on_app(&mut self, t: u64, flow: u32) {
        let f = &mut self.flows[flow as usize];
        if let AppModel::Interactive {
            update_bytes,
            interval_ms,
        } = f.app
        {
            f.backlog_pkts += update_bytes.div_ceil(MSS_BYTES);
            let next = t + ((interval_ms * 1000.0).round() as u64).max(1);
            self.push(next, APP, flow, 0);
        }
        self.try_send(flow, t);
    }

    fn try_send(&mut self, flow: u32, now: u64) {
        let owd = self.owd_us;
        let mtu = self.config.mtu_bytes;
        let rto_min = self.config.rto_min_ms;
        let fi = flow as usize;
        loop {
            let f = &mut self.flows[fi];
            if !f.started || !f.has_data() || f.in_flight >= f.cwnd.floor() as u64 {
                break;
            }
            if f.pacing_pps.is_some() && now < f.next_send_us {
                if !f.pace_pending {
                    f.pace_pending = true;
                    let at = f.next_send_us;
                    self.push(at, PACE, flow, 0);
                }
                break;
            }
            if f.in_flight == 0 {
                f.last_progress_us = now;
            }
            let seq = f.next_seq;
            f.next_seq += 1;
            f.in_flight += 1;
            if !matches!(f.app, AppModel::Bulk { .. }) {
                f.backlog_pkts -= 1;
            }
            if let Some(rate) = f.pacing_pps {
                let gap = ((1e6 / rate).round() as u64).max(1);
                f.next_send_us = f.next_send_us.max(now) + gap;
            }
            f.log.records.push(PacketRecord {
                flow_id: flow,
                seq,
                sent_us: now,
                outcome: Outcome::InFlight,
                size_bytes: mtu,
            });
            let arm_rto = !f.rto_pending;
            f.rto_pending = true;
            let rto_at = now + f.rto_us(rto_min);
            self.push(now + owd, ARRIVAL, flow, seq);
            if arm_rto {
                self.push(rto_at, RTO, flow, 0);
            }
        }
    }

    fn drop_packet(&mut self, flow: u32, seq: u64, reason: DropReason) {
        let f = &mut self.flows[flow as usize];
        f.log.records[seq as usize].outcome = Outcome::Dropped(reason);
        f.unreported_drops.push_back(seq);
    }

    fn on_arrival(&mut self, t: u64, flow: u32, seq: u64) {
        if self.config.loss_rate > 0.0 && self.rng.random::<f64>() < self.config.loss_rate {
            self.drop_packet(flow, seq, DropReason::RandomLoss);
            return;
        }
        if self.queue.len() >= self.config.queue_capacity_pkts {
            self.drop_packet(flow, seq, DropReason::QueueFull);
            return;
        }
        self.queue.push_back((flow, seq));
        if self.departure_scheduled.is_none() {
            self.schedule_departure(t);
        }
    }

    fn schedule_departure(&mut self, t: u64) {
        let k = self.trace.first_at_or_after(t).max(self.next_opportunity);
        self.departure_scheduled = Some(k);
        let at = self.trace.opportunity_us(k);
        self.push(at, DEPARTURE, 0, k);
    }

    fn on_departure(&mut self, t: u64) {
        let k = self
            .departure_scheduled
            .take()
            .expect("departure without schedule");
        self.next_opportunity = k + 1;
        let (flow, seq) = self.queue.pop_front().expect("departure from empty queue");
        let f = &mut self.flows[flow as usize];
        f.log.records[seq as usize].outcome = Outcome::Delivered { at_us: t };
        f.delivered_pkts += 1;
        if f.target_pkts
            .is_some_and(|target| f.delivered_pkts >= target)
        {
            f.target_pkts = None;
            self.milestone = Some(flow);
        }
        self.push(t + self.owd_us, ACK, flow, seq);
        if !self.queue.is_empty() {
            self.schedule_departure(t);
        }
    }

    fn on_ack(&mut self, t: u64, flow: u32, seq: u64) -> Result<()> {
        let f = &mut self.flows[flow as usize];
        f.last_progress_us = t;

        // Drops of earlier packets become visible once a later packet is
        // acknowledged; one controller reaction per recovery episode.
        let mut lost = 0u32;
        let mut first_lost = None;
        while let Some(&s) = f.unreported_drops.front() {
            if s >= seq {
                break;
            }
            f.unreported_drops.pop_front();
            first_lost.get_or_insert(s);
            lost += 1;
        }
        if let Some(first) = first_lost {
            f.in_flight -= u64::from(lost);
            if !matches!(f.app, AppModel::Bulk { .. }) {
                f.backlog_pkts += u64::from(lost);
            }
            if f.recovery_seq.is_none_or(|r| first > r) {
                f.recovery_seq = Some(f.next_seq.saturating_sub(1));
                f.log.loss_events += 1;
                let d = f.cc.on_event(&CcEvent::Loss { lost_packets: lost })?;
                f.cwnd = d.cwnd_pkts;
                f.pacing_pps = d.pacing_rate_pps;
            }
        }

        f.in_flight -= 1;
        let sent = f.log.records[seq as usize].sent_us;
        let rtt_ms = (t - sent) as f64 / 1000.0;
        match f.srtt_ms {
            None => {
                f.srtt_ms = Some(rtt_ms);
                f.rttvar_ms = rtt_ms / 2.0;
            }
            Some(srtt) => {
                f.rttvar_ms = 0.75 * f.rttvar_ms + 0.25 * (srtt - rtt_ms).abs();
                f.srtt_ms = Some(0.875 * srtt + 0.125 * rtt_ms);
            }
        }
        let sample = RttSample::new(t as f64 / 1000.0, rtt_ms, MSS_BYTES);
        let d = f.cc.on_event(&CcEvent::Ack(sample))?;
        f.cwnd = d.cwnd_pkts;
        f.pacing_pps = d.pacing_rate_pps;
        self.try_send(flow, t);
        Ok(())
    }

    fn on_rto(&mut self, t: u64, flow: u32) -> Result<()> {
        let rto_min = self.config.rto_min_ms;
        let f = &mut self.flows[flow as usize];
        f.rto_pending = false;
        if f.in_flight == 0 {
            return Ok(());
        }
        let deadline = f.last_progress_us + f.rto_us(rto_min);
        if t >= deadline && !f.unreported_drops.is_empty() {
            // Tail loss with nothing left to acknowledge it.
            let lost = f.unreported_drops.len() as u64;
            f.unreported_drops.clear();
            f.in_flight -= lost;
            if !matches!(f.app, AppModel::Bulk { .. }) {
                f.backlog_pkts += lost;
            }
            f.recovery_seq = Some(f.next_seq.saturating_sub(1));
            f.log.timeouts += 1;
            f.last_progress_us = t;
            let d = f.cc.on_event(&CcEvent::Timeout)?;
            f.cwnd = d.cwnd_pkts;
            f.pacing_pps = d.pacing_rate_pps;
            f.next_send_us = t;
            self.try_send(flow, t);
        }
        let f = &mut self.flows[flow as usize];
        if f.in_flight > 0 && !f.rto_pending {
            f.rto_pending = true;
            let rto = f.rto_us(rto_min);
            // Expired but nothing is known lost: packets are only queued, so
            // check again one full RTO later.
            let at = match f.last_progress_us + rto {
                at if at > t => at,
                _ => t + rto,
            };
            self.push(at, RTO, flow, 0);
        }
        Ok(())
    }
}

/// Run `flows` over `trace` for `config.duration_s`.
pub fn simulate(config: &SimConfig, trace: &LinkTrace, flows: &[FlowSpec]) -> Result<SimOutput> {
    let mut sim = Simulator::new(config.clone(), trace.clone(), flows)?;
    sim.run_until(config.duration_us())?;
    Ok(sim.finish())
}
