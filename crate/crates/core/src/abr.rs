//! Chunked adaptive-bitrate streaming over simulated flows.
//!
//! Every client owns one on-demand flow and fetches chunks back to back
//! while its buffer has room. Bitrate choice is throughput based: the
//! highest rung at or below `safety` times the harmonic mean of the last
//! chunk download rates. Player time is kept in integer microseconds so
//! `startup + played + stalled` equals the wall clock exactly.

use std::collections::VecDeque;
use std::io::Write;

use serde::Serialize;

use crate::cc::MSS_BYTES;
use crate::error::{Error, Result};
use crate::metrics::QoeSummary;
use crate::netsim::{AppModel, FlowSpec, SimConfig, Simulator, StopReason};
use crate::protocol::CcSpec;
use crate::traces::LinkTrace;

pub const DEFAULT_RUNGS_KBPS: [f64; 8] = [45.0, 86.0, 164.0, 314.0, 600.0, 1147.0, 2192.0, 4000.0];
pub const HISTORY_LEN: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BitrateLadder {
    rungs_kbps: Vec<f64>,
}

impl Default for BitrateLadder {
    fn default() -> Self {
        Self {
            rungs_kbps: DEFAULT_RUNGS_KBPS.to_vec(),
        }
    }
}

impl BitrateLadder {
    pub fn new(rungs_kbps: Vec<f64>) -> Result<Self> {
        if rungs_kbps.len() < 2 {
            return Err(Error::param("ladder", "need at least 2 rungs"));
        }
        if rungs_kbps.iter().any(|r| !(r.is_finite() && *r > 0.0))
            || rungs_kbps.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::param(
                "ladder",
                "rungs must be positive and strictly ascending",
            ));
        }
        Ok(Self { rungs_kbps })
    }

    pub fn rungs_kbps(&self) -> &[f64] {
        &self.rungs_kbps
    }

    pub fn len(&self) -> usize {
        self.rungs_kbps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rungs_kbps.is_empty()
    }

    pub fn top(&self) -> usize {
        self.rungs_kbps.len() - 1
    }

    pub fn kbps(&self, rung: usize) -> f64 {
        self.rungs_kbps[rung]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionConfig {
    pub n_clients: usize,
    pub chunk_s: f64,
    pub video_len_s: f64,
    pub startup_chunks: usize,
    pub safety: f64,
    pub buffer_max_s: f64,
    /// Sessions still running after this much simulated time are cut off.
    pub max_wall_s: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            n_clients: 5,
            chunk_s: 4.0,
            video_len_s: 600.0,
            startup_chunks: 2,
            safety: 0.8,
            buffer_max_s: 30.0,
            max_wall_s: 3600.0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 {
            return Err(Error::param("abr.n_clients", "must be >= 1"));
        }
        if !(1.0..=10.0).contains(&self.chunk_s) {
            return Err(Error::param("abr.chunk_s", "must lie in [1, 10]"));
        }
        if !(self.video_len_s.is_finite() && self.video_len_s > 0.0) {
            return Err(Error::param("abr.video_len_s", "must be > 0"));
        }
        if self.startup_chunks == 0 {
            return Err(Error::param("abr.startup_chunks", "must be >= 1"));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::param("abr.safety", "must lie in (0, 1]"));
        }
        if !(self.buffer_max_s >= self.chunk_s * self.startup_chunks as f64) {
            return Err(Error::param(
                "abr.buffer_max_s",
                "must hold at least the startup chunks",
            ));
        }
        if !(self.max_wall_s > 0.0) {
            return Err(Error::param("abr.max_wall_s", "must be > 0"));
        }
        Ok(())
    }

    /// Playable duration of every chunk in microseconds; the last one may
    /// be short.
    pub fn chunk_durations_us(&self) -> Vec<u64> {
        let total = (self.video_len_s * 1e6).round() as u64;
        let chunk = (self.chunk_s * 1e6).round() as u64;
        let mut out = vec![chunk; (total / chunk) as usize];
        if !total.is_multiple_of(chunk) {
            out.push(total % chunk);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    Startup,
    Playing,
    Stalled,
    Done,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerState {
    pub phase: Phase,
    pub buffer_us: u64,
    pub current_rung: usize,
    /// Download rates of recent chunks in kbps, oldest first.
    pub throughput_history: VecDeque<f64>,
    pub playhead_us: u64,
    pub startup_delay_us: Option<u64>,
    pub stall_count: u32,
    pub stall_us: u64,
    pub finished_at_us: Option<u64>,
}

impl Default for PlayerState {
    fn default() -> Self {
        Self {
            phase: Phase::Startup,
            buffer_us: 0,
            current_rung: 0,
            throughput_history: VecDeque::with_capacity(HISTORY_LEN),
            playhead_us: 0,
            startup_delay_us: None,
            stall_count: 0,
            stall_us: 0,
            finished_at_us: None,
        }
    }
}

impl PlayerState {
    pub fn buffer_s(&self) -> f64 {
        self.buffer_us as f64 / 1e6
    }

    pub fn playhead_s(&self) -> f64 {
        self.playhead_us as f64 / 1e6
    }

    pub fn record_throughput(&mut self, kbps: f64) {
        if self.throughput_history.len() == HISTORY_LEN {
            self.throughput_history.pop_front();
        }
        self.throughput_history.push_back(kbps);
    }

    /// Harmonic mean of the throughput history.
    pub fn harmonic_mean_kbps(&self) -> Option<f64> {
        if self.throughput_history.is_empty() || self.throughput_history.iter().any(|&x| x <= 0.0) {
            return None;
        }
        let inv: f64 = self.throughput_history.iter().map(|x| 1.0 / x).sum();
        Some(self.throughput_history.len() as f64 / inv)
    }
}

pub fn select_bitrate(player: &PlayerState, ladder: &BitrateLadder, safety: f64) -> usize {
    if player.phase == Phase::Startup {
        return 0;
    }
    let Some(hm) = player.harmonic_mean_kbps() else {
        return 0;
    };
    let budget = safety * hm;
    ladder
        .rungs_kbps()
        .iter()
        .rposition(|&r| r <= budget)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChunkRecord {
    pub client: u32,
    pub chunk_idx: usize,
    pub rung: usize,
    pub kbps: f64,
    pub start_ms: f64,
    pub done_ms: f64,
    pub buffer_s_after: f64,
}

pub const CHUNK_CSV_HEADER: &str = "client,chunk_idx,rung,kbps,start_ms,done_ms,buffer_s_after";

pub fn write_chunk_csv<W: Write>(chunks: &[ChunkRecord], mut w: W) -> Result<()> {
    writeln!(w, "{CHUNK_CSV_HEADER}")?;
    for c in chunks {
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{:.6},{:.6}",
            c.client, c.chunk_idx, c.rung, c.kbps, c.start_ms, c.done_ms, c.buffer_s_after
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionResult {
    pub qoe: Vec<QoeSummary>,
    pub chunks: Vec<ChunkRecord>,
    pub players: Vec<PlayerState>,
    pub end_us: u64,
}

struct Download {
    chunk_idx: usize,
    rung: usize,
    bytes: u64,
    start_us: u64,
}

struct Client {
    player: PlayerState,
    next_chunk: usize,
    buffered_chunks: usize,
    download: Option<Download>,
    rungs: Vec<usize>,
}

/// Stream `config.video_len_s` of video to `config.n_clients` clients over
/// one shared bottleneck. `ccs` holds one controller per client, or a single
/// one used by all. `sim.duration_s` is ignored in favour of
/// `config.max_wall_s`.
pub fn run_session(
    config: &SessionConfig,
    ladder: &BitrateLadder,
    trace: &LinkTrace,
    ccs: &[CcSpec],
    sim: &SimConfig,
) -> Result<SessionResult> {
    config.validate()?;
    if ccs.len() != 1 && ccs.len() != config.n_clients {
        return Err(Error::param("ccs", "need one controller or one per client"));
    }
    let specs: Vec<FlowSpec> = (0..config.n_clients)
        .map(|i| FlowSpec {
            cc: ccs[if ccs.len() == 1 { 0 } else { i }].clone(),
            app: AppModel::OnDemand,
            start_s: 0.0,
        })
        .collect();
    let sim_config = SimConfig {
        duration_s: config.max_wall_s,
        ..sim.clone()
    };
    let deadline = sim_config.duration_us();
    let mut sim = Simulator::new(sim_config, trace.clone(), &specs)?;
    let protocols: Vec<String> = specs.iter().map(|s| s.cc.name().to_string()).collect();

    let durations = config.chunk_durations_us();
    let buffer_max = (config.buffer_max_s * 1e6).round() as u64;
    let mut clients: Vec<Client> = (0..config.n_clients)
        .map(|_| Client {
            player: PlayerState::default(),
            next_chunk: 0,
            buffered_chunks: 0,
            download: None,
            rungs: Vec::new(),
        })
        .collect();
    let mut chunks = Vec::new();
    let mut last_us = 0u64;

    loop {
        let now = sim.now_us();
        for c in clients.iter_mut() {
            advance(&mut c.player, now - last_us);
        }
        last_us = now;
        for (i, c) in clients.iter_mut().enumerate() {
            settle(c, now, durations.len());
            maybe_start_download(
                c, i as u32, &mut sim, config, ladder, &durations, buffer_max, now,
            );
        }
        if clients.iter().all(|c| c.player.phase == Phase::Done) || now >= deadline {
            break;
        }
        let next = clients
            .iter()
            .filter_map(|c| next_player_event(c, &durations, buffer_max, now))
            .min()
            .unwrap_or(deadline)
            .clamp(now + 1, deadline);
        if let StopReason::Milestone(f) = sim.run_until(next)? {
            let t = sim.now_us();
            for c in clients.iter_mut() {
                advance(&mut c.player, t - last_us);
            }
            last_us = t;
            let c = &mut clients[f as usize];
            let d = c.download.take().expect("milestone without a download");
            let dt = (t - d.start_us).max(1);
            c.player.record_throughput(d.bytes as f64 * 8e3 / dt as f64);
            c.player.buffer_us += durations[d.chunk_idx];
            c.buffered_chunks += 1;
            c.rungs.push(d.rung);
            match c.player.phase {
                Phase::Startup => {
                    if c.buffered_chunks >= config.startup_chunks
                        || c.buffered_chunks == durations.len()
                    {
                        c.player.phase = Phase::Playing;
                        c.player.startup_delay_us = Some(t);
                    }
                }
                Phase::Stalled => c.player.phase = Phase::Playing,
                _ => {}
            }
            chunks.push(ChunkRecord {
                client: f,
                chunk_idx: d.chunk_idx,
                rung: d.rung,
                kbps: ladder.kbps(d.rung),
                start_ms: d.start_us as f64 / 1000.0,
                done_ms: t as f64 / 1000.0,
                buffer_s_after: c.player.buffer_s(),
            });
        }
    }

    let end_us = sim.now_us();
    let top = ladder.kbps(ladder.top());
    let qoe = clients
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mean_kbps = if c.rungs.is_empty() {
                0.0
            } else {
                c.rungs.iter().map(|&r| ladder.kbps(r)).sum::<f64>() / c.rungs.len() as f64
            };
            QoeSummary {
                client: i as u32,
                protocol: protocols[i].clone(),
                startup_delay_s: c.player.startup_delay_us.unwrap_or(end_us) as f64 / 1e6,
                stall_count: c.player.stall_count,
                stall_time_s: c.player.stall_us as f64 / 1e6,
                mean_bitrate_kbps: mean_kbps,
                mean_quality: 100.0 * mean_kbps / top,
                interaction_latency_ms: None,
                fluency_index: None,
            }
        })
        .collect();
    Ok(SessionResult {
        qoe,
        chunks,
        players: clients.into_iter().map(|c| c.player).collect(),
        end_us,
    })
}

fn advance(p: &mut PlayerState, dt: u64) {
    match p.phase {
        Phase::Playing => {
            let played = dt.min(p.buffer_us);
            p.buffer_us -= played;
            p.playhead_us += played;
        }
        Phase::Stalled => p.stall_us += dt,
        _ => {}
    }
}

fn settle(c: &mut Client, now: u64, n_chunks: usize) {
    if c.player.phase == Phase::Playing && c.player.buffer_us == 0 {
        if c.buffered_chunks == n_chunks {
            c.player.phase = Phase::Done;
            c.player.finished_at_us = Some(now);
        } else {
            c.player.phase = Phase::Stalled;
            c.player.stall_count += 1;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn maybe_start_download(
    c: &mut Client,
    flow: u32,
    sim: &mut Simulator,
    config: &SessionConfig,
    ladder: &BitrateLadder,
    durations: &[u64],
    buffer_max: u64,
    now: u64,
) {
    if c.download.is_some() || c.next_chunk >= durations.len() {
        return;
    }
    let dur = durations[c.next_chunk];
    if c.player.buffer_us + dur > buffer_max {
        return;
    }
    let rung = select_bitrate(&c.player, ladder, config.safety);
    c.player.current_rung = rung;
    let bytes = (ladder.kbps(rung) * 1000.0 / 8.0 * dur as f64 / 1e6)
        .round()
        .max(1.0) as u64;
    let target = sim.delivered_pkts(flow) + bytes.div_ceil(MSS_BYTES);
    sim.set_delivery_target(flow, target);
    sim.enqueue_bytes(flow, bytes);
    c.download = Some(Download {
        chunk_idx: c.next_chunk,
        rung,
        bytes,
        start_us: now,
    });
    c.next_chunk += 1;
}

fn next_player_event(c: &Client, durations: &[u64], buffer_max: u64, now: u64) -> Option<u64> {
    if c.player.phase != Phase::Playing {
        return None;
    }
    let drained = now + c.player.buffer_us;
    let resume = (c.download.is_none() && c.next_chunk < durations.len())
        .then(|| now + (c.player.buffer_us + durations[c.next_chunk]).saturating_sub(buffer_max));
    Some(resume.map_or(drained, |r| r.min(drained)))
}
