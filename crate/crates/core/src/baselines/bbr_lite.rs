//! A reduced model-based controller: windowed max delivery rate, windowed
//! min RTT, window `cwnd_gain * BDP` and an eight-phase pacing gain cycle.
//! There is no startup, drain or ProbeRTT state: the gain cycle runs from
//! the first ACK and the window itself doubles the estimate each round
//! until the link saturates.

use std::collections::VecDeque;

use crate::cc::{CcDecision, CcEvent, CongestionControl, RttSample, WindowBounds, MSS_BYTES};
use crate::error::{Error, Result};

pub const PACING_GAIN_CYCLE: [f64; 8] = [1.25, 0.75, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct BbrLiteParams {
    pub cwnd_gain: f64,
    /// Max-filter window, in rounds.
    pub bw_window_rounds: u64,
    /// Min-filter window, in milliseconds.
    pub min_rtt_window_ms: f64,
    pub bounds: WindowBounds,
}

impl Default for BbrLiteParams {
    fn default() -> Self {
        Self {
            cwnd_gain: 2.0,
            bw_window_rounds: 10,
            min_rtt_window_ms: 10_000.0,
            bounds: WindowBounds::default(),
        }
    }
}

impl BbrLiteParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cwnd_gain.is_finite() && self.cwnd_gain > 0.0) {
            return Err(Error::param("bbr.cwnd_gain", "must be > 0"));
        }
        if self.bw_window_rounds == 0 {
            return Err(Error::param("bbr.bw_window_rounds", "must be >= 1"));
        }
        if !(self.min_rtt_window_ms > 0.0) {
            return Err(Error::param("bbr.min_rtt_window_ms", "must be > 0"));
        }
        self.bounds.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BbrLite {
    params: BbrLiteParams,
    delivered_pkts: f64,
    rate_window: VecDeque<(f64, f64)>,
    max_bw: VecDeque<(u64, f64)>,
    min_rtt: VecDeque<(f64, f64)>,
    srtt_ms: Option<f64>,
    round: u64,
    round_start_ms: f64,
    cycle_index: usize,
    phase_start_ms: f64,
    cwnd: f64,
}

impl BbrLite {
    pub fn new(params: BbrLiteParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            cwnd: params.bounds.initial_cwnd,
            params,
            delivered_pkts: 0.0,
            rate_window: VecDeque::new(),
            max_bw: VecDeque::new(),
            min_rtt: VecDeque::new(),
            srtt_ms: None,
            round: 0,
            round_start_ms: 0.0,
            cycle_index: 0,
            phase_start_ms: 0.0,
        })
    }

    /// Windowed max delivery rate in packets per second.
    pub fn max_bw_pps(&self) -> Option<f64> {
        self.max_bw.front().map(|&(_, bw)| bw)
    }

    /// Windowed min RTT in milliseconds.
    pub fn min_rtt_ms(&self) -> Option<f64> {
        self.min_rtt.front().map(|&(_, rtt)| rtt)
    }

    pub fn cycle_index(&self) -> usize {
        self.cycle_index
    }

    pub fn pacing_gain(&self) -> f64 {
        PACING_GAIN_CYCLE[self.cycle_index]
    }

    pub fn cwnd(&self) -> f64 {
        self.cwnd
    }

    fn update_min_rtt(&mut self, now: f64, rtt: f64) {
        while matches!(self.min_rtt.back(), Some(&(_, r)) if r >= rtt) {
            self.min_rtt.pop_back();
        }
        self.min_rtt.push_back((now, rtt));
        let horizon = now - self.params.min_rtt_window_ms;
        while self.min_rtt.len() > 1 && self.min_rtt[0].0 < horizon {
            self.min_rtt.pop_front();
        }
    }

    /// Delivery rate over roughly the last smoothed RTT.
    fn rate_sample(&mut self, now: f64, span_ms: f64) -> Option<f64> {
        self.rate_window.push_back((now, self.delivered_pkts));
        let horizon = now - span_ms;
        while self.rate_window.len() > 2 && self.rate_window[1].0 <= horizon {
            self.rate_window.pop_front();
        }
        let &(t0, d0) = self.rate_window.front()?;
        if t0 > horizon {
            return None;
        }
        let dt = now - t0;
        (dt > 0.0).then(|| (self.delivered_pkts - d0) * 1000.0 / dt)
    }

    fn update_max_bw(&mut self, bw: f64) {
        while matches!(self.max_bw.back(), Some(&(_, b)) if b <= bw) {
            self.max_bw.pop_back();
        }
        self.max_bw.push_back((self.round, bw));
        let window = self.params.bw_window_rounds;
        while self.max_bw.len() > 1 && self.max_bw[0].0 + window <= self.round {
            self.max_bw.pop_front();
        }
    }

    fn on_ack(&mut self, sample: &RttSample) {
        let now = sample.now_ms;
        self.delivered_pkts += sample.acked_bytes as f64 / MSS_BYTES as f64;
        self.update_min_rtt(now, sample.rtt_ms);
        let srtt = match self.srtt_ms {
            Some(s) => 0.875 * s + 0.125 * sample.rtt_ms,
            None => {
                self.round_start_ms = now;
                self.phase_start_ms = now;
                sample.rtt_ms
            }
        };
        self.srtt_ms = Some(srtt);

        if now - self.round_start_ms >= srtt {
            self.round += 1;
            self.round_start_ms = now;
        }
        if let Some(bw) = self.rate_sample(now, srtt) {
            self.update_max_bw(bw);
        }

        let min_rtt = self.min_rtt_ms().unwrap_or(sample.rtt_ms);
        if now - self.phase_start_ms >= min_rtt {
            self.cycle_index = (self.cycle_index + 1) % PACING_GAIN_CYCLE.len();
            self.phase_start_ms = now;
        }

        if let Some(bw) = self.max_bw_pps() {
            let bdp = bw * min_rtt / 1000.0;
            self.cwnd = self.params.bounds.clamp(self.params.cwnd_gain * bdp);
        }
    }
}

impl CongestionControl for BbrLite {
    fn name(&self) -> &'static str {
        "bbr-lite"
    }

    fn on_event(&mut self, event: &CcEvent) -> Result<CcDecision> {
        event.validate()?;
        if let CcEvent::Ack(sample) = event {
            self.on_ack(sample);
        }
        Ok(self.decision())
    }

    fn decision(&self) -> CcDecision {
        CcDecision {
            cwnd_pkts: self.cwnd,
            pacing_rate_pps: self.max_bw_pps().map(|bw| self.pacing_gain() * bw),
        }
    }

    fn bounds(&self) -> WindowBounds {
        self.params.bounds
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ack(now: f64, rtt: f64) -> CcEvent {
        CcEvent::Ack(RttSample::new(now, rtt, MSS_BYTES))
    }

    #[test]
    fn first_sample_keeps_initial_window() {
        let mut b = BbrLite::new(BbrLiteParams::default()).unwrap();
        let d = b.on_event(&ack(0.0, 20.0)).unwrap();
        assert_eq!(d.cwnd_pkts, 10.0);
        assert_eq!(d.pacing_rate_pps, None);
    }

    #[test]
    fn window_is_twice_bdp() {
        let mut b = BbrLite::new(BbrLiteParams::default()).unwrap();
        let mut d = b.decision();
        for ms in 0..200 {
            d = b.on_event(&ack(ms as f64, 20.0)).unwrap();
        }
        assert!((b.max_bw_pps().unwrap() - 1000.0).abs() < 1e-9);
        assert_eq!(b.min_rtt_ms(), Some(20.0));
        assert!((d.cwnd_pkts - 40.0).abs() < 1e-9);
    }

    #[test]
    fn min_rtt_filter_tracks_lower_sample() {
        let mut b = BbrLite::new(BbrLiteParams::default()).unwrap();
        for ms in 0..50 {
            b.on_event(&ack(ms as f64, 20.0)).unwrap();
        }
        b.on_event(&ack(50.0, 15.0)).unwrap();
        assert_eq!(b.min_rtt_ms(), Some(15.0));
    }

    #[test]
    fn min_rtt_expires_after_window() {
        let mut b = BbrLite::new(BbrLiteParams::default()).unwrap();
        b.on_event(&ack(0.0, 15.0)).unwrap();
        b.on_event(&ack(5_000.0, 30.0)).unwrap();
        assert_eq!(b.min_rtt_ms(), Some(15.0));
        b.on_event(&ack(10_001.0, 30.0)).unwrap();
        assert_eq!(b.min_rtt_ms(), Some(30.0));
    }

    #[test]
    fn loss_is_ignored() {
        let mut b = BbrLite::new(BbrLiteParams::default()).unwrap();
        for ms in 0..100 {
            b.on_event(&ack(ms as f64, 20.0)).unwrap();
        }
        let before = b.decision();
        assert_eq!(
            b.on_event(&CcEvent::Loss { lost_packets: 3 }).unwrap(),
            before
        );
    }

    #[test]
    fn gain_cycle_advances_once_per_min_rtt() {
        let mut b = BbrLite::new(BbrLiteParams::default()).unwrap();
        let mut gains = Vec::new();
        for ms in 0..=160 {
            b.on_event(&ack(ms as f64, 20.0)).unwrap();
            if ms % 20 == 10 {
                gains.push(b.pacing_gain());
            }
        }
        assert_eq!(gains, PACING_GAIN_CYCLE.to_vec());
        assert_eq!(b.cycle_index(), 0);
    }

    #[test]
    fn no_rate_sample_before_one_rtt_of_history() {
        let mut b = BbrLite::new(BbrLiteParams::default()).unwrap();
        for k in 0..10 {
            b.on_event(&ack(k as f64 * 0.1, 20.0)).unwrap();
        }
        assert_eq!(b.max_bw_pps(), None);
        assert_eq!(b.decision().cwnd_pkts, 10.0);
    }
}
