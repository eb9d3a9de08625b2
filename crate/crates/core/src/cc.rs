//! Algorithm-agnostic congestion-control contract.
//!
//! Every controller is driven purely by [`CcEvent`]s delivered by the
//! simulator (ACK-clocked, no internal timers or randomness) and answers
//! with a [`CcDecision`]. Windows are counted in MSS-sized packets and kept
//! as `f64`; the simulator floors them when computing the in-flight budget.

use crate::error::{Error, Result};

/// Payload bytes carried by one full-sized packet.
pub const MSS_BYTES: u64 = 1448;
/// On-the-wire size of one full-sized packet.
pub const MTU_BYTES: u64 = 1500;

pub const DEFAULT_CWND_MIN: f64 = 2.0;
pub const DEFAULT_CWND_MAX: f64 = 10_000.0;
pub const DEFAULT_INITIAL_CWND: f64 = 10.0;

/// One RTT measurement delivered with an acknowledgement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RttSample {
    pub now_ms: f64,
    pub rtt_ms: f64,
    pub acked_bytes: u64,
}

impl RttSample {
    pub fn new(now_ms: f64, rtt_ms: f64, acked_bytes: u64) -> Self {
        Self {
            now_ms,
            rtt_ms,
            acked_bytes,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !self.rtt_ms.is_finite() || self.rtt_ms <= 0.0 {
            return Err(Error::InvalidRtt(self.rtt_ms));
        }
        if !self.now_ms.is_finite() {
            return Err(Error::InvalidRtt(self.now_ms));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CcEvent {
    Ack(RttSample),
    Loss { lost_packets: u32 },
    Timeout,
}

impl CcEvent {
    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            CcEvent::Ack(sample) => sample.validate(),
            CcEvent::Loss { lost_packets: 0 } => Err(Error::EmptyLoss),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcDecision {
    pub cwnd_pkts: f64,
    /// Pacing hint in packets per second; `None` for purely window-based
    /// controllers.
    pub pacing_rate_pps: Option<f64>,
}

/// Lower, upper and starting congestion window, in packets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowBounds {
    pub cwnd_min: f64,
    pub cwnd_max: f64,
    pub initial_cwnd: f64,
}

impl Default for WindowBounds {
    fn default() -> Self {
        Self {
            cwnd_min: DEFAULT_CWND_MIN,
            cwnd_max: DEFAULT_CWND_MAX,
            initial_cwnd: DEFAULT_INITIAL_CWND,
        }
    }
}

impl WindowBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.cwnd_min.is_finite() && self.cwnd_min >= 1.0) {
            return Err(Error::param("cwnd_min", "must be >= 1"));
        }
        if !(self.cwnd_max.is_finite() && self.cwnd_max >= self.cwnd_min) {
            return Err(Error::param("cwnd_max", "must be >= cwnd_min"));
        }
        if !(self.initial_cwnd >= self.cwnd_min && self.initial_cwnd <= self.cwnd_max) {
            return Err(Error::param(
                "initial_cwnd",
                "must lie within [cwnd_min, cwnd_max]",
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn clamp(&self, cwnd: f64) -> f64 {
        cwnd.clamp(self.cwnd_min, self.cwnd_max)
    }
}

/// A congestion controller driven by simulator events.
pub trait CongestionControl: Send {
    /// Stable identifier used in CSV output.
    fn name(&self) -> &'static str;

    /// Feed one event and return the resulting decision. Malformed events
    /// (non-positive or NaN RTT, empty loss) are rejected without touching
    /// state.
    fn on_event(&mut self, event: &CcEvent) -> Result<CcDecision>;

    /// The current decision without feeding an event.
    fn decision(&self) -> CcDecision;

    fn bounds(&self) -> WindowBounds;
}

impl CongestionControl for Box<dyn CongestionControl> {
    fn name(&self) -> &'static str {
        (**self).name()
    }

    fn on_event(&mut self, event: &CcEvent) -> Result<CcDecision> {
        (**self).on_event(event)
    }

    fn decision(&self) -> CcDecision {
        (**self).decision()
    }

    fn bounds(&self) -> WindowBounds {
        (**self).bounds()
    }
}
