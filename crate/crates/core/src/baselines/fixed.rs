use crate::cc::{CcDecision, CcEvent, CongestionControl, WindowBounds};
use crate::error::{Error, Result};

/// A controller that never moves its window. Used to pin the in-flight
/// budget in simulator tests and calibration runs.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedWindow {
    cwnd: f64,
}

impl FixedWindow {
    pub fn new(cwnd: f64) -> Result<Self> {
        if !(cwnd.is_finite() && cwnd >= 1.0) {
            return Err(Error::param("fixed.cwnd", "must be >= 1"));
        }
        Ok(Self { cwnd })
    }
}

impl CongestionControl for FixedWindow {
    fn name(&self) -> &'static str {
        "fixed"
    }

    fn on_event(&mut self, event: &CcEvent) -> Result<CcDecision> {
        event.validate()?;
        Ok(self.decision())
    }

    fn decision(&self) -> CcDecision {
        CcDecision {
            cwnd_pkts: self.cwnd,
            pacing_rate_pps: None,
        }
    }

    fn bounds(&self) -> WindowBounds {
        WindowBounds {
            cwnd_min: self.cwnd,
            cwnd_max: self.cwnd,
            initial_cwnd: self.cwnd,
        }
    }
}
