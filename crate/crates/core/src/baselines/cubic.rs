use crate::cc::{CcDecision, CcEvent, CongestionControl, RttSample, WindowBounds};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CubicParams {
    /// Growth constant `C`.
    pub c: f64,
    /// Multiplicative decrease factor.
    pub beta: f64,
    pub initial_ssthresh: f64,
    pub bounds: WindowBounds,
}

impl Default for CubicParams {
    fn default() -> Self {
        Self {
            c: 0.4,
            beta: 0.7,
            initial_ssthresh: f64::INFINITY,
            bounds: WindowBounds::default(),
        }
    }
}

impl CubicParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::param("cubic.c", "must be > 0"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::param("cubic.beta", "must lie in (0, 1)"));
        }
        if self.initial_ssthresh.is_nan() || self.initial_ssthresh <= 0.0 {
            return Err(Error::param("cubic.initial_ssthresh", "must be > 0"));
        }
        self.bounds.validate()
    }
}

/// The cubic growth law `W(t) = C (t - K)^3 + W_max`, `t` in seconds.
#[inline]
pub fn cubic_window(t_s: f64, c: f64, k_s: f64, w_max: f64) -> f64 {
    let d = t_s - k_s;
    c * d * d * d + w_max
}

/// Slow start followed by cubic window growth; multiplicative decrease on
/// loss. The Reno-friendly region is not modelled.
#[derive(Debug, Clone, PartialEq)]
pub struct Cubic {
    params: CubicParams,
    cwnd: f64,
    w_max: f64,
    k_s: f64,
    epoch_start_ms: Option<f64>,
    ssthresh: f64,
}

impl Cubic {
    pub fn new(params: CubicParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            cwnd: params.bounds.initial_cwnd,
            w_max: 0.0,
            k_s: 0.0,
            epoch_start_ms: None,
            ssthresh: params.initial_ssthresh,
            params,
        })
    }

    /// A state positioned just after a reduction from `w_max`.
    pub fn after_reduction(params: CubicParams, w_max: f64) -> Result<Self> {
        let mut s = Self::new(params)?;
        s.cwnd = w_max;
        s.reduce();
        Ok(s)
    }

    pub fn cwnd(&self) -> f64 {
        self.cwnd
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    pub fn k_s(&self) -> f64 {
        self.k_s
    }

    pub fn ssthresh(&self) -> f64 {
        self.ssthresh
    }

    pub fn in_slow_start(&self) -> bool {
        self.cwnd < self.ssthresh
    }

    /// `W(t)` for time `t_s` since the last reduction.
    pub fn window_at(&self, t_s: f64) -> f64 {
        cubic_window(t_s, self.params.c, self.k_s, self.w_max)
    }

    fn reduce(&mut self) {
        self.w_max = self.cwnd;
        self.cwnd = self.params.bounds.clamp(self.cwnd * self.params.beta);
        self.ssthresh = self.cwnd;
        self.k_s = (self.w_max * (1.0 - self.params.beta) / self.params.c).cbrt();
        self.epoch_start_ms = None;
    }

    fn on_ack(&mut self, sample: &RttSample) {
        if self.in_slow_start() {
            self.cwnd += 1.0;
        } else {
            let epoch = match self.epoch_start_ms {
                Some(t) => t,
                None => {
                    // Entering avoidance without a prior reduction: start
                    // the curve at its plateau.
                    if self.w_max < self.cwnd {
                        self.w_max = self.cwnd;
                        self.k_s = 0.0;
                    }
                    self.epoch_start_ms = Some(sample.now_ms);
                    sample.now_ms
                }
            };
            let t_s = (sample.now_ms - epoch + sample.rtt_ms) / 1000.0;
            let target = self.window_at(t_s);
            if target > self.cwnd {
                self.cwnd += (target - self.cwnd) / self.cwnd;
            } else {
                self.cwnd += 0.01 / self.cwnd;
            }
        }
        self.cwnd = self.params.bounds.clamp(self.cwnd);
    }

    fn on_timeout(&mut self) {
        self.w_max = self.cwnd;
        self.ssthresh = self.params.bounds.clamp(self.cwnd * self.params.beta);
        self.k_s = (self.w_max * (1.0 - self.params.beta) / self.params.c).cbrt();
        self.cwnd = self.params.bounds.cwnd_min;
        self.epoch_start_ms = None;
    }
}

impl CongestionControl for Cubic {
    fn name(&self) -> &'static str {
        "cubic"
    }

    fn on_event(&mut self, event: &CcEvent) -> Result<CcDecision> {
        event.validate()?;
        match event {
            CcEvent::Ack(sample) => self.on_ack(sample),
            CcEvent::Loss { .. } => self.reduce(),
            CcEvent::Timeout => self.on_timeout(),
        }
        Ok(self.decision())
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

#[cfg(test)]
mod tests {
    use super::*;

    fn ack(now: f64) -> CcEvent {
        CcEvent::Ack(RttSample::new(now, 20.0, 1448))
    }

    const LOSS: CcEvent = CcEvent::Loss { lost_packets: 1 };

    #[test]
    fn inflection_and_origin() {
        let s = Cubic::after_reduction(CubicParams::default(), 100.0).unwrap();
        assert!((s.k_s() - (100.0_f64 * 0.3 / 0.4).cbrt()).abs() < 1e-12);
        assert!((s.k_s() - 4.217).abs() < 1e-3);
        assert_eq!(s.window_at(s.k_s()), 100.0);
        assert!((s.window_at(0.0) - 70.0).abs() < 1e-9 * 70.0);
        assert!((s.window_at(2.0 * s.k_s()) - 130.0).abs() < 1e-9 * 130.0);
    }

    #[test]
    fn slow_start_adds_one_per_ack() {
        let mut s = Cubic::new(CubicParams::default()).unwrap();
        assert_eq!(s.on_event(&ack(0.0)).unwrap().cwnd_pkts, 11.0);
        assert_eq!(s.on_event(&ack(1.0)).unwrap().cwnd_pkts, 12.0);
    }

    #[test]
    fn loss_decreases_by_beta() {
        let mut s = Cubic::new(CubicParams::default()).unwrap();
        s.cwnd = 100.0;
        assert!((s.on_event(&LOSS).unwrap().cwnd_pkts - 70.0).abs() < 1e-12);
        assert!((s.on_event(&LOSS).unwrap().cwnd_pkts - 49.0).abs() < 1e-12);
        assert!((s.ssthresh() - 49.0).abs() < 1e-12);
    }

    #[test]
    fn avoidance_climbs_back_to_w_max() {
        let mut s = Cubic::after_reduction(CubicParams::default(), 100.0).unwrap();
        let mut now = 0.0;
        while now < s.k_s() * 1000.0 + 500.0 {
            s.on_event(&ack(now)).unwrap();
            now += 1.0;
        }
        assert!(s.cwnd() > 95.0, "cwnd {}", s.cwnd());
    }

    #[test]
    fn timeout_collapses_to_min() {
        let mut s = Cubic::new(CubicParams::default()).unwrap();
        s.cwnd = 80.0;
        let d = s.on_event(&CcEvent::Timeout).unwrap();
        assert_eq!(d.cwnd_pkts, 2.0);
        assert!((s.ssthresh() - 56.0).abs() < 1e-12);
    }

    #[test]
    fn floor_respected() {
        let mut s = Cubic::new(CubicParams::default()).unwrap();
        for _ in 0..50 {
            s.on_event(&LOSS).unwrap();
        }
        assert_eq!(s.cwnd(), 2.0);
    }
}
