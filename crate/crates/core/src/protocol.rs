//! Protocol selection: maps identifiers and parameter sets onto concrete
//! controllers.

use crate::baselines::{BbrLite, BbrLiteParams, Cubic, CubicParams, FixedWindow};
use crate::cc::CongestionControl;
use crate::error::{Error, Result};
use crate::hera::{Hera, HeraParams};

/// Names reserved in output schemas but not implemented.
pub const RESERVED_PROTOCOLS: [&str; 2] = ["allegro", "vivace"];

#[derive(Debug, Clone, PartialEq)]
pub enum CcSpec {
    Hera(HeraParams),
    Cubic(CubicParams),
    BbrLite(BbrLiteParams),
    Fixed(f64),
}

impl CcSpec {
    /// Default parameters for a protocol identifier.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "hera" => Ok(CcSpec::Hera(HeraParams::default())),
            "cubic" => Ok(CcSpec::Cubic(CubicParams::default())),
            "bbr-lite" | "bbr" => Ok(CcSpec::BbrLite(BbrLiteParams::default())),
            other => Err(Error::UnknownProtocol(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CcSpec::Hera(_) => "hera",
            CcSpec::Cubic(_) => "cubic",
            CcSpec::BbrLite(_) => "bbr-lite",
            CcSpec::Fixed(_) => "fixed",
        }
    }

    pub fn build(&self) -> Result<Box<dyn CongestionControl>> {
        Ok(match self {
            CcSpec::Hera(p) => Box::new(Hera::new(p.clone())?),
            CcSpec::Cubic(p) => Box::new(Cubic::new(p.clone())?),
            CcSpec::BbrLite(p) => Box::new(BbrLite::new(p.clone())?),
            CcSpec::Fixed(w) => Box::new(FixedWindow::new(*w)?),
        })
    }
}
