//! Trace-driven congestion-control simulation toolkit.
//!
//! * [`hera`]: histogram-based delay controller.
//! * [`baselines`]: Cubic, a reduced BBR model and a fixed window.
//! * [`netsim`]: deterministic single-bottleneck event simulator.
//! * [`traces`]: Mahimahi / rate-CSV traces and synthetic generators.
//! * [`metrics`]: throughput, delay, fairness and QoE summaries.
//! * [`abr`]: multi-client adaptive-bitrate streaming sessions.
//! * [`experiment`]: the experiment runners behind the `herasim` binary.

// Negated float comparisons in this crate reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abr;
pub mod baselines;
pub mod cc;
pub mod config;
pub mod error;
pub mod experiment;
pub mod hera;
pub mod metrics;
pub mod netsim;
pub mod protocol;
pub mod traces;

pub use cc::{CcDecision, CcEvent, CongestionControl, RttSample, WindowBounds};
pub use error::{Error, Result};
pub use hera::{Hera, HeraParams};
pub use netsim::{simulate, FlowSpec, SimConfig, SimOutput};
pub use protocol::CcSpec;
pub use traces::LinkTrace;
