//! Python bindings: the Hera controller, trace generation, single runs,
//! the comparison grid and Jain's index.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use herasim::config::ExperimentConfig;
use herasim::experiment;
use herasim::hera::{Cadence, HeraParams};
use herasim::metrics::{self, RunSummary};
use herasim::traces::{self, SyntheticSpec};
use herasim::{CcEvent, CcSpec, CongestionControl, FlowSpec, LinkTrace, RttSample, SimConfig};

fn err(e: herasim::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Histogram-based delay controller, fed one event at a time.
#[pyclass(name = "Hera")]
struct PyHera {
    inner: herasim::Hera,
}

#[pymethods]
impl PyHera {
    #[new]
    #[pyo3(signature = (num_buckets=10, bucket_size_ms=15.0, max_delta=10.0, backlog_len=10, histogram_limit=10_000, per_ack=false, strict=true))]
    fn new(
        num_buckets: usize,
        bucket_size_ms: f64,
        max_delta: f64,
        backlog_len: usize,
        histogram_limit: u64,
        per_ack: bool,
        strict: bool,
    ) -> PyResult<Self> {
        let params = HeraParams {
            num_buckets,
            bucket_size_ms,
            max_delta,
            backlog_len,
            histogram_limit,
            strict_pseudocode: strict,
            cadence: if per_ack {
                Cadence::PerAck
            } else {
                Cadence::PerRtt
            },
            ..HeraParams::default()
        };
        Ok(Self {
            inner: herasim::Hera::new(params).map_err(err)?,
        })
    }

    /// Feed one ACK; returns the new window in packets.
    fn on_ack(&mut self, now_ms: f64, rtt_ms: f64) -> PyResult<f64> {
        let sample = RttSample::new(now_ms, rtt_ms, 1448);
        Ok(self
            .inner
            .on_event(&CcEvent::Ack(sample))
            .map_err(err)?
            .cwnd_pkts)
    }

    /// Apply one RTT measurement, ignoring the cadence setting.
    fn update(&mut self, rtt_ms: f64) -> PyResult<f64> {
        Ok(self.inner.update(rtt_ms).map_err(err)?.cwnd_pkts)
    }

    fn on_loss(&mut self, lost_packets: u32) -> f64 {
        self.inner.on_loss(lost_packets).cwnd_pkts
    }

    fn on_timeout(&mut self) -> f64 {
        self.inner.on_timeout().cwnd_pkts
    }

    #[getter]
    fn cwnd(&self) -> f64 {
        self.inner.cwnd()
    }

    #[getter]
    fn histogram(&self) -> Vec<u64> {
        self.inner.histogram().counts().to_vec()
    }

    #[getter]
    fn backlog(&self) -> Vec<f64> {
        self.inner.backlog().samples().collect()
    }
}

#[pyfunction]
fn jain_index(throughputs: Vec<f64>) -> PyResult<f64> {
    metrics::jain_index(&throughputs).map_err(err)
}

/// Opportunity timestamps (ms) of a synthetic preset trace.
#[pyfunction]
#[pyo3(signature = (preset, duration_ms, seed=1, mean_mbps=None, cov=None))]
fn gen_trace(
    preset: &str,
    duration_ms: u64,
    seed: u64,
    mean_mbps: Option<f64>,
    cov: Option<f64>,
) -> PyResult<Vec<u64>> {
    let mut spec = SyntheticSpec::preset(preset, duration_ms, seed).map_err(err)?;
    if let Some(m) = mean_mbps {
        spec.mean_mbps = m;
    }
    if let Some(c) = cov {
        spec.cov = c;
    }
    Ok(traces::gen_synthetic(&spec)
        .map_err(err)?
        .opportunities_ms()
        .to_vec())
}

#[pyfunction]
fn parse_mahimahi(text: &str) -> PyResult<Vec<u64>> {
    Ok(traces::parse_mahimahi(text)
        .map_err(err)?
        .opportunities_ms()
        .to_vec())
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    traces::preset_names().collect()
}

fn summary_dict<'py>(py: Python<'py>, s: &RunSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("total_throughput_mbps", s.total_throughput_mbps)?;
    d.set_item("mean_rtt_ms", s.mean_rtt_ms())?;
    d.set_item("jain_index", s.jain_index)?;
    let mut flows = Vec::new();
    for f in &s.flows {
        let fd = PyDict::new(py);
        fd.set_item("flow_id", f.flow_id)?;
        fd.set_item("protocol", &f.protocol)?;
        fd.set_item("mean_throughput_mbps", f.mean_throughput_mbps)?;
        fd.set_item("mean_rtt_ms", f.mean_rtt_ms)?;
        fd.set_item("p95_rtt_ms", f.p95_rtt_ms)?;
        fd.set_item("delivered_bytes", f.delivered_bytes)?;
        fd.set_item("loss_count", f.loss_count)?;
        flows.push(fd);
    }
    d.set_item("flows", flows)?;
    Ok(d)
}

/// Run bulk flows over a preset trace (or explicit timestamps) and return
/// the post-warmup summary.
#[pyfunction]
#[pyo3(signature = (protocols, preset="constant", timestamps_ms=None, duration_s=60.0, warmup_s=5.0, seed=1, queue_pkts=2000, loss_rate=0.0))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    protocols: Vec<String>,
    preset: &str,
    timestamps_ms: Option<Vec<u64>>,
    duration_s: f64,
    warmup_s: f64,
    seed: u64,
    queue_pkts: usize,
    loss_rate: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let trace = match timestamps_ms {
        Some(ts) => LinkTrace::from_timestamps(ts).map_err(err)?,
        None => {
            let spec = SyntheticSpec::preset(preset, (duration_s * 1000.0).ceil() as u64, seed)
                .map_err(err)?;
            traces::gen_synthetic(&spec).map_err(err)?
        }
    };
    let flows = protocols
        .iter()
        .map(|p| CcSpec::from_name(p).map(FlowSpec::bulk))
        .collect::<herasim::Result<Vec<_>>>()
        .map_err(err)?;
    let config = SimConfig {
        duration_s,
        seed,
        queue_capacity_pkts: queue_pkts,
        loss_rate,
        ..SimConfig::default()
    };
    let summary = py
        .allow_threads(|| {
            let out = herasim::simulate(&config, &trace, &flows)?;
            metrics::summarize_run(&out, warmup_s)
        })
        .map_err(err)?;
    summary_dict(py, &summary)
}

/// Protocol x trace x seed grid; the last row per protocol is the mean.
#[pyfunction]
#[pyo3(signature = (protocols=None, presets=None, seeds=None, duration_s=60.0))]
fn compare<'py>(
    py: Python<'py>,
    protocols: Option<Vec<String>>,
    presets: Option<Vec<String>>,
    seeds: Option<Vec<u64>>,
    duration_s: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut cfg = ExperimentConfig::default();
    if let Some(p) = protocols {
        cfg.protocols = p;
    }
    if let Some(p) = presets {
        cfg.trace.presets = p;
    }
    if let Some(s) = seeds {
        cfg.seeds = s;
    }
    cfg.duration_s = duration_s;
    cfg.validate().map_err(err)?;
    let rows = py
        .allow_threads(|| experiment::compare_rows(&cfg))
        .map_err(err)?;
    rows.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("protocol", &r.protocol)?;
            d.set_item("trace", &r.trace)?;
            d.set_item("seed", r.seed)?;
            d.set_item("mean_throughput_mbps", r.mean_throughput_mbps)?;
            d.set_item("mean_rtt_ms", r.mean_rtt_ms)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn herasim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHera>()?;
    m.add_function(wrap_pyfunction!(jain_index, m)?)?;
    m.add_function(wrap_pyfunction!(gen_trace, m)?)?;
    m.add_function(wrap_pyfunction!(parse_mahimahi, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    Ok(())
}
