//! Experiment configuration.
//!
//! A config is a TOML document. Any key can also be set from the command
//! line as a dotted `key=value` override (`hera.num_buckets=20`); overrides
//! are applied in order on top of the file, so later ones win.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::abr::{BitrateLadder, SessionConfig, DEFAULT_RUNGS_KBPS};
use crate::baselines::{BbrLiteParams, CubicParams};
use crate::cc::WindowBounds;
use crate::error::{Error, Result};
use crate::hera::{Cadence, HeraParams};
use crate::metrics::DEFAULT_WARMUP_S;
use crate::netsim::{AppModel, SimConfig, DEFAULT_BLOCK_BYTES};
use crate::protocol::CcSpec;
use crate::traces::{self, LinkTrace, SyntheticSpec, COMPARE_GRID_PRESETS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Run,
    Compare,
    Fairness,
    Abr,
    TraceGen,
    Report,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Run => "run",
            Experiment::Compare => "compare",
            Experiment::Fairness => "fairness",
            Experiment::Abr => "abr",
            Experiment::TraceGen => "trace-gen",
            Experiment::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSection {
    /// Mahimahi file, or a `time_s,mbps` CSV when the name ends in `.csv`.
    pub file: Option<PathBuf>,
    /// Synthetic presets; empty means the experiment's default.
    pub presets: Vec<String>,
    pub mean_mbps: Option<f64>,
    pub cov: Option<f64>,
    pub coherence_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub base_owd_ms: f64,
    pub queue_capacity_pkts: usize,
    pub loss_rate: f64,
    pub rto_min_ms: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            base_owd_ms: d.base_owd_ms,
            queue_capacity_pkts: d.queue_capacity_pkts,
            loss_rate: d.loss_rate,
            rto_min_ms: d.rto_min_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSection {
    pub cwnd_min: f64,
    pub cwnd_max: f64,
    pub initial_cwnd: f64,
}

impl Default for WindowSection {
    fn default() -> Self {
        let d = WindowBounds::default();
        Self {
            cwnd_min: d.cwnd_min,
            cwnd_max: d.cwnd_max,
            initial_cwnd: d.initial_cwnd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeraSection {
    pub num_buckets: usize,
    pub bucket_size_ms: f64,
    pub max_delta: f64,
    pub backlog_len: usize,
    pub histogram_limit: u64,
    pub strict_pseudocode: bool,
    /// `per-rtt` or `per-ack`.
    pub cadence: String,
}

impl Default for HeraSection {
    fn default() -> Self {
        let d = HeraParams::default();
        Self {
            num_buckets: d.num_buckets,
            bucket_size_ms: d.bucket_size_ms,
            max_delta: d.max_delta,
            backlog_len: d.backlog_len,
            histogram_limit: d.histogram_limit,
            strict_pseudocode: d.strict_pseudocode,
            cadence: "per-rtt".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CubicSection {
    pub c: f64,
    pub beta: f64,
}

impl Default for CubicSection {
    fn default() -> Self {
        let d = CubicParams::default();
        Self {
            c: d.c,
            beta: d.beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BbrSection {
    pub cwnd_gain: f64,
    pub bw_window_rounds: u64,
    pub min_rtt_window_ms: f64,
}

impl Default for BbrSection {
    fn default() -> Self {
        let d = BbrLiteParams::default();
        Self {
            cwnd_gain: d.cwnd_gain,
            bw_window_rounds: d.bw_window_rounds,
            min_rtt_window_ms: d.min_rtt_window_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbrSection {
    pub chunk_s: f64,
    pub video_len_s: f64,
    pub startup_chunks: usize,
    pub safety: f64,
    pub buffer_max_s: f64,
    pub max_wall_s: f64,
    pub ladder_kbps: Vec<f64>,
}

impl Default for AbrSection {
    fn default() -> Self {
        let d = SessionConfig::default();
        Self {
            chunk_s: d.chunk_s,
            video_len_s: d.video_len_s,
            startup_chunks: d.startup_chunks,
            safety: d.safety,
            buffer_max_s: d.buffer_max_s,
            max_wall_s: d.max_wall_s,
            ladder_kbps: DEFAULT_RUNGS_KBPS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppSection {
    /// `bulk` or `interactive`.
    pub kind: String,
    pub block_bytes: u64,
    pub update_bytes: u64,
    pub interval_ms: f64,
    /// Delay budget used for the fluency index.
    pub fluency_threshold_ms: f64,
}

impl Default for AppSection {
    fn default() -> Self {
        Self {
            kind: "bulk".into(),
            block_bytes: DEFAULT_BLOCK_BYTES,
            update_bytes: 3000,
            interval_ms: 10.0,
            fluency_threshold_ms: crate::metrics::DEFAULT_FLUENCY_THRESHOLD_MS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub protocols: Vec<String>,
    pub seeds: Vec<u64>,
    pub duration_s: f64,
    pub warmup_s: f64,
    /// Flows per run; the experiment picks a default when unset.
    pub flows: Option<usize>,
    pub clients: usize,
    pub bin_s: f64,
    pub out: PathBuf,
    pub trace: TraceSection,
    pub sim: SimSection,
    pub window: WindowSection,
    pub hera: HeraSection,
    pub cubic: CubicSection,
    pub bbr: BbrSection,
    pub abr: AbrSection,
    pub app: AppSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Run,
            protocols: vec!["hera".into(), "cubic".into(), "bbr-lite".into()],
            seeds: vec![1, 2, 3, 4, 5],
            duration_s: 60.0,
            warmup_s: DEFAULT_WARMUP_S,
            flows: None,
            clients: SessionConfig::default().n_clients,
            bin_s: 1.0,
            out: PathBuf::from("results"),
            trace: TraceSection::default(),
            sim: SimSection::default(),
            window: WindowSection::default(),
            hera: HeraSection::default(),
            cubic: CubicSection::default(),
            bbr: BbrSection::default(),
            abr: AbrSection::default(),
            app: AppSection::default(),
        }
    }
}

/// Parse an override value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Apply one `a.b.c=value` override to `table`.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad key `{key}`")));
    }
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut node = table;
    for p in parents {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` is not a section")))?;
    }
    node.insert(last.to_string(), parse_value(raw));
    Ok(())
}

impl ExperimentConfig {
    /// Read `path` (if any) and apply `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| Error::Config(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.protocols.is_empty() {
            return Err(Error::Config("need at least one protocol".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("need at least one seed".into()));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::param("duration_s", "must be > 0"));
        }
        if !(self.warmup_s >= 0.0) {
            return Err(Error::param("warmup_s", "must be >= 0"));
        }
        if !(self.bin_s > 0.0) {
            return Err(Error::param("bin_s", "must be > 0"));
        }
        for p in &self.protocols {
            self.cc_spec(p)?;
        }
        Ok(())
    }

    pub fn bounds(&self) -> WindowBounds {
        WindowBounds {
            cwnd_min: self.window.cwnd_min,
            cwnd_max: self.window.cwnd_max,
            initial_cwnd: self.window.initial_cwnd,
        }
    }

    pub fn cc_spec(&self, name: &str) -> Result<CcSpec> {
        let bounds = self.bounds();
        let spec = match CcSpec::from_name(name)? {
            CcSpec::Hera(_) => CcSpec::Hera(HeraParams {
                num_buckets: self.hera.num_buckets,
                bucket_size_ms: self.hera.bucket_size_ms,
                max_delta: self.hera.max_delta,
                backlog_len: self.hera.backlog_len,
                histogram_limit: self.hera.histogram_limit,
                bounds,
                strict_pseudocode: self.hera.strict_pseudocode,
                cadence: match self.hera.cadence.as_str() {
                    "per-rtt" => Cadence::PerRtt,
                    "per-ack" => Cadence::PerAck,
                    other => {
                        return Err(Error::param(
                            "hera.cadence",
                            format!("`{other}` is not per-rtt or per-ack"),
                        ))
                    }
                },
            }),
            CcSpec::Cubic(_) => CcSpec::Cubic(CubicParams {
                c: self.cubic.c,
                beta: self.cubic.beta,
                bounds,
                ..CubicParams::default()
            }),
            CcSpec::BbrLite(_) => CcSpec::BbrLite(BbrLiteParams {
                cwnd_gain: self.bbr.cwnd_gain,
                bw_window_rounds: self.bbr.bw_window_rounds,
                min_rtt_window_ms: self.bbr.min_rtt_window_ms,
                bounds,
            }),
            fixed => fixed,
        };
        spec.build()?;
        Ok(spec)
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            base_owd_ms: self.sim.base_owd_ms,
            queue_capacity_pkts: self.sim.queue_capacity_pkts,
            loss_rate: self.sim.loss_rate,
            duration_s: self.duration_s,
            seed,
            rto_min_ms: self.sim.rto_min_ms,
            ..SimConfig::default()
        }
    }

    pub fn app_model(&self) -> Result<AppModel> {
        match self.app.kind.as_str() {
            "bulk" => Ok(AppModel::Bulk {
                block_bytes: self.app.block_bytes,
            }),
            "interactive" => Ok(AppModel::Interactive {
                update_bytes: self.app.update_bytes,
                interval_ms: self.app.interval_ms,
            }),
            other => Err(Error::param(
                "app.kind",
                format!("`{other}` is not bulk or interactive"),
            )),
        }
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            n_clients: self.clients,
            chunk_s: self.abr.chunk_s,
            video_len_s: self.abr.video_len_s,
            startup_chunks: self.abr.startup_chunks,
            safety: self.abr.safety,
            buffer_max_s: self.abr.buffer_max_s,
            max_wall_s: self.abr.max_wall_s,
        }
    }

    pub fn ladder(&self) -> Result<BitrateLadder> {
        BitrateLadder::new(self.abr.ladder_kbps.clone())
    }

    /// Preset names in effect, falling back to `default`.
    pub fn presets_or(&self, default: &[&str]) -> Vec<String> {
        if self.trace.presets.is_empty() {
            default.iter().map(|s| s.to_string()).collect()
        } else {
            self.trace.presets.clone()
        }
    }

    pub fn synthetic_spec(
        &self,
        preset: &str,
        duration_ms: u64,
        seed: u64,
    ) -> Result<SyntheticSpec> {
        let mut spec = SyntheticSpec::preset(preset, duration_ms, seed)?;
        if let Some(m) = self.trace.mean_mbps {
            spec.mean_mbps = m;
        }
        if let Some(c) = self.trace.cov {
            spec.cov = c;
        }
        if let Some(c) = self.trace.coherence_ms {
            spec.coherence_ms = c;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Traces for one seed as `(label, trace)`. A trace file ignores the
    /// seed; synthetic presets are drawn with it.
    pub fn traces(
        &self,
        default_presets: &[&str],
        duration_ms: u64,
        seed: u64,
    ) -> Result<Vec<(String, LinkTrace)>> {
        if let Some(path) = &self.trace.file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let trace = if path.extension().is_some_and(|e| e == "csv") {
                traces::parse_rate_csv(&text)?
            } else {
                traces::parse_mahimahi(&text)?
            };
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "trace".into());
            return Ok(vec![(label, trace)]);
        }
        self.presets_or(default_presets)
            .into_iter()
            .map(|p| {
                let spec = self.synthetic_spec(&p, duration_ms, seed)?;
                Ok((p, traces::gen_synthetic(&spec)?))
            })
            .collect()
    }

    pub fn default_compare_presets() -> &'static [&'static str] {
        &COMPARE_GRID_PRESETS
    }
}
