//! Experiment runners behind the `herasim` binary.
//!
//! Each runner takes an [`ExperimentConfig`], writes its artifacts into
//! `config.out` and returns the rows it wrote. Grids run on a rayon pool;
//! results are collected in grid order, so output bytes do not depend on
//! scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abr::{self, ChunkRecord};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::metrics::{self, fmt6, QoeSummary, RunSummary};
use crate::netsim::{simulate, FlowSpec, SimOutput};
use crate::traces::{self, LinkTrace};

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    info!("wrote {}", path.display());
    Ok(path)
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))
}

fn duration_ms(seconds: f64) -> u64 {
    (seconds * 1000.0).round().max(1.0) as u64
}

fn run_flows(
    cfg: &ExperimentConfig,
    trace: &LinkTrace,
    seed: u64,
    protocols: &[String],
    n_flows: usize,
) -> Result<SimOutput> {
    let app = cfg.app_model()?;
    let flows = (0..n_flows)
        .map(|i| {
            Ok(FlowSpec {
                cc: cfg.cc_spec(&protocols[i % protocols.len()])?,
                app: app.clone(),
                start_s: 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    simulate(&cfg.sim_config(seed), trace, &flows)
}

// ---------------------------------------------------------------- run

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionRow {
    pub flow_id: u32,
    pub interaction_latency_ms: f64,
    pub fluency_index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub trace: String,
    pub seed: u64,
    pub summary: RunSummary,
    pub interaction: Vec<InteractionRow>,
}

/// One simulation on the first trace and first seed. Flows cycle through
/// the protocol list.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunReport> {
    let seed = cfg.seeds[0];
    let (label, trace) = cfg
        .traces(&["constant"], duration_ms(cfg.duration_s), seed)?
        .into_iter()
        .next()
        .ok_or(Error::EmptyTrace)?;
    let out = run_flows(cfg, &trace, seed, &cfg.protocols, cfg.flows.unwrap_or(1))?;
    let summary = metrics::summarize_run(&out, cfg.warmup_s)?;
    let mut interaction = Vec::new();
    if cfg.app.kind == "interactive" {
        let lo = (cfg.warmup_s * 1e6).round() as u64;
        for f in &out.flows {
            let recs: Vec<_> = f
                .records
                .iter()
                .filter(|r| r.sent_us >= lo)
                .copied()
                .collect();
            if let Ok(m) = metrics::interaction_metrics(&recs, cfg.app.fluency_threshold_ms) {
                interaction.push(InteractionRow {
                    flow_id: f.flow_id,
                    interaction_latency_ms: m.interaction_latency_ms,
                    fluency_index: m.fluency_index,
                });
            }
        }
    }
    let mut packets = Vec::new();
    out.write_packet_csv(&mut packets)?;
    write_file(&cfg.out, "packets.csv", &String::from_utf8_lossy(&packets))?;
    let mut csv = Vec::new();
    summary.write_csv(&mut csv)?;
    write_file(&cfg.out, "summary.csv", &String::from_utf8_lossy(&csv))?;
    let report = RunReport {
        trace: label,
        seed,
        summary,
        interaction,
    };
    write_file(&cfg.out, "summary.json", &to_json(&report)?)?;
    Ok(report)
}

// ------------------------------------------------------------ compare

pub const COMPARE_CSV_HEADER: &str = "protocol,trace,seed,mean_throughput_mbps,mean_rtt_ms";
pub const AGGREGATE_TRACE: &str = "all";
pub const AGGREGATE_SEED: &str = "mean";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub protocol: String,
    pub trace: String,
    /// `None` on a per-protocol aggregate row.
    pub seed: Option<u64>,
    pub mean_throughput_mbps: f64,
    pub mean_rtt_ms: Option<f64>,
}

impl CompareRow {
    pub fn is_aggregate(&self) -> bool {
        self.seed.is_none()
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.6},{}",
            self.protocol,
            self.trace,
            self.seed
                .map_or(AGGREGATE_SEED.to_string(), |s| s.to_string()),
            self.mean_throughput_mbps,
            fmt6(self.mean_rtt_ms)
        )
    }
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Append one mean row per protocol, in first-seen order.
pub fn aggregate_rows(rows: &[CompareRow]) -> Vec<CompareRow> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.protocol.as_str()) {
            order.push(&r.protocol);
        }
    }
    order
        .into_iter()
        .map(|p| {
            let mine: Vec<&CompareRow> = rows
                .iter()
                .filter(|r| r.protocol == p && !r.is_aggregate())
                .collect();
            CompareRow {
                protocol: p.to_string(),
                trace: AGGREGATE_TRACE.into(),
                seed: None,
                mean_throughput_mbps: mean_of(mine.iter().map(|r| r.mean_throughput_mbps))
                    .unwrap_or(0.0),
                mean_rtt_ms: mean_of(mine.iter().filter_map(|r| r.mean_rtt_ms)),
            }
        })
        .collect()
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut s = String::new();
    writeln!(s, "{COMPARE_CSV_HEADER}").unwrap();
    for r in rows {
        writeln!(s, "{}", r.csv_line()).unwrap();
    }
    s
}

/// One single-flow run per (protocol, trace, seed), then one aggregate row
/// per protocol.
pub fn compare_rows(cfg: &ExperimentConfig) -> Result<Vec<CompareRow>> {
    for p in &cfg.protocols {
        cfg.cc_spec(p)?;
    }
    let presets = ExperimentConfig::default_compare_presets();
    let mut cells = Vec::new();
    for &seed in &cfg.seeds {
        for (label, trace) in cfg.traces(presets, duration_ms(cfg.duration_s), seed)? {
            cells.push((seed, label, trace));
        }
    }
    let mut grid = Vec::new();
    for p in &cfg.protocols {
        for (ti, _) in cells.iter().enumerate() {
            grid.push((p.clone(), ti));
        }
    }
    let mut rows: Vec<CompareRow> = grid
        .par_iter()
        .map(|(p, ti)| {
            let (seed, label, trace) = &cells[*ti];
            let out = run_flows(cfg, trace, *seed, std::slice::from_ref(p), 1)?;
            let s = metrics::summarize_run(&out, cfg.warmup_s)?;
            Ok(CompareRow {
                protocol: p.clone(),
                trace: label.clone(),
                seed: Some(*seed),
                mean_throughput_mbps: s.total_throughput_mbps,
                mean_rtt_ms: s.mean_rtt_ms(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // Grid order is seed-major; output is (protocol, trace, seed).
    let proto_rank = |p: &str| cfg.protocols.iter().position(|q| q == p);
    let trace_rank = |t: &str| cells.iter().position(|(_, l, _)| l == t);
    rows.sort_by_key(|r| (proto_rank(&r.protocol), trace_rank(&r.trace), r.seed));
    let agg = aggregate_rows(&rows);
    rows.extend(agg);
    Ok(rows)
}

pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<Vec<CompareRow>> {
    let rows = compare_rows(cfg)?;
    write_file(&cfg.out, "compare.csv", &compare_csv(&rows))?;
    write_file(&cfg.out, "compare.json", &to_json(&rows)?)?;
    Ok(rows)
}

// ----------------------------------------------------------- fairness

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessResult {
    pub protocol: String,
    pub trace: String,
    pub seed: u64,
    pub jain_index: Option<f64>,
    pub flow_throughput_mbps: Vec<f64>,
    /// `bins[k][flow]`, one row per `bin_s`.
    #[serde(skip)]
    pub bins: Vec<Vec<f64>>,
}

pub const DEFAULT_FAIRNESS_FLOWS: usize = 6;

pub fn fairness_results(cfg: &ExperimentConfig) -> Result<Vec<FairnessResult>> {
    let n = cfg.flows.unwrap_or(DEFAULT_FAIRNESS_FLOWS);
    if n < 2 {
        return Err(Error::param("flows", "fairness needs at least 2 flows"));
    }
    let mut jobs = Vec::new();
    for p in &cfg.protocols {
        cfg.cc_spec(p)?;
        for &seed in &cfg.seeds {
            for (label, trace) in cfg.traces(&["constant"], duration_ms(cfg.duration_s), seed)? {
                jobs.push((p.clone(), seed, label, trace));
            }
        }
    }
    jobs.par_iter()
        .map(|(p, seed, label, trace)| {
            let out = run_flows(cfg, trace, *seed, std::slice::from_ref(p), n)?;
            let s = metrics::summarize_run(&out, cfg.warmup_s)?;
            let end_ms = out.end_us as f64 / 1000.0;
            let per_flow = out
                .flows
                .iter()
                .map(|f| metrics::throughput_bins(&f.records, cfg.bin_s * 1000.0, end_ms))
                .collect::<Result<Vec<_>>>()?;
            let bins = (0..per_flow[0].len())
                .map(|k| per_flow.iter().map(|f| f[k]).collect())
                .collect();
            Ok(FairnessResult {
                protocol: p.clone(),
                trace: label.clone(),
                seed: *seed,
                jain_index: s.jain_index,
                flow_throughput_mbps: s.flows.iter().map(|f| f.mean_throughput_mbps).collect(),
                bins,
            })
        })
        .collect()
}

pub fn fairness_timeseries_csv(r: &FairnessResult, bin_s: f64) -> String {
    let mut s = String::from("time_s");
    for i in 0..r.flow_throughput_mbps.len() {
        write!(s, ",flow_{i}").unwrap();
    }
    s.push('\n');
    for (k, row) in r.bins.iter().enumerate() {
        write!(s, "{:.6}", k as f64 * bin_s).unwrap();
        for v in row {
            write!(s, ",{v:.6}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn cmd_fairness(cfg: &ExperimentConfig) -> Result<Vec<FairnessResult>> {
    let results = fairness_results(cfg)?;
    let mut summary = String::from("protocol,trace,seed,jain_index\n");
    for r in &results {
        writeln!(
            summary,
            "{},{},{},{}",
            r.protocol,
            r.trace,
            r.seed,
            fmt6(r.jain_index)
        )
        .unwrap();
        let name = format!("fairness_{}_{}_s{}.csv", r.protocol, r.trace, r.seed);
        write_file(&cfg.out, &name, &fairness_timeseries_csv(r, cfg.bin_s))?;
    }
    write_file(&cfg.out, "fairness.csv", &summary)?;
    write_file(&cfg.out, "fairness.json", &to_json(&results)?)?;
    Ok(results)
}

// ---------------------------------------------------------------- abr

pub const ABR_CSV_HEADER: &str = "protocol,trace,seed,client,startup_delay_s,stall_count,\
stall_time_s,mean_bitrate_kbps,mean_quality";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbrResult {
    pub protocol: String,
    pub trace: String,
    pub seed: u64,
    pub clients: Vec<QoeSummary>,
    #[serde(skip)]
    pub chunks: Vec<ChunkRecord>,
}

impl AbrResult {
    pub fn mean_quality(&self) -> f64 {
        mean_of(self.clients.iter().map(|c| c.mean_quality)).unwrap_or(0.0)
    }

    pub fn total_stall_s(&self) -> f64 {
        self.clients.iter().map(|c| c.stall_time_s).sum()
    }
}

pub fn abr_results(cfg: &ExperimentConfig) -> Result<Vec<AbrResult>> {
    let session = cfg.session_config();
    session.validate()?;
    let ladder = cfg.ladder()?;
    let trace_ms = duration_ms(session.video_len_s + 60.0);
    let mut jobs = Vec::new();
    for p in &cfg.protocols {
        let cc = cfg.cc_spec(p)?;
        for &seed in &cfg.seeds {
            for (label, trace) in cfg.traces(&["driving"], trace_ms, seed)? {
                jobs.push((cc.clone(), p.clone(), seed, label, trace));
            }
        }
    }
    jobs.par_iter()
        .map(|(cc, p, seed, label, trace)| {
            let r = abr::run_session(
                &session,
                &ladder,
                trace,
                std::slice::from_ref(cc),
                &cfg.sim_config(*seed),
            )?;
            Ok(AbrResult {
                protocol: p.clone(),
                trace: label.clone(),
                seed: *seed,
                clients: r.qoe,
                chunks: r.chunks,
            })
        })
        .collect()
}

pub fn abr_csv(results: &[AbrResult]) -> String {
    let mut s = String::new();
    writeln!(s, "{ABR_CSV_HEADER}").unwrap();
    for r in results {
        for q in &r.clients {
            writeln!(
                s,
                "{},{},{},{},{:.6},{},{:.6},{:.6},{:.6}",
                r.protocol,
                r.trace,
                r.seed,
                q.client,
                q.startup_delay_s,
                q.stall_count,
                q.stall_time_s,
                q.mean_bitrate_kbps,
                q.mean_quality
            )
            .unwrap();
        }
        let n = r.clients.len() as f64;
        let avg = |f: fn(&QoeSummary) -> f64| r.clients.iter().map(f).sum::<f64>() / n;
        writeln!(
            s,
            "{},{},{},mean,{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.protocol,
            r.trace,
            r.seed,
            avg(|q| q.startup_delay_s),
            avg(|q| f64::from(q.stall_count)),
            avg(|q| q.stall_time_s),
            avg(|q| q.mean_bitrate_kbps),
            avg(|q| q.mean_quality)
        )
        .unwrap();
    }
    s
}

pub fn cmd_abr(cfg: &ExperimentConfig) -> Result<Vec<AbrResult>> {
    let results = abr_results(cfg)?;
    write_file(&cfg.out, "abr_qoe.csv", &abr_csv(&results))?;
    for r in &results {
        let mut buf = Vec::new();
        abr::write_chunk_csv(&r.chunks, &mut buf)?;
        let name = format!("abr_chunks_{}_{}_s{}.csv", r.protocol, r.trace, r.seed);
        write_file(&cfg.out, &name, &String::from_utf8_lossy(&buf))?;
    }
    write_file(&cfg.out, "abr.json", &to_json(&results)?)?;
    Ok(results)
}

// ----------------------------------------------------------- trace-gen

/// Write one Mahimahi file per (preset, seed).
pub fn cmd_trace_gen(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for &seed in &cfg.seeds {
        for preset in cfg.presets_or(&["constant"]) {
            let spec = cfg.synthetic_spec(&preset, duration_ms(cfg.duration_s), seed)?;
            let trace = traces::gen_synthetic(&spec)?;
            let name = format!("{preset}_s{seed}.mahi");
            written.push(write_file(&cfg.out, &name, &trace.to_mahimahi())?);
        }
    }
    Ok(written)
}

// -------------------------------------------------------------- report

#[derive(Debug, Deserialize)]
struct CompareCsvRow {
    protocol: String,
    trace: String,
    seed: String,
    mean_throughput_mbps: f64,
    mean_rtt_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub protocol: String,
    pub runs: usize,
    pub mean_throughput_mbps: f64,
    pub mean_rtt_ms: Option<f64>,
}

fn read_compare_rows(path: &Path) -> Result<Option<Vec<CompareRow>>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    if text.lines().next() != Some(COMPARE_CSV_HEADER) {
        return Ok(None);
    }
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<CompareCsvRow>() {
        let r = rec.map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        if r.seed == AGGREGATE_SEED {
            continue;
        }
        let seed = r
            .seed
            .parse()
            .map_err(|_| Error::Io(format!("{}: bad seed `{}`", path.display(), r.seed)))?;
        rows.push(CompareRow {
            protocol: r.protocol,
            trace: r.trace,
            seed: Some(seed),
            mean_throughput_mbps: r.mean_throughput_mbps,
            mean_rtt_ms: r.mean_rtt_ms,
        });
    }
    Ok(Some(rows))
}

/// Aggregate every compare CSV under `dir` into one row per protocol, and
/// write `report.csv` plus a gnuplot scatter file with one block per
/// protocol.
pub fn cmd_report(dir: &Path) -> Result<Vec<ReportRow>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    let mut rows = Vec::new();
    for p in &paths {
        if let Some(mut r) = read_compare_rows(p)? {
            rows.append(&mut r);
        }
    }
    if rows.is_empty() {
        return Err(Error::Io(format!(
            "no compare results under {}",
            dir.display()
        )));
    }
    let mut by_protocol: BTreeMap<&str, Vec<&CompareRow>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in &rows {
        if !by_protocol.contains_key(r.protocol.as_str()) {
            order.push(r.protocol.as_str());
        }
        by_protocol.entry(&r.protocol).or_default().push(r);
    }
    let report: Vec<ReportRow> = order
        .iter()
        .map(|p| {
            let rs = &by_protocol[p];
            ReportRow {
                protocol: p.to_string(),
                runs: rs.len(),
                mean_throughput_mbps: mean_of(rs.iter().map(|r| r.mean_throughput_mbps))
                    .unwrap_or(0.0),
                mean_rtt_ms: mean_of(rs.iter().filter_map(|r| r.mean_rtt_ms)),
            }
        })
        .collect();

    let mut csv = String::from("protocol,runs,mean_throughput_mbps,mean_rtt_ms\n");
    for r in &report {
        writeln!(
            csv,
            "{},{},{:.6},{}",
            r.protocol,
            r.runs,
            r.mean_throughput_mbps,
            fmt6(r.mean_rtt_ms)
        )
        .unwrap();
    }
    let mut scatter = String::from("# mean_rtt_ms mean_throughput_mbps trace seed\n");
    for p in &order {
        writeln!(scatter, "# {p}").unwrap();
        for r in &by_protocol[p] {
            if let Some(rtt) = r.mean_rtt_ms {
                writeln!(
                    scatter,
                    "{rtt:.6} {:.6} {} {}",
                    r.mean_throughput_mbps,
                    r.trace,
                    r.seed.unwrap_or(0)
                )
                .unwrap();
            }
        }
        scatter.push_str("\n\n");
    }
    write_file(dir, "report.csv", &csv)?;
    write_file(dir, "scatter.dat", &scatter)?;
    Ok(report)
}

/// Human-readable table of a report.
pub fn format_report(rows: &[ReportRow]) -> String {
    let mut s = format!(
        "{:<10} {:>5} {:>12} {:>12}\n",
        "protocol", "runs", "tput_mbps", "rtt_ms"
    );
    for r in rows {
        let rtt = r.mean_rtt_ms.map_or("-".to_string(), |v| format!("{v:.2}"));
        writeln!(
            s,
            "{:<10} {:>5} {:>12.2} {:>12}",
            r.protocol, r.runs, r.mean_throughput_mbps, rtt
        )
        .unwrap();
    }
    s
}
