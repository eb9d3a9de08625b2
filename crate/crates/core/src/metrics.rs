//! Run summaries, Jain's fairness index and QoE metrics.
//!
//! All statistics cover the post-warmup window `[warmup, end)` of a run and
//! are keyed on delivery time, so a packet counts towards the window in
//! which the receiver got it.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::netsim::{delivered_throughput, PacketRecord, SimOutput};

pub const DEFAULT_WARMUP_S: f64 = 5.0;
pub const DEFAULT_FLUENCY_THRESHOLD_MS: f64 = 20.0;

/// `(sum x)^2 / (n * sum x^2)`.
pub fn jain_index(throughputs: &[f64]) -> Result<f64> {
    if throughputs.is_empty() {
        return Err(Error::param("throughputs", "need at least one value"));
    }
    if throughputs.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::param(
            "throughputs",
            "values must be finite and >= 0",
        ));
    }
    let sum: f64 = throughputs.iter().sum();
    if sum == 0.0 {
        return Err(Error::AllZero);
    }
    let sum_sq: f64 = throughputs.iter().map(|x| x * x).sum();
    let n = throughputs.len() as f64;
    Ok((sum * sum / (n * sum_sq)).clamp(1.0 / n, 1.0))
}

/// Nearest-rank percentile of an unsorted sample, `p` in `[0, 100]`.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    Some(v[rank.clamp(1, v.len()) - 1])
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowSummary {
    pub flow_id: u32,
    pub protocol: String,
    pub mean_throughput_mbps: f64,
    /// `None` when nothing was delivered in the window.
    pub mean_rtt_ms: Option<f64>,
    pub p95_rtt_ms: Option<f64>,
    /// One-way delay minus propagation.
    pub mean_queueing_delay_ms: Option<f64>,
    pub delivered_bytes: u64,
    /// Packets sent in the window that were dropped.
    pub loss_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub warmup_s: f64,
    pub end_s: f64,
    pub flows: Vec<FlowSummary>,
    pub total_throughput_mbps: f64,
    pub total_delivered_bytes: u64,
    /// `None` when no flow delivered anything.
    pub jain_index: Option<f64>,
}

pub const RUN_SUMMARY_CSV_HEADER: &str = "flow_id,protocol,mean_throughput_mbps,mean_rtt_ms,\
p95_rtt_ms,mean_queueing_delay_ms,delivered_bytes,loss_count";

pub(crate) fn fmt6(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl RunSummary {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{RUN_SUMMARY_CSV_HEADER}")?;
        for f in &self.flows {
            writeln!(
                w,
                "{},{},{:.6},{},{},{},{},{}",
                f.flow_id,
                f.protocol,
                f.mean_throughput_mbps,
                fmt6(f.mean_rtt_ms),
                fmt6(f.p95_rtt_ms),
                fmt6(f.mean_queueing_delay_ms),
                f.delivered_bytes,
                f.loss_count
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    /// Delivery-weighted mean RTT over all flows.
    pub fn mean_rtt_ms(&self) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for f in &self.flows {
            if let Some(rtt) = f.mean_rtt_ms {
                num += rtt * f.delivered_bytes as f64;
                den += f.delivered_bytes as f64;
            }
        }
        (den > 0.0).then(|| num / den)
    }
}

/// Summarize `output` over `[warmup_s, end)`.
pub fn summarize_run(output: &SimOutput, warmup_s: f64) -> Result<RunSummary> {
    let end_ms = output.end_us as f64 / 1000.0;
    let start_ms = warmup_s * 1000.0;
    if !(warmup_s >= 0.0) || !(end_ms > start_ms) {
        return Err(Error::EmptyWindow(format!(
            "warmup {warmup_s} s leaves nothing of a {} s run",
            end_ms / 1000.0
        )));
    }
    let (lo, hi) = ((start_ms * 1000.0).round() as u64, output.end_us);
    let owd = output.config.base_owd_ms;
    let mut flows = Vec::with_capacity(output.flows.len());
    for log in &output.flows {
        let in_window: Vec<&PacketRecord> = log
            .records
            .iter()
            .filter(|r| r.delivered_us().is_some_and(|d| d >= lo && d < hi))
            .collect();
        let one_way: Vec<f64> = in_window.iter().filter_map(|r| r.one_way_ms()).collect();
        let rtts: Vec<f64> = one_way.iter().map(|d| d + owd).collect();
        let queueing: Vec<f64> = one_way.iter().map(|d| d - owd).collect();
        flows.push(FlowSummary {
            flow_id: log.flow_id,
            protocol: log.protocol.to_string(),
            mean_throughput_mbps: delivered_throughput(
                in_window.iter().copied(),
                start_ms,
                end_ms,
            )?,
            mean_rtt_ms: mean(&rtts),
            p95_rtt_ms: percentile(&rtts, 95.0),
            mean_queueing_delay_ms: mean(&queueing),
            delivered_bytes: in_window.iter().map(|r| r.size_bytes).sum(),
            loss_count: log
                .records
                .iter()
                .filter(|r| r.is_dropped() && r.sent_us >= lo && r.sent_us < hi)
                .count() as u64,
        });
    }
    let throughputs: Vec<f64> = flows.iter().map(|f| f.mean_throughput_mbps).collect();
    let jain = match jain_index(&throughputs) {
        Ok(j) => Some(j),
        Err(Error::AllZero) => None,
        Err(e) => return Err(e),
    };
    Ok(RunSummary {
        warmup_s,
        end_s: end_ms / 1000.0,
        total_throughput_mbps: throughputs.iter().sum(),
        total_delivered_bytes: flows.iter().map(|f| f.delivered_bytes).sum(),
        flows,
        jain_index: jain,
    })
}

/// Per-bin delivered throughput in Mbps over `[0, end_ms)`; the last bin
/// may be partial and is scaled by its own length.
pub fn throughput_bins(records: &[PacketRecord], bin_ms: f64, end_ms: f64) -> Result<Vec<f64>> {
    if !(bin_ms > 0.0) {
        return Err(Error::param("bin_ms", "must be > 0"));
    }
    let n = (end_ms / bin_ms).ceil() as usize;
    let mut bytes = vec![0u64; n];
    for r in records {
        if let Some(d) = r.delivered_ms() {
            if d < end_ms {
                bytes[((d / bin_ms) as usize).min(n - 1)] += r.size_bytes;
            }
        }
    }
    Ok(bytes
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let width = (end_ms - i as f64 * bin_ms).min(bin_ms);
            b as f64 * 8.0 / (width * 1000.0)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InteractionMetrics {
    /// Mean one-way delay of delivered update packets.
    pub interaction_latency_ms: f64,
    /// Fraction of delivered update packets within the threshold.
    pub fluency_index: f64,
}

pub fn interaction_metrics(
    records: &[PacketRecord],
    threshold_ms: f64,
) -> Result<InteractionMetrics> {
    let delays: Vec<f64> = records.iter().filter_map(|r| r.one_way_ms()).collect();
    let latency = mean(&delays).ok_or(Error::NoDeliveredUpdates)?;
    let on_time = delays.iter().filter(|&&d| d <= threshold_ms).count();
    Ok(InteractionMetrics {
        interaction_latency_ms: latency,
        fluency_index: on_time as f64 / delays.len() as f64,
    })
}

/// User-facing quality of one streaming client.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QoeSummary {
    pub client: u32,
    pub protocol: String,
    pub startup_delay_s: f64,
    pub stall_count: u32,
    pub stall_time_s: f64,
    pub mean_bitrate_kbps: f64,
    /// Mean chosen bitrate as a percentage of the top rung.
    pub mean_quality: f64,
    pub interaction_latency_ms: Option<f64>,
    pub fluency_index: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::Outcome;

    fn rec(seq: u64, sent_us: u64, delivered_us: Option<u64>) -> PacketRecord {
        PacketRecord {
            flow_id: 0,
            seq,
            sent_us,
            outcome: match delivered_us {
                Some(at_us) => Outcome::Delivered { at_us },
                None => Outcome::Dropped(crate::netsim::DropReason::QueueFull),
            },
            size_bytes: 1500,
        }
    }

    #[test]
    fn jain_examples() {
        assert_eq!(jain_index(&[1.0; 6]).unwrap(), 1.0);
        assert!((jain_index(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((jain_index(&[2.0, 4.0]).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(jain_index(&[0.0, 0.0]), Err(Error::AllZero));
        assert!(jain_index(&[]).is_err());
        assert!(jain_index(&[-1.0, 2.0]).is_err());
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 95.0), Some(95.0));
        assert_eq!(percentile(&v, 100.0), Some(100.0));
        assert_eq!(percentile(&[3.0], 95.0), Some(3.0));
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn interaction_examples() {
        let all: Vec<_> = (0..4)
            .map(|i| rec(i, i * 1000, Some(i * 1000 + 10_000)))
            .collect();
        let m = interaction_metrics(&all, 20.0).unwrap();
        assert_eq!(m.interaction_latency_ms, 10.0);
        assert_eq!(m.fluency_index, 1.0);

        let half: Vec<_> = (0..4)
            .map(|i| rec(i, 0, Some(if i % 2 == 0 { 10_000 } else { 30_000 })))
            .collect();
        let m = interaction_metrics(&half, 20.0).unwrap();
        assert_eq!(m.interaction_latency_ms, 20.0);
        assert_eq!(m.fluency_index, 0.5);

        let dropped: Vec<_> = (0..3).map(|i| rec(i, 0, None)).collect();
        assert_eq!(
            interaction_metrics(&dropped, 20.0),
            Err(Error::NoDeliveredUpdates)
        );
    }

    #[test]
    fn bins_cover_partial_tail() {
        // 1 packet per ms for 1.5 s: 12 Mbps in both bins.
        let r: Vec<_> = (0..1500)
            .map(|i| rec(i, i * 1000, Some(i * 1000 + 500)))
            .collect();
        let bins = throughput_bins(&r, 1000.0, 1500.0).unwrap();
        assert_eq!(bins.len(), 2);
        assert!((bins[0] - 12.0).abs() < 1e-9);
        assert!((bins[1] - 12.0).abs() < 1e-9);
    }
}
