use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use herasim::config::{Experiment, ExperimentConfig};
use herasim::experiment;

/// Trace-driven congestion-control experiments.
///
/// Settings come from the optional TOML `--config`, then positional
/// `key=value` overrides (e.g. `hera.num_buckets=20`), then the flags below.
/// Set `RUST_LOG=info` for progress output.
#[derive(Debug, Parser)]
#[command(name = "herasim", version)]
struct Cli {
    /// run, compare, fairness, abr, trace-gen or report
    #[arg(long)]
    experiment: Option<String>,
    /// Mahimahi trace file, or a `time_s,mbps` CSV
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Synthetic trace presets, comma separated
    #[arg(long, value_delimiter = ',')]
    preset: Vec<String>,
    /// Protocols, comma separated
    #[arg(long, value_delimiter = ',')]
    protocols: Vec<String>,
    /// Seeds, comma separated
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Run length in seconds
    #[arg(long)]
    duration: Option<f64>,
    /// Flows per simulation
    #[arg(long)]
    flows: Option<usize>,
    /// Streaming clients for `abr`
    #[arg(long)]
    clients: Option<usize>,
    /// Output directory (input directory for `report`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML experiment file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the effective config as TOML and exit
    #[arg(long)]
    print_config: bool,
    /// Dotted parameter overrides
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn toml_list<T: Into<toml::Value> + Clone>(items: &[T]) -> String {
    toml::Value::Array(items.iter().cloned().map(Into::into).collect()).to_string()
}

fn quoted(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

impl Cli {
    fn overrides(&self) -> Vec<String> {
        let mut o = self.overrides.clone();
        if let Some(e) = &self.experiment {
            o.push(format!("experiment={}", quoted(e)));
        }
        if let Some(t) = &self.trace {
            o.push(format!("trace.file={}", quoted(&t.to_string_lossy())));
        }
        if !self.preset.is_empty() {
            o.push(format!("trace.presets={}", toml_list(&self.preset)));
        }
        if !self.protocols.is_empty() {
            o.push(format!("protocols={}", toml_list(&self.protocols)));
        }
        if !self.seeds.is_empty() {
            let seeds: Vec<i64> = self.seeds.iter().map(|&s| s as i64).collect();
            o.push(format!("seeds={}", toml_list(&seeds)));
        }
        if let Some(d) = self.duration {
            o.push(format!("duration_s={}", toml::Value::Float(d)));
        }
        if let Some(n) = self.flows {
            o.push(format!("flows={n}"));
        }
        if let Some(n) = self.clients {
            o.push(format!("clients={n}"));
        }
        if let Some(p) = &self.out {
            o.push(format!("out={}", quoted(&p.to_string_lossy())));
        }
        o
    }
}

fn run(cli: &Cli) -> herasim::Result<()> {
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides())?;
    if cli.print_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    match cfg.experiment {
        Experiment::Run => {
            let r = experiment::cmd_run(&cfg)?;
            for f in &r.summary.flows {
                let rtt = f.mean_rtt_ms.map_or("-".into(), |v| format!("{v:.2}"));
                println!(
                    "flow {} {}: {:.2} Mbps, mean rtt {} ms",
                    f.flow_id, f.protocol, f.mean_throughput_mbps, rtt
                );
            }
        }
        Experiment::Compare => {
            let rows = experiment::cmd_compare(&cfg)?;
            for r in rows.iter().filter(|r| r.is_aggregate()) {
                let rtt = r.mean_rtt_ms.map_or("-".into(), |v| format!("{v:.2}"));
                println!(
                    "{:<10} {:>8.2} Mbps {:>8} ms",
                    r.protocol, r.mean_throughput_mbps, rtt
                );
            }
        }
        Experiment::Fairness => {
            for r in experiment::cmd_fairness(&cfg)? {
                let j = r.jain_index.map_or("-".into(), |v| format!("{v:.4}"));
                println!("{:<10} {} seed {}: jain {}", r.protocol, r.trace, r.seed, j);
            }
        }
        Experiment::Abr => {
            for r in experiment::cmd_abr(&cfg)? {
                println!(
                    "{:<10} {} seed {}: quality {:.1}, stall {:.2} s",
                    r.protocol,
                    r.trace,
                    r.seed,
                    r.mean_quality(),
                    r.total_stall_s()
                );
            }
        }
        Experiment::TraceGen => {
            for p in experiment::cmd_trace_gen(&cfg)? {
                println!("{}", p.display());
            }
        }
        Experiment::Report => {
            let rows = experiment::cmd_report(&cfg.out)?;
            print!("{}", experiment::format_report(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
