use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn herasim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_herasim"))
        .args(args)
        .output()
        .expect("failed to launch herasim")
}

fn ok(args: &[&str]) -> String {
    let out = herasim(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

fn compare_in(dir: &Path, extra: &[&str]) -> String {
    let out = dir.to_str().unwrap();
    let mut args = vec![
        "--experiment",
        "compare",
        "--protocols",
        "hera",
        "--preset",
        "constant",
        "--seeds",
        "1,2,3,4,5",
        "--duration",
        "4",
        "--out",
        out,
        "warmup_s=1",
    ];
    args.extend_from_slice(extra);
    ok(&args);
    read(dir, "compare.csv")
}

#[test]
fn compare_writes_rows_and_aggregate() {
    let dir = TempDir::new().unwrap();
    let csv = compare_in(dir.path(), &[]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "protocol,trace,seed,mean_throughput_mbps,mean_rtt_ms"
    );
    assert_eq!(lines.len(), 1 + 5 + 1);
    assert!(lines[6].starts_with("hera,all,mean,"));
    assert!(dir.path().join("compare.json").exists());
}

#[test]
fn compare_is_byte_identical_across_runs() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(compare_in(a.path(), &[]), compare_in(b.path(), &[]));
}

#[test]
fn aggregate_respects_link_capacity() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("link.csv");
    fs::write(&trace, "time_s,mbps\n0,12\n").unwrap();
    let out = dir.path().join("out");
    ok(&[
        "--experiment",
        "compare",
        "--protocols",
        "cubic,hera,bbr-lite",
        "--trace",
        trace.to_str().unwrap(),
        "--seeds",
        "1",
        "--duration",
        "8",
        "--out",
        out.to_str().unwrap(),
    ]);
    let csv = read(&out, "compare.csv");
    for line in csv.lines().skip(1) {
        let tput: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(tput <= 12.0, "{line}");
    }
}

#[test]
fn fairness_needs_two_flows() {
    let dir = TempDir::new().unwrap();
    let out = herasim(&[
        "--experiment",
        "fairness",
        "--flows",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn fairness_writes_timeseries() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "--experiment",
        "fairness",
        "--protocols",
        "cubic",
        "--flows",
        "3",
        "--seeds",
        "1",
        "--duration",
        "4",
        "--preset",
        "constant",
        "--out",
        dir.path().to_str().unwrap(),
        "warmup_s=1",
    ]);
    let ts = read(dir.path(), "fairness_cubic_constant_s1.csv");
    assert_eq!(ts.lines().next().unwrap(), "time_s,flow_0,flow_1,flow_2");
    assert_eq!(ts.lines().count(), 1 + 4);
    assert!(read(dir.path(), "fairness.csv").lines().count() == 2);
}

#[test]
fn abr_rejects_empty_video() {
    let dir = TempDir::new().unwrap();
    let out = herasim(&[
        "--experiment",
        "abr",
        "--out",
        dir.path().to_str().unwrap(),
        "abr.video_len_s=0",
    ]);
    assert!(!out.status.success());
}

#[test]
fn abr_reports_every_client() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "--experiment",
        "abr",
        "--protocols",
        "hera,cubic",
        "--seeds",
        "1",
        "--clients",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
        "abr.video_len_s=20",
        "trace.mean_mbps=25",
    ]);
    let csv = read(dir.path(), "abr_qoe.csv");
    for p in ["hera", "cubic"] {
        let rows: Vec<&str> = csv
            .lines()
            .filter(|l| l.starts_with(&format!("{p},")))
            .collect();
        assert_eq!(rows.len(), 5 + 1, "{csv}");
    }
    assert!(dir.path().join("abr_chunks_hera_driving_s1.csv").exists());
}

#[test]
fn trace_gen_constant_12_mbps() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "--experiment",
        "trace-gen",
        "--preset",
        "stationary",
        "--seeds",
        "1",
        "--duration",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
        "trace.mean_mbps=12",
        "trace.cov=0",
    ]);
    let text = read(dir.path(), "stationary_s1.mahi");
    assert_eq!(text.lines().count(), 1000);
    assert!(text
        .lines()
        .enumerate()
        .all(|(i, l)| l == (i + 1).to_string()));
}

#[test]
fn report_needs_compare_output() {
    let dir = TempDir::new().unwrap();
    let out = herasim(&[
        "--experiment",
        "report",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}

#[test]
fn report_has_one_row_per_protocol() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&[
        "--experiment",
        "compare",
        "--protocols",
        "hera,cubic",
        "--preset",
        "constant",
        "--seeds",
        "1,2",
        "--duration",
        "3",
        "--out",
        out,
        "warmup_s=1",
    ]);
    ok(&["--experiment", "report", "--out", out]);
    let report = read(dir.path(), "report.csv");
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "protocol,runs,mean_throughput_mbps,mean_rtt_ms");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("hera,2,"));
    assert!(lines[2].starts_with("cubic,2,"));
    assert!(dir.path().join("scatter.dat").exists());
}

#[test]
fn config_file_then_overrides_then_flags() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("exp.toml");
    fs::write(
        &file,
        "experiment = \"compare\"\nduration_s = 30.0\n[hera]\nnum_buckets = 12\n",
    )
    .unwrap();
    let printed = ok(&[
        "--config",
        file.to_str().unwrap(),
        "--print-config",
        "--duration",
        "7",
        "hera.num_buckets=20",
        "duration_s=9",
    ]);
    assert!(printed.contains("num_buckets = 20"), "{printed}");
    assert!(printed.contains("duration_s = 7.0"), "{printed}");
    assert!(printed.contains("experiment = \"compare\""), "{printed}");
}

#[test]
fn unknown_protocol_is_an_error() {
    let dir = TempDir::new().unwrap();
    let out = herasim(&[
        "--experiment",
        "compare",
        "--protocols",
        "vivace",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}
