mod common;

use common::jain_formula;
use herasim::baselines::cubic_window;
use herasim::metrics::{jain_index, summarize_run};
use herasim::netsim::delivered_throughput;
use herasim::traces::parse_rate_csv;
use herasim::{simulate, CcSpec, Error, FlowSpec, HeraParams, LinkTrace, SimConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn jain_matches_formula_on_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let n = rng.random_range(1..20);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
        let got = jain_index(&x).unwrap();
        assert!((got - jain_formula(&x)).abs() <= 1e-12, "{x:?}");
        assert!(got >= 1.0 / n as f64 - 1e-15 && got <= 1.0);
    }
}

proptest! {
    #[test]
    fn jain_is_scale_invariant(x in prop::collection::vec(0.0f64..1e3, 1..30), c in 1e-3f64..1e3) {
        prop_assume!(x.iter().any(|&v| v > 0.0));
        let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
        prop_assert!((jain_index(&x).unwrap() - jain_index(&scaled).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn cubic_law_identities(w_max in 2.0f64..10_000.0, c in 0.05f64..2.0, beta in 0.1f64..0.95) {
        let k = (w_max * (1.0 - beta) / c).cbrt();
        prop_assert_eq!(cubic_window(k, c, k, w_max), w_max);
        let w0 = cubic_window(0.0, c, k, w_max);
        prop_assert!(((w0 - beta * w_max) / (beta * w_max)).abs() <= 1e-9);
    }

    #[test]
    fn run_totals_match_flow_logs(seed in any::<u64>(), n in 1usize..4, warmup in 0.0f64..1.5) {
        let config = SimConfig { duration_s: 2.0, seed, loss_rate: 0.005, ..SimConfig::default() };
        let flows: Vec<FlowSpec> = (0..n).map(|_| FlowSpec::bulk(CcSpec::Hera(HeraParams::default()))).collect();
        let out = simulate(&config, &link(24.0), &flows).unwrap();
        let s = summarize_run(&out, warmup).unwrap();
        let lo = (warmup * 1e6).round() as u64;
        let mut total = 0;
        for (f, log) in s.flows.iter().zip(&out.flows) {
            let bytes: u64 = log
                .records
                .iter()
                .filter(|r| r.delivered_us().is_some_and(|d| d >= lo && d < out.end_us))
                .map(|r| r.size_bytes)
                .sum();
            prop_assert_eq!(f.delivered_bytes, bytes);
            total += bytes;
        }
        prop_assert_eq!(s.total_delivered_bytes, total);
        let sum: f64 = s.flows.iter().map(|f| f.mean_throughput_mbps).sum();
        prop_assert!((s.total_throughput_mbps - sum).abs() <= 1e-9);
        if let Some(j) = s.jain_index {
            prop_assert!(j >= 1.0 / n as f64 - 1e-12 && j <= 1.0);
        }
    }
}

fn link(mbps: f64) -> LinkTrace {
    parse_rate_csv(&format!("time_s,mbps\n0,{mbps}\n")).unwrap()
}

#[test]
fn single_flow_summary_matches_delivered_throughput() {
    let config = SimConfig {
        duration_s: 10.0,
        ..SimConfig::default()
    };
    let out = simulate(&config, &link(12.0), &[FlowSpec::bulk(CcSpec::Fixed(30.0))]).unwrap();
    let s = summarize_run(&out, 5.0).unwrap();
    let direct = delivered_throughput(
        out.flows[0]
            .records
            .iter()
            .filter(|r| r.delivered_ms().is_some_and(|d| d >= 5000.0)),
        5000.0,
        10_000.0,
    )
    .unwrap();
    assert_eq!(s.flows[0].mean_throughput_mbps, direct);
    assert!((direct - 12.0).abs() < 0.01, "{direct}");
}

#[test]
fn two_identical_flows_are_fair() {
    let config = SimConfig {
        duration_s: 20.0,
        ..SimConfig::default()
    };
    let flows = vec![FlowSpec::bulk(CcSpec::Fixed(40.0)); 2];
    let out = simulate(&config, &link(24.0), &flows).unwrap();
    let s = summarize_run(&out, 5.0).unwrap();
    let j = s.jain_index.unwrap();
    assert!((j - 1.0).abs() <= 1e-6, "jain {j}");
}

#[test]
fn warmup_covering_the_run_is_rejected() {
    let config = SimConfig {
        duration_s: 3.0,
        ..SimConfig::default()
    };
    let out = simulate(&config, &link(12.0), &[FlowSpec::bulk(CcSpec::Fixed(10.0))]).unwrap();
    assert!(matches!(
        summarize_run(&out, 3.0),
        Err(Error::EmptyWindow(_))
    ));
}
