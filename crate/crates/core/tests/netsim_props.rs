mod common;

use common::{check_sim_invariants, fixed_window_oracle};
use herasim::baselines::{BbrLiteParams, CubicParams};
use herasim::traces::parse_rate_csv;
use herasim::{simulate, CcSpec, FlowSpec, HeraParams, LinkTrace, SimConfig, SimOutput};
use proptest::prelude::*;

fn trace_strategy() -> impl Strategy<Value = LinkTrace> {
    (prop::collection::vec(0u64..4, 1..60), 0u64..5).prop_map(|(gaps, tail)| {
        let mut t = 0;
        let mut ts = Vec::with_capacity(gaps.len());
        for g in gaps {
            t += g;
            ts.push(t);
        }
        LinkTrace::new(ts, t + 1 + tail).unwrap()
    })
}

fn cc_strategy() -> impl Strategy<Value = CcSpec> {
    prop_oneof![
        Just(CcSpec::Hera(HeraParams::default())),
        Just(CcSpec::Cubic(CubicParams::default())),
        Just(CcSpec::BbrLite(BbrLiteParams::default())),
        (1u32..60).prop_map(|w| CcSpec::Fixed(w as f64)),
    ]
}

fn config_strategy() -> impl Strategy<Value = SimConfig> {
    (
        1u32..30,
        2usize..150,
        0.0f64..0.03,
        any::<u64>(),
        0.3f64..2.0,
    )
        .prop_map(|(owd, cap, loss, seed, dur)| SimConfig {
            base_owd_ms: owd as f64,
            queue_capacity_pkts: cap,
            loss_rate: loss,
            duration_s: dur,
            seed,
            ..SimConfig::default()
        })
}

fn flows_strategy() -> impl Strategy<Value = Vec<FlowSpec>> {
    prop::collection::vec((cc_strategy(), 0.0f64..0.2), 1..4).prop_map(|v| {
        v.into_iter()
            .map(|(cc, start)| FlowSpec::bulk(cc).starting_at(start))
            .collect()
    })
}

fn csv_bytes(out: &SimOutput) -> Vec<u8> {
    let mut v = Vec::new();
    out.write_packet_csv(&mut v).unwrap();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simulator_invariants(trace in trace_strategy(), config in config_strategy(), flows in flows_strategy()) {
        let out = simulate(&config, &trace, &flows).unwrap();
        check_sim_invariants(&out, &trace).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn identical_inputs_give_identical_logs(trace in trace_strategy(), config in config_strategy(), flows in flows_strategy()) {
        let a = simulate(&config, &trace, &flows).unwrap();
        let b = simulate(&config, &trace, &flows).unwrap();
        prop_assert_eq!(csv_bytes(&a), csv_bytes(&b));
    }

    #[test]
    fn fixed_window_matches_step_model(trace in trace_strategy(), window in 1u64..40, owd in 1u64..25) {
        let config = SimConfig {
            base_owd_ms: owd as f64,
            queue_capacity_pkts: 100_000,
            loss_rate: 0.0,
            duration_s: 1.5,
            ..SimConfig::default()
        };
        let out = simulate(&config, &trace, &[FlowSpec::bulk(CcSpec::Fixed(window as f64))]).unwrap();
        let got: Vec<(u64, u64)> = out.flows[0]
            .records
            .iter()
            .filter_map(|r| r.delivered_us().map(|d| (r.sent_us / 1000, d / 1000)))
            .collect();
        let expected = fixed_window_oracle(trace.opportunities_ms(), trace.duration_ms(), window, owd, 1500);
        prop_assert!(expected.len() > 20);
        prop_assert_eq!(got, expected);
    }
}

fn link_12mbps() -> LinkTrace {
    parse_rate_csv("time_s,mbps\n0,12\n").unwrap()
}

#[test]
fn pinned_window_of_100_settles_at_100_ms() {
    let config = SimConfig {
        duration_s: 3.0,
        ..SimConfig::default()
    };
    let out = simulate(
        &config,
        &link_12mbps(),
        &[FlowSpec::bulk(CcSpec::Fixed(100.0))],
    )
    .unwrap();
    let oracle = fixed_window_oracle(&[1], 1, 100, 10, 3000);
    let oracle_tail: Vec<u64> = oracle[oracle.len() - 500..]
        .iter()
        .map(|(s, d)| d + 10 - s)
        .collect();
    assert!(oracle_tail.iter().all(|&rtt| rtt == 100));
    let rtts: Vec<f64> = out.flows[0]
        .records
        .iter()
        .filter_map(|r| r.rtt_ms(10.0))
        .collect();
    assert!(rtts[rtts.len() - 500..].iter().all(|&r| r == 100.0));
}

#[test]
fn capacity_bounds_throughput() {
    let config = SimConfig {
        duration_s: 4.0,
        ..SimConfig::default()
    };
    let flows: Vec<FlowSpec> = (0..3)
        .map(|_| FlowSpec::bulk(CcSpec::Cubic(CubicParams::default())))
        .collect();
    let out = simulate(&config, &link_12mbps(), &flows).unwrap();
    let delivered: u64 = out.flows.iter().map(|f| f.delivered_bytes()).sum();
    assert!(delivered as f64 * 8.0 / 4e6 <= 12.0 + 1e-9);
}
