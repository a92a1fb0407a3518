use std::fs;
use std::process::Command;

use proptest::prelude::*;

use erudite_sim::harness::{self, SweepParam, PRESETS};
use erudite_sim::run::{run_path, SimOptions};
use erudite_sim::scenario::{PathChoice, PathKind, Scenario};
use erudite_sim::units::{Bytes, Nanos, Rate};
use erudite_sim::workload::WorkloadKind;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_erudite-sim"))
}

fn first_line(path: &std::path::Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or("").to_string()
}

#[test]
fn presets_meet_their_expectations() {
    for (name, _) in PRESETS {
        let s = harness::preset(name).unwrap();
        assert!(!s.expect.is_empty(), "{name} has no expectations");
        let outcomes = harness::simulate(&s).unwrap();
        let reports: Vec<_> = outcomes.iter().map(|o| &o.report).collect();
        for r in harness::check_expectations(&s, &reports) {
            assert!(r.pass, "{name}: {r}");
        }
    }
}

#[test]
fn compare_reports_identical_useful_bytes_on_both_paths() {
    let mut s = Scenario::default();
    s.path = PathChoice::Both;
    s.workload.kind = WorkloadKind::UniformRandom;
    s.workload.threads = Some(16);
    s.workload.max_requests = Some(400);
    s.horizon = Nanos(1_000_000_000);
    let c = harness::compare(&s).unwrap();
    assert_eq!(c.baseline.bytes_useful, c.erudite.bytes_useful);
    assert_eq!((c.baseline_steps(), c.erudite_steps()), (6, 3));
    assert_eq!(c.erudite.cpu_busy_time_ns, 0);
    assert!(c.baseline.cpu_busy_time_ns > 0);
}

#[test]
fn sweep_results_are_ordered_by_value() {
    let mut s = Scenario::default();
    s.workload.kind = WorkloadKind::Sequential;
    s.workload.max_requests = Some(200);
    s.horizon = Nanos(1_000_000_000);
    let pts = harness::sweep(&s, SweepParam::Threads, &[8, 1, 4, 2]).unwrap();
    let v: Vec<u64> = pts.iter().map(|p| p.value).collect();
    assert_eq!(v, vec![1, 2, 4, 8]);
}

#[test]
fn zero_horizon_gives_empty_metrics() {
    let mut s = Scenario::default();
    s.horizon = Nanos(0);
    s.workload.threads = Some(4);
    let r = run_path(&s, PathKind::Erudite, SimOptions::default()).unwrap().report;
    assert_eq!(r.requests, 0);
    assert_eq!(r.useful_bandwidth, 0.0);
}

#[test]
fn cli_writes_csvs_with_fixed_headers() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("s.toml");
    fs::write(
        &scn,
        "name = \"t\"\npath = \"both\"\nhorizon = \"1ms\"\nwarmup = \"0ns\"\n[workload]\nkind = \"sequential\"\nthreads = 8\nmax_requests = 100\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let run = |args: &[&str]| {
        let st = bin().arg("--out").arg(&out).args(args).output().unwrap();
        assert!(st.status.success(), "{args:?}: {}", String::from_utf8_lossy(&st.stderr));
    };
    let s = scn.to_str().unwrap();
    run(&["simulate", s]);
    run(&["compare", s]);
    run(&["sweep", s, "--param", "ssd_count", "--values", "1,2"]);
    run(&["analytic"]);
    let golden = [
        ("metrics.csv", "path,metric,value"),
        ("timeline.csv", "path,time_ns,inflight"),
        ("steps.csv", "path,step,name,mean_ns"),
        ("compare.csv", "metric,baseline,erudite,ratio"),
        (
            "sweep.csv",
            "ssd_count,path,useful_bandwidth,raw_bandwidth,iops,latency_mean_ns,latency_p50_ns,latency_p99_ns,amplification,cpu_busy_time_ns,requests,bytes_useful,bytes_fetched,injected,completions,rejections,host_cpu_events,ssd_events,window_ns,end_ns",
        ),
        ("analytic.csv", "quantity,inputs,value,unit,target,rel_error,tolerance,pass"),
    ];
    for (file, header) in golden {
        assert_eq!(first_line(&out.join(file)), header, "{file}");
    }
    let steps = fs::read_to_string(out.join("steps.csv")).unwrap();
    assert_eq!(steps.lines().filter(|l| l.starts_with("baseline,")).count(), 6);
    assert_eq!(steps.lines().filter(|l| l.starts_with("erudite,")).count(), 3);
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 2 * 18);
}

#[test]
fn cli_output_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin().env("ERUDITE_SIM_OUT", dir.path()).arg("analytic").output().unwrap();
    assert!(st.status.success());
    assert!(dir.path().join("analytic.csv").exists());
}

#[test]
fn cli_analytic_prints_reference_values_and_custom_rows() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin()
        .arg("--out")
        .arg(dir.path())
        .args(["analytic", "--bw", "1555GB", "--elem", "2"])
        .output()
        .unwrap();
    assert!(st.status.success());
    let text = String::from_utf8(st.stdout).unwrap();
    for needle in ["2.0000K", "2.0800K", "19.5000K", "777.5000G"] {
        assert!(text.contains(needle), "missing {needle} in\n{text}");
    }
    let csv = fs::read_to_string(dir.path().join("analytic.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("bw_limited_op_rate,\"1555GB/s, 2B\",777500000000,")));

    let st = bin().arg("--out").arg(dir.path()).args(["analytic", "--bw", "7", "--elem", "7"]).output().unwrap();
    assert!(String::from_utf8(st.stdout).unwrap().contains("1.0000 "));
}

#[test]
fn cli_config_errors_exit_2_with_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("bad.toml");
    fs::write(&scn, "name = \"t\"\n\n[link]\nbandwidth = \"16 furlongs\"\n").unwrap();
    let st = bin().arg("--out").arg(dir.path()).arg("simulate").arg(&scn).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    let err = String::from_utf8(st.stderr).unwrap();
    assert!(err.contains("bad.toml:4:"), "{err}");

    let st = bin().arg("--out").arg(dir.path()).arg("simulate").arg(dir.path().join("missing.toml")).output().unwrap();
    assert_eq!(st.status.code(), Some(2));

    let ok = dir.path().join("one.toml");
    fs::write(&ok, "path = \"erudite\"\n").unwrap();
    let st = bin().arg("--out").arg(dir.path()).arg("compare").arg(&ok).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn invariant_errors_map_to_exit_3() {
    let e: harness::HarnessError = erudite_sim::run::SimError::Invariant("x".into()).into();
    assert_eq!(e.exit_code(), 3);
}

fn arb_scenario() -> impl Strategy<Value = Scenario> {
    (
        any::<u64>(),
        1u32..=8,
        prop_oneof![Just(PathChoice::Baseline), Just(PathChoice::Erudite), Just(PathChoice::Both)],
        0usize..4,
        0u32..6,
        1u32..4096,
        1u64..100_000,
        1u64..20_000,
        proptest::option::of(1u64..10_000_000),
    )
        .prop_map(|(seed, ssds, path, kind, g, threads, horizon_us, rate_k, max_requests)| {
            let mut s = Scenario::default();
            s.name = format!("s{seed}");
            s.seed = seed;
            s.ssd_count = ssds;
            s.path = path;
            s.horizon = Nanos(horizon_us * 1000);
            s.workload.kind = [
                WorkloadKind::Sequential,
                WorkloadKind::UniformRandom,
                WorkloadKind::EmbeddingLookup,
                WorkloadKind::GraphBfs,
            ][kind];
            s.workload.granularity = Some(Bytes(512 << g));
            s.workload.threads = Some(threads);
            s.workload.max_requests = max_requests;
            s.baseline.initiation_rate = Rate(rate_k * 1000);
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scenarios_round_trip_through_text(s in arb_scenario()) {
        let text = harness::scenario_to_toml(&s);
        let back = harness::parse_scenario(&text, "rt").unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(harness::scenario_to_toml(&back), text);
    }
}

#[test]
fn presets_round_trip_through_text() {
    for (name, _) in PRESETS {
        let s = harness::preset(name).unwrap();
        let back = harness::parse_scenario(&harness::scenario_to_toml(&s), name).unwrap();
        assert_eq!(back, s);
    }
}
