use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use erudite_sim_ffi::*;

fn last_error() -> String {
    let p = ers_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn preset_simulate_and_read_metrics() {
    let name = CString::new("baseline-finegrain").unwrap();
    let mut sc = ptr::null_mut();
    unsafe {
        assert_eq!(ers_scenario_preset(name.as_ptr(), &mut sc), ErsStatus::Ok);
        let mut rep = ptr::null_mut();
        assert_eq!(ers_simulate(sc, ErsPath::Baseline, &mut rep), ErsStatus::Ok);
        let mut bw = 0.0;
        let m = CString::new("useful_bandwidth").unwrap();
        assert_eq!(ers_report_get(rep, m.as_ptr(), &mut bw), ErsStatus::Ok);
        assert!((bw - 512e6).abs() / 512e6 < 0.05, "{bw}");
        let bogus = CString::new("nope").unwrap();
        assert_eq!(ers_report_get(rep, bogus.as_ptr(), &mut bw), ErsStatus::NotFound);
        assert!(last_error().contains("nope"));
        ers_report_free(rep);
        ers_scenario_free(sc);
    }
}

#[test]
fn bad_scenarios_report_config_errors_with_lines() {
    let text = CString::new("name = \"x\"\n[workload]\nthreads = \"lots\"\n").unwrap();
    let mut sc = ptr::null_mut();
    let s = unsafe { ers_scenario_parse(text.as_ptr(), &mut sc) };
    assert_eq!(s, ErsStatus::Config);
    assert!(sc.is_null());
    assert!(last_error().contains(":3:"), "{}", last_error());
}

#[test]
fn set_revalidates_and_keeps_old_value_on_error() {
    let text = CString::new("[workload]\nthreads = 4\nmax_requests = 16\n").unwrap();
    let mut sc = ptr::null_mut();
    unsafe {
        assert_eq!(ers_scenario_parse(text.as_ptr(), &mut sc), ErsStatus::Ok);
        let g = CString::new("granularity").unwrap();
        assert_eq!(ers_scenario_set(sc, g.as_ptr(), 300), ErsStatus::Config);
        assert_eq!(ers_scenario_set(sc, g.as_ptr(), 4096), ErsStatus::Ok);
        let unknown = CString::new("warp_factor").unwrap();
        assert_eq!(ers_scenario_set(sc, unknown.as_ptr(), 1), ErsStatus::NotFound);
        let mut rep = ptr::null_mut();
        assert_eq!(ers_simulate(sc, ErsPath::Erudite, &mut rep), ErsStatus::Ok);
        let mut amp = 0.0;
        let m = CString::new("amplification").unwrap();
        ers_report_get(rep, m.as_ptr(), &mut amp);
        assert_eq!(amp, 8.0);
        ers_report_free(rep);
        ers_scenario_free(sc);
    }
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        assert_eq!(ers_scenario_parse(ptr::null(), ptr::null_mut()), ErsStatus::NullArgument);
        let mut out = ptr::null_mut();
        assert_eq!(ers_simulate(ptr::null(), ErsPath::Erudite, &mut out), ErsStatus::NullArgument);
        assert_eq!(ers_required_inflight(1, 1, 1, 0, ptr::null_mut()), ErsStatus::NullArgument);
        ers_scenario_free(ptr::null_mut());
        ers_report_free(ptr::null_mut());
    }
}

#[test]
fn required_inflight_matches_the_link_example() {
    let mut n = 0;
    let s = unsafe { ers_required_inflight(16_000_000_000, 64_000, 512, 0, &mut n) };
    assert_eq!(s, ErsStatus::Ok);
    assert_eq!(n, 2000);
    let s = unsafe { ers_required_inflight(16_000_000_000, 64_000, 0, 0, &mut n) };
    assert_eq!(s, ErsStatus::Config);
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.c");
    std::fs::write(
        &src,
        "#include \"erudite_sim.h\"\nint main(void){ErsScenario*s=0;return ers_scenario_parse(\"\",&s)==ERS_STATUS_OK?0:1;}\n",
    )
    .unwrap();
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let st = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I", include])
            .arg(&src)
            .status()
            .expect("a C compiler on PATH");
        assert!(st.success(), "{compiler} rejected the header");
    }
}
