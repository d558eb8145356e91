use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use mgf_netcalc_ffi::*;

const SCENARIO: &str = r#"{
    "schema_version": 1,
    "units": {"slot_ms": 0.1},
    "servers": [{"capacity_gbps": 2.4,
                 "cross": [{"model": "leaky-bucket", "burst_mb": 20, "rate_mbps": 600}]}],
    "through": [{"model": "leaky-bucket", "burst_mb": 1, "rate_mbps": 30, "count": 20}],
    "epsilon": 1e-6,
    "horizon_slots": 4096
}"#;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mnc_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn load(json: &str) -> (i32, *mut MncScenario) {
    let text = CString::new(json).unwrap();
    let mut handle = ptr::null_mut();
    let code = unsafe { mnc_scenario_from_json(text.as_ptr(), &mut handle) };
    (code, handle)
}

fn empty_bound() -> MncBound {
    MncBound {
        value: 0.0,
        theta_star: 0.0,
        tail_error: 0.0,
        status: -1,
    }
}

#[test]
fn delay_backlog_and_deterministic_bounds() {
    let (code, s) = load(SCENARIO);
    assert_eq!(code, MNC_OK, "{}", last_error());
    assert!(!s.is_null());

    let mut hops = 0;
    assert_eq!(unsafe { mnc_scenario_hops(s, &mut hops) }, MNC_OK);
    assert_eq!(hops, 1);

    let mut det = MncDeterministic {
        delay_ms: 0.0,
        backlog_bits: 0.0,
        rate_bits_per_ms: 0.0,
        latency_ms: 0.0,
    };
    assert_eq!(unsafe { mnc_deterministic_bounds(s, &mut det) }, MNC_OK);
    // (20 + 20·1) Mb drained at the leftover 1.8 Gb/s
    assert!((det.delay_ms - 40e6 / 1.8e6).abs() < 1e-9, "{det:?}");
    assert!((det.latency_ms - 20e6 / 1.8e6).abs() < 1e-9);
    assert!((det.rate_bits_per_ms - 1.8e6).abs() < 1e-6);

    let mut delay = empty_bound();
    assert_eq!(unsafe { mnc_delay_bound(s, 1e-6, &mut delay) }, MNC_OK);
    assert_eq!(delay.status, MNC_STATUS_BOUNDED);
    assert!(delay.value > 0.0 && delay.value < det.delay_ms, "{delay:?}");
    assert!(delay.theta_star > 0.0);

    let mut backlog = empty_bound();
    assert_eq!(unsafe { mnc_backlog_bound(s, 1e-6, &mut backlog) }, MNC_OK);
    assert_eq!(backlog.status, MNC_STATUS_BOUNDED);
    assert!(backlog.value > 0.0 && backlog.value <= det.backlog_bits * 1.000001);

    let mut p = empty_bound();
    assert_eq!(
        unsafe { mnc_violation_probability(s, delay.value, &mut p) },
        MNC_OK
    );
    assert!(p.value <= 1e-6 * 1.000001, "{p:?}");
    let mut p0 = empty_bound();
    assert_eq!(
        unsafe { mnc_violation_probability(s, 0.0, &mut p0) },
        MNC_OK
    );
    assert!(p0.value >= p.value);

    unsafe { mnc_scenario_free(s) };
}

#[test]
fn errors_are_reported_by_code_and_message() {
    let (code, s) = load("{ not json");
    assert_eq!(code, MNC_ERR_INVALID_SCENARIO);
    assert!(s.is_null());
    assert!(!last_error().is_empty());

    let overloaded = SCENARIO.replace("\"count\": 20", "\"count\": 70");
    let (code, s) = load(&overloaded);
    assert_eq!(code, MNC_OK);
    let mut b = empty_bound();
    let code = unsafe { mnc_delay_bound(s, 1e-6, &mut b) };
    assert!(
        code == MNC_ERR_UNSTABLE || b.status == MNC_STATUS_UNSTABLE,
        "{code} {b:?}"
    );
    unsafe { mnc_scenario_free(s) };

    let (_, s) = load(SCENARIO);
    assert_eq!(
        unsafe { mnc_delay_bound(s, 1.5, &mut b) },
        MNC_ERR_INVALID_PARAMETER
    );
    assert!(last_error().contains("epsilon"));
    assert_eq!(
        unsafe { mnc_delay_bound(s, 1e-3, ptr::null_mut()) },
        MNC_ERR_NULL_POINTER
    );
    assert_eq!(
        unsafe { mnc_delay_bound(ptr::null(), 1e-3, &mut b) },
        MNC_ERR_NULL_POINTER
    );
    unsafe { mnc_scenario_free(s) };
    unsafe { mnc_scenario_free(ptr::null_mut()) };

    let mut handle = ptr::null_mut();
    assert_eq!(
        unsafe { mnc_scenario_from_json(ptr::null(), &mut handle) },
        MNC_ERR_NULL_POINTER
    );
    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { mnc_scenario_from_json(bad.as_ptr().cast(), &mut handle) },
        MNC_ERR_UTF8
    );
}

#[test]
fn scalar_helpers() {
    let mut v = 0.0;
    assert_eq!(unsafe { mnc_negbin_tail(3, 0.4, 0, &mut v) }, MNC_OK);
    assert!((v - 0.6f64.powi(-3)).abs() < 1e-12 * v);
    assert_eq!(
        unsafe { mnc_negbin_tail(0, 0.4, 0, &mut v) },
        MNC_ERR_INVALID_PARAMETER
    );

    // b = 0 reduces to a constant-rate source
    assert_eq!(
        unsafe { mnc_leaky_bucket_log_mgf(0.0, 10.0, 0.01, 5, &mut v) },
        MNC_OK
    );
    assert!((v - 0.5).abs() < 1e-12);
    assert_eq!(
        unsafe { mnc_leaky_bucket_log_mgf(100.0, 10.0, 0.01, 5, &mut v) },
        MNC_OK
    );
    assert!(v > 0.5 && v < 0.01 * 150.0);
    assert_eq!(
        unsafe { mnc_leaky_bucket_log_mgf(-1.0, 10.0, 0.01, 5, &mut v) },
        MNC_ERR_INVALID_PARAMETER
    );

    let version = unsafe { CStr::from_ptr(mnc_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/mgf_netcalc.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "typedef struct MncScenario MncScenario;",
        "mnc_scenario_from_json",
        "mnc_scenario_free",
        "mnc_delay_bound",
        "mnc_backlog_bound",
        "mnc_violation_probability",
        "mnc_deterministic_bounds",
        "mnc_leaky_bucket_log_mgf",
        "mnc_negbin_tail",
        "mnc_last_error_message",
        "#define MNC_ERR_UNSTABLE 5",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }

    let Ok(cc) = which_cc() else { return };
    let src = std::env::temp_dir().join(format!("mnc_header_{}.c", std::process::id()));
    std::fs::write(
        &src,
        "#include \"mgf_netcalc.h\"\n\
         int use(void) { MncScenario *s = 0; MncBound b; \
         return mnc_delay_bound(s, 1e-3, &b) + MNC_OK; }\n",
    )
    .unwrap();
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
        .unwrap();
    let _ = std::fs::remove_file(&src);
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
        .ok_or(())
}
