use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use habitgrowth_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(hg_last_error()) }
        .to_str()
        .unwrap()
        .to_owned()
}

#[test]
fn baseline_constants_and_root() {
    let p = hg_params_baseline();
    let mut d = HgDerived::default();
    assert_eq!(unsafe { hg_params_validate(p, &mut d) }, HgStatus::Ok);
    assert!((d.alpha - 0.145).abs() < 1e-15);
    assert!((d.growth - 0.105).abs() < 1e-15);
    assert!((d.lambda0 - (-2.2564312086261697)).abs() < 1e-10);
    let mut l = 0.0;
    assert_eq!(unsafe { hg_real_root(p, &mut l) }, HgStatus::Ok);
    assert_eq!(l, d.lambda0);
    unsafe { hg_params_free(p) };
}

#[test]
fn statuses_and_messages() {
    let mut p = ptr::null_mut();
    let s = unsafe { hg_params_new(1.5, 1.0, 1.0, 0.3, 0.05, 0.04, 2.0, &mut p) };
    assert_eq!(s, HgStatus::Ok);
    let mut d = HgDerived::default();
    assert_eq!(unsafe { hg_params_validate(p, &mut d) }, HgStatus::Regime);
    assert!(last_error().starts_with("RegimeError(growth)"));
    unsafe { hg_params_free(p) };

    let mut bad = ptr::null_mut();
    let s = unsafe { hg_params_new(-1.0, 1.0, 1.0, 0.3, 0.05, 0.04, 2.0, &mut bad) };
    assert_eq!(s, HgStatus::Domain);
    assert!(bad.is_null());

    assert_eq!(unsafe { hg_params_validate(ptr::null(), &mut d) }, HgStatus::NullPointer);
    let p = hg_params_baseline();
    assert_eq!(unsafe { hg_real_root(p, ptr::null_mut()) }, HgStatus::NullPointer);

    let mut l = 0.0;
    assert_eq!(unsafe { hg_real_root(p, &mut l) }, HgStatus::Ok);
    assert_eq!(last_error(), "");
    unsafe { hg_params_free(p) };
}

#[test]
fn simulate_and_read_rows() {
    let p = hg_params_baseline();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { hg_history_constant(1.0, 200, 1.0, &mut h) }, HgStatus::Ok);
    let mut thr = 0.0;
    let mut ok = false;
    assert_eq!(unsafe { hg_feasibility(p, 10.0, h, 8.0, &mut thr, &mut ok) }, HgStatus::Ok);
    assert!(ok && (thr - 0.17163319).abs() < 1e-6);

    let mut a = ptr::null_mut();
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { hg_simulate(p, 10.0, h, 8.0, 200, HgMethod::IntegralForm, &mut a) }, HgStatus::Ok);
    assert_eq!(unsafe { hg_simulate(p, 10.0, h, 8.0, 200, HgMethod::LambdaForm, &mut b) }, HgStatus::Ok);
    let n = unsafe { hg_trajectory_len(a) };
    assert_eq!(n, 1601);
    assert_eq!(unsafe { hg_trajectory_len(ptr::null()) }, 0);
    let mut lambda = 0.0;
    assert_eq!(unsafe { hg_trajectory_lambda(a, &mut lambda) }, HgStatus::Ok);
    let (mut ra, mut rb) = (HgRow::default(), HgRow::default());
    unsafe {
        assert_eq!(hg_trajectory_row(a, n - 1, &mut ra), HgStatus::Ok);
        assert_eq!(hg_trajectory_row(b, n - 1, &mut rb), HgStatus::Ok);
    }
    assert_eq!(ra.t, 8.0);
    assert!((ra.c - rb.c).abs() / ra.c < 1e-4);
    let trend = lambda * (0.105f64 * 8.0).exp();
    assert!(((ra.c - ra.h) - trend).abs() / trend < 1e-4);
    assert_eq!(unsafe { hg_trajectory_row(a, n, &mut ra) }, HgStatus::OutOfRange);

    let mut v = 0.0;
    assert_eq!(unsafe { hg_value_function(p, 10.0, h, &mut v) }, HgStatus::Ok);
    assert!(v < 0.0);

    assert_eq!(unsafe { hg_simulate(p, 0.01, h, 8.0, 200, HgMethod::IntegralForm, &mut a) }, HgStatus::Infeasible);
    unsafe {
        hg_trajectory_free(a);
        hg_trajectory_free(b);
        hg_history_free(h);
        hg_params_free(p);
    }
}

#[test]
fn history_from_samples() {
    let samples = [0.5, 1.0, 1.5];
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { hg_history_from_samples(1.0, samples.as_ptr(), 3, &mut h) }, HgStatus::Ok);
    unsafe { hg_history_free(h) };
    let neg = [1.0, -1.0];
    assert_eq!(unsafe { hg_history_from_samples(1.0, neg.as_ptr(), 2, &mut h) }, HgStatus::Domain);
    assert_eq!(unsafe { hg_history_from_samples(1.0, ptr::null(), 2, &mut h) }, HgStatus::NullPointer);
}

#[test]
fn scenario_round_trip() {
    let toml = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/baseline.toml"),
    )
    .unwrap()
    .replace("oracle = true", "oracle = false");
    let text = CString::new(toml).unwrap();
    let mut code = -1;
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { hg_run_scenario(text.as_ptr(), &mut code, &mut json) }, HgStatus::Ok);
    assert_eq!(code, 0);
    let report = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { hg_string_free(json) };
    assert!(report.contains("\"reason\": \"ok\""));

    let bad = CString::new("[params]\n").unwrap();
    assert_eq!(unsafe { hg_run_scenario(bad.as_ptr(), &mut code, &mut json) }, HgStatus::Parse);
    assert!(last_error().starts_with("ParseError"));
}

#[test]
fn header_is_valid_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = include.join("habitgrowth.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["hg_simulate", "hg_last_error", "HG_STATUS_INFEASIBLE", "typedef struct HgParams HgParams"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"habitgrowth.h\"\nint main(void) { HgRow r; HgStatus s = HG_STATUS_OK; (void)r; return (int)s; }\n",
    )
    .unwrap();
    let Ok(out) = std::process::Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler, skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
