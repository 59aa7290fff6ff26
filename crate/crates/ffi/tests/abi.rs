use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use chromspin_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(cs_last_error_message()) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { cs_string_free(p) };
    s
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(cs_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn config_round_trip_and_errors() {
    unsafe {
        let mut cfg = ptr::null_mut();
        let json = CString::new(r#"{"field_gauss": 12.5}"#).unwrap();
        assert_eq!(cs_config_from_json(json.as_ptr(), &mut cfg), CsStatus::Ok);
        let mut text = ptr::null_mut();
        assert_eq!(cs_config_to_json(cfg, &mut text), CsStatus::Ok);
        assert!(take_string(text).contains("\"field_gauss\": 12.5"));
        cs_config_free(cfg);

        let bad = CString::new(r#"{"temperature_k": -1}"#).unwrap();
        let mut cfg = ptr::null_mut();
        assert_eq!(cs_config_from_json(bad.as_ptr(), &mut cfg), CsStatus::Validation);
        assert!(cfg.is_null());
        assert!(last_error().contains("temperature_k"), "{}", last_error());

        let junk = CString::new("{oops").unwrap();
        assert_eq!(cs_config_from_json(junk.as_ptr(), &mut cfg), CsStatus::Parse);
        assert_eq!(cs_config_from_json(ptr::null(), &mut cfg), CsStatus::NullPointer);
        assert_eq!(cs_config_to_json(ptr::null(), &mut text), CsStatus::NullPointer);

        let raw = [0xffu8, 0];
        assert_eq!(cs_config_from_json(raw.as_ptr().cast(), &mut cfg), CsStatus::InvalidUtf8);

        cs_config_free(ptr::null_mut());
        cs_string_free(ptr::null_mut());
    }
}

#[test]
fn simulate_and_read_points() {
    unsafe {
        let json = CString::new(r#"{"protocol": {"id": "optical_lifetime"}}"#).unwrap();
        let mut cfg = ptr::null_mut();
        assert_eq!(cs_config_from_json(json.as_ptr(), &mut cfg), CsStatus::Ok);
        assert_eq!(cs_config_set_seed(cfg, 5), CsStatus::Ok);
        let mut sweep = ptr::null_mut();
        assert_eq!(cs_simulate(cfg, &mut sweep), CsStatus::Ok);
        let mut n = 0usize;
        assert_eq!(cs_sweep_len(sweep, &mut n), CsStatus::Ok);
        assert_eq!(n, 80);
        let (mut x, mut mean, mut sampled, mut sigma) = (0.0, 0.0, 0.0, 0.0);
        assert_eq!(cs_sweep_get(sweep, 1, &mut x, &mut mean, &mut sampled, &mut sigma), CsStatus::Ok);
        assert_eq!(x, 10.0);
        assert!(mean > 0.0 && sigma > 0.0);
        assert_eq!(
            cs_sweep_get(sweep, 1, ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()),
            CsStatus::Ok
        );
        assert_eq!(cs_sweep_get(sweep, n, &mut x, ptr::null_mut(), ptr::null_mut(), ptr::null_mut()), CsStatus::OutOfRange);
        let mut csv = ptr::null_mut();
        assert_eq!(cs_sweep_to_csv(sweep, &mut csv), CsStatus::Ok);
        let csv = take_string(csv);
        assert_eq!(csv.lines().count(), n + 1);

        // same seed, same counts
        let mut again = ptr::null_mut();
        assert_eq!(cs_simulate(cfg, &mut again), CsStatus::Ok);
        let mut s2 = 0.0;
        cs_sweep_get(again, 1, ptr::null_mut(), ptr::null_mut(), &mut s2, ptr::null_mut());
        assert_eq!(s2, sampled);
        cs_sweep_free(again);
        cs_sweep_free(sweep);
        cs_config_free(cfg);
    }
}

#[test]
fn fit_through_the_abi() {
    let model = CString::new("exp_decay").unwrap();
    let x: Vec<f64> = (0..81).map(|i| 10.0 * i as f64).collect();
    let mut y = vec![0.0; x.len()];
    let truth = [1000.0, 156.3, 20.0];
    unsafe {
        assert_eq!(cs_eval_model(model.as_ptr(), truth.as_ptr(), 3, x.as_ptr(), x.len(), y.as_mut_ptr()), CsStatus::Ok);
        let mut fit = ptr::null_mut();
        assert_eq!(
            cs_fit(model.as_ptr(), x.as_ptr(), y.as_ptr(), ptr::null(), x.len(), ptr::null(), 0, &mut fit),
            CsStatus::Ok
        );
        let mut k = 0usize;
        cs_fit_param_count(fit, &mut k);
        assert_eq!(k, 3);
        let (mut name, mut v, mut e) = (ptr::null(), 0.0, 0.0);
        assert_eq!(cs_fit_param(fit, 1, &mut name, &mut v, &mut e), CsStatus::Ok);
        assert_eq!(CStr::from_ptr(name).to_str().unwrap(), "tau");
        assert!((v / 156.3 - 1.0).abs() < 1e-6, "{v}");
        assert_eq!(cs_fit_param(fit, 3, &mut name, &mut v, &mut e), CsStatus::OutOfRange);
        let (mut chi2, mut red, mut conv) = (1.0, 1.0, false);
        assert_eq!(cs_fit_chi2(fit, &mut chi2, &mut red, &mut conv), CsStatus::Ok);
        assert!(chi2 < 1e-12 && conv);
        let mut json = ptr::null_mut();
        assert_eq!(cs_fit_to_json(fit, &mut json), CsStatus::Ok);
        assert!(take_string(json).contains("\"model\""));
        cs_fit_free(fit);
    }
}

#[test]
fn fit_errors_map_to_codes() {
    let x = [1.0, 2.0];
    let y = [1.0, 2.0];
    let mut fit = ptr::null_mut();
    unsafe {
        let bad = CString::new("nope").unwrap();
        assert_eq!(cs_fit(bad.as_ptr(), x.as_ptr(), y.as_ptr(), ptr::null(), 2, ptr::null(), 0, &mut fit), CsStatus::Config);
        let lin = CString::new("exp_decay").unwrap();
        assert_eq!(cs_fit(lin.as_ptr(), x.as_ptr(), y.as_ptr(), ptr::null(), 2, ptr::null(), 0, &mut fit), CsStatus::Data);
        assert!(last_error().starts_with("kind=data"));
        assert_eq!(cs_fit(lin.as_ptr(), ptr::null(), y.as_ptr(), ptr::null(), 2, ptr::null(), 0, &mut fit), CsStatus::NullPointer);
        let orbach = CString::new("orbach").unwrap();
        let xs = [20.0, -1.0, 25.0, 30.0];
        let ys = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(
            cs_fit(orbach.as_ptr(), xs.as_ptr(), ys.as_ptr(), ptr::null(), 4, ptr::null(), 0, &mut fit),
            CsStatus::Domain
        );
        assert!(last_error().contains("row 2"), "{}", last_error());
        let mut out = [0.0; 1];
        assert_eq!(cs_eval_model(orbach.as_ptr(), [1.0].as_ptr(), 1, [20.0].as_ptr(), 1, out.as_mut_ptr()), CsStatus::Domain);
    }
    assert!(fit.is_null());
}

#[test]
fn errors_are_per_thread() {
    unsafe {
        let mut cfg = ptr::null_mut();
        cs_config_from_json(ptr::null(), &mut cfg);
    }
    let other = std::thread::spawn(last_error).join().unwrap();
    assert!(other.is_empty());
    assert!(!last_error().is_empty());
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/chromspin.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["cs_simulate", "cs_fit", "cs_sweep_get", "cs_last_error_message", "cs_eval_model", "CS_STATUS_PANIC"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{}\"\nint main(void) {{ CsConfig *c = 0; return cs_config_default(&c) == CS_STATUS_OK ? 0 : 1; }}\n",
            header.display()
        ),
    )
    .unwrap();
    for (cc, lang) in [("cc", "c"), ("c++", "c++")] {
        match Command::new(cc).args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang]).arg(&src).output() {
            Ok(o) => assert!(o.status.success(), "{cc}: {}", String::from_utf8_lossy(&o.stderr)),
            Err(_) => eprintln!("{cc} not found; skipping"),
        }
    }
}
