use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use catchsim_ffi::*;

fn last_error() -> String {
    let p = cs_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn noiseless_episode_catches() {
    let cfg = cs_config_noiseless();
    let mut ep = CsEpisode::default();
    let s = unsafe { cs_run_episode(cfg, ptr::null(), 4, &mut ep) };
    assert_eq!(s, CsStatus::Ok);
    assert_eq!(ep.seed, 4);
    assert!(ep.tof > 0.8 && ep.n_camera > 0 && ep.n_radar > 0);
    unsafe { cs_config_free(cfg) };
}

#[test]
fn experiment_metrics_are_consistent() {
    let json = CString::new(r#"{"profile": "noiseless", "throws": {"max_travel": 0.2}}"#).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { cs_config_from_json(json.as_ptr(), &mut cfg) }, CsStatus::Ok);
    assert_eq!(unsafe { cs_config_set_threads(cfg, 1) }, CsStatus::Ok);
    let mut m = CsMetrics::default();
    assert_eq!(unsafe { cs_run_experiment(cfg, ptr::null(), 10, &mut m) }, CsStatus::Ok);
    assert_eq!(m.n, 10);
    assert_eq!(m.catches, 10);
    assert!(m.ci_low < 1.0 && m.ci_high == 1.0);
    unsafe { cs_config_free(cfg) };
}

#[test]
fn bad_json_reports_format_error() {
    let json = CString::new("{not json").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { cs_config_from_json(json.as_ptr(), &mut cfg) }, CsStatus::Format);
    assert!(cfg.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn unknown_pipeline_is_invalid() {
    let cfg = cs_config_paper_like();
    let name = CString::new("sonar+magic").unwrap();
    assert_eq!(unsafe { cs_config_set_pipeline(cfg, name.as_ptr()) }, CsStatus::InvalidArgument);
    let ok = CString::new("cnn+cnn").unwrap();
    assert_eq!(unsafe { cs_config_set_pipeline(cfg, ok.as_ptr()) }, CsStatus::Ok);
    // cnn pipelines need weights
    let mut ep = CsEpisode::default();
    assert_eq!(unsafe { cs_run_episode(cfg, ptr::null(), 1, &mut ep) }, CsStatus::MissingWeights);
    assert!(last_error().contains("localizer"));
    unsafe { cs_config_free(cfg) };
}

#[test]
fn null_pointers_are_rejected() {
    let mut ep = CsEpisode::default();
    assert_eq!(unsafe { cs_run_episode(ptr::null(), ptr::null(), 0, &mut ep) }, CsStatus::NullPointer);
    assert_eq!(unsafe { cs_config_set_seed(ptr::null_mut(), 1) }, CsStatus::NullPointer);
    unsafe {
        cs_config_free(ptr::null_mut());
        cs_networks_free(ptr::null_mut());
    }
}

#[test]
fn missing_weights_file_is_io_error() {
    let cfg = cs_config_paper_like();
    let path = CString::new("/nonexistent/interceptor.pgnn").unwrap();
    let mut nets = ptr::null_mut();
    let s = unsafe { cs_networks_load(cfg, ptr::null(), path.as_ptr(), &mut nets) };
    assert_eq!(s, CsStatus::Io);
    assert!(nets.is_null());
    unsafe { cs_config_free(cfg) };
}

#[test]
fn ballistic_prediction_of_exact_parabola() {
    let (vx, vy, vz, g) = (0.1, 4.0, -5.0, 9.81);
    let dets: Vec<CsDetection> = (0..6)
        .map(|i| {
            let t = 0.05 * i as f64;
            CsDetection {
                x: vx * t,
                y: 1.5 + vy * t - 0.5 * g * t * t,
                z: 4.6 + vz * t,
                t,
                source: (i % 2) as u8,
            }
        })
        .collect();
    let mut out = CsInterception::default();
    let s = unsafe { cs_predict_ballistic(dets.as_ptr(), dets.len(), g, -0.4, &mut out) };
    assert_eq!(s, CsStatus::Ok);
    let t = 1.0;
    assert!((out.t_cross - t).abs() < 1e-9);
    assert!((out.x - vx * t).abs() < 1e-9);
    assert!((out.y - (1.5 + vy * t - 0.5 * g * t * t)).abs() < 1e-9);

    let s = unsafe { cs_predict_ballistic(dets.as_ptr(), 2, g, -0.4, &mut out) };
    assert_eq!(s, CsStatus::Estimation);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(cs_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/catchsim.h");
    assert!(header.exists());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"catchsim.h\"\nint main(void) { CsMetrics m; (void)m; return CS_STATUS_OK; }\n",
    )
    .unwrap();
    let status = Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "header does not compile"),
        Err(_) => eprintln!("no C compiler; skipped"),
    }
}
