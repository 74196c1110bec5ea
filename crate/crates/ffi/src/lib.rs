//! C ABI over `catchsim`: configs and trained networks behind opaque
//! handles, plain structs for results, integer status codes and a
//! per-thread last-error message.
//!
//! Every function returning `CsStatus` writes its result through an out
//! pointer only on `CS_OK`. Handles are freed with their `*_free` function;
//! passing NULL to a free function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use catchsim::ballistics::Vec3;
use catchsim::baseline::{predict_from_detections, PredictorKind};
use catchsim::harness::{run_episode, run_experiment, Networks, Pipeline, PipelineConfig};
use catchsim::sensors::{Detection, Source};
use catchsim::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    /// Malformed JSON, CSV or weights file.
    Format = 4,
    /// The pipeline needs a network that was not loaded.
    MissingWeights = 5,
    /// Not enough or unusable detections for a prediction.
    Estimation = 6,
    Internal = 7,
}

/// Opaque experiment configuration.
pub struct CsConfig(PipelineConfig);

/// Opaque set of trained networks.
pub struct CsNetworks(Networks);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CsDetection {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub t: f64,
    /// 0 camera, 1 radar.
    pub source: u8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CsInterception {
    pub x: f64,
    pub y: f64,
    pub z_plane: f64,
    /// NaN when no crossing time was estimated.
    pub t_cross: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CsEpisode {
    pub seed: u64,
    pub success: bool,
    pub miss_distance: f64,
    pub tof: f64,
    pub distance: f64,
    pub required_travel: f64,
    pub n_camera: u32,
    pub n_radar: u32,
    pub n_predictions: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CsMetrics {
    pub n: u32,
    pub catches: u32,
    pub catch_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub miss_mean: f64,
    pub miss_p50: f64,
    pub miss_p90: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CsStatus {
    match e {
        Error::InvalidArgument(_) | Error::ShapeMismatch { .. } | Error::NonComposable(_) => {
            CsStatus::InvalidArgument
        }
        Error::Io { .. } => CsStatus::Io,
        Error::Json(_)
        | Error::Csv(_)
        | Error::BadMagic
        | Error::UnsupportedVersion(_)
        | Error::Truncated { .. }
        | Error::ArchitectureMismatch { .. } => CsStatus::Format,
        Error::MissingWeights(_) => CsStatus::MissingWeights,
        Error::TooFewDetections { .. }
        | Error::RankDeficient
        | Error::NotApproaching(_)
        | Error::PlanePassed { .. }
        | Error::Unordered(_)
        | Error::EmptyBuffer => CsStatus::Estimation,
        _ => CsStatus::Internal,
    }
}

/// Runs `f`, recording any error or panic as the last error.
fn guard(f: impl FnOnce() -> Result<(), (CsStatus, String)>) -> CsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            CsStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (CsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CsStatus, String) {
    (CsStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (CsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (CsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Paper-like noise profile defaults.
#[no_mangle]
pub extern "C" fn cs_config_paper_like() -> *mut CsConfig {
    Box::into_raw(Box::new(CsConfig(PipelineConfig::paper_like())))
}

/// Noiseless profile defaults.
#[no_mangle]
pub extern "C" fn cs_config_noiseless() -> *mut CsConfig {
    Box::into_raw(Box::new(CsConfig(PipelineConfig::noiseless())))
}

/// Parses a JSON config (same keys as the CLI `--config` file).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_config_from_json(json: *const c_char, out: *mut *mut CsConfig) -> CsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = c_str(json, "json")?;
        let cfg = PipelineConfig::from_json(text).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(CsConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from a `cs_config_*` constructor and not be used after.
#[no_mangle]
pub unsafe extern "C" fn cs_config_free(cfg: *mut CsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn cs_config_set_seed(cfg: *mut CsConfig, seed: u64) -> CsStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        cfg.0.seed = seed;
        Ok(())
    })
}

/// Worker threads for experiments; 0 uses all cores.
///
/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn cs_config_set_threads(cfg: *mut CsConfig, threads: u32) -> CsStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        cfg.0.threads = threads as usize;
        Ok(())
    })
}

/// Pipeline name such as `"color+ballistic"` or `"cnn+cnn"`.
///
/// # Safety
/// `cfg` must be a live config handle and `name` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cs_config_set_pipeline(cfg: *mut CsConfig, name: *const c_char) -> CsStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        let p: Pipeline = c_str(name, "name")?.parse().map_err(lib_err)?;
        cfg.0.pipeline = p;
        Ok(())
    })
}

/// Loads trained weights. Either path may be NULL to skip that network.
///
/// # Safety
/// `cfg` must be a live config handle, paths NULL or NUL-terminated, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn cs_networks_load(
    cfg: *const CsConfig,
    localizer_path: *const c_char,
    interceptor_path: *const c_char,
    out: *mut *mut CsNetworks,
) -> CsStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut c = cfg.0.clone();
        c.localizer_weights = match localizer_path.is_null() {
            true => None,
            false => Some(PathBuf::from(c_str(localizer_path, "localizer_path")?)),
        };
        c.interceptor_weights = match interceptor_path.is_null() {
            true => None,
            false => Some(PathBuf::from(c_str(interceptor_path, "interceptor_path")?)),
        };
        let nets = Networks::load(&c).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(CsNetworks(nets)));
        Ok(())
    })
}

/// # Safety
/// `nets` must come from `cs_networks_load` and not be used after.
#[no_mangle]
pub unsafe extern "C" fn cs_networks_free(nets: *mut CsNetworks) {
    if !nets.is_null() {
        drop(Box::from_raw(nets));
    }
}

fn networks<'a>(nets: *const CsNetworks, empty: &'a Networks) -> &'a Networks {
    // SAFETY: caller guarantees `nets` is NULL or a live handle.
    unsafe { nets.as_ref().map_or(empty, |n| &n.0) }
}

/// One closed-loop episode. `nets` may be NULL for color+ballistic.
///
/// # Safety
/// `cfg` must be a live config handle, `nets` NULL or live, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_run_episode(
    cfg: *const CsConfig,
    nets: *const CsNetworks,
    seed: u64,
    out: *mut CsEpisode,
) -> CsStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let empty = Networks::default();
        let r = run_episode(&cfg.0, networks(nets, &empty), seed).map_err(lib_err)?;
        *out = CsEpisode {
            seed: r.seed,
            success: r.outcome.success,
            miss_distance: r.outcome.miss_distance,
            tof: r.tof,
            distance: r.distance,
            required_travel: r.required_travel,
            n_camera: r.n_camera as u32,
            n_radar: r.n_radar as u32,
            n_predictions: r.predictions.len() as u32,
        };
        Ok(())
    })
}

/// `n_throws` seeded episodes aggregated into catch statistics.
///
/// # Safety
/// `cfg` must be a live config handle, `nets` NULL or live, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_run_experiment(
    cfg: *const CsConfig,
    nets: *const CsNetworks,
    n_throws: u32,
    out: *mut CsMetrics,
) -> CsStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let empty = Networks::default();
        let (m, _) =
            run_experiment(&cfg.0, networks(nets, &empty), n_throws as usize).map_err(lib_err)?;
        *out = CsMetrics {
            n: m.n as u32,
            catches: m.catches as u32,
            catch_rate: m.catch_rate,
            ci_low: m.catch_rate_ci95[0],
            ci_high: m.catch_rate_ci95[1],
            miss_mean: m.miss_mean,
            miss_p50: m.miss_p50,
            miss_p90: m.miss_p90,
        };
        Ok(())
    })
}

/// Ballistic least-squares interception from time-ordered detections.
///
/// # Safety
/// `detections` must point to `n` readable elements (or be NULL with n = 0);
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_predict_ballistic(
    detections: *const CsDetection,
    n: usize,
    gravity: f64,
    z_plane: f64,
    out: *mut CsInterception,
) -> CsStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let raw: &[CsDetection] = match (detections.is_null(), n) {
            (_, 0) => &[],
            (true, _) => return Err(null("detections")),
            (false, n) => std::slice::from_raw_parts(detections, n),
        };
        let dets: Vec<Detection> = raw
            .iter()
            .map(|d| Detection {
                position: Vec3::new(d.x, d.y, d.z),
                t: d.t,
                source: if d.source == 0 { Source::Camera } else { Source::Radar },
            })
            .collect();
        let opts = PipelineConfig::paper_like().fit;
        let p = predict_from_detections(&dets, gravity, z_plane, &opts).map_err(lib_err)?;
        debug_assert_eq!(p.source, PredictorKind::Ballistic);
        *out = CsInterception {
            x: p.x,
            y: p.y,
            z_plane: p.z_plane,
            t_cross: p.t_cross.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}
