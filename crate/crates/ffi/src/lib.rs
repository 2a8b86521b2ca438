//! C ABI over `rlp-core`.
//!
//! Objects cross the boundary as opaque handles created by the `*_from_json` and run
//! functions and released by the matching `*_free`. Every fallible call returns an
//! `RlpStatus`; on failure a message is stored per thread and can be read with
//! `rlp_last_error`. Strings returned by the library are freed with `rlp_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rlp_core::bench::BenchConfig;
use rlp_core::cli::plan_once;
use rlp_core::scenario::{LoadedScenario, Scenario};
use rlp_core::planner::{Method, Termination};
use rlp_core::sim::{self, Episode};
use rlp_core::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidInput = 4,
    PlanFailed = 5,
    Io = 6,
    Panic = 7,
}

/// A parsed and validated scenario.
pub struct RlpScenario {
    inner: LoadedScenario,
}

/// Planner, simulator and generator settings.
pub struct RlpConfig {
    inner: BenchConfig,
}

/// A finished simulated episode with its transcript.
pub struct RlpEpisode {
    inner: Episode,
}

/// Scalar episode metrics.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RlpMetrics {
    pub completed: bool,
    pub collided: bool,
    pub motion_completion_time: f64,
    pub plan_to_motion_delay: f64,
    pub motion_duration: f64,
    pub robustness: f64,
    pub loops: u64,
    pub overruns: u64,
    pub switches: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("nul bytes removed")));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(RlpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Parse { .. } => RlpStatus::Parse,
            Error::Io(_) => RlpStatus::Io,
            _ => RlpStatus::InvalidInput,
        };
        Fail(status, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status plus last-error message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RlpStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RlpStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RlpStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(RlpStatus::NullArgument, format!("`{what}` is null"))
}

/// # Safety
/// `p` is null or a valid nul-terminated string.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|e| Fail(RlpStatus::InvalidUtf8, format!("`{what}` is not UTF-8: {e}")))
}

/// # Safety
/// `p` is null or points to a live `T` created by this library.
unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

fn check_out<T>(out: *mut *mut T) -> Result<(), Fail> {
    if out.is_null() {
        Err(null("out"))
    } else {
        Ok(())
    }
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

fn parse_method(name: &str) -> Result<Method, Fail> {
    Method::parse(name).map_err(Fail::from)
}

fn config_or_default(cfg: *const RlpConfig) -> BenchConfig {
    // SAFETY: callers pass null or a handle from `rlp_config_from_json`.
    unsafe { cfg.as_ref() }.map(|c| c.inner.clone()).unwrap_or_default()
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn rlp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rlp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or was returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rlp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Parses and validates a scenario from JSON.
///
/// # Safety
/// `json` is a nul-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rlp_scenario_from_json(json: *const c_char, out: *mut *mut RlpScenario) -> RlpStatus {
    guard(|| {
        check_out(out)?;
        let text = unsafe { read_str(json, "json") }?;
        let inner = Scenario::from_json(text)?.load()?;
        unsafe { *out = Box::into_raw(Box::new(RlpScenario { inner })) };
        Ok(())
    })
}

/// Overrides the scenario seed.
///
/// # Safety
/// `scenario` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn rlp_scenario_set_seed(scenario: *mut RlpScenario, seed: u64) -> RlpStatus {
    guard(|| {
        let sc = unsafe { scenario.as_mut() }.ok_or_else(|| null("scenario"))?;
        sc.inner.seed = seed;
        Ok(())
    })
}

/// Number of robot degrees of freedom in the scenario, or 0 for null.
///
/// # Safety
/// `scenario` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rlp_scenario_dof(scenario: *const RlpScenario) -> usize {
    unsafe { scenario.as_ref() }.map_or(0, |s| s.inner.model.dof())
}

/// # Safety
/// `scenario` is null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rlp_scenario_free(scenario: *mut RlpScenario) {
    if !scenario.is_null() {
        drop(unsafe { Box::from_raw(scenario) });
    }
}

/// Parses a configuration from JSON; missing fields take their defaults.
///
/// # Safety
/// `json` is a nul-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rlp_config_from_json(json: *const c_char, out: *mut *mut RlpConfig) -> RlpStatus {
    guard(|| {
        check_out(out)?;
        let text = unsafe { read_str(json, "json") }?;
        let inner = BenchConfig::from_json(text)?;
        unsafe { *out = Box::into_raw(Box::new(RlpConfig { inner })) };
        Ok(())
    })
}

/// # Safety
/// `config` is null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rlp_config_free(config: *mut RlpConfig) {
    if !config.is_null() {
        drop(unsafe { Box::from_raw(config) });
    }
}

/// Plans once from the scenario start and writes the report as JSON to `out_json`.
/// Returns `PlanFailed` (with the report still written) when no trajectory was found.
/// `config` may be null for defaults. `method` is one of rlp, rlp-mm, rlp-minus, rrt.
///
/// # Safety
/// `scenario` is a live handle, `config` null or live, `method` a nul-terminated
/// string and `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn rlp_plan(
    scenario: *const RlpScenario,
    config: *const RlpConfig,
    method: *const c_char,
    out_json: *mut *mut c_char,
) -> RlpStatus {
    guard(|| {
        check_out(out_json)?;
        let sc = unsafe { borrow(scenario, "scenario") }?;
        let method = parse_method(unsafe { read_str(method, "method") }?)?;
        let cfg = config_or_default(config);
        let report = plan_once(&sc.inner, method, &cfg.planner);
        let json = serde_json::to_string(&report).expect("serializable report");
        unsafe { *out_json = into_c_string(json) };
        if report.failed() {
            return Err(Fail(RlpStatus::PlanFailed, format!("no valid trajectory for `{}`", sc.inner.id)));
        }
        Ok(())
    })
}

/// Simulates a full episode. Incomplete episodes still succeed; inspect the metrics.
///
/// # Safety
/// `scenario` is a live handle, `config` null or live, `method` a nul-terminated
/// string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rlp_simulate(
    scenario: *const RlpScenario,
    config: *const RlpConfig,
    method: *const c_char,
    out: *mut *mut RlpEpisode,
) -> RlpStatus {
    guard(|| {
        check_out(out)?;
        let sc = unsafe { borrow(scenario, "scenario") }?;
        let method = parse_method(unsafe { read_str(method, "method") }?)?;
        let cfg = config_or_default(config);
        let inner = sim::run_episode(&sc.inner, method, &cfg.planner, &cfg.sim);
        unsafe { *out = Box::into_raw(Box::new(RlpEpisode { inner })) };
        Ok(())
    })
}

/// Copies the episode metrics into `out`.
///
/// # Safety
/// `episode` is a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rlp_episode_metrics(episode: *const RlpEpisode, out: *mut RlpMetrics) -> RlpStatus {
    guard(|| {
        let ep = unsafe { borrow(episode, "episode") }?;
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        let m = &ep.inner.metrics;
        *out = RlpMetrics {
            completed: m.completed,
            collided: m.collided,
            motion_completion_time: m.motion_completion_time,
            plan_to_motion_delay: m.plan_to_motion_delay,
            motion_duration: m.motion_duration,
            robustness: m.robustness,
            loops: m.loops as u64,
            overruns: m.overruns as u64,
            switches: m.switches as u64,
        };
        Ok(())
    })
}

/// Writes the final executed joint positions into `buf` (capacity `len`) and the
/// number of joints into `written`. Fails with `InvalidInput` if `len` is too small.
///
/// # Safety
/// `episode` is a live handle, `buf` has room for `len` doubles, `written` is writable.
#[no_mangle]
pub unsafe extern "C" fn rlp_episode_final_state(
    episode: *const RlpEpisode,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> RlpStatus {
    guard(|| {
        let ep = unsafe { borrow(episode, "episode") }?;
        let written = unsafe { written.as_mut() }.ok_or_else(|| null("written"))?;
        let q = &ep.inner.final_state;
        *written = q.len();
        if len < q.len() {
            return Err(Fail(RlpStatus::InvalidInput, format!("buffer holds {len} values, need {}", q.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        unsafe { ptr::copy_nonoverlapping(q.as_ptr(), buf, q.len()) };
        Ok(())
    })
}

/// Short name of how the episode ended, as a static string.
///
/// # Safety
/// `episode` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rlp_episode_termination(episode: *const RlpEpisode) -> *const c_char {
    let Some(ep) = (unsafe { episode.as_ref() }) else {
        return ptr::null();
    };
    let name: &'static str = match ep.inner.metrics.termination {
        Termination::Finished => "finished\0",
        Termination::Stopped => "stopped\0",
        Termination::Timeout => "timeout\0",
        Termination::LoopCap => "loop-cap\0",
        Termination::PlanFailed => "plan-failed\0",
    };
    name.as_ptr().cast()
}

/// Serializes the whole episode (metrics, transcript, final state) as JSON.
///
/// # Safety
/// `episode` is a live handle and `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn rlp_episode_to_json(episode: *const RlpEpisode, out_json: *mut *mut c_char) -> RlpStatus {
    guard(|| {
        check_out(out_json)?;
        let ep = unsafe { borrow(episode, "episode") }?;
        let json = serde_json::to_string(&ep.inner).expect("serializable episode");
        unsafe { *out_json = into_c_string(json) };
        Ok(())
    })
}

/// # Safety
/// `episode` is null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rlp_episode_free(episode: *mut RlpEpisode) {
    if !episode.is_null() {
        drop(unsafe { Box::from_raw(episode) });
    }
}
