use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use rlp_ffi::*;

fn corridor_json() -> CString {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/corridor-switch.json");
    CString::new(std::fs::read_to_string(path).unwrap()).unwrap()
}

fn last_error() -> Option<String> {
    let p = rlp_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn load(json: &CString) -> *mut RlpScenario {
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { rlp_scenario_from_json(json.as_ptr(), &mut sc) }, RlpStatus::Ok);
    assert!(!sc.is_null());
    sc
}

fn take_string(p: *mut c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { rlp_string_free(p) };
    s
}

#[test]
fn simulate_matches_the_core_library() {
    let json = corridor_json();
    let sc = load(&json);
    assert_eq!(unsafe { rlp_scenario_dof(sc) }, 8);
    let mut ep = ptr::null_mut();
    assert_eq!(unsafe { rlp_simulate(sc, ptr::null(), c"rlp".as_ptr(), &mut ep) }, RlpStatus::Ok);
    let mut m = RlpMetrics::default();
    assert_eq!(unsafe { rlp_episode_metrics(ep, &mut m) }, RlpStatus::Ok);

    let core = rlp_core::scenario::Scenario::from_json(json.to_str().unwrap()).unwrap().load().unwrap();
    let cfg = rlp_core::bench::BenchConfig::default();
    let direct = rlp_core::sim::run_episode(&core, rlp_core::planner::Method::Rlp, &cfg.planner, &cfg.sim);
    assert!(m.completed && !m.collided);
    assert_eq!(m.motion_duration, direct.metrics.motion_duration);
    assert_eq!(m.plan_to_motion_delay, direct.metrics.plan_to_motion_delay);
    assert_eq!(m.switches as usize, direct.metrics.switches);

    let mut q = [0.0; 8];
    let mut n = 0;
    assert_eq!(unsafe { rlp_episode_final_state(ep, q.as_mut_ptr(), q.len(), &mut n) }, RlpStatus::Ok);
    assert_eq!(&q[..n], direct.final_state.as_slice());
    let mut short = [0.0; 2];
    assert_eq!(unsafe { rlp_episode_final_state(ep, short.as_mut_ptr(), 2, &mut n) }, RlpStatus::InvalidInput);
    assert_eq!(n, 8);

    let term = unsafe { CStr::from_ptr(rlp_episode_termination(ep)) };
    assert_eq!(term.to_str().unwrap(), "finished");

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { rlp_episode_to_json(ep, &mut out) }, RlpStatus::Ok);
    let episode: rlp_core::sim::Episode = serde_json::from_str(&take_string(out)).unwrap();
    assert_eq!(episode.metrics, direct.metrics);

    unsafe {
        rlp_episode_free(ep);
        rlp_scenario_free(sc);
    }
}

#[test]
fn plan_reports_json_and_failures() {
    let json = corridor_json();
    let sc = load(&json);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { rlp_plan(sc, ptr::null(), c"rlp".as_ptr(), &mut out) }, RlpStatus::Ok);
    let report: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    assert_eq!(report["outcome"], "switched");
    assert_eq!(report["scenario_id"], "corridor-switch");

    assert_eq!(unsafe { rlp_plan(sc, ptr::null(), c"dijkstra".as_ptr(), &mut out) }, RlpStatus::InvalidInput);
    assert!(last_error().unwrap().contains("dijkstra"));

    // A goal inside a closed room cannot be reached.
    let enclosed = cr#"{
      "id": "enclosed", "model": "hsr-like",
      "environment": { "boxes": [
        { "min": [0.6, -1.0, 0.0], "max": [0.8, 1.0, 1.5] },
        { "min": [-0.8, -1.0, 0.0], "max": [-0.6, 1.0, 1.5] },
        { "min": [-0.8, 0.6, 0.0], "max": [0.8, 0.8, 1.5] },
        { "min": [-0.8, -0.8, 0.0], "max": [0.8, -0.6, 1.5] } ] },
      "start": { "positions": [0,0,0,0,0,0,-1.5708,0], "velocities": [0,0,0,0,0,0,0,0] },
      "goals": [ { "type": "joint", "intervals": { "x": [3, 3], "y": [0, 0] } } ]
    }"#;
    let mut room = ptr::null_mut();
    assert_eq!(unsafe { rlp_scenario_from_json(enclosed.as_ptr(), &mut room) }, RlpStatus::Ok);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { rlp_plan(room, ptr::null(), c"rlp".as_ptr(), &mut out) }, RlpStatus::PlanFailed);
    let report: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    assert!(report["trajectory"].is_null());
    assert!(last_error().unwrap().contains("enclosed"));
    unsafe {
        rlp_scenario_free(room);
        rlp_scenario_free(sc);
    }
}

#[test]
fn errors_set_and_clear_the_last_error() {
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { rlp_scenario_from_json(c"{ \"id\": ".as_ptr(), &mut sc) }, RlpStatus::Parse);
    assert!(sc.is_null());
    assert!(last_error().unwrap().contains("line"));
    assert_eq!(unsafe { rlp_scenario_from_json(ptr::null(), &mut sc) }, RlpStatus::NullArgument);
    assert_eq!(unsafe { rlp_scenario_from_json(c"{}".as_ptr(), ptr::null_mut()) }, RlpStatus::NullArgument);
    let bad_utf8 = [0xffu8, 0xfe, 0];
    assert_eq!(unsafe { rlp_scenario_from_json(bad_utf8.as_ptr().cast(), &mut sc) }, RlpStatus::InvalidUtf8);

    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { rlp_config_from_json(cr#"{ "planner": { "t_p": -1.0 } }"#.as_ptr(), &mut cfg) }, RlpStatus::InvalidInput);
    assert!(cfg.is_null());
    assert_eq!(unsafe { rlp_config_from_json(c"{}".as_ptr(), &mut cfg) }, RlpStatus::Ok);
    assert!(last_error().is_none());

    let mut m = RlpMetrics::default();
    assert_eq!(unsafe { rlp_episode_metrics(ptr::null(), &mut m) }, RlpStatus::NullArgument);
    assert!(unsafe { rlp_episode_termination(ptr::null()) }.is_null());
    assert_eq!(unsafe { rlp_scenario_dof(ptr::null()) }, 0);
    unsafe {
        rlp_config_free(cfg);
        rlp_config_free(ptr::null_mut());
        rlp_scenario_free(ptr::null_mut());
        rlp_episode_free(ptr::null_mut());
        rlp_string_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(rlp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn config_and_seed_reach_the_simulation() {
    let json = corridor_json();
    let sc = load(&json);
    let mut cfg = ptr::null_mut();
    let noisy = cr#"{ "sim": { "base_noise_sigma": 0.03 } }"#;
    assert_eq!(unsafe { rlp_config_from_json(noisy.as_ptr(), &mut cfg) }, RlpStatus::Ok);
    let final_x = |sc, cfg| {
        let mut ep = ptr::null_mut();
        assert_eq!(unsafe { rlp_simulate(sc, cfg, c"rlp".as_ptr(), &mut ep) }, RlpStatus::Ok);
        let mut q = [0.0; 8];
        let mut n = 0;
        assert_eq!(unsafe { rlp_episode_final_state(ep, q.as_mut_ptr(), 8, &mut n) }, RlpStatus::Ok);
        unsafe { rlp_episode_free(ep) };
        q[0]
    };
    let clean = final_x(sc, ptr::null());
    let a = final_x(sc, cfg as *const _);
    assert_ne!(clean, a);
    assert_eq!(a, final_x(sc, cfg as *const _));
    assert_eq!(unsafe { rlp_scenario_set_seed(sc, 12345) }, RlpStatus::Ok);
    assert_ne!(a, final_x(sc, cfg as *const _));
    unsafe {
        rlp_config_free(cfg);
        rlp_scenario_free(sc);
    }
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(manifest.join("include/rlp.h")).unwrap();
    for f in ["rlp_scenario_from_json", "rlp_simulate", "rlp_plan", "rlp_last_error", "rlp_episode_free"] {
        assert!(header.contains(f), "{f} missing from header");
    }
    let lib_dir = target_dir();
    assert!(lib_dir.join("librlp_ffi.so").exists() || lib_dir.join("librlp_ffi.dylib").exists());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let build = Command::new(cc)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg("-L")
        .arg(&lib_dir)
        .args(["-lrlp_ffi", "-o"])
        .arg(&exe)
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .output()
        .expect("a C compiler is available");
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&exe).arg(manifest.join("../core/tests/data/corridor-switch.json")).output().unwrap();
    assert!(run.status.success(), "exit {:?}: {}", run.status.code(), String::from_utf8_lossy(&run.stderr));
    let line = String::from_utf8(run.stdout).unwrap();
    assert!(line.starts_with("finished completed=1"), "{line}");
}
