use airgrid_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn last_error() -> String {
    let p = airgrid_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn scenario(text: &str) -> *mut AirgridScenario {
    let text = CString::new(text).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { airgrid_scenario_from_toml(text.as_ptr(), &mut s) }, AirgridStatus::Ok);
    s
}

#[test]
fn plan_sub_airspace_fills_buffer() {
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(airgrid_scenario_default(&mut s), AirgridStatus::Ok);
        assert_eq!(airgrid_scenario_set_seed(s, 7), AirgridStatus::Ok);
        let mut buf = [AirgridPoint::default(); 16];
        let (mut n, mut cost) = (0usize, 0.0f64);
        assert_eq!(airgrid_plan_sub_airspace(s, buf.as_mut_ptr(), buf.len(), &mut n, &mut cost), AirgridStatus::Ok);
        assert_eq!(n, 10);
        assert!(cost.is_finite() && cost > 0.0);
        assert_eq!((buf[0].x, buf[0].y, buf[0].z), (0.0, 75.0, 25.0));
        assert_eq!((buf[9].x, buf[9].y, buf[9].z), (200.0, 140.0, 25.0));

        let mut small = [AirgridPoint::default(); 4];
        assert_eq!(
            airgrid_plan_sub_airspace(s, small.as_mut_ptr(), small.len(), &mut n, &mut cost),
            AirgridStatus::IndexOutOfRange
        );
        assert_eq!(n, 10);
        airgrid_scenario_free(s);
    }
}

#[test]
fn simulate_and_inspect() {
    let s = scenario("seed = 4\n[random_obstacles]\ncount = 0\n");
    unsafe {
        let mut r = ptr::null_mut();
        assert_eq!(airgrid_simulate(s, &mut r), AirgridStatus::Ok);
        assert_eq!(airgrid_result_uav_count(r), 1);
        assert_eq!(airgrid_result_arrived_count(r), 1);
        assert_eq!(airgrid_result_max_occupancy(r), 1);
        assert!(airgrid_result_total_length(r) > 1000.0);
        let mut arrived = false;
        assert_eq!(airgrid_result_uav_arrived(r, 0, &mut arrived), AirgridStatus::Ok);
        assert!(arrived);
        let (mut pts, mut len) = (ptr::null(), 0usize);
        assert_eq!(airgrid_result_waypoints(r, 0, &mut pts, &mut len), AirgridStatus::Ok);
        let pts = std::slice::from_raw_parts(pts, len);
        assert_eq!((pts[0].x, pts[0].y, pts[0].z), (0.0, 0.0, 0.0));
        assert_eq!((pts[len - 1].x, pts[len - 1].y, pts[len - 1].z), (750.0, 900.0, 80.0));
        assert_eq!(airgrid_result_waypoints(r, 3, &mut ptr::null(), &mut len), AirgridStatus::IndexOutOfRange);

        let dir = tempfile::tempdir().unwrap();
        let cdir = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(airgrid_result_write(r, cdir.as_ptr(), AirgridFormat::Csv), AirgridStatus::Ok);
        assert!(dir.path().join("waypoints.csv").exists());
        assert!(dir.path().join("occupancy.csv").exists());
        airgrid_result_free(r);
        airgrid_scenario_free(s);
    }
}

#[test]
fn modes_and_random_fleet() {
    let s = scenario("[random_obstacles]\ncount = 10\n");
    unsafe {
        assert_eq!(airgrid_scenario_set_random_uavs(s, 3), AirgridStatus::Ok);
        assert_eq!(airgrid_scenario_set_mode(s, AirgridMode::NoSlidingWindow), AirgridStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(airgrid_simulate(s, &mut r), AirgridStatus::Ok);
        assert_eq!(airgrid_result_uav_count(r), 3);
        airgrid_result_free(r);
        airgrid_scenario_free(s);
    }
}

#[test]
fn error_codes_and_messages() {
    unsafe {
        let mut s = ptr::null_mut();
        let bad = CString::new("seed = \"x\"").unwrap();
        assert_eq!(airgrid_scenario_from_toml(bad.as_ptr(), &mut s), AirgridStatus::ParseError);
        assert!(last_error().contains("line 1"));

        let invalid = CString::new("[[obstacles]]\nanchor = [0.0, 0.0, 0.0]\nlen_x = -1.0\nlen_y = 1.0\nlen_z = 1.0\n").unwrap();
        assert_eq!(airgrid_scenario_from_toml(invalid.as_ptr(), &mut s), AirgridStatus::ValidationError);
        assert!(last_error().contains("len_x"));

        assert_eq!(airgrid_scenario_default(ptr::null_mut()), AirgridStatus::NullPointer);
        assert_eq!(airgrid_scenario_set_seed(ptr::null_mut(), 1), AirgridStatus::NullPointer);
        assert_eq!(airgrid_simulate(ptr::null(), &mut ptr::null_mut()), AirgridStatus::NullPointer);
        assert_eq!(airgrid_result_uav_count(ptr::null()), 0);
        assert!(airgrid_result_total_length(ptr::null()).is_nan());
        airgrid_scenario_free(ptr::null_mut());
        airgrid_result_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/airgrid.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exported: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exported.len() >= 15);
    for name in exported {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in ["AirgridStatus", "AirgridMode", "AirgridFormat", "AirgridPoint", "AirgridScenario", "AirgridResult"] {
        assert!(header.contains(ty), "{ty} missing from header");
    }
}

#[test]
fn c_example_compiles_against_header() {
    let root = env!("CARGO_MANIFEST_DIR");
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
        .arg(format!("{root}/include"))
        .arg(format!("{root}/examples/simulate.c"))
        .status()
    else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    assert!(status.success());
}
