use std::ffi::CStr;
use std::ptr;

use spindoe::geometry::{Rotation, UnitVector3};
use spindoe_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(spindoe_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn make_pattern(seed: u64) -> *mut SpindoePattern {
    let mut p = ptr::null_mut();
    let s = unsafe { spindoe_pattern_generate(20, 0.1, 0, seed, &mut p) };
    assert_eq!(s, SpindoeStatus::Ok, "{}", last_error());
    p
}

fn pattern_dots(p: *const SpindoePattern) -> Vec<[f64; 3]> {
    let n = unsafe { spindoe_pattern_len(p) };
    let mut buf = vec![0.0; 3 * n];
    let s = unsafe { spindoe_pattern_dots(p, buf.as_mut_ptr(), buf.len()) };
    assert_eq!(s, SpindoeStatus::Ok);
    buf.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(spindoe_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_rejected() {
    let mut p = ptr::null_mut();
    let s = unsafe { spindoe_pattern_new(ptr::null(), 3, &mut p) };
    assert_eq!(s, SpindoeStatus::NullPointer);
    assert!(last_error().contains("xyz"));
    assert!(p.is_null());

    let s = unsafe { spindoe_table_build_default(ptr::null(), ptr::null_mut()) };
    assert_eq!(s, SpindoeStatus::NullPointer);

    unsafe {
        assert_eq!(spindoe_pattern_len(ptr::null()), 0);
        assert_eq!(spindoe_table_len(ptr::null()), 0);
        spindoe_pattern_free(ptr::null_mut());
        spindoe_table_free(ptr::null_mut());
    }
}

#[test]
fn library_errors_map_to_codes() {
    let xyz = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
    let mut p = ptr::null_mut();
    let s = unsafe { spindoe_pattern_new(xyz.as_ptr(), 3, &mut p) };
    assert_ne!(s, SpindoeStatus::Ok);
    assert!(!last_error().is_empty());

    let mut out = 0.0;
    let s = unsafe { spindoe_theoretical_dampening(1.81e-5, 0.02, -1.0, &mut out) };
    assert_eq!(s, SpindoeStatus::InvalidParams);

    let t = [0.0, 1.0, 2.0];
    let norms = [1.0, 0.0, 1.0];
    let mut d = SpindoeDampening::default();
    let s = unsafe { spindoe_dampening_fit(t.as_ptr(), norms.as_ptr(), 3, &mut d) };
    assert_eq!(s, SpindoeStatus::NonPositiveNorm);
}

#[test]
fn success_clears_last_error() {
    let mut out = 0.0;
    unsafe { spindoe_theoretical_dampening(1.0, 1.0, -1.0, &mut out) };
    assert!(!last_error().is_empty());
    let s = unsafe { spindoe_theoretical_dampening(1.81e-5, 0.02, 0.0027, &mut out) };
    assert_eq!(s, SpindoeStatus::Ok);
    assert!(last_error().is_empty());
    assert!((out - 0.00505).abs() < 1e-5);
}

#[test]
fn json_round_trip() {
    let p = make_pattern(3);
    let mut needed = 0usize;
    let s = unsafe { spindoe_pattern_to_json(p, ptr::null_mut(), 0, &mut needed) };
    assert_eq!(s, SpindoeStatus::BufferTooSmall);
    assert!(needed > 1);
    let mut buf = vec![0u8; needed];
    let s = unsafe { spindoe_pattern_to_json(p, buf.as_mut_ptr().cast(), buf.len(), &mut needed) };
    assert_eq!(s, SpindoeStatus::Ok);

    let mut q = ptr::null_mut();
    let s = unsafe { spindoe_pattern_from_json(buf.as_ptr().cast(), &mut q) };
    assert_eq!(s, SpindoeStatus::Ok, "{}", last_error());
    assert_eq!(pattern_dots(p), pattern_dots(q));

    let mut small = [0.0; 3];
    let s = unsafe { spindoe_pattern_dots(p, small.as_mut_ptr(), small.len()) };
    assert_eq!(s, SpindoeStatus::BufferTooSmall);

    let bad = b"{not json\0";
    let mut r = ptr::null_mut();
    let s = unsafe { spindoe_pattern_from_json(bad.as_ptr().cast(), &mut r) };
    assert_eq!(s, SpindoeStatus::Format);
    assert!(r.is_null());
    unsafe {
        spindoe_pattern_free(p);
        spindoe_pattern_free(q);
    }
}

#[test]
fn recognizes_a_clean_view() {
    let p = make_pattern(1);
    let mut table = ptr::null_mut();
    let s = unsafe { spindoe_table_build_default(p, &mut table) };
    assert_eq!(s, SpindoeStatus::Ok);
    assert_eq!(unsafe { spindoe_table_len(table) }, 20 * 19 * 18);

    let truth = Rotation::from_axis_angle(&UnitVector3::new(1.0, 2.0, 0.5).unwrap(), 0.8);
    let mut obs = Vec::new();
    for d in pattern_dots(p) {
        let v = truth.rotate(&UnitVector3::new(d[0], d[1], d[2]).unwrap());
        if v.z() > 0.0 {
            obs.extend(v.to_array());
        }
    }
    let mut o = SpindoeOrientation::default();
    let s = unsafe { spindoe_recognize(table, obs.as_ptr(), obs.len() / 3, &mut o) };
    assert_eq!(s, SpindoeStatus::Ok, "{}", last_error());
    let got = Rotation::from_wxyz(o.qw, o.qx, o.qy, o.qz).unwrap();
    assert!(spindoe::geometry::geodesic_angle(&got, &truth) < 1e-6);
    assert_eq!(o.n_matched, obs.len() / 3);

    let s = unsafe { spindoe_recognize(table, obs.as_ptr(), 2, &mut o) };
    assert_eq!(s, SpindoeStatus::TooFewDots);
    unsafe {
        spindoe_table_free(table);
        spindoe_pattern_free(p);
    }
}

#[test]
fn spin_fit_with_outliers() {
    let axis = UnitVector3::new(0.3, -0.2, 1.0).unwrap();
    let omega = 2.0 * std::f64::consts::PI * 50.0;
    let q0 = Rotation::from_axis_angle(&UnitVector3::x_axis(), 0.4);
    let mut t = Vec::new();
    let mut wxyz = Vec::new();
    for i in 0..10 {
        let ti = i as f64 / 350.0;
        let mut q = Rotation::from_axis_angle(&axis, omega * ti).compose(&q0);
        if i == 3 || i == 8 {
            q = Rotation::from_axis_angle(&UnitVector3::y_axis(), 2.0).compose(&q);
        }
        t.push(ti);
        wxyz.extend(q.wxyz());
    }
    let mut s_out = SpindoeSpin::default();
    let mut mask = [9u8; 10];
    let s = unsafe { spindoe_spin_fit(t.as_ptr(), wxyz.as_ptr(), 10, 1, 7, &mut s_out, mask.as_mut_ptr()) };
    assert_eq!(s, SpindoeStatus::Ok, "{}", last_error());
    assert!((s_out.rps - 50.0).abs() < 1e-6);
    assert_eq!(s_out.n_inliers, 8);
    assert_eq!(mask, [1, 1, 1, 0, 1, 1, 1, 1, 0, 1]);

    let s = unsafe { spindoe_spin_fit(t.as_ptr(), wxyz.as_ptr(), 2, 0, 0, &mut s_out, ptr::null_mut()) };
    assert_eq!(s, SpindoeStatus::TooFewSamples);
}

#[test]
fn header_compiles() {
    let cc = match ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok())
    {
        Some(c) => c,
        None => {
            eprintln!("no C compiler found; skipping");
            return;
        }
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include "spindoe.h"
#include <stdio.h>
int main(void) {
    double out = 0.0;
    SpindoeStatus s = spindoe_theoretical_dampening(1.81e-5, 0.02, 0.0027, &out);
    printf("%d %.6f %s\n", (int)s, out, spindoe_version());
    return s == SPINDOE_STATUS_OK ? 0 : 1;
}
"#,
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let status = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", include])
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}
