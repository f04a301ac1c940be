use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use fakedist_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe { fd_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn constants_and_errors() {
    let mut x = 0.0;
    unsafe {
        assert_eq!(fd_decay_constant(2.0, 3.0, 1.0, &mut x), FdStatus::Ok);
        assert!((x / 288f64.sqrt() - 1.0).abs() < 1e-12);
        assert_eq!(fd_half_harnack_constant(2.0, 3.0, 1.0, &mut x), FdStatus::Ok);
        assert!((x - 486.0).abs() < 1e-9);
        assert_eq!(fd_half_harnack_constant(2.0, 3.0, 0.0, &mut x), FdStatus::Domain);
        assert!(last_error().contains("non-zero"));
        assert_eq!(fd_decay_constant(3.0, 3.0, 1.0, &mut x), FdStatus::Domain);
        assert_eq!(fd_flat_sobolev_constant(2, 1.0, &mut x), FdStatus::Ok);
        assert!((x - 0.5 / std::f64::consts::PI.sqrt()).abs() < 1e-14);
        assert_eq!(fd_decay_constant(2.0, 3.0, 1.0, ptr::null_mut()), FdStatus::NullPointer);
    }
    let v = unsafe { CStr::from_ptr(fd_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    // truncation keeps the terminator and reports the full length
    let mut small = [0 as std::ffi::c_char; 4];
    let n = unsafe { fd_last_error(small.as_mut_ptr(), small.len()) };
    assert!(n > 3 && small[3] == 0);
}

#[test]
fn model_handles() {
    let mut m: *mut FdModel = ptr::null_mut();
    unsafe {
        assert_eq!(fd_model_new_constant(3, 1.0, 40.0, &mut m), FdStatus::Ok);
        let (mut h, mut v, mut bv) = (0.0, 0.0, 0.0);
        assert_eq!(fd_model_volumes(m, 1.0, &mut h, &mut v, &mut bv), FdStatus::Ok);
        assert!((h - 1f64.sinh()).abs() < 1e-9);
        assert!((v / (4.0 * std::f64::consts::PI * h * h) - 1.0).abs() < 1e-9);
        let mut g = 0.0;
        assert_eq!(fd_model_kernel(m, 2.0, 1.0, &mut g), FdStatus::Ok);
        assert!((g / ((1.0 / 1f64.tanh() - 1.0) / (4.0 * std::f64::consts::PI)) - 1.0).abs() < 1e-6);
        assert_eq!(fd_model_volumes(ptr::null(), 1.0, &mut h, &mut v, &mut bv), FdStatus::NullPointer);
        fd_model_free(m);
        fd_model_free(ptr::null_mut());

        let mut flat: *mut FdModel = ptr::null_mut();
        assert_eq!(fd_model_new_constant(2, 0.0, 40.0, &mut flat), FdStatus::Ok);
        assert_eq!(fd_model_kernel(flat, 2.0, 1.0, &mut g), FdStatus::Parabolic);
        assert!(last_error().contains("parabolic"));
        fd_model_free(flat);
        assert_eq!(fd_model_new_constant(0, 0.0, 40.0, &mut flat), FdStatus::Domain);
    }
}

#[test]
fn radial_solve_round_trip() {
    unsafe {
        let mut m: *mut FdModel = ptr::null_mut();
        assert_eq!(fd_model_new_constant(3, 0.0, 40.0, &mut m), FdStatus::Ok);
        let mut sol: *mut FdSolution = ptr::null_mut();
        assert_eq!(fd_radial_solve(m, 2.0, 0.01, 6.0, 400, &mut sol), FdStatus::Ok);
        let mut n = 0;
        assert_eq!(fd_solution_len(sol, &mut n), FdStatus::Ok);
        let (mut r, mut lg, mut rho) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        assert_eq!(fd_solution_fields(sol, r.as_mut_ptr(), lg.as_mut_ptr(), rho.as_mut_ptr(), n), FdStatus::Ok);
        for v in (1..n).step_by(40) {
            assert!((lg[v].exp() * 4.0 * std::f64::consts::PI * r[v] - 1.0).abs() < 5e-3);
            assert!((rho[v] / r[v] - 1.0).abs() < 1e-3);
        }
        assert_eq!(fd_solution_fields(sol, ptr::null_mut(), ptr::null_mut(), rho.as_mut_ptr(), n), FdStatus::Ok);
        assert_eq!(fd_solution_fields(sol, r.as_mut_ptr(), ptr::null_mut(), ptr::null_mut(), n - 1), FdStatus::InvalidArgument);
        let (mut res, mut cap) = (0.0, 0.0);
        assert_eq!(fd_solution_stats(sol, &mut res, &mut cap), FdStatus::Ok);
        assert!(res < 1e-6 && cap.is_finite());
        fd_solution_free(sol);
        assert_eq!(fd_radial_solve(m, 3.0, 0.01, 6.0, 400, &mut sol), FdStatus::Domain);
        assert_eq!(fd_radial_solve(m, 2.0, 0.01, 6.0, 400, ptr::null_mut()), FdStatus::NullPointer);
        fd_model_free(m);
    }
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/fakedist.h")).unwrap();
    for name in [
        "fd_last_error",
        "fd_version",
        "fd_model_new_constant",
        "fd_model_free",
        "fd_model_volumes",
        "fd_model_kernel",
        "fd_decay_constant",
        "fd_half_harnack_constant",
        "fd_flat_sobolev_constant",
        "fd_radial_solve",
        "fd_solution_len",
        "fd_solution_fields",
        "fd_solution_stats",
        "fd_solution_free",
        "typedef struct FdModel FdModel",
        "FD_STATUS_PARABOLIC = 5",
    ] {
        assert!(header.contains(name), "{name} missing from the header");
    }
}

/// The static library next to this test binary, or a fresh build of it in a separate target
/// directory when the test profile did not produce one.
fn static_library() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    let target = exe.parent().unwrap().parent().unwrap().parent().unwrap();
    let lib = target.join(if cfg!(debug_assertions) { "debug" } else { "release" }).join("libfakedist_ffi.a");
    if lib.exists() {
        return lib;
    }
    let own = target.join("capi-smoke");
    let st = Command::new(env!("CARGO"))
        .args(["build", "-q", "--offline", "--release", "--lib", "-p", "fakedist-ffi", "--manifest-path"])
        .arg(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("Cargo.toml"))
        .env("CARGO_TARGET_DIR", &own)
        .status()
        .unwrap();
    assert!(st.success());
    own.join("release/libfakedist_ffi.a")
}

/// Compiles and runs a C program against the header and the static library.
#[test]
fn c_program_links() {
    let lib = static_library();
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <math.h>
#include <stdio.h>
#include "fakedist.h"
int main(void) {
    double c = 0.0;
    if (fd_decay_constant(2.0, 3.0, 1.0, &c) != FD_STATUS_OK || fabs(c - sqrt(288.0)) > 1e-9) return 1;
    FdModel *m = NULL;
    if (fd_model_new_constant(3, 1.0, 40.0, &m) != FD_STATUS_OK) return 2;
    double g = 0.0;
    if (fd_model_kernel(m, 2.0, 1.0, &g) != FD_STATUS_OK) return 3;
    fd_model_free(m);
    if (fd_half_harnack_constant(2.0, 3.0, 0.0, &c) != FD_STATUS_DOMAIN) return 4;
    char buf[128];
    fd_last_error(buf, sizeof buf);
    printf("%.12f %s\n", g, buf);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let inc = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let st = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&inc)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(st.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    let g: f64 = text.split_whitespace().next().unwrap().parse().unwrap();
    assert!((g / ((1.0 / 1f64.tanh() - 1.0) / (4.0 * std::f64::consts::PI)) - 1.0).abs() < 1e-6);
    assert!(text.contains("non-zero"));
}
