use hillspec_ffi::*;
use std::f64::consts::PI;
use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

#[test]
fn free_discriminant_through_the_abi() {
    let mut p = ptr::null_mut();
    let re = [0.0];
    let im = [0.0];
    unsafe {
        assert_eq!(hs_potential_from_modes(PI, re.as_ptr(), im.as_ptr(), 1, &mut p), HsStatus::Ok);
        let (mut dr, mut di) = (0.0, 0.0);
        assert_eq!(hs_discriminant(p, 2.25, 0.0, &mut dr, &mut di), HsStatus::Ok);
        assert!((dr - 2.0 * (1.5 * PI).cos()).abs() < 1e-9 && di.abs() < 1e-9);
        hs_potential_free(p);
    }
}

#[test]
fn spectral_handles_round_trip() {
    let mut p = ptr::null_mut();
    let mut s = ptr::null_mut();
    let mut c = ptr::null_mut();
    unsafe {
        assert_eq!(hs_potential_lame(1, 0.5, PI, 0.3 * PI, &mut p), HsStatus::Ok);
        assert_eq!(hs_spectral_new(p, 6, 200, &mut s), HsStatus::Ok);
        let mut len = 0usize;
        assert_eq!(hs_spectral_edges(s, ptr::null_mut(), 0, &mut len), HsStatus::BufferTooSmall);
        assert_eq!(len, 3);
        let mut e = vec![0.0; len];
        assert_eq!(hs_spectral_edges(s, e.as_mut_ptr(), e.len(), &mut len), HsStatus::Ok);
        let (_, want) = hillspec::elliptic::lame1(0.5, PI);
        for (a, b) in e.iter().zip(&want) {
            assert!((a - b).abs() < 1e-8);
        }
        let mut mu = [0.0];
        let mut sg = [9];
        assert_eq!(hs_spectral_dirichlet(s, mu.as_mut_ptr(), sg.as_mut_ptr(), 1, &mut len), HsStatus::Ok);
        assert!(mu[0] >= e[1] - 1e-9 && mu[0] <= e[2] + 1e-9 && sg[0].abs() <= 1);
        assert_eq!(hs_curve_from_spectral(s, &mut c), HsStatus::Ok);
        let mut u = 0.0;
        let mut want_u = 0.0;
        assert_eq!(hs_curve_u(c, 0.4, 0.0, &mut u), HsStatus::Ok);
        assert_eq!(hs_potential_eval(p, 0.4, &mut want_u), HsStatus::Ok);
        assert!((u - want_u).abs() < 1e-7);
        let (mut t, mut found) = (0.0, 0);
        assert_eq!(hs_curve_period(c, HsPeriodicity::Space, 1e-8, &mut t, &mut found), HsStatus::Ok);
        assert!(found == 1 && (t - PI).abs() < 1e-6);
        hs_curve_free(c);
        hs_spectral_free(s);
        hs_potential_free(p);
    }
}

#[test]
fn reconstruction_is_in_the_original_frame() {
    // nonzero mean, so the normalising shift is far from zero
    let (re, im) = ([1.0, 0.5], [0.0, 0.0]);
    let (mut p, mut s) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(hs_potential_from_modes(PI, re.as_ptr(), im.as_ptr(), 2, &mut p), HsStatus::Ok);
        assert_eq!(hs_spectral_new(p, 8, 200, &mut s), HsStatus::Ok);
        let mut shift = 0.0;
        assert_eq!(hs_spectral_shift(s, &mut shift), HsStatus::Ok);
        assert!(shift > 0.5);
        for x in [0.0, 1.0] {
            let (mut u, mut want) = (0.0, 0.0);
            assert_eq!(hs_reconstruct(s, x, &mut u), HsStatus::Ok);
            assert_eq!(hs_potential_eval(p, x, &mut want), HsStatus::Ok);
            assert!((u - want).abs() < 1e-3, "{x}: {u} {want}");
        }
        hs_spectral_free(s);
        hs_potential_free(p);
    }
}

#[test]
fn errors_are_reported_not_raised() {
    unsafe {
        let mut c = ptr::null_mut();
        let bad = [0.0, 1.0, 1.0];
        assert_eq!(hs_curve_new(bad.as_ptr(), 3, &mut c), HsStatus::DegenerateCurve);
        assert!(c.is_null());
        let msg = CStr::from_ptr(hs_last_error()).to_string_lossy().into_owned();
        assert!(msg.contains("degenerate"), "{msg}");
        assert_eq!(hs_curve_new(ptr::null(), 3, &mut c), HsStatus::NullPointer);
        let mut p = ptr::null_mut();
        assert_eq!(hs_potential_lame(3, 0.5, PI, 0.0, &mut p), HsStatus::InvalidArgument);
        let mut v = 0.0;
        assert_eq!(hs_potential_eval(ptr::null(), 0.0, &mut v), HsStatus::NullPointer);
        hs_potential_free(ptr::null_mut());
    }
}

#[test]
fn header_is_current_and_compiles() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/hillspec.h")).unwrap();
    for f in ["hs_potential_from_modes", "hs_spectral_new", "hs_curve_u", "hs_last_error", "HS_STATUS_THETA_ZERO"] {
        assert!(header.contains(f), "{f} missing from header");
    }
    // build and run the C smoke test against the static library when a C
    // compiler is around
    let Ok(exe) = std::env::current_exe() else { return };
    let lib_dir = exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf();
    let lib = lib_dir.join("libhillspec_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping C smoke test (no cc or static library)");
        return;
    }
    let out = tempfile_path("hs_smoke");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-D_DEFAULT_SOURCE", "-o"])
        .arg(&out)
        .arg(dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl"])
        .status()
        .unwrap();
    assert!(status.success(), "C smoke test failed to compile");
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "C smoke test exited with {:?}", run.status.code());
    let _ = std::fs::remove_file(&out);
}

fn tempfile_path(stem: &str) -> PathBuf {
    std::env::temp_dir().join(format!("{stem}-{}", std::process::id()))
}
