use std::ffi::CStr;
use std::fs;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use aqgd_ffi::*;

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn quadratic_run_through_handles() {
    let text = c"dim = 8\nkappa = 10\nbits = 7\niters = 200\n";
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { aqgd_config_parse(text.as_ptr(), &mut cfg) }, AqgdStatus::Ok);
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { aqgd_run(cfg, &mut run) }, AqgdStatus::Ok);
    let len = unsafe { aqgd_run_len(run) };
    assert_eq!(len, 201);
    let mut gaps = vec![0.0; len];
    assert_eq!(unsafe { aqgd_run_gaps(run, gaps.as_mut_ptr(), len) }, AqgdStatus::Ok);
    assert!(gaps[200] < 0.1 * gaps[0]);
    assert_eq!(unsafe { aqgd_run_final_gap(run) }, gaps[200]);
    assert_eq!(unsafe { aqgd_run_total_bits(run) }, 200 * 8 * 7);
    assert_eq!(unsafe { aqgd_run_violations(run) }, 0);
    assert_eq!(
        unsafe { aqgd_run_gaps(run, gaps.as_mut_ptr(), len - 1) },
        AqgdStatus::InvalidArgument
    );

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let cpath = std::ffi::CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { aqgd_run_write_csv(run, cpath.as_ptr()) }, AqgdStatus::Ok);
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 202);
    unsafe {
        aqgd_run_free(run);
        aqgd_config_free(cfg);
    }
}

#[test]
fn divergence_is_reported_with_its_code() {
    let cfg = aqgd_config_new();
    unsafe {
        assert_eq!(aqgd_config_set(cfg, c"alpha".as_ptr(), c"1".as_ptr()), AqgdStatus::Ok);
        assert_eq!(aqgd_config_set(cfg, c"iters".as_ptr(), c"100".as_ptr()), AqgdStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(aqgd_run(cfg, &mut run), AqgdStatus::Divergence);
        assert!(run.is_null());
        let msg = CStr::from_ptr(aqgd_last_error()).to_str().unwrap();
        assert!(msg.contains("divergence"), "{msg}");
        aqgd_config_free(cfg);
    }
}

#[test]
fn scalar_system_matches_closed_form() {
    // x' = x + u + w, Q = R = Σ = 1: the Riccati root is the golden ratio.
    let one = [1.0];
    let mut sys = ptr::null_mut();
    unsafe {
        assert_eq!(
            aqgd_system_new(
                1,
                1,
                one.as_ptr(),
                one.as_ptr(),
                one.as_ptr(),
                one.as_ptr(),
                one.as_ptr(),
                &mut sys
            ),
            AqgdStatus::Ok
        );
        let (mut n, mut m) = (0, 0);
        assert_eq!(aqgd_system_dims(sys, &mut n, &mut m), AqgdStatus::Ok);
        assert_eq!((n, m), (1, 1));
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let (mut gain, mut cost) = ([0.0], 0.0);
        assert_eq!(aqgd_system_optimal(sys, gain.as_mut_ptr(), &mut cost), AqgdStatus::Ok);
        assert!((cost - phi).abs() < 1e-10);
        assert!((gain[0] + phi / (1.0 + phi)).abs() < 1e-10);
        let mut grad = [1.0];
        assert_eq!(aqgd_system_grad(sys, gain.as_ptr(), grad.as_mut_ptr()), AqgdStatus::Ok);
        assert!(grad[0].abs() < 1e-9);
        let mut c = 0.0;
        assert_eq!(aqgd_system_cost(sys, [0.0].as_ptr(), &mut c), AqgdStatus::Unstabilizing);
        aqgd_system_free(sys);
    }
}

#[test]
fn generated_header_declares_every_export() {
    let header = fs::read_to_string(manifest_dir().join("include/aqgd.h")).unwrap();
    let source = fs::read_to_string(manifest_dir().join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 20, "{exports:?}");
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("AQGD_STATUS_DIVERGENCE = 3"));
}

/// Compiles a C client against the header and the static library when a C
/// compiler is available.
#[test]
fn c_client_compiles_and_runs() {
    let lib_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../target/debug");
    let archive = lib_dir.join("libaqgd_ffi.a");
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(archive.exists(), "{} not built", archive.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("client");
    let status = Command::new(cc)
        .arg(manifest_dir().join("tests/client.c"))
        .arg("-I")
        .arg(manifest_dir().join("include"))
        .arg(&archive)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok 201 0");
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| {
            Command::new(c)
                .arg("--version")
                .output()
                .is_ok_and(|o| o.status.success())
        })
        .ok_or(())
}
