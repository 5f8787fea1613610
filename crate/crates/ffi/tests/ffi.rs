use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use forensics_ffi::*;

fn last_error() -> String {
    let p = forensics_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn benford_values_cross_the_boundary() {
    let mut first = [0.0f64; 9];
    let mut second = [0.0f64; 10];
    unsafe {
        assert_eq!(forensics_benford_pmf(1, first.as_mut_ptr(), 9), ForensicsStatus::Ok);
        assert_eq!(forensics_benford_pmf(2, second.as_mut_ptr(), 10), ForensicsStatus::Ok);
    }
    assert!((first[0] - 0.301030).abs() < 1e-6);
    assert!((second[0] - 0.119679).abs() < 1e-6);
}

#[test]
fn wrong_buffer_length_is_reported() {
    let mut buf = [0.0f64; 9];
    let status = unsafe { forensics_benford_pmf(2, buf.as_mut_ptr(), 9) };
    assert_eq!(status, ForensicsStatus::InvalidArgument);
    assert!(last_error().contains("10 slots"));
}

#[test]
fn null_out_pointer() {
    let status = unsafe { forensics_benford_pmf(1, ptr::null_mut(), 9) };
    assert_eq!(status, ForensicsStatus::NullPointer);
}

#[test]
fn audit_functions() {
    let mut p = 0.0;
    let mut n = 0u64;
    let mut k = 0u64;
    unsafe {
        assert_eq!(forensics_detection_probability(10, 2, 7, &mut p), ForensicsStatus::Ok);
        assert_eq!(forensics_plan_sample_size(10, 2, 0.9, &mut n), ForensicsStatus::Ok);
        let ballots = [100u64, 100, 100];
        assert_eq!(
            forensics_min_flip_precincts(350, ballots.as_ptr(), 3, 1.0, &mut k),
            ForensicsStatus::Ok
        );
    }
    assert!((p - 0.933_333_333_333_333_3).abs() < 1e-12);
    assert_eq!(n, 7);
    assert_eq!(k, 2);

    let tiny = [10u64, 10];
    unsafe {
        assert_eq!(forensics_min_flip_precincts(100, tiny.as_ptr(), 2, 1.0, &mut k), ForensicsStatus::Ok);
    }
    assert_eq!(k, 0);

    let status = unsafe { forensics_detection_probability(10, 0, 3, &mut p) };
    assert_eq!(status, ForensicsStatus::InvalidArgument);
}

#[test]
fn poll_pvalue_matches_direct_sum() {
    let mut p = 0.0;
    let status = unsafe { forensics_poll_pvalue(0.5, 4, 4, 0, &mut p) };
    assert_eq!(status, ForensicsStatus::Ok);
    assert!((p - 1.0 / 16.0).abs() < 1e-15);
    assert_eq!(unsafe { forensics_poll_pvalue(0.5, 4, 4, 7, &mut p) }, ForensicsStatus::InvalidArgument);
}

#[test]
fn simulate_and_run_battery() {
    let config = CString::new("centers = 20\n").unwrap();
    let mut handle = ptr::null_mut();
    unsafe {
        assert_eq!(forensics_dataset_simulate(config.as_ptr(), 3, &mut handle), ForensicsStatus::Ok);
    }
    assert!(!handle.is_null());
    let mut count = 0usize;
    let mut violations = 99usize;
    unsafe {
        assert_eq!(forensics_dataset_center_count(handle, &mut count), ForensicsStatus::Ok);
        assert_eq!(forensics_dataset_violation_count(handle, &mut violations), ForensicsStatus::Ok);
    }
    assert_eq!((count, violations), (20, 0));

    let battery = CString::new("[digits]\n[exitpoll]\n").unwrap();
    let mut json = ptr::null_mut();
    unsafe {
        assert_eq!(forensics_run_battery(handle, battery.as_ptr(), 11, &mut json), ForensicsStatus::Ok);
    }
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { forensics_string_free(json) };
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(value["schema_version"], 1);
    assert_eq!(value["entries"].as_array().unwrap().len(), 2);

    let empty = CString::new("").unwrap();
    let status = unsafe { forensics_run_battery(handle, empty.as_ptr(), 11, &mut json) };
    assert_eq!(status, ForensicsStatus::Config);
    assert!(last_error().contains("no tests"));
    unsafe { forensics_dataset_free(handle) };
}

#[test]
fn load_reports_io_and_malformed_data() {
    let dir = tempfile::tempdir().unwrap();
    let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    let status = unsafe { forensics_dataset_load(missing.as_ptr(), &mut handle) };
    assert_ne!(status, ForensicsStatus::Ok);
    assert!(handle.is_null());

    std::fs::write(dir.path().join("centers.csv"), "center_id,region,computerized,registered,signatures\nC1,R,1,-5,0\n").unwrap();
    std::fs::write(dir.path().join("machines.csv"), "center_id,machine_id,nu,yes,no\n").unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let status = unsafe { forensics_dataset_load(path.as_ptr(), &mut handle) };
    assert_eq!(status, ForensicsStatus::MalformedData);
    assert!(last_error().contains("centers.csv:2"));
}

#[test]
fn fingerprint_round_trip() {
    let mut a = ptr::null_mut();
    let mut b = ptr::null_mut();
    unsafe {
        forensics_dataset_simulate(ptr::null(), 5, &mut a);
        forensics_dataset_simulate(ptr::null(), 5, &mut b);
    }
    let (mut fa, mut fb) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(forensics_dataset_fingerprint(a, &mut fa), ForensicsStatus::Ok);
        assert_eq!(forensics_dataset_fingerprint(b, &mut fb), ForensicsStatus::Ok);
        assert_eq!(CStr::from_ptr(fa), CStr::from_ptr(fb));
        assert_eq!(CStr::from_ptr(fa).to_bytes().len(), 64);
        forensics_string_free(fa);
        forensics_string_free(fb);
        forensics_dataset_free(a);
        forensics_dataset_free(b);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/forensics.h")).unwrap();
    for name in [
        "forensics_last_error",
        "forensics_dataset_load",
        "forensics_dataset_simulate",
        "forensics_dataset_free",
        "forensics_dataset_center_count",
        "forensics_dataset_violation_count",
        "forensics_dataset_fingerprint",
        "forensics_benford_pmf",
        "forensics_poll_pvalue",
        "forensics_detection_probability",
        "forensics_plan_sample_size",
        "forensics_min_flip_precincts",
        "forensics_run_battery",
        "forensics_string_free",
        "FORENSICS_STATUS_OK",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// The header must be valid C when a compiler is available.
#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"forensics.h\"\nint main(void) { ForensicsDataset *d = 0; (void)d; return FORENSICS_STATUS_OK; }\n",
    )
    .unwrap();
    let status = std::process::Command::new(cc)
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if std::process::Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc);
        }
    }
    Err(())
}
