//! C ABI over `forensics-core`.
//!
//! Conventions:
//!
//! * Every fallible function returns a [`ForensicsStatus`]; results go through
//!   out-pointers that are written only on success.
//! * On failure a message is stored per thread and can be read with
//!   [`forensics_last_error`].
//! * Datasets are opaque handles released with [`forensics_dataset_free`].
//!   Strings returned by the library are released with [`forensics_string_free`].
//! * Panics never cross the boundary; they surface as `FORENSICS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use forensics_core::audit::{detection_probability, min_flip_precincts, plan_sample_size, FlipBound};
use forensics_core::digits::benford_pmf;
use forensics_core::polling::{center_poll_pvalue, TailDirection};
use forensics_core::report::{render_report, run_battery, BatteryConfig, ReportFormat};
use forensics_core::synth::{generate, SynthConfig};
use forensics_core::{load_dataset, validate, DatasetPaths, ElectionDataset, ForensicsError};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForensicsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    MalformedData = 4,
    InvalidDataset = 5,
    InsufficientData = 6,
    Config = 7,
    Utf8 = 8,
    Panic = 9,
}

/// Opaque election dataset.
pub struct ForensicsDataset {
    inner: ElectionDataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &ForensicsError) -> ForensicsStatus {
    match err {
        ForensicsError::Io { .. } => ForensicsStatus::Io,
        ForensicsError::MalformedRow { .. }
        | ForensicsError::DuplicateKey { .. }
        | ForensicsError::UnresolvedCenter { .. } => ForensicsStatus::MalformedData,
        ForensicsError::InvalidDataset { .. } => ForensicsStatus::InvalidDataset,
        ForensicsError::InvalidParameter(_) => ForensicsStatus::InvalidArgument,
        ForensicsError::InsufficientData(_) => ForensicsStatus::InsufficientData,
        ForensicsError::Config(_) => ForensicsStatus::Config,
    }
}

struct Failure(ForensicsStatus, String);

impl From<ForensicsError> for Failure {
    fn from(e: ForensicsError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ForensicsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ForensicsStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ForensicsStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(ForensicsStatus::NullPointer, format!("{name} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ForensicsStatus::Utf8, format!("{name} is not valid UTF-8")))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(ForensicsStatus::InvalidArgument, "output contains a NUL byte".into()))
}

fn boxed(dataset: ElectionDataset) -> *mut ForensicsDataset {
    Box::into_raw(Box::new(ForensicsDataset { inner: dataset }))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next library call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn forensics_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a dataset directory or `dataset.toml`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forensics_dataset_load(path: *const c_char, out: *mut *mut ForensicsDataset) -> ForensicsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let dataset = load_dataset(&DatasetPaths::resolve(Path::new(path))?)?;
        *out = boxed(dataset);
        Ok(())
    })
}

/// Generates a clean synthetic election. `config_toml` may be NULL for defaults.
///
/// # Safety
/// `config_toml` must be NULL or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forensics_dataset_simulate(
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut ForensicsDataset,
) -> ForensicsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = if config_toml.is_null() {
            SynthConfig::default()
        } else {
            SynthConfig::from_toml(str_arg(config_toml, "config_toml")?)?
        };
        *out = boxed(generate(&config, seed)?);
        Ok(())
    })
}

/// Releases a dataset. NULL is ignored.
///
/// # Safety
/// `dataset` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn forensics_dataset_free(dataset: *mut ForensicsDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of centers in the dataset.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forensics_dataset_center_count(
    dataset: *const ForensicsDataset,
    out: *mut usize,
) -> ForensicsStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = d.inner.centers.len();
        Ok(())
    })
}

/// Number of integrity violations found by validation.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forensics_dataset_violation_count(
    dataset: *const ForensicsDataset,
    out: *mut usize,
) -> ForensicsStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = validate(&d.inner).violations.len();
        Ok(())
    })
}

/// Content hash of the dataset as a hex string; free with [`forensics_string_free`].
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forensics_dataset_fingerprint(
    dataset: *const ForensicsDataset,
    out: *mut *mut c_char,
) -> ForensicsStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = into_c_string(d.inner.fingerprint())?;
        Ok(())
    })
}

/// Benford probabilities for digit `position` (1 or 2). `out` must hold 9
/// values for the first digit (digits 1-9) or 10 for the second (digits 0-9).
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn forensics_benford_pmf(position: u8, out: *mut f64, len: usize) -> ForensicsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let pmf = benford_pmf(position)?;
        if len != pmf.weights.len() {
            return Err(Failure(
                ForensicsStatus::InvalidArgument,
                format!("position {position} needs {} slots, got {len}", pmf.weights.len()),
            ));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&pmf.weights);
        Ok(())
    })
}

/// Exact binomial exit-poll p-value. `direction`: 0 = P(X >= k), 1 = P(X <= k), 2 = two-sided.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forensics_poll_pvalue(
    official_share: f64,
    sample_size: u64,
    yes_responses: u64,
    direction: u32,
    out: *mut f64,
) -> ForensicsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let direction = match direction {
            0 => TailDirection::Ge,
            1 => TailDirection::Le,
            2 => TailDirection::TwoSided,
            d => return Err(Failure(ForensicsStatus::InvalidArgument, format!("unknown direction {d}"))),
        };
        *out = center_poll_pvalue(official_share, sample_size, yes_responses, direction)?.p_value;
        Ok(())
    })
}

/// Probability that `sample` of `precincts` precincts include one of `tainted`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forensics_detection_probability(
    precincts: u64,
    tainted: u64,
    sample: u64,
    out: *mut f64,
) -> ForensicsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = detection_probability(precincts, tainted, sample)?;
        Ok(())
    })
}

/// Smallest sample size whose detection probability reaches `confidence`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forensics_plan_sample_size(
    precincts: u64,
    tainted: u64,
    confidence: f64,
    out: *mut u64,
) -> ForensicsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = plan_sample_size(precincts, tainted, confidence)?.sample_size;
        Ok(())
    })
}

/// Fewest precincts whose corruption could overturn `margin`; writes 0 when
/// no set of precincts can (the audit is unnecessary).
///
/// # Safety
/// `ballots` must point to `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forensics_min_flip_precincts(
    margin: u64,
    ballots: *const u64,
    len: usize,
    lambda: f64,
    out: *mut u64,
) -> ForensicsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ballots = if len == 0 {
            &[][..]
        } else if ballots.is_null() {
            return Err(null("ballots"));
        } else {
            std::slice::from_raw_parts(ballots, len)
        };
        *out = match min_flip_precincts(margin, ballots, lambda)? {
            FlipBound::Flip { k } => k as u64,
            FlipBound::AuditUnnecessary => 0,
        };
        Ok(())
    })
}

/// Runs a battery described by TOML and returns the JSON report; free with
/// [`forensics_string_free`].
///
/// # Safety
/// `dataset` must be a live handle, `config_toml` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn forensics_run_battery(
    dataset: *const ForensicsDataset,
    config_toml: *const c_char,
    master_seed: u64,
    out: *mut *mut c_char,
) -> ForensicsStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let config = BatteryConfig::from_toml(str_arg(config_toml, "config_toml")?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let report = run_battery(&d.inner, &config, master_seed)?;
        *out = into_c_string(render_report(&report, ReportFormat::Json)?)?;
        Ok(())
    })
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn forensics_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
