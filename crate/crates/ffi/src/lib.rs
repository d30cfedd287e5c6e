//! C ABI over `ddmpc-core`.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns a
//! [`DdmpcStatus`]; on failure the message is available from
//! [`ddmpc_last_error`] on the same thread. Matrices are exchanged row-major.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ddmpc_core::cli::{self, CliError};
use ddmpc_core::config::{parse_synth_config, ControllerFile, SynthConfig};
use ddmpc_core::datalab::{dataset_from_json, dataset_to_json, Dataset};
use ddmpc_core::io;
use ddmpc_core::plants::parse_plant;
use ddmpc_core::simloop::simulate;
use nalgebra::{DMatrix, DVector};

/// Result code of every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdmpcStatus {
    Ok = 0,
    /// A required pointer was null.
    NullArgument = 1,
    /// Malformed text, inconsistent dimensions or an unusable configuration.
    InvalidInput = 2,
    /// The pipeline ran but no certified controller came out of it.
    Failed = 3,
    /// The output buffer is shorter than required.
    BufferTooSmall = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

/// Recorded input/state trajectory.
pub struct DdmpcDataset {
    inner: Dataset,
}

/// Synthesized gain with its certificate and the configuration behind it.
pub struct DdmpcController {
    inner: ControllerFile,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(DdmpcStatus, String);

impl From<CliError> for Fail {
    fn from(e: CliError) -> Self {
        let status = match e {
            CliError::Input(_) => DdmpcStatus::InvalidInput,
            CliError::Failed(_) => DdmpcStatus::Failed,
        };
        Fail(status, e.to_string())
    }
}

fn invalid(e: impl std::fmt::Display) -> Fail {
    Fail(DdmpcStatus::InvalidInput, e.to_string())
}

/// Runs `f` behind `catch_unwind` and records any failure message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DdmpcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DdmpcStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            set_error(format!("internal panic: {}", msg.unwrap_or_default()));
            DdmpcStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(DdmpcStatus::NullArgument, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_matrix(m: &DMatrix<f64>, out: *mut f64, len: usize) -> Result<(), Fail> {
    let need = m.len();
    if out.is_null() {
        return Err(null("out"));
    }
    if len < need {
        return Err(Fail(DdmpcStatus::BufferTooSmall, format!("buffer holds {len} values, {need} needed")));
    }
    let out = std::slice::from_raw_parts_mut(out, need);
    for (i, v) in out.iter_mut().enumerate() {
        *v = m[(i / m.ncols(), i % m.ncols())];
    }
    Ok(())
}

unsafe fn datasets(list: *const *const DdmpcDataset, count: usize) -> Result<Vec<Dataset>, Fail> {
    if count == 0 {
        return Err(invalid("no datasets given"));
    }
    if list.is_null() {
        return Err(null("datasets"));
    }
    std::slice::from_raw_parts(list, count)
        .iter()
        .map(|&d| d.as_ref().map(|d| d.inner.clone()).ok_or_else(|| null("dataset handle")))
        .collect()
}

fn into_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ddmpc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ddmpc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ddmpc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a dataset from `x` (n by t+1) and `u` (m by t), both row-major.
///
/// # Safety
/// `x` and `u` must point to `n*(t+1)` and `m*t` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ddmpc_dataset_new(n: usize, m: usize, t: usize, x: *const f64, u: *const f64, out: *mut *mut DdmpcDataset) -> DdmpcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let xs = slice(x, n * (t + 1), "x")?;
        let us = slice(u, m * t, "u")?;
        let d = Dataset::new(DMatrix::from_row_slice(m, t, us), DMatrix::from_row_slice(n, t + 1, xs), None).map_err(invalid)?;
        *out = Box::into_raw(Box::new(DdmpcDataset { inner: d }));
        Ok(())
    })
}

/// Parses a dataset in the JSON format written by `ddmpc gen`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ddmpc_dataset_from_json(json: *const c_char, out: *mut *mut DdmpcDataset) -> DdmpcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let d = dataset_from_json(text(json, "json")?, "dataset").map_err(invalid)?;
        *out = Box::into_raw(Box::new(DdmpcDataset { inner: d }));
        Ok(())
    })
}

/// JSON rendering of a dataset; free with [`ddmpc_string_free`].
///
/// # Safety
/// `d` must be a live dataset handle or null.
#[no_mangle]
pub unsafe extern "C" fn ddmpc_dataset_to_json(d: *const DdmpcDataset) -> *mut c_char {
    match d.as_ref() {
        Some(d) => into_string(dataset_to_json(&d.inner)),
        None => ptr::null_mut(),
    }
}

/// Writes state dimension, input dimension and length.
///
/// # Safety
/// `d` must be a live handle; the outputs must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn ddmpc_dataset_dims(d: *const DdmpcDataset, n: *mut usize, m: *mut usize, t: *mut usize) -> DdmpcStatus {
    guard(|| {
        let d = &d.as_ref().ok_or_else(|| null("dataset"))?.inner;
        for (p, v) in [(n, d.n()), (m, d.m()), (t, d.t())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `d` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ddmpc_dataset_free(d: *mut DdmpcDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

fn parse_config(src: &str, is_json: bool) -> Result<SynthConfig, Fail> {
    parse_synth_config(src, if is_json { "config.json" } else { "config.toml" }).map_err(invalid)
}

/// Synthesizes a controller from a TOML (or JSON when `config_is_json` is
/// nonzero) configuration and `count` datasets.
///
/// # Safety
/// `config` must be NUL-terminated; `datasets` must hold `count` live handles.
#[no_mangle]
pub unsafe extern "C" fn ddmpc_synthesize(
    config: *const c_char,
    config_is_json: c_int,
    datasets_ptr: *const *const DdmpcDataset,
    count: usize,
    out: *mut *mut DdmpcController,
) -> DdmpcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = parse_config(text(config, "config")?, config_is_json != 0)?;
        let ds = datasets(datasets_ptr, count)?;
        let syn = cli::synthesize(&cfg, &ds)?;
        if !syn.report.pass {
            return Err(Fail(DdmpcStatus::Failed, format!("certificate check failed: {}", syn.report.notes.join("; "))));
        }
        *out = Box::into_raw(Box::new(DdmpcController { inner: ControllerFile::new(&syn, &cfg, &ds) }));
        Ok(())
    })
}

/// Loads a controller file written by `ddmpc synth`.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ddmpc_controller_from_json(json: *const c_char, out: *mut *mut DdmpcController) -> DdmpcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let file: ControllerFile = io::from_json(text(json, "json")?, "controller").map_err(invalid)?;
        *out = Box::into_raw(Box::new(DdmpcController { inner: file }));
        Ok(())
    })
}

/// Controller file as JSON; free with [`ddmpc_string_free`].
///
/// # Safety
/// `c` must be a live controller handle or null.
#[no_mangle]
pub unsafe extern "C" fn ddmpc_controller_to_json(c: *const DdmpcController) -> *mut c_char {
    match c.as_ref() {
        Some(c) => into_string(io::to_json(&c.inner)),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `c` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ddmpc_controller_free(c: *mut DdmpcController) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

unsafe fn controller<'a>(c: *const DdmpcController) -> Result<&'a ControllerFile, Fail> {
    c.as_ref().map(|c| &c.inner).ok_or_else(|| null("controller"))
}

/// Writes the state and input dimensions.
///
/// # Safety
/// `c` must be a live handle; the outputs must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn ddmpc_controller_dims(c: *const DdmpcController, n: *mut usize, m: *mut usize) -> DdmpcStatus {
    guard(|| {
        let k = &controller(c)?.controller.k;
        if let Some(n) = n.as_mut() {
            *n = k.ncols();
        }
        if let Some(m) = m.as_mut() {
            *m = k.nrows();
        }
        Ok(())
    })
}

/// Copies the gain K (m by n, row-major) into `out`.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ddmpc_controller_gain(c: *const DdmpcController, out: *mut f64, len: usize) -> DdmpcStatus {
    guard(|| write_matrix(&controller(c)?.controller.k, out, len))
}

/// Copies the Lyapunov matrix P (n by n, row-major) into `out`.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ddmpc_controller_lyapunov(c: *const DdmpcController, out: *mut f64, len: usize) -> DdmpcStatus {
    guard(|| write_matrix(&controller(c)?.controller.p, out, len))
}

/// Writes the certified cost bound α.
///
/// # Safety
/// `alpha` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ddmpc_controller_alpha(c: *const DdmpcController, alpha: *mut f64) -> DdmpcStatus {
    guard(|| {
        let a = controller(c)?.controller.alpha;
        *alpha.as_mut().ok_or_else(|| null("alpha"))? = a;
        Ok(())
    })
}

/// Re-checks the certificate against `count` datasets. `pass` receives 1 or
/// 0; `report_json`, if non-null, receives the full report (free with
/// [`ddmpc_string_free`]).
///
/// # Safety
/// Handles must be live; `pass` must be valid; `report_json` valid or null.
#[no_mangle]
pub unsafe extern "C" fn ddmpc_verify(
    c: *const DdmpcController,
    datasets_ptr: *const *const DdmpcDataset,
    count: usize,
    pass: *mut c_int,
    report_json: *mut *mut c_char,
) -> DdmpcStatus {
    guard(|| {
        let file = controller(c)?;
        let pass = pass.as_mut().ok_or_else(|| null("pass"))?;
        let ds = datasets(datasets_ptr, count)?;
        let report = cli::verify_file(file, &file.config, &ds)?;
        *pass = report.pass as c_int;
        if let Some(out) = report_json.as_mut() {
            *out = into_string(io::to_json(&report));
        }
        Ok(())
    })
}

/// Closed-loop summary filled by [`ddmpc_simulate`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DdmpcSimSummary {
    pub steps: usize,
    pub total_cost: f64,
    /// 1 if the state reached the convergence threshold.
    pub converged: c_int,
    /// First step below the threshold, or -1.
    pub convergence_step: i64,
    pub max_input_abs: f64,
    /// Smallest constraint slack along the run (negative means violated).
    pub min_margin: f64,
}

/// Simulates `u = K x` on a plant given in TOML from `x0` (length n).
///
/// # Safety
/// `plant_toml` NUL-terminated; `x0` holds `n` doubles; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ddmpc_simulate(
    c: *const DdmpcController,
    plant_toml: *const c_char,
    x0: *const f64,
    n: usize,
    steps: usize,
    out: *mut DdmpcSimSummary,
) -> DdmpcStatus {
    guard(|| {
        let file = controller(c)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let plant = parse_plant(text(plant_toml, "plant_toml")?, "plant.toml").map_err(invalid)?;
        let x0 = DVector::from_column_slice(slice(x0, n, "x0")?);
        let k = &file.controller.k;
        if plant.n() != k.ncols() || plant.m() != k.nrows() || n != k.ncols() {
            return Err(invalid(format!("plant is ({}, {}), x0 has {n} entries, K is {}x{}", plant.n(), plant.m(), k.nrows(), k.ncols())));
        }
        let w = file.config.weights().map_err(invalid)?;
        let rows = file.config.rows(plant.n(), plant.m()).map_err(invalid)?;
        let sr = simulate(&plant, k, &x0, steps, &w, &rows, Some(&file.controller.p), None).map_err(invalid)?;
        *out = DdmpcSimSummary {
            steps: sr.steps(),
            total_cost: sr.total_cost,
            converged: sr.converged as c_int,
            convergence_step: sr.convergence_step.map_or(-1, |s| s as i64),
            max_input_abs: sr.max_input_abs(),
            min_margin: sr.min_margin(),
        };
        Ok(())
    })
}
