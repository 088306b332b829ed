//! C interface to `threshseg`.
//!
//! Images and results are opaque handles created and freed through this
//! API. Every fallible call returns a [`TsStatus`]; on failure a message is
//! available from [`ts_last_error_message`] on the same thread until the next
//! failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use threshseg::{image_io, Error, Grid, ImageField, InitStrategy, SolveResult, SolverConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    ShapeMismatch = 5,
    DecayViolation = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsInit {
    Stripes = 0,
    Circles = 1,
    Random = 2,
    Kmeans = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TsConfig {
    pub phases: u32,
    pub dt: f64,
    pub lambda: f64,
    pub tau: f64,
    pub max_iter: u32,
    pub init: TsInit,
    pub seed: u64,
    /// Nonzero to abort when the energy increases between iterations.
    pub assert_decay: u8,
}

/// Opaque image handle.
pub struct TsImage {
    field: ImageField,
}

/// Opaque segmentation result handle.
pub struct TsResult {
    width: usize,
    height: usize,
    result: SolveResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> TsStatus {
    match e {
        Error::Unreadable { .. } | Error::Io { .. } => TsStatus::Io,
        Error::UnsupportedFormat(_) | Error::CorruptHeader(_) | Error::Encode(_) => {
            TsStatus::Format
        }
        Error::ShapeMismatch(_) | Error::LabelOutOfRange { .. } => TsStatus::ShapeMismatch,
        Error::DecayViolation(_) => TsStatus::DecayViolation,
        _ => TsStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (TsStatus, String)>) -> TsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TsStatus::Panic
        }
    }
}

fn fail(e: Error) -> (TsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (TsStatus, String) {
    (TsStatus::NullPointer, format!("{what} is null"))
}

impl From<TsInit> for InitStrategy {
    fn from(i: TsInit) -> Self {
        match i {
            TsInit::Stripes => InitStrategy::Stripes,
            TsInit::Circles => InitStrategy::Circles,
            TsInit::Random => InitStrategy::Random,
            TsInit::Kmeans => InitStrategy::Kmeans,
        }
    }
}

impl From<InitStrategy> for TsInit {
    fn from(i: InitStrategy) -> Self {
        match i {
            InitStrategy::Stripes => TsInit::Stripes,
            InitStrategy::Circles => TsInit::Circles,
            InitStrategy::Random => TsInit::Random,
            InitStrategy::Kmeans => TsInit::Kmeans,
        }
    }
}

impl From<&TsConfig> for SolverConfig {
    fn from(c: &TsConfig) -> Self {
        SolverConfig {
            phases: c.phases as usize,
            dt: c.dt,
            lambda: c.lambda,
            tau: c.tau,
            max_iter: c.max_iter as usize,
            init: c.init.into(),
            seed: c.seed,
            assert_decay: c.assert_decay != 0,
        }
    }
}

/// The library defaults: 2 phases, dt 0.01, lambda 0.003, tau 0, 500
/// iterations, circles initialization, seed 0, decay check on.
#[no_mangle]
pub extern "C" fn ts_config_default() -> TsConfig {
    let d = SolverConfig::default();
    TsConfig {
        phases: d.phases as u32,
        dt: d.dt,
        lambda: d.lambda,
        tau: d.tau,
        max_iter: d.max_iter as u32,
        init: d.init.into(),
        seed: d.seed,
        assert_decay: 1,
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ts_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds an image from `width * height * channels` interleaved samples,
/// row-major, expected in `[0, 1]`.
///
/// # Safety
/// `values` must point to `width * height * channels` readable doubles and
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_image_new(
    width: usize,
    height: usize,
    channels: usize,
    values: *const f64,
    out: *mut *mut TsImage,
) -> TsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if values.is_null() {
            return Err(null("values"));
        }
        let len = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| {
                (
                    TsStatus::InvalidArgument,
                    "image size overflows".to_string(),
                )
            })?;
        let data = std::slice::from_raw_parts(values, len).to_vec();
        let grid = Grid::for_image(width, height).map_err(fail)?;
        let field = ImageField::new(grid, channels, data).map_err(fail)?;
        *out = Box::into_raw(Box::new(TsImage { field }));
        Ok(())
    })
}

/// Loads a PNG, binary PGM or binary PPM and scales samples to `[0, 1]`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_image_load(path: *const c_char, out: *mut *mut TsImage) -> TsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (TsStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let raw = image_io::load_image(path).map_err(fail)?;
        let field = image_io::normalize(&raw).map_err(fail)?;
        *out = Box::into_raw(Box::new(TsImage { field }));
        Ok(())
    })
}

/// # Safety
/// `image` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ts_image_free(image: *mut TsImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Segments `image`. A null `config` means the defaults.
///
/// # Safety
/// `image` must be a live handle, `config` null or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ts_solve(
    image: *const TsImage,
    config: *const TsConfig,
    out: *mut *mut TsResult,
) -> TsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let image = image.as_ref().ok_or_else(|| null("image"))?;
        let config = match config.as_ref() {
            Some(c) => SolverConfig::from(c),
            None => SolverConfig::from(&ts_config_default()),
        };
        let result = threshseg::solve(&image.field, &config).map_err(fail)?;
        *out = Box::into_raw(Box::new(TsResult {
            width: image.field.grid().nx(),
            height: image.field.grid().ny(),
            result,
        }));
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ts_result_free(result: *mut TsResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_result_width(result: *const TsResult) -> usize {
    result.as_ref().map_or(0, |r| r.width)
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_result_height(result: *const TsResult) -> usize {
    result.as_ref().map_or(0, |r| r.height)
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_result_iterations(result: *const TsResult) -> usize {
    result.as_ref().map_or(0, |r| r.result.iterations())
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_result_converged(result: *const TsResult) -> bool {
    result.as_ref().is_some_and(|r| r.result.converged)
}

/// Total energy of the final partition, or NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_result_energy(result: *const TsResult) -> f64 {
    result
        .as_ref()
        .map_or(f64::NAN, |r| r.result.final_energy.total)
}

/// Copies the `width * height` phase labels, row-major, into `labels`.
///
/// # Safety
/// `result` must be a live handle and `labels` must point to `len` writable
/// `uint16_t`.
#[no_mangle]
pub unsafe extern "C" fn ts_result_labels(
    result: *const TsResult,
    labels: *mut u16,
    len: usize,
) -> TsStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        if labels.is_null() {
            return Err(null("labels"));
        }
        let src = r.result.final_partition.labels();
        if len != src.len() {
            return Err((
                TsStatus::ShapeMismatch,
                format!("buffer holds {len} labels, result has {}", src.len()),
            ));
        }
        std::slice::from_raw_parts_mut(labels, len).copy_from_slice(src);
        Ok(())
    })
}
