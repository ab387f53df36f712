//! C ABI over `npss`.
//!
//! Objects cross the boundary as opaque handles created by `npss_*_new`,
//! `npss_*_load` or a computation, and released with the matching
//! `npss_*_free`. Every fallible call returns an [`NpssStatus`]; on failure
//! `npss_last_error_message` describes the error for the calling thread.
//! Strings returned as `char *` are owned by the caller and released with
//! `npss_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use npss::{
    ActivationMatrix, MatrixFormat, Method, NpssError, PValueMatrix, ScanConfig, ScanReport, ScanResult, ScoreConfig,
    Statistic, StrategyReport, StrategyResult, StrategySpec, Tail,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpssStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    ValidationError = 4,
    ShapeError = 5,
    IoError = 6,
    IndexError = 7,
    DomainError = 8,
    LabelMismatch = 9,
    EmptySource = 10,
    EmptyTest = 11,
    BufferTooSmall = 12,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpssTail {
    Left = 0,
    Right = 1,
    Two = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpssStatistic {
    Hc = 0,
    Bj = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpssMethod {
    ScanL = 0,
    ScanR = 1,
    ScanLr = 2,
    Scan2 = 3,
}

/// Opaque activation matrix.
pub struct NpssMatrix(ActivationMatrix);

/// Opaque p-value matrix.
pub struct NpssPValues(PValueMatrix);

/// Opaque scan result with its JSON report.
pub struct NpssScanResult {
    result: ScanResult,
    json: String,
}

/// Opaque strategy result with its JSON report.
pub struct NpssStrategyResult {
    result: StrategyResult,
    json: String,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Fail(NpssStatus);

impl From<NpssError> for Fail {
    fn from(e: NpssError) -> Self {
        let status = match &e {
            NpssError::Io { .. } => NpssStatus::IoError,
            NpssError::Parse { .. } | NpssError::Json(_) => NpssStatus::ParseError,
            NpssError::Validation(_) => NpssStatus::ValidationError,
            NpssError::Shape(_) => NpssStatus::ShapeError,
            NpssError::EmptySource { .. } => NpssStatus::EmptySource,
            NpssError::Domain(_) => NpssStatus::DomainError,
            NpssError::Index { .. } => NpssStatus::IndexError,
            NpssError::LabelMismatch(_) => NpssStatus::LabelMismatch,
            NpssError::EmptyTest { .. } => NpssStatus::EmptyTest,
            NpssError::InvalidArgument(_) => NpssStatus::InvalidArgument,
        };
        set_last_error(e.to_string());
        Fail(status)
    }
}

fn fail(status: NpssStatus, message: &str) -> Fail {
    set_last_error(message.to_string());
    Fail(status)
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NpssStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            NpssStatus::Ok
        }
        Ok(Err(Fail(status))) => status,
        Err(_) => {
            set_last_error("panic inside npss".into());
            NpssStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| fail(NpssStatus::NullPointer, &format!("{what} is NULL")))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(fail(NpssStatus::NullPointer, "path is NULL"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(NpssStatus::InvalidArgument, "path is not valid UTF-8"))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(fail(NpssStatus::NullPointer, "output pointer is NULL"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn copy_out(src: &[usize], buf: *mut usize, len: usize) -> Result<(), Fail> {
    if src.len() > len {
        return Err(fail(
            NpssStatus::BufferTooSmall,
            &format!("buffer holds {len} entries, {} needed", src.len()),
        ));
    }
    if !src.is_empty() {
        if buf.is_null() {
            return Err(fail(NpssStatus::NullPointer, "buffer is NULL"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    }
    Ok(())
}

fn into_c_string(s: &str) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

impl From<NpssTail> for Tail {
    fn from(t: NpssTail) -> Self {
        match t {
            NpssTail::Left => Tail::Left,
            NpssTail::Right => Tail::Right,
            NpssTail::Two => Tail::Two,
        }
    }
}

impl From<NpssStatistic> for Statistic {
    fn from(s: NpssStatistic) -> Self {
        match s {
            NpssStatistic::Hc => Statistic::HigherCriticism,
            NpssStatistic::Bj => Statistic::BerkJones,
        }
    }
}

impl From<NpssMethod> for Method {
    fn from(m: NpssMethod) -> Self {
        match m {
            NpssMethod::ScanL => Method::ScanL,
            NpssMethod::ScanR => Method::ScanR,
            NpssMethod::ScanLr => Method::ScanLR,
            NpssMethod::Scan2 => Method::Scan2,
        }
    }
}

fn scan_config(statistic: NpssStatistic, restarts: usize, seed: u64) -> ScanConfig {
    ScanConfig {
        restarts,
        seed,
        score_cfg: ScoreConfig::with_statistic(statistic.into()),
        ..ScanConfig::default()
    }
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next `npss_*` call on the same thread.
#[no_mangle]
pub extern "C" fn npss_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn npss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn npss_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Gated Higher Criticism statistic.
///
/// # Safety
/// `out` must be a valid pointer to a `double`.
#[no_mangle]
pub unsafe extern "C" fn npss_hc_statistic(alpha: f64, n_alpha: usize, n: usize, out: *mut f64) -> NpssStatus {
    guard(|| {
        let v = npss::hc_statistic(alpha, n_alpha, n)?;
        *out.as_mut()
            .ok_or_else(|| fail(NpssStatus::NullPointer, "out is NULL"))? = v;
        Ok(())
    })
}

/// Gated Berk-Jones statistic.
///
/// # Safety
/// `out` must be a valid pointer to a `double`.
#[no_mangle]
pub unsafe extern "C" fn npss_bj_statistic(alpha: f64, n_alpha: usize, n: usize, out: *mut f64) -> NpssStatus {
    guard(|| {
        let v = npss::bj_statistic(alpha, n_alpha, n)?;
        *out.as_mut()
            .ok_or_else(|| fail(NpssStatus::NullPointer, "out is NULL"))? = v;
        Ok(())
    })
}

/// Builds a matrix from `nrows * ncols` row-major values. Rows are named
/// `r0, r1, ...`.
///
/// # Safety
/// `values` must point to `nrows * ncols` readable doubles; `out` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn npss_matrix_new(
    values: *const f64,
    nrows: usize,
    ncols: usize,
    out: *mut *mut NpssMatrix,
) -> NpssStatus {
    guard(|| {
        let cells = nrows
            .checked_mul(ncols)
            .ok_or_else(|| fail(NpssStatus::InvalidArgument, "shape overflows"))?;
        if values.is_null() && cells > 0 {
            return Err(fail(NpssStatus::NullPointer, "values is NULL"));
        }
        let data = if cells == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(values, cells).to_vec()
        };
        let ids = (0..nrows).map(|i| format!("r{i}")).collect();
        let m = ActivationMatrix::new(data, nrows, ncols, ids)?;
        store(out, NpssMatrix(m))
    })
}

/// Loads a matrix; paths ending in `.csv` are CSV, anything else the
/// binary format.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn npss_matrix_load(path: *const c_char, out: *mut *mut NpssMatrix) -> NpssStatus {
    guard(|| {
        let path = path_arg(path)?;
        let m = npss::load_matrix(&path, MatrixFormat::from_path(&path))?;
        store(out, NpssMatrix(m))
    })
}

/// # Safety
/// `m` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn npss_matrix_save(m: *const NpssMatrix, path: *const c_char) -> NpssStatus {
    guard(|| {
        let m = borrow(m, "matrix")?;
        let path = path_arg(path)?;
        npss::save_matrix(&m.0, &path, MatrixFormat::from_path(&path))?;
        Ok(())
    })
}

/// # Safety
/// `m` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npss_matrix_nrows(m: *const NpssMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.nrows())
}

/// # Safety
/// `m` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npss_matrix_ncols(m: *const NpssMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.ncols())
}

/// # Safety
/// `m` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn npss_matrix_free(m: *mut NpssMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Empirical p-values of `test` against `reference`.
///
/// # Safety
/// Handles must be live; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn npss_pvalues_compute(
    reference: *const NpssMatrix,
    test: *const NpssMatrix,
    tail: NpssTail,
    seed: u64,
    out: *mut *mut NpssPValues,
) -> NpssStatus {
    guard(|| {
        let reference = borrow(reference, "reference")?;
        let test = borrow(test, "test")?;
        let pv = npss::empirical_pvalues(&reference.0, &test.0, tail.into(), seed)?;
        store(out, NpssPValues(pv))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn npss_pvalues_load(path: *const c_char, out: *mut *mut NpssPValues) -> NpssStatus {
    guard(|| {
        let path = path_arg(path)?;
        store(out, NpssPValues(npss::load_pvalues(&path)?))
    })
}

/// # Safety
/// `pv` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn npss_pvalues_save(pv: *const NpssPValues, path: *const c_char) -> NpssStatus {
    guard(|| {
        let pv = borrow(pv, "pvalues")?;
        npss::save_pvalues(&pv.0, path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `pv` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npss_pvalues_nrows(pv: *const NpssPValues) -> usize {
    pv.as_ref().map_or(0, |p| p.0.nrows())
}

/// # Safety
/// `pv` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npss_pvalues_ncols(pv: *const NpssPValues) -> usize {
    pv.as_ref().map_or(0, |p| p.0.ncols())
}

/// Reads one cell. Any of the output pointers may be NULL.
///
/// # Safety
/// `pv` must be a live handle; non-NULL outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn npss_pvalues_get(
    pv: *const NpssPValues,
    row: usize,
    col: usize,
    p: *mut f64,
    pmin: *mut f64,
    pmax: *mut f64,
) -> NpssStatus {
    guard(|| {
        let pv = &borrow(pv, "pvalues")?.0;
        if row >= pv.nrows() || col >= pv.ncols() {
            return Err(NpssError::Index {
                index: if row >= pv.nrows() { row } else { col },
                len: if row >= pv.nrows() { pv.nrows() } else { pv.ncols() },
            }
            .into());
        }
        let (lo, hi) = pv.bounds(row, col);
        if let Some(p) = p.as_mut() {
            *p = pv.get(row, col);
        }
        if let Some(pmin) = pmin.as_mut() {
            *pmin = lo;
        }
        if let Some(pmax) = pmax.as_mut() {
            *pmax = hi;
        }
        Ok(())
    })
}

/// # Safety
/// `pv` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn npss_pvalues_free(pv: *mut NpssPValues) {
    if !pv.is_null() {
        drop(Box::from_raw(pv));
    }
}

/// Multi-restart subset scan of a p-value matrix.
///
/// # Safety
/// `pv` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn npss_scan(
    pv: *const NpssPValues,
    statistic: NpssStatistic,
    restarts: usize,
    seed: u64,
    out: *mut *mut NpssScanResult,
) -> NpssStatus {
    guard(|| {
        let pv = &borrow(pv, "pvalues")?.0;
        let cfg = scan_config(statistic, restarts, seed);
        let result = npss::scan(pv, &cfg)?;
        let json = serde_json::to_string_pretty(&ScanReport::new(&result, pv, &cfg)).map_err(NpssError::from)?;
        store(out, NpssScanResult { result, json })
    })
}

/// # Safety
/// `r` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npss_scan_result_score(r: *const NpssScanResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.result.score)
}

/// # Safety
/// `r` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npss_scan_result_alpha(r: *const NpssScanResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.result.best_alpha)
}

/// # Safety
/// `r` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npss_scan_result_row_count(r: *const NpssScanResult) -> usize {
    r.as_ref().map_or(0, |r| r.result.rows.len())
}

/// # Safety
/// `r` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npss_scan_result_col_count(r: *const NpssScanResult) -> usize {
    r.as_ref().map_or(0, |r| r.result.cols.len())
}

/// Copies the selected row indices into `buf` (capacity `len`).
///
/// # Safety
/// `r` must be a live handle; `buf` must hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn npss_scan_result_rows(r: *const NpssScanResult, buf: *mut usize, len: usize) -> NpssStatus {
    guard(|| copy_out(&borrow(r, "scan result")?.result.rows, buf, len))
}

/// Copies the selected column indices into `buf` (capacity `len`).
///
/// # Safety
/// `r` must be a live handle; `buf` must hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn npss_scan_result_cols(r: *const NpssScanResult, buf: *mut usize, len: usize) -> NpssStatus {
    guard(|| copy_out(&borrow(r, "scan result")?.result.cols, buf, len))
}

/// JSON report; free with `npss_string_free`. NULL if `r` is NULL.
///
/// # Safety
/// `r` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npss_scan_result_json(r: *const NpssScanResult) -> *mut c_char {
    r.as_ref().map_or(ptr::null_mut(), |r| into_c_string(&r.json))
}

/// # Safety
/// `r` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn npss_scan_result_free(r: *mut NpssScanResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Runs a detection strategy (`k` is used by `NPSS_METHOD_SCAN2` only).
///
/// # Safety
/// Handles must be live; `out` a valid pointer.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn npss_run_strategy(
    reference: *const NpssMatrix,
    test: *const NpssMatrix,
    method: NpssMethod,
    k: usize,
    statistic: NpssStatistic,
    restarts: usize,
    seed: u64,
    out: *mut *mut NpssStrategyResult,
) -> NpssStatus {
    guard(|| {
        let reference = &borrow(reference, "reference")?.0;
        let test = &borrow(test, "test")?.0;
        let cfg = scan_config(statistic, restarts, seed);
        let spec = StrategySpec {
            k,
            ..StrategySpec::new(method.into())
        };
        let result = npss::run_strategy(reference, test, &spec, &cfg)?;
        let json = serde_json::to_string_pretty(&StrategyReport::new(&result, test, &cfg)).map_err(NpssError::from)?;
        store(out, NpssStrategyResult { result, json })
    })
}

/// # Safety
/// `r` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npss_strategy_flagged_count(r: *const NpssStrategyResult) -> usize {
    r.as_ref().map_or(0, |r| r.result.flagged_rows.len())
}

/// Copies the flagged test-row indices into `buf` (capacity `len`).
///
/// # Safety
/// `r` must be a live handle; `buf` must hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn npss_strategy_flagged_rows(
    r: *const NpssStrategyResult,
    buf: *mut usize,
    len: usize,
) -> NpssStatus {
    guard(|| copy_out(&borrow(r, "strategy result")?.result.flagged_rows, buf, len))
}

/// Number of constituent scans (1 for scanL/scanR, 2 for scanLR, up to k
/// for scan2).
///
/// # Safety
/// `r` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npss_strategy_scan_count(r: *const NpssStrategyResult) -> usize {
    r.as_ref().map_or(0, |r| r.result.per_scan.len())
}

/// JSON report; free with `npss_string_free`. NULL if `r` is NULL.
///
/// # Safety
/// `r` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npss_strategy_json(r: *const NpssStrategyResult) -> *mut c_char {
    r.as_ref().map_or(ptr::null_mut(), |r| into_c_string(&r.json))
}

/// # Safety
/// `r` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn npss_strategy_free(r: *mut NpssStrategyResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
