//! C ABI over `limitrd`.
//!
//! Every fallible function returns an [`LrdStatus`] and writes its result
//! through an out-pointer. On failure the message is available from
//! [`lrd_last_error_message`] on the same thread. Handles are opaque and must
//! be released with their `*_free` function; strings returned by the library
//! are released with [`lrd_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use limitrd::estimators::estimate_event_study;
use limitrd::io::load_panel;
use limitrd::montecarlo::{run_study, McConfig, SchemeSummary};
use limitrd::validator::{validate_panel, ValidateOptions};
use limitrd::{ClassificationScheme, Error, EstimateSet, EventPanel, KernelSpec, ModelSpec, Outcome};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    /// Malformed CSV or JSON input.
    Parse = 4,
    Io = 5,
    /// Rank deficiency, non-convergence or an unidentified model.
    Numerical = 6,
    OutOfRange = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrdScheme {
    TrueAmount = 0,
    ReportedAmount = 1,
    RoundedLimit = 2,
}

impl From<LrdScheme> for ClassificationScheme {
    fn from(s: LrdScheme) -> Self {
        match s {
            LrdScheme::TrueAmount => ClassificationScheme::TrueAmount,
            LrdScheme::ReportedAmount => ClassificationScheme::ReportedAmount,
            LrdScheme::RoundedLimit => ClassificationScheme::RoundedLimit,
        }
    }
}

/// A loaded panel.
pub struct LrdPanel {
    inner: EventPanel,
}

/// One fitted event study.
pub struct LrdEstimate {
    inner: EstimateSet,
    names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(LrdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::MalformedRow { .. } | Error::UnknownEvent { .. } | Error::Calendar(_) => LrdStatus::Parse,
            Error::Csv(_) | Error::Json(_) => LrdStatus::Parse,
            Error::Io(_) => LrdStatus::Io,
            Error::NonConvergence { .. }
            | Error::RankDeficient(_)
            | Error::Numerical(_)
            | Error::SingleCluster(_)
            | Error::Unidentified(_) => LrdStatus::Numerical,
            _ => LrdStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(LrdStatus::Parse, e.to_string())
    }
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LrdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LrdStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            LrdStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(LrdStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(LrdStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn optional_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn owned_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|e| Failure(LrdStatus::InvalidArgument, e.to_string()))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lrd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn lrd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lrd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// HMDA rounding of a dollar amount to thousands, half up.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lrd_round_hmda(amount_dollars: f64, out: *mut u32) -> LrdStatus {
    guard(|| write(out, limitrd::round_hmda(amount_dollars)?, "out"))
}

/// Conforming status under `scheme`. `true_amount` is ignored unless
/// `has_true_amount` is set; the true-amount scheme requires it.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lrd_is_conforming(
    true_amount: f64,
    has_true_amount: bool,
    reported_amount: u32,
    limit: f64,
    scheme: LrdScheme,
    out: *mut bool,
) -> LrdStatus {
    guard(|| {
        let t = has_true_amount.then_some(true_amount);
        let c = limitrd::is_conforming(t, reported_amount, limit, scheme.into()).ok_or_else(|| {
            Failure(
                LrdStatus::InvalidArgument,
                "true-amount scheme needs a true amount".into(),
            )
        })?;
        write(out, c, "out")
    })
}

/// `ln(amount / limit)`, both in thousands.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lrd_log_distance(amount: f64, limit: f64, out: *mut f64) -> LrdStatus {
    guard(|| write(out, limitrd::log_distance(amount, limit)?, "out"))
}

/// Parses a panel from CSV text and an event calendar in JSON.
///
/// # Safety
/// Both strings must be nul-terminated; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lrd_panel_from_csv(
    csv: *const c_char,
    calendar_json: *const c_char,
    out: *mut *mut LrdPanel,
) -> LrdStatus {
    guard(|| {
        let csv = text(csv, "csv")?;
        let cal = text(calendar_json, "calendar_json")?;
        let inner = load_panel(csv.as_bytes(), cal.as_bytes())?;
        write(out, Box::into_raw(Box::new(LrdPanel { inner })), "out")
    })
}

/// Number of records, or 0 for null.
///
/// # Safety
/// `panel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lrd_panel_len(panel: *const LrdPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.inner.len())
}

/// # Safety
/// `panel` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn lrd_panel_free(panel: *mut LrdPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// Lints the panel and writes the report as JSON. `options_json` may be null
/// for the defaults (window 4, reference period -1).
///
/// # Safety
/// `panel` must be a live handle; `out_json` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lrd_validate(
    panel: *const LrdPanel,
    options_json: *const c_char,
    out_json: *mut *mut c_char,
) -> LrdStatus {
    guard(|| {
        let panel = panel.as_ref().ok_or_else(|| null("panel"))?;
        let options = match optional_text(options_json, "options_json")? {
            Some(s) => serde_json::from_str::<ValidateOptions>(s)?,
            None => ValidateOptions::default(),
        };
        let report = validate_panel(&panel.inner, &options)?;
        write(out_json, owned_string(report.to_json()?)?, "out_json")
    })
}

/// Fits the event study at one bandwidth. `spec_json` may be null for the
/// default approval specification.
///
/// # Safety
/// `panel` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lrd_event_study(
    panel: *const LrdPanel,
    spec_json: *const c_char,
    bandwidth: f64,
    out: *mut *mut LrdEstimate,
) -> LrdStatus {
    guard(|| {
        let panel = panel.as_ref().ok_or_else(|| null("panel"))?;
        let spec = match optional_text(spec_json, "spec_json")? {
            Some(s) => serde_json::from_str::<ModelSpec>(s)?,
            None => ModelSpec::new(Outcome::Approved),
        };
        let inner = estimate_event_study(&panel.inner, &spec, &KernelSpec::gaussian(bandwidth))?;
        let names = inner
            .names
            .iter()
            .map(|n| CString::new(n.as_str()).expect("coefficient names have no nul"))
            .collect();
        write(out, Box::into_raw(Box::new(LrdEstimate { inner, names })), "out")
    })
}

/// Number of estimated coefficients, or 0 for null.
///
/// # Safety
/// `est` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lrd_estimate_len(est: *const LrdEstimate) -> usize {
    est.as_ref().map_or(0, |e| e.inner.names.len())
}

/// Name of coefficient `index`, owned by the handle; null when out of range.
///
/// # Safety
/// `est` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lrd_estimate_name(est: *const LrdEstimate, index: usize) -> *const c_char {
    est.as_ref()
        .and_then(|e| e.names.get(index))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Position of the coefficient called `name`.
///
/// # Safety
/// `est` must be a live handle, `name` nul-terminated, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lrd_estimate_find(
    est: *const LrdEstimate,
    name: *const c_char,
    out: *mut usize,
) -> LrdStatus {
    guard(|| {
        let est = est.as_ref().ok_or_else(|| null("est"))?;
        let name = text(name, "name")?;
        let i = est
            .inner
            .index_of(name)
            .ok_or_else(|| Failure(LrdStatus::OutOfRange, format!("no coefficient `{name}`")))?;
        write(out, i, "out")
    })
}

/// Coefficient `index` and its clustered standard error without small-sample
/// correction. The error is NaN when the two-way variance is negative.
///
/// # Safety
/// `est` must be a live handle; `coef` and `std_error` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lrd_estimate_coefficient(
    est: *const LrdEstimate,
    index: usize,
    coef: *mut f64,
    std_error: *mut f64,
) -> LrdStatus {
    guard(|| {
        let est = est.as_ref().ok_or_else(|| null("est"))?;
        let b = *est.inner.coefficients.get(index).ok_or_else(|| {
            Failure(
                LrdStatus::OutOfRange,
                format!("coefficient {index} of {}", est.names.len()),
            )
        })?;
        write(coef, b, "coef")?;
        write(std_error, est.inner.std_errors()[index], "std_error")
    })
}

/// Observations used by the fit, or 0 for null.
///
/// # Safety
/// `est` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lrd_estimate_n_obs(est: *const LrdEstimate) -> usize {
    est.as_ref().map_or(0, |e| e.inner.n_obs)
}

/// Full estimate set as JSON.
///
/// # Safety
/// `est` must be a live handle; `out_json` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lrd_estimate_to_json(
    est: *const LrdEstimate,
    out_json: *mut *mut c_char,
) -> LrdStatus {
    guard(|| {
        let est = est.as_ref().ok_or_else(|| null("est"))?;
        write(
            out_json,
            owned_string(serde_json::to_string(&est.inner)?)?,
            "out_json",
        )
    })
}

/// # Safety
/// `est` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn lrd_estimate_free(est: *mut LrdEstimate) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

#[derive(serde::Serialize)]
struct ScenarioSummary<'a> {
    scenario: &'a str,
    replications: usize,
    failures: usize,
    summaries: &'a [SchemeSummary],
}

/// Runs the Monte Carlo study for every scenario of `config_json` (null for
/// the default configuration) and writes per-scheme summaries as a JSON array.
///
/// # Safety
/// `config_json` must be null or nul-terminated; `out_json` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lrd_mc_study(config_json: *const c_char, out_json: *mut *mut c_char) -> LrdStatus {
    guard(|| {
        let config = match optional_text(config_json, "config_json")? {
            Some(s) => serde_json::from_str::<McConfig>(s)?,
            None => McConfig::default(),
        };
        let studies = config
            .scenarios
            .iter()
            .map(|sc| run_study(&config.params(sc), config.replications).map(|r| (sc.name.as_str(), r)))
            .collect::<limitrd::Result<Vec<_>>>()?;
        let rows: Vec<ScenarioSummary> = studies
            .iter()
            .map(|(name, r)| ScenarioSummary {
                scenario: name,
                replications: r.replications.len(),
                failures: r.failures.len(),
                summaries: &r.summaries,
            })
            .collect();
        write(out_json, owned_string(serde_json::to_string(&rows)?)?, "out_json")
    })
}
