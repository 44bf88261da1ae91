//! C interface to `inflap-fb`.
//!
//! Fields and reports are opaque handles owned by the caller and released
//! with the matching `*_free`. Every fallible call returns an
//! [`InflapStatus`]; on failure a message is available from
//! [`inflap_last_error`] until the next failing call on the same thread.
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use inflap_fb::barrier::{choose_parameters, verify_keq, BarrierParams};
use inflap_fb::lipschitz::{lipschitz_quotient, theorem_report, CertifyConfig};
use inflap_fb::report::{Check, Report};
use inflap_fb::solver::{manufactured_solution, solve, zero_initial, ProblemSpec, SolverConfig};
use inflap_fb::viscosity::{survey, SurveyConfig};
use inflap_fb::{Error, ScalarField};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InflapStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    GridCoverage = 4,
    NonConvergence = 5,
    Io = 6,
    Format = 7,
    Numeric = 8,
    Panic = 9,
}

impl From<&Error> for InflapStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) | Error::DegeneratePair | Error::ZeroXi | Error::OutOfDomainRay(_) => Self::Domain,
            Error::InvalidParams(_) | Error::PhaseMismatch(_) | Error::InconsistentPhase(_) | Error::BoundaryIndex(_) => {
                Self::InvalidArgument
            }
            Error::GridCoverage(_) => Self::GridCoverage,
            Error::NonConvergence { .. } => Self::NonConvergence,
            Error::Io { .. } => Self::Io,
            Error::GridFormat(_) | Error::Csv(_) | Error::Json(_) => Self::Format,
            Error::JetFit { .. } | Error::Overflow(_) => Self::Numeric,
        }
    }
}

/// Grid values on `[-1, 1]^n`.
pub struct InflapField {
    inner: ScalarField,
}

/// A finished JSON report.
pub struct InflapReport {
    json: CString,
    pass: bool,
}

/// Barrier parameters picked for given `K`, `a`, `b`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct InflapBarrierChoice {
    pub kappa: f64,
    pub theta: f64,
    pub kappa_bar: f64,
    pub lbar: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Fail(InflapStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(InflapStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(InflapStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(InflapStatus::InvalidArgument, msg.into())
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> InflapStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => InflapStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            InflapStatus::Panic
        }
    }
}

unsafe fn field_ref<'a>(p: *const InflapField, what: &str) -> Result<&'a ScalarField, Fail> {
    p.as_ref().map(|f| &f.inner).ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn boxed_field(inner: ScalarField) -> *mut InflapField {
    Box::into_raw(Box::new(InflapField { inner }))
}

fn boxed_report(r: &Report) -> Result<*mut InflapReport, Fail> {
    let json = CString::new(r.to_json()?).map_err(|_| invalid("report contains a NUL byte"))?;
    Ok(Box::into_raw(Box::new(InflapReport { json, pass: r.all_pass() })))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn inflap_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Copies `len` row-major values into a new field of `m` points per axis in
/// dimension `n` (1 or 2).
///
/// # Safety
/// `values` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn inflap_field_new(
    n: usize,
    m: usize,
    values: *const f64,
    len: usize,
    out: *mut *mut InflapField,
) -> InflapStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        let data = std::slice::from_raw_parts(values, len).to_vec();
        let f = ScalarField::new(n, m, data)?;
        put(out, boxed_field(f), "out")
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn inflap_field_load_csv(path: *const c_char, out: *mut *mut InflapField) -> InflapStatus {
    guard(|| {
        let f = ScalarField::load_csv(&path_arg(path)?)?;
        put(out, boxed_field(f), "out")
    })
}

/// # Safety
/// `field` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn inflap_field_save_csv(field: *const InflapField, path: *const c_char) -> InflapStatus {
    guard(|| {
        let f = field_ref(field, "field")?;
        f.save_csv(&path_arg(path)?)?;
        Ok(())
    })
}

/// Number of nodes, or 0 for NULL.
///
/// # Safety
/// `field` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn inflap_field_len(field: *const InflapField) -> usize {
    field.as_ref().map_or(0, |f| f.inner.len())
}

/// # Safety
/// `field` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn inflap_field_points_per_axis(field: *const InflapField) -> usize {
    field.as_ref().map_or(0, |f| f.inner.points_per_axis())
}

/// Copies the values out; `len` must equal [`inflap_field_len`].
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn inflap_field_copy_values(field: *const InflapField, out: *mut f64, len: usize) -> InflapStatus {
    guard(|| {
        let f = field_ref(field, "field")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len != f.len() {
            return Err(invalid(format!("buffer holds {len} values, field has {}", f.len())));
        }
        ptr::copy_nonoverlapping(f.values().as_ptr(), out, len);
        Ok(())
    })
}

/// # Safety
/// `field` must be NULL or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn inflap_field_free(field: *mut InflapField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// The exact two-phase profile with constant `c`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn inflap_manufactured(c: f64, n: usize, m: usize, out: *mut *mut InflapField) -> InflapStatus {
    guard(|| {
        let (u, _) = manufactured_solution(c, n, m)?;
        put(out, boxed_field(u), "out")
    })
}

/// Solves the manufactured problem from a zero interior guess. On
/// non-convergence `*out` still receives the last iterate.
///
/// # Safety
/// `out` must be writable; `iterations` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn inflap_solve_manufactured(
    c: f64,
    n: usize,
    m: usize,
    tol: f64,
    max_iters: usize,
    out: *mut *mut InflapField,
    iterations: *mut usize,
) -> InflapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (_, problem) = manufactured_solution(c, n, m)?;
        let cfg = SolverConfig { tol, max_iters, ..SolverConfig::default() };
        match solve(&problem, &zero_initial(&problem), &cfg) {
            Ok(sol) => {
                if !iterations.is_null() {
                    iterations.write(sol.iterations);
                }
                out.write(boxed_field(sol.field));
                Ok(())
            }
            Err(Error::NonConvergence { iterations: it, last_update, residual, last_iterate }) => {
                if !iterations.is_null() {
                    iterations.write(it);
                }
                out.write(boxed_field(*last_iterate.clone()));
                Err(Error::NonConvergence { iterations: it, last_update, residual, last_iterate }.into())
            }
            Err(e) => Err(e.into()),
        }
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn inflap_choose_parameters(k: f64, a: f64, b: f64, out: *mut InflapBarrierChoice) -> InflapStatus {
    guard(|| {
        let c = choose_parameters(k, a, b)?;
        let choice =
            InflapBarrierChoice { kappa: c.params.kappa, theta: c.params.theta, kappa_bar: c.kappa_bar, lbar: c.lbar };
        put(out, choice, "out")
    })
}

/// Samples the barrier inequality at `samples` interior points. `*pass` is
/// 1 when it holds strictly everywhere; `worst_margin` may be NULL.
///
/// # Safety
/// `pass` must be writable.
#[no_mangle]
pub unsafe extern "C" fn inflap_verify_keq(
    kappa: f64,
    theta: f64,
    l: f64,
    a: f64,
    b: f64,
    k: f64,
    samples: usize,
    pass: *mut i32,
    worst_margin: *mut f64,
) -> InflapStatus {
    guard(|| {
        let params = BarrierParams::new(kappa, theta)?;
        let cert = verify_keq(&params, l, a, b, k, samples)?;
        if !worst_margin.is_null() {
            worst_margin.write(cert.worst_margin);
        }
        put(pass, cert.pass as i32, "pass")
    })
}

/// Exhaustive sup of the difference quotient over the ball of `radius`.
///
/// # Safety
/// `field` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn inflap_lipschitz_quotient(field: *const InflapField, radius: f64, out: *mut f64) -> InflapStatus {
    guard(|| {
        let q = lipschitz_quotient(field_ref(field, "field")?, radius)?;
        put(out, q.value, "out")
    })
}

unsafe fn problem_for(
    u: &ScalarField,
    fplus: *const InflapField,
    fminus: *const InflapField,
    lambda: f64,
) -> Result<ProblemSpec, Fail> {
    let fp = field_ref(fplus, "fplus")?.clone();
    let fm = field_ref(fminus, "fminus")?.clone();
    Ok(ProblemSpec::new(fp, fm, lambda, u.clone())?)
}

/// Runs the doubling-of-variables certificate on `u`. `l_override <= 0`
/// keeps the ledger's `L`. A failed certificate is not an error: check
/// [`inflap_report_pass`].
///
/// # Safety
/// All handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn inflap_certify(
    u: *const InflapField,
    fplus: *const InflapField,
    fminus: *const InflapField,
    lambda: f64,
    l_override: f64,
    out: *mut *mut InflapReport,
) -> InflapStatus {
    guard(|| {
        let u = field_ref(u, "u")?;
        let problem = problem_for(u, fplus, fminus, lambda)?;
        let cfg = CertifyConfig { l_override: (l_override > 0.0).then_some(l_override), ..CertifyConfig::default() };
        let rep = theorem_report(u, &problem, &BarrierParams::default(), &cfg)?;
        let mut r = Report::new(&serde_json::json!({ "command": "certify", "Lambda": lambda, "certify": cfg }))?
            .with_ledger(&rep.ledger)?
            .with_results(&rep)?;
        r.push(Check::flag("ledger_rules", rep.ledger_rules_hold));
        for c in &rep.centers {
            let z = c.search.z0;
            r.push(Check::le(format!("no_witness_at({}, {})", z[0], z[1]), c.search.max_gap, c.search.tau_w));
        }
        put(out, boxed_report(&r)?, "out")
    })
}

/// Viscosity survey of `u` with default tolerances.
///
/// # Safety
/// All handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn inflap_viscosity(
    u: *const InflapField,
    fplus: *const InflapField,
    fminus: *const InflapField,
    lambda: f64,
    out: *mut *mut InflapReport,
) -> InflapStatus {
    guard(|| {
        let u = field_ref(u, "u")?;
        let problem = problem_for(u, fplus, fminus, lambda)?;
        let cfg = SurveyConfig::defaults_for(u);
        let s = survey(u, &problem, &cfg)?;
        let mut r = Report::new(&serde_json::json!({ "command": "viscosity", "Lambda": lambda }))?
            .with_results(&serde_json::json!({ "survey_config": cfg, "survey": s }))?;
        r.push(Check::le("interior_inequalities", s.interior_failed as f64, 0.0));
        r.push(Check::le("flux_condition", s.fb_failed as f64, 0.0));
        put(out, boxed_report(&r)?, "out")
    })
}

/// 1 when every check passed, 0 otherwise (or for NULL).
///
/// # Safety
/// `report` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn inflap_report_pass(report: *const InflapReport) -> i32 {
    report.as_ref().map_or(0, |r| r.pass as i32)
}

/// The report as JSON, owned by the handle.
///
/// # Safety
/// `report` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn inflap_report_json(report: *const InflapReport) -> *const c_char {
    report.as_ref().map_or(ptr::null(), |r| r.json.as_ptr())
}

/// # Safety
/// `report` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn inflap_report_write(report: *const InflapReport, path: *const c_char) -> InflapStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let path = path_arg(path)?;
        std::fs::write(&path, r.json.as_bytes()).map_err(|source| Error::Io { path, source })?;
        Ok(())
    })
}

/// # Safety
/// `report` must be NULL or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn inflap_report_free(report: *mut InflapReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
