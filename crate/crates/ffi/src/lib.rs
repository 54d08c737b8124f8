//! C interface to the degensim solvers.
//!
//! Every fallible call returns a [`DsStatus`]; on anything other than
//! `DS_STATUS_OK` a description is kept per thread and can be fetched with
//! [`ds_last_error_message`]. Objects are opaque handles released by their
//! matching `*_free` function; passing NULL to a free function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use degensim::app;
use degensim::config::{parse_config, parse_str, RunConfig};
use degensim::coupled_solver::{picard_solve_partial, PicardConfig};
use degensim::nonlinearity::{PhiEvaluator, PhiSpec};
use degensim::scalar_solver::solve_scalar_partial;
use degensim::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Domain = 4,
    NotConverged = 5,
    Io = 6,
    Panic = 7,
}

impl From<&Error> for DsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) => DsStatus::Config,
            Error::Io(_) => DsStatus::Io,
            Error::Domain(_) | Error::Dimension { .. } | Error::Precondition(_) => DsStatus::Domain,
            Error::Convergence { .. }
            | Error::LinearSolve(_)
            | Error::NewtonDivergence { .. }
            | Error::PicardDivergence { .. } => DsStatus::NotConverged,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: DsStatus, msg: impl Into<String>) -> DsStatus {
    set_error(msg);
    status
}

fn fail_with(e: &Error) -> DsStatus {
    fail(DsStatus::from(e), e.to_string())
}

fn guarded<F: FnOnce() -> DsStatus>(f: F) -> DsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f))
        .unwrap_or_else(|_| fail(DsStatus::Panic, "internal panic caught at the C boundary"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> DsStatus {
    if out.is_null() {
        return fail(DsStatus::NullPointer, "output pointer is NULL");
    }
    out.write(value);
    DsStatus::Ok
}

unsafe fn c_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, DsStatus> {
    if s.is_null() {
        return Err(fail(DsStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        fail(
            DsStatus::InvalidArgument,
            format!("{what} is not valid UTF-8"),
        )
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ds_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// always NUL-terminated when `capacity > 0`). Returns the length the full
/// message needs including the terminator, or 0 when there is no error.
///
/// # Safety
/// `buf` must be NULL or point to at least `capacity` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ds_last_error_message(buf: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            return 0;
        };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && capacity > 0 {
            let n = bytes.len().min(capacity);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// Opaque nonlinearity evaluator.
pub struct DsPhi {
    inner: PhiEvaluator,
}

unsafe fn new_phi(spec: degensim::Result<PhiSpec>, out: *mut *mut DsPhi) -> DsStatus {
    guarded(|| match spec {
        Ok(spec) => write_out(
            out,
            Box::into_raw(Box::new(DsPhi {
                inner: PhiEvaluator::new(spec),
            })),
        ),
        Err(e) => fail_with(&e),
    })
}

/// Singular nonlinearity on (-1, 1) with `phi(0) = 0` and
/// `phi'(z) = |z|^b / (1 - |z|)^a`.
///
/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ds_phi_singular_power(a: f64, b: f64, out: *mut *mut DsPhi) -> DsStatus {
    new_phi(PhiSpec::singular_power(a, b), out)
}

/// `phi(z) = |z|^(m - 1) z`.
///
/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ds_phi_porous_medium(m: f64, out: *mut *mut DsPhi) -> DsStatus {
    new_phi(PhiSpec::porous_medium(m), out)
}

/// `phi(z) = slope * z`.
///
/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ds_phi_linear(slope: f64, out: *mut *mut DsPhi) -> DsStatus {
    new_phi(PhiSpec::linear(slope), out)
}

unsafe fn with_phi<F>(phi: *const DsPhi, out: *mut f64, f: F) -> DsStatus
where
    F: FnOnce(&PhiEvaluator) -> degensim::Result<f64>,
{
    guarded(|| {
        if phi.is_null() {
            return fail(DsStatus::NullPointer, "phi handle is NULL");
        }
        match f(&(*phi).inner) {
            Ok(v) => write_out(out, v),
            Err(e) => fail_with(&e),
        }
    })
}

/// # Safety
/// `phi` must come from a `ds_phi_*` constructor; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ds_phi_value(phi: *const DsPhi, z: f64, out: *mut f64) -> DsStatus {
    with_phi(phi, out, |p| p.phi(z))
}

/// # Safety
/// As for [`ds_phi_value`].
#[no_mangle]
pub unsafe extern "C" fn ds_phi_derivative(phi: *const DsPhi, z: f64, out: *mut f64) -> DsStatus {
    with_phi(phi, out, |p| p.phi_prime(z))
}

/// Inverse of `phi`, defined on the whole real line.
///
/// # Safety
/// As for [`ds_phi_value`].
#[no_mangle]
pub unsafe extern "C" fn ds_phi_inverse(phi: *const DsPhi, w: f64, out: *mut f64) -> DsStatus {
    with_phi(phi, out, |p| p.phi_inverse(w))
}

/// `int_zbar^z (phi(s) - phi(zbar)) ds`.
///
/// # Safety
/// As for [`ds_phi_value`].
#[no_mangle]
pub unsafe extern "C" fn ds_phi_relative_energy(
    phi: *const DsPhi,
    z: f64,
    zbar: f64,
    out: *mut f64,
) -> DsStatus {
    with_phi(phi, out, |p| p.energy_primitive(z, zbar))
}

/// # Safety
/// `phi` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_phi_free(phi: *mut DsPhi) {
    if !phi.is_null() {
        drop(Box::from_raw(phi));
    }
}

/// Opaque parsed run configuration.
pub struct DsConfig {
    inner: RunConfig,
}

fn boxed_config(cfg: RunConfig) -> *mut DsConfig {
    Box::into_raw(Box::new(DsConfig { inner: cfg }))
}

/// Parses a configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ds_config_from_file(
    path: *const c_char,
    out: *mut *mut DsConfig,
) -> DsStatus {
    guarded(|| {
        let path = match c_str(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match parse_config(Path::new(path)) {
            Ok(cfg) => write_out(out, boxed_config(cfg)),
            Err(e) => fail_with(&e),
        }
    })
}

/// Parses configuration text. Relative file paths inside it resolve against
/// `base_dir` (the current directory when NULL).
///
/// # Safety
/// `text` must be NUL-terminated; `base_dir` NULL or NUL-terminated; `out`
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ds_config_from_str(
    text: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut DsConfig,
) -> DsStatus {
    guarded(|| {
        let text = match c_str(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let base = if base_dir.is_null() {
            "."
        } else {
            match c_str(base_dir, "base_dir") {
                Ok(b) => b,
                Err(s) => return s,
            }
        };
        match parse_str(text, Path::new(base)) {
            Ok(cfg) => write_out(out, boxed_config(cfg)),
            Err(diags) => fail(
                DsStatus::Config,
                diags
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("\n"),
            ),
        }
    })
}

/// 1 when the configuration describes the coupled two-field system, 0 when
/// scalar, -1 for a NULL handle.
///
/// # Safety
/// `cfg` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_config_is_coupled(cfg: *const DsConfig) -> c_int {
    if cfg.is_null() {
        return -1;
    }
    c_int::from((*cfg).inner.is_coupled())
}

/// Number of time steps the configuration asks for (0 for a NULL handle).
///
/// # Safety
/// `cfg` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_config_steps(cfg: *const DsConfig) -> usize {
    if cfg.is_null() {
        return 0;
    }
    (*cfg).inner.steps()
}

/// # Safety
/// `cfg` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_config_free(cfg: *mut DsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Opaque in-memory simulation result: the states at every computed step.
pub struct DsSimulation {
    cells: usize,
    times: Vec<f64>,
    u: Vec<Vec<f64>>,
    v: Option<Vec<Vec<f64>>>,
    requested_steps: usize,
}

/// Runs the configured simulation in memory (no files are written).
///
/// On `DS_STATUS_NOT_CONVERGED` the result still holds the steps completed
/// before the failure and `*out` is set; on other errors `*out` is untouched.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ds_simulate(
    cfg: *const DsConfig,
    out: *mut *mut DsSimulation,
) -> DsStatus {
    guarded(|| {
        if cfg.is_null() {
            return fail(DsStatus::NullPointer, "config handle is NULL");
        }
        if out.is_null() {
            return fail(DsStatus::NullPointer, "output pointer is NULL");
        }
        let cfg = &(*cfg).inner;
        let (sim, failure) = match simulate(cfg) {
            Ok(r) => r,
            Err(e) => return fail_with(&e),
        };
        out.write(Box::into_raw(Box::new(sim)));
        match failure {
            Some(e) => fail_with(&e),
            None => DsStatus::Ok,
        }
    })
}

fn simulate(cfg: &RunConfig) -> degensim::Result<(DsSimulation, Option<Error>)> {
    if cfg.is_coupled() {
        let p = app::coupled_problem(cfg)?;
        let (trace, failure) = picard_solve_partial(&p, &PicardConfig::default())?;
        Ok((
            DsSimulation {
                cells: p.grid.len(),
                times: trace.times(),
                u: trace.u,
                v: Some(trace.v),
                requested_steps: p.steps(),
            },
            failure,
        ))
    } else {
        let p = app::scalar_problem(cfg)?;
        let (trace, failure) = solve_scalar_partial(&p)?;
        Ok((
            DsSimulation {
                cells: p.grid.len(),
                times: trace.times(),
                u: trace.u,
                v: None,
                requested_steps: p.steps(),
            },
            failure,
        ))
    }
}

/// Number of stored states (completed steps plus the initial state).
///
/// # Safety
/// `sim` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_simulation_states(sim: *const DsSimulation) -> usize {
    if sim.is_null() {
        return 0;
    }
    (*sim).u.len()
}

/// Number of steps the run was configured for.
///
/// # Safety
/// `sim` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_simulation_requested_steps(sim: *const DsSimulation) -> usize {
    if sim.is_null() {
        return 0;
    }
    (*sim).requested_steps
}

/// Number of grid cells per state.
///
/// # Safety
/// `sim` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_simulation_cells(sim: *const DsSimulation) -> usize {
    if sim.is_null() {
        return 0;
    }
    (*sim).cells
}

/// 1 when the result carries a second field `v`.
///
/// # Safety
/// `sim` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_simulation_has_v(sim: *const DsSimulation) -> c_int {
    if sim.is_null() {
        return 0;
    }
    c_int::from((*sim).v.is_some())
}

/// # Safety
/// `sim` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ds_simulation_time(
    sim: *const DsSimulation,
    state: usize,
    out: *mut f64,
) -> DsStatus {
    guarded(|| {
        if sim.is_null() {
            return fail(DsStatus::NullPointer, "simulation handle is NULL");
        }
        let times = &(*sim).times;
        match times.get(state) {
            Some(&t) => write_out(out, t),
            None => fail(
                DsStatus::InvalidArgument,
                format!("state {state} out of range ({} stored)", times.len()),
            ),
        }
    })
}

unsafe fn copy_state(
    sim: *const DsSimulation,
    state: usize,
    buf: *mut f64,
    len: usize,
    pick: fn(&DsSimulation) -> Option<&Vec<Vec<f64>>>,
    name: &str,
) -> DsStatus {
    guarded(|| {
        if sim.is_null() {
            return fail(DsStatus::NullPointer, "simulation handle is NULL");
        }
        if buf.is_null() {
            return fail(DsStatus::NullPointer, "buffer is NULL");
        }
        let sim = &*sim;
        let Some(states) = pick(sim) else {
            return fail(
                DsStatus::InvalidArgument,
                format!("result has no field {name}"),
            );
        };
        let Some(values) = states.get(state) else {
            return fail(
                DsStatus::InvalidArgument,
                format!("state {state} out of range ({} stored)", states.len()),
            );
        };
        if len < values.len() {
            return fail(
                DsStatus::InvalidArgument,
                format!("buffer holds {len} values, {} needed", values.len()),
            );
        }
        std::ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        DsStatus::Ok
    })
}

/// Copies `u` at `state` into `buf`, which must hold at least
/// `ds_simulation_cells` values.
///
/// # Safety
/// `sim` must be a live handle; `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ds_simulation_u(
    sim: *const DsSimulation,
    state: usize,
    buf: *mut f64,
    len: usize,
) -> DsStatus {
    copy_state(sim, state, buf, len, |s| Some(&s.u), "u")
}

/// Copies `v` at `state`; fails with `DS_STATUS_INVALID_ARGUMENT` for scalar runs.
///
/// # Safety
/// As for [`ds_simulation_u`].
#[no_mangle]
pub unsafe extern "C" fn ds_simulation_v(
    sim: *const DsSimulation,
    state: usize,
    buf: *mut f64,
    len: usize,
) -> DsStatus {
    copy_state(sim, state, buf, len, |s| s.v.as_ref(), "v")
}

/// # Safety
/// `sim` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_simulation_free(sim: *mut DsSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}
