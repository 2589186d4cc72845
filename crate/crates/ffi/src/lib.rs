//! C ABI over `llg-core`.
//!
//! Objects are opaque handles created by `llg_*_new`/`llg_*_from_*` functions
//! and released with the matching `llg_*_free`. Every fallible call returns an
//! [`LlgStatus`]; on failure a message for the calling thread is available from
//! [`llg_last_error`]. Strings returned through out-parameters are owned by the
//! caller and released with [`llg_string_free`]. Panics never cross the
//! boundary; they are reported as [`LlgStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use llg_core::config::RunConfig;
use llg_core::control::{evaluate_cost, CostReport};
use llg_core::integrators::{ensemble_path, integrate, Scheme, Trajectory};
use llg_core::output::trajectory_csv;
use llg_core::{Basis, Error};

/// Status codes. The first four match the exit codes of the `llg` CLI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlgStatus {
    Ok = 0,
    ConfigError = 1,
    BlowUp = 2,
    OptimizerFailure = 3,
    NullPointer = 4,
    InvalidArgument = 5,
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlgScheme {
    Ito = 0,
    Heun = 1,
}

/// Opaque run configuration.
pub struct LlgConfig {
    inner: RunConfig,
}

/// Opaque simulated trajectory.
pub struct LlgTrajectory {
    traj: Trajectory,
    basis: Basis,
}

/// Opaque Monte-Carlo cost estimate.
pub struct LlgCostReport {
    inner: CostReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LlgStatus {
    match e {
        Error::BlowUp { .. } => LlgStatus::BlowUp,
        Error::AllPathsFailed { .. } | Error::Optimizer(_) => LlgStatus::OptimizerFailure,
        Error::Io(_) => LlgStatus::Internal,
        _ => LlgStatus::ConfigError,
    }
}

fn fail(status: LlgStatus, msg: &str) -> LlgStatus {
    set_last_error(msg);
    status
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), LlgStatus>) -> LlgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LlgStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(LlgStatus::Internal, "panic inside llg"),
    }
}

fn core_err(e: Error) -> LlgStatus {
    fail(status_of(&e), &e.to_string())
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), LlgStatus> {
    if p.is_null() {
        Err(fail(LlgStatus::NullPointer, &format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn into_c_string(s: String, out: *mut *mut c_char) -> Result<(), LlgStatus> {
    let c = CString::new(s).map_err(|_| fail(LlgStatus::Internal, "string contains a NUL byte"))?;
    // SAFETY: `out` was checked non-null by the caller.
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn llg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn llg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn llg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default configuration.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn llg_config_new(out: *mut *mut LlgConfig) -> LlgStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = Box::into_raw(Box::new(LlgConfig {
            inner: RunConfig::default(),
        }));
        Ok(())
    })
}

/// Parses and validates a JSON configuration; omitted fields take defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn llg_config_from_json(json: *const c_char, out: *mut *mut LlgConfig) -> LlgStatus {
    guard(|| {
        non_null(json, "json")?;
        non_null(out, "out")?;
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| fail(LlgStatus::InvalidArgument, "json is not UTF-8"))?;
        let inner = RunConfig::from_json(text).map_err(core_err)?;
        *out = Box::into_raw(Box::new(LlgConfig { inner }));
        Ok(())
    })
}

/// Serialises the configuration; release the result with [`llg_string_free`].
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn llg_config_to_json(cfg: *const LlgConfig, out: *mut *mut c_char) -> LlgStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        non_null(out, "out")?;
        into_c_string((*cfg).inner.to_json(), out)
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn llg_config_set_seed(cfg: *mut LlgConfig, seed: u64) -> LlgStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        (*cfg).inner.master_seed = seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn llg_config_set_scheme(cfg: *mut LlgConfig, scheme: LlgScheme) -> LlgStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        (*cfg).inner.scheme = match scheme {
            LlgScheme::Ito => Scheme::Ito,
            LlgScheme::Heun => Scheme::Heun,
        };
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn llg_config_set_paths(cfg: *mut LlgConfig, n_paths: usize) -> LlgStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        if n_paths == 0 {
            return Err(fail(LlgStatus::InvalidArgument, "n_paths must be >= 1"));
        }
        (*cfg).inner.n_paths = n_paths;
        Ok(())
    })
}

/// Releases a configuration. NULL is ignored.
///
/// # Safety
/// `cfg` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn llg_config_free(cfg: *mut LlgConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Integrates path 0 of the configured ensemble, applying the configured
/// control if any.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn llg_simulate(cfg: *const LlgConfig, out: *mut *mut LlgTrajectory) -> LlgStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        non_null(out, "out")?;
        let run = &(*cfg).inner;
        let sim = run.sim_config().map_err(core_err)?;
        let path = ensemble_path(&sim, run.master_seed, 0).map_err(core_err)?;
        let traj = match &run.control {
            Some(p) => {
                let u = llg_core::control::realize_control(p, sim.basis()).map_err(core_err)?;
                integrate(&sim, &u, &path)
            }
            None => integrate(&sim, &llg_core::integrators::NoControl, &path),
        }
        .map_err(core_err)?;
        let basis = sim.basis().clone();
        *out = Box::into_raw(Box::new(LlgTrajectory { traj, basis }));
        Ok(())
    })
}

/// Number of stored time points; 0 for NULL.
///
/// # Safety
/// `traj` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn llg_trajectory_len(traj: *const LlgTrajectory) -> usize {
    if traj.is_null() {
        0
    } else {
        (*traj).traj.times.len()
    }
}

/// Grid nodes `M + 1`; each field snapshot holds `3 (M + 1)` doubles.
///
/// # Safety
/// `traj` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn llg_trajectory_nodes(traj: *const LlgTrajectory) -> usize {
    if traj.is_null() {
        0
    } else {
        (*traj).basis.n_nodes()
    }
}

/// Time and grid values of snapshot `index`, node-major `x, y, z` triples.
///
/// # Safety
/// `traj` must be a live handle, `t` writable, and `values` point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn llg_trajectory_snapshot(
    traj: *const LlgTrajectory,
    index: usize,
    t: *mut f64,
    values: *mut f64,
    len: usize,
) -> LlgStatus {
    guard(|| {
        non_null(traj, "traj")?;
        non_null(t, "t")?;
        non_null(values, "values")?;
        let tr = &*traj;
        let (Some(time), Some(state)) = (tr.traj.times.get(index), tr.traj.states.get(index)) else {
            return Err(fail(
                LlgStatus::InvalidArgument,
                &format!("snapshot {index} out of range ({} stored)", tr.traj.times.len()),
            ));
        };
        let need = 3 * tr.basis.n_nodes();
        if len < need {
            return Err(fail(
                LlgStatus::InvalidArgument,
                &format!("buffer holds {len} doubles, need {need}"),
            ));
        }
        let field = tr.basis.synthesize(state).map_err(core_err)?;
        let dst = std::slice::from_raw_parts_mut(values, need);
        for (chunk, v) in dst.chunks_exact_mut(3).zip(field.values()) {
            chunk.copy_from_slice(v);
        }
        *t = *time;
        Ok(())
    })
}

/// Trajectory CSV as written by `llg simulate`; release with [`llg_string_free`].
///
/// # Safety
/// `traj` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn llg_trajectory_to_csv(traj: *const LlgTrajectory, out: *mut *mut c_char) -> LlgStatus {
    guard(|| {
        non_null(traj, "traj")?;
        non_null(out, "out")?;
        let csv = trajectory_csv(&(*traj).traj, &(*traj).basis).map_err(core_err)?;
        into_c_string(csv, out)
    })
}

/// # Safety
/// `traj` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn llg_trajectory_free(traj: *mut LlgTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Monte-Carlo cost of the configured control (zero control when none is set)
/// over `n_paths` paths of the configured master seed.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn llg_cost_evaluate(
    cfg: *const LlgConfig,
    n_paths: usize,
    out: *mut *mut LlgCostReport,
) -> LlgStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        non_null(out, "out")?;
        if n_paths == 0 {
            return Err(fail(LlgStatus::InvalidArgument, "n_paths must be >= 1"));
        }
        let run = &(*cfg).inner;
        let sim = run.sim_config().map_err(core_err)?;
        let p = match &run.control {
            Some(p) => p.clone(),
            None => run.optimizer.initial_control(run.t_final).map_err(core_err)?,
        };
        let inner = evaluate_cost(&p, &run.cost, &sim, n_paths, run.master_seed).map_err(core_err)?;
        *out = Box::into_raw(Box::new(LlgCostReport { inner }));
        Ok(())
    })
}

/// `J`; NaN for NULL.
///
/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn llg_cost_total(report: *const LlgCostReport) -> f64 {
    if report.is_null() {
        f64::NAN
    } else {
        (*report).inner.j
    }
}

/// Per-term breakdown: tracking, control effort, terminal, standard error.
///
/// # Safety
/// `report` must be a live handle; each output pointer must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn llg_cost_terms(
    report: *const LlgCostReport,
    tracking: *mut f64,
    control: *mut f64,
    terminal: *mut f64,
    std_error: *mut f64,
) -> LlgStatus {
    guard(|| {
        non_null(report, "report")?;
        let r = &(*report).inner;
        for (dst, v) in [
            (tracking, r.tracking),
            (control, r.control),
            (terminal, r.terminal),
            (std_error, r.std_error),
        ] {
            if !dst.is_null() {
                *dst = v;
            }
        }
        Ok(())
    })
}

/// Paths excluded from the estimate because they blew up; 0 for NULL.
///
/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn llg_cost_failed_paths(report: *const LlgCostReport) -> usize {
    if report.is_null() {
        0
    } else {
        (*report).inner.n_failed
    }
}

/// # Safety
/// `report` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn llg_cost_free(report: *mut LlgCostReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
