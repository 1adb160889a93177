//! C ABI over `mhd_core`.
//!
//! Every function returns an [`MhdStatus`]; on failure the message is kept in a
//! thread-local slot readable through [`mhd_last_error_message`].  Cases are
//! opaque handles created by `mhd_case_new*` and released by [`mhd_case_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mhd_core::cases::{make_case, Case, CaseKind, CaseSpec};
use mhd_core::history::ProbeHistory;
use mhd_core::io::{write_field_dump, RunConfig};
use mhd_core::oracle::{solve_steady_reduced, OracleBc};
use mhd_core::transient::{
    constrained_fit, initial_guess, lm_fit, modal_eigenvalues, ModalEigen, ModalModel, OffsetMode,
};
use mhd_core::MhdError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MhdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Validation = 3,
    NoConvergence = 4,
    Unstable = 5,
    Io = 6,
    Format = 7,
    Panic = 8,
}

/// Opaque simulation handle.
pub struct MhdCase {
    case: Case,
}

/// Result of a transient fit `u0 e^{-s t} sin(w t + phi) + s0`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MhdFit {
    pub u0: f64,
    pub s: f64,
    pub w: f64,
    pub phi: f64,
    pub s0: f64,
    pub residual_norm: f64,
    pub iterations: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &MhdError) -> MhdStatus {
    match e {
        MhdError::Validation { .. }
        | MhdError::InvalidOrder(_)
        | MhdError::InvalidExtent(_)
        | MhdError::InvalidCombination(_)
        | MhdError::UnknownCase(_)
        | MhdError::UnknownField(_)
        | MhdError::UnderResolved(_)
        | MhdError::DegenerateElement { .. }
        | MhdError::DegenerateHistory(_)
        | MhdError::NodeOutOfRange(_) => MhdStatus::Validation,
        MhdError::NoConvergence { .. } | MhdError::IndefiniteOperator(..) => MhdStatus::NoConvergence,
        MhdError::CflViolation { .. } | MhdError::Unstable(_) => MhdStatus::Unstable,
        MhdError::Io(_) => MhdStatus::Io,
        MhdError::Parse { .. } | MhdError::BadMagic | MhdError::VersionMismatch { .. } | MhdError::Truncated => {
            MhdStatus::Format
        }
    }
}

fn guard(f: impl FnOnce() -> Result<(), (MhdStatus, String)>) -> MhdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MhdStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            MhdStatus::Panic
        }
    }
}

fn core<T>(r: mhd_core::Result<T>) -> Result<T, (MhdStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (MhdStatus, String) {
    (MhdStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (MhdStatus, String) {
    (MhdStatus::InvalidArgument, msg.into())
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (MhdStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (MhdStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a>(h: *mut MhdCase) -> Result<&'a mut MhdCase, (MhdStatus, String)> {
    h.as_mut().ok_or_else(|| null("case handle"))
}

/// Message of the last failed call on this thread, or null.  Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mhd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn mhd_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn mhd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Create a case.  `kind` is "shercliff", "hunt" or "conducting_wall".
///
/// # Safety
/// `kind` must be a valid C string; `out_case` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mhd_case_new(
    kind: *const c_char,
    ha: f64,
    order: usize,
    ex: usize,
    ey: usize,
    ez: usize,
    length: f64,
    out_case: *mut *mut MhdCase,
) -> MhdStatus {
    guard(|| {
        let out_case = out(out_case, "out_case")?;
        *out_case = ptr::null_mut();
        let kind: CaseKind = core(c_str(kind, "kind")?.parse())?;
        let spec = CaseSpec {
            order,
            counts: [ex, ey, ez],
            length,
            ..CaseSpec::new(kind, ha)
        };
        let case = core(make_case(&spec))?;
        *out_case = Box::into_raw(Box::new(MhdCase { case }));
        Ok(())
    })
}

/// Create a case from configuration text in the CLI format.
///
/// # Safety
/// `config_text` must be a valid C string; `out_case` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mhd_case_new_from_config(
    config_text: *const c_char,
    out_case: *mut *mut MhdCase,
) -> MhdStatus {
    guard(|| {
        let out_case = out(out_case, "out_case")?;
        *out_case = ptr::null_mut();
        let cfg = core(RunConfig::parse(c_str(config_text, "config_text")?))?;
        let case = core(make_case(&cfg.case))?;
        *out_case = Box::into_raw(Box::new(MhdCase { case }));
        Ok(())
    })
}

/// # Safety
/// `case` must come from `mhd_case_new*` and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mhd_case_free(case: *mut MhdCase) {
    if !case.is_null() {
        drop(Box::from_raw(case));
    }
}

/// Advance `steps` time steps.
///
/// # Safety
/// `case` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mhd_case_step(case: *mut MhdCase, steps: usize) -> MhdStatus {
    guard(|| {
        let h = handle(case)?;
        for _ in 0..steps {
            core(h.case.stepper.step(&mut h.case.state))?;
        }
        Ok(())
    })
}

/// March to steady state with the case's own criterion.
///
/// # Safety
/// `case` must be a live handle; `out_converged` may be null.
#[no_mangle]
pub unsafe extern "C" fn mhd_case_march_to_steady(case: *mut MhdCase, out_converged: *mut c_int) -> MhdStatus {
    guard(|| {
        let h = handle(case)?;
        let crit = h.case.spec.criterion();
        let o = core(h.case.stepper.march_to_steady(&mut h.case.state, crit, |_| {}))?;
        if let Some(c) = out_converged.as_mut() {
            *c = o.converged as c_int;
        }
        Ok(())
    })
}

/// # Safety
/// `case` must be a live handle; `out_time` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mhd_case_time(case: *const MhdCase, out_time: *mut f64) -> MhdStatus {
    guard(|| {
        let h = case.as_ref().ok_or_else(|| null("case handle"))?;
        *out(out_time, "out_time")? = h.case.state.time;
        Ok(())
    })
}

/// Axial velocity and induced field at the duct center.
///
/// # Safety
/// `case` must be a live handle; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn mhd_case_center(case: *const MhdCase, out_u: *mut f64, out_b: *mut f64) -> MhdStatus {
    guard(|| {
        let h = case.as_ref().ok_or_else(|| null("case handle"))?;
        let (u, b) = h.case.stepper.center_probe(&h.case.state);
        *out(out_u, "out_u")? = u;
        *out(out_b, "out_b")? = b;
        Ok(())
    })
}

/// Write the current fields as a binary dump.
///
/// # Safety
/// `case` must be a live handle; `path` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn mhd_case_write_dump(case: *const MhdCase, path: *const c_char) -> MhdStatus {
    guard(|| {
        let h = case.as_ref().ok_or_else(|| null("case handle"))?;
        let p = c_str(path, "path")?;
        core(write_field_dump(&h.case.stepper.ops.mesh, &h.case.state, Path::new(p)))
    })
}

/// Modal decay `s` and frequency `w`; when `*out_oscillatory == 0` the two
/// outputs hold the real eigenvalue pair instead.
///
/// # Safety
/// All outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn mhd_modal_eigenvalues(
    re: f64,
    rm: f64,
    ha: f64,
    out_s: *mut f64,
    out_w: *mut f64,
    out_oscillatory: *mut c_int,
) -> MhdStatus {
    guard(|| {
        if !(re > 0.0 && rm > 0.0 && ha > 0.0) {
            return Err(invalid("Re, Rm and Ha must be positive"));
        }
        let (a, b, osc) = match modal_eigenvalues(re, rm, ha) {
            ModalEigen::Oscillatory { s, w } => (s, w, 1),
            ModalEigen::Real { l1, l2 } => (l1, l2, 0),
        };
        *out(out_s, "out_s")? = a;
        *out(out_w, "out_w")? = b;
        *out(out_oscillatory, "out_oscillatory")? = osc;
        Ok(())
    })
}

/// Center values of the steady reduced-equation solution.  `bc`: 0 insulating,
/// 1 Hunt.  `n` interior points per direction (at least `8 Ha`).
///
/// # Safety
/// Both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn mhd_oracle_center(
    ha: f64,
    bc: c_int,
    n: usize,
    out_u: *mut f64,
    out_b: *mut f64,
) -> MhdStatus {
    guard(|| {
        let bc = match bc {
            0 => OracleBc::Insulating,
            1 => OracleBc::Hunt,
            other => return Err(invalid(format!("unknown boundary code {other}"))),
        };
        let g = core(solve_steady_reduced(ha, bc, n))?;
        let (u, b) = g.center();
        *out(out_u, "out_u")? = u;
        *out(out_b, "out_b")? = b;
        Ok(())
    })
}

unsafe fn history_from(times: *const f64, values: *const f64, len: usize) -> Result<ProbeHistory, (MhdStatus, String)> {
    if times.is_null() || values.is_null() {
        return Err(null("times/values"));
    }
    let t = std::slice::from_raw_parts(times, len);
    let u = std::slice::from_raw_parts(values, len);
    let mut h = ProbeHistory::new();
    for (ti, ui) in t.iter().zip(u) {
        core(h.push(*ti, *ui, 0.0))?;
    }
    Ok(h)
}

/// Five-parameter fit of a center-velocity history, seeded by the modal model.
///
/// # Safety
/// `times` and `values` must point to `len` doubles; `out_fit` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mhd_fit_transient(
    times: *const f64,
    values: *const f64,
    len: usize,
    re: f64,
    rm: f64,
    ha: f64,
    out_fit: *mut MhdFit,
) -> MhdStatus {
    guard(|| {
        let dst = out(out_fit, "out_fit")?;
        let h = history_from(times, values, len)?;
        let model = core(ModalModel::new(re, rm, ha))?;
        if !model.oscillatory {
            return Err(invalid("modal system is not oscillatory for these parameters"));
        }
        let guess = core(initial_guess(&h, &model))?;
        let f = core(lm_fit(&h, ha, &guess))?;
        *dst = MhdFit {
            u0: f.u0_amp,
            s: f.decay_s,
            w: f.freq_w,
            phi: f.phase,
            s0: f.offset_s0,
            residual_norm: f.residual_norm,
            iterations: f.iterations,
        };
        Ok(())
    })
}

/// Fit of `(u0, phi, s0)` with `s` and `w` pinned.
///
/// # Safety
/// As [`mhd_fit_transient`].
#[no_mangle]
pub unsafe extern "C" fn mhd_fit_transient_constrained(
    times: *const f64,
    values: *const f64,
    len: usize,
    ha: f64,
    s: f64,
    w: f64,
    out_fit: *mut MhdFit,
) -> MhdStatus {
    guard(|| {
        let dst = out(out_fit, "out_fit")?;
        let h = history_from(times, values, len)?;
        let f = core(constrained_fit(&h, ha, s, w, OffsetMode::Fitted))?;
        *dst = MhdFit {
            u0: f.u0_amp,
            s: f.decay_s,
            w: f.freq_w,
            phi: f.phase,
            s0: f.offset_s0,
            residual_norm: f.residual_norm,
            iterations: f.iterations,
        };
        Ok(())
    })
}
