//! C ABI for the immersed boundary solvers.
//!
//! Every fallible function returns an [`IbcStatus`]. On failure a message is
//! stored per thread and can be read with [`ibc_last_error_message`].
//! Objects are opaque handles created by `*_new` and released by `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CString};
use std::mem::ManuallyDrop;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ibcomposite::bench::relative_error;
use ibcomposite::grid::Field;
use ibcomposite::linsolve::PoissonKind;
use ibcomposite::ns_ib::{couette_problem, couette_velocity, run_to_steady, NsConfig, NsProblem, NsState, Stepper, COUETTE_KAPPA};
use ibcomposite::poisson_ib::one_d::{solve_1d, Problem1d};
use ibcomposite::poisson_ib::{circle_exact_jump, circle_problem, solve, Formulation, PoissonProblem};
use ibcomposite::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IbcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidGrid = 3,
    NonConvergence = 4,
    Singular = 5,
    NonFinite = 6,
    MaxSteps = 7,
    BufferTooSmall = 8,
    Panic = 9,
    Other = 10,
}

pub const IBC_COMPOSITE: c_int = 0;
pub const IBC_PROTOTYPICAL: c_int = 1;
pub const IBC_PRESCRIBED: c_int = 2;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(e: &Error) -> IbcStatus {
    match e {
        Error::InvalidArgument(_) | Error::InvalidBody(_) | Error::SpaceMismatch(_) | Error::InvalidTransform(_) => {
            IbcStatus::InvalidArgument
        }
        Error::InvalidGrid(_) | Error::ClippedSupport { .. } => IbcStatus::InvalidGrid,
        Error::NonConvergence(_) | Error::Breakdown(_) => IbcStatus::NonConvergence,
        Error::Singular(_) => IbcStatus::Singular,
        Error::NonFinite(_) => IbcStatus::NonFinite,
        Error::MaxSteps(_) => IbcStatus::MaxSteps,
        Error::Io(_) | Error::Format(_) => IbcStatus::Other,
    }
}

fn fail(status: IbcStatus, msg: impl Into<String>) -> IbcStatus {
    set_error(msg);
    status
}

/// Run `f`, recording errors and converting panics into [`IbcStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), IbcStatus>) -> IbcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IbcStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(IbcStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn lift<T>(r: ibcomposite::Result<T>) -> Result<T, IbcStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn formulation(f: c_int) -> Result<Formulation, IbcStatus> {
    match f {
        IBC_COMPOSITE => Ok(Formulation::Composite),
        IBC_PROTOTYPICAL => Ok(Formulation::Prototypical),
        IBC_PRESCRIBED => Ok(Formulation::Prescribed),
        _ => Err(fail(IbcStatus::InvalidArgument, format!("unknown formulation {f}"))),
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), IbcStatus> {
    if p.is_null() {
        Err(fail(IbcStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `out` must be null or point to `len` writable doubles.
unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize, what: &str) -> Result<(), IbcStatus> {
    non_null(out, what)?;
    if len < src.len() {
        return Err(fail(IbcStatus::BufferTooSmall, format!("{what} needs {} entries, got {len}", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Copy the last error message of the calling thread into `buf`.
///
/// Returns the buffer size needed including the terminating NUL, or 0 when no
/// error is recorded. The message is truncated if `len` is too small.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ibc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes_with_nul();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n - 1) = 0;
            }
            bytes.len()
        }
    })
}

/// Forget the last error message of the calling thread.
#[no_mangle]
pub extern "C" fn ibc_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Solve the 1D interface problem on `n` cells of the unit interval.
///
/// Writes the `n` cell values to `u_out` and the derivative jump to
/// `forcing_out`.
///
/// # Safety
/// `u_out` must point to `u_len` writable doubles and `forcing_out` to one
/// writable double.
#[no_mangle]
pub unsafe extern "C" fn ibc_poisson1d_solve(
    n: usize,
    formulation_id: c_int,
    u_out: *mut f64,
    u_len: usize,
    forcing_out: *mut f64,
) -> IbcStatus {
    guard(|| {
        let f = formulation(formulation_id)?;
        non_null(forcing_out, "forcing_out")?;
        let p = lift(Problem1d::new(n, ibcomposite::bench::X_GAMMA_1D))?;
        let s = lift(solve_1d(&p, f))?;
        copy_out(&s.u, u_out, u_len, "u_out")?;
        *forcing_out = s.forcing;
        Ok(())
    })
}

/// Circle interface Poisson problem on an `n` by `n` grid.
pub struct IbcPoisson2d {
    problem: PoissonProblem,
}

/// Create a circle Poisson problem with marker spacing `ds_dx` grid cells.
///
/// # Safety
/// `out` must point to a writable handle slot. The handle must be released
/// with [`ibc_poisson2d_free`].
#[no_mangle]
pub unsafe extern "C" fn ibc_poisson2d_new(n: usize, ds_dx: f64, out: *mut *mut IbcPoisson2d) -> IbcStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let problem = lift(circle_problem(n, ds_dx, PoissonKind::Lgf))?;
        *out = Box::into_raw(Box::new(IbcPoisson2d { problem }));
        Ok(())
    })
}

/// Number of cells of the problem grid, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle from [`ibc_poisson2d_new`].
#[no_mangle]
pub unsafe extern "C" fn ibc_poisson2d_cell_count(h: *const IbcPoisson2d) -> usize {
    h.as_ref().map_or(0, |h| h.problem.grid().len())
}

/// Number of interface markers, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle from [`ibc_poisson2d_new`].
#[no_mangle]
pub unsafe extern "C" fn ibc_poisson2d_marker_count(h: *const IbcPoisson2d) -> usize {
    h.as_ref().map_or(0, |h| h.problem.markers.len())
}

/// Solve with the given formulation. Cell values go to `u_out` (row by row,
/// x fastest); the largest marker error of the computed derivative jump goes
/// to `forcing_err_out`.
///
/// # Safety
/// `h` must be a live handle, `u_out` must point to `u_len` writable doubles
/// and `forcing_err_out` must be null or point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn ibc_poisson2d_solve(
    h: *const IbcPoisson2d,
    formulation_id: c_int,
    u_out: *mut f64,
    u_len: usize,
    forcing_err_out: *mut f64,
) -> IbcStatus {
    guard(|| {
        non_null(h, "handle")?;
        let h = &*h;
        let f = formulation(formulation_id)?;
        let je = circle_exact_jump(&h.problem.markers);
        let s = lift(solve(&h.problem, f, Some(&je)))?;
        copy_out(&s.u.data, u_out, u_len, "u_out")?;
        if !forcing_err_out.is_null() {
            *forcing_err_out = s.forcing.0.iter().zip(&je.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        }
        Ok(())
    })
}

/// Release a Poisson handle. Null is ignored.
///
/// # Safety
/// `h` must be null or a handle from [`ibc_poisson2d_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ibc_poisson2d_free(h: *mut IbcPoisson2d) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Circular Couette flow stepper.
pub struct IbcCouette {
    // Declared before `problem`: the stepper borrows it and is dropped first.
    stepper: ManuallyDrop<Stepper<'static>>,
    problem: *mut NsProblem,
    state: NsState,
}

impl Drop for IbcCouette {
    fn drop(&mut self) {
        // SAFETY: the stepper is the only borrower of `problem`, which came
        // from Box::into_raw in ibc_couette_new.
        unsafe {
            ManuallyDrop::drop(&mut self.stepper);
            drop(Box::from_raw(self.problem));
        }
    }
}

/// Create a Couette flow problem at rest on an `n` by `n` grid.
///
/// `formulation_id` is [`IBC_COMPOSITE`] or [`IBC_PROTOTYPICAL`]. A
/// non-positive `dt` selects the default stable step.
///
/// # Safety
/// `out` must point to a writable handle slot. The handle must be released
/// with [`ibc_couette_free`].
#[no_mangle]
pub unsafe extern "C" fn ibc_couette_new(
    n: usize,
    ds_dx: f64,
    formulation_id: c_int,
    re: f64,
    dt: f64,
    out: *mut *mut IbcCouette,
) -> IbcStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let f = formulation(formulation_id)?;
        let problem = lift(couette_problem(n, ds_dx))?;
        let g = problem.grid();
        let mut cfg = NsConfig::new(&g, re, 1.0, f);
        if dt > 0.0 {
            cfg.dt = dt;
        }
        let state = NsState::rest(g, problem.markers.len());
        let raw = Box::into_raw(Box::new(problem));
        // SAFETY: `raw` stays alive until IbcCouette::drop, after the stepper.
        let stepper = match Stepper::new(&*raw, cfg) {
            Ok(s) => s,
            Err(e) => {
                drop(Box::from_raw(raw));
                return Err(fail(status_of(&e), e.to_string()));
            }
        };
        *out = Box::into_raw(Box::new(IbcCouette { stepper: ManuallyDrop::new(stepper), problem: raw, state }));
        Ok(())
    })
}

/// Advance `count` steps. The relative velocity change of the last step goes
/// to `change_out` when it is not null.
///
/// # Safety
/// `h` must be a live handle and `change_out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ibc_couette_step(h: *mut IbcCouette, count: usize, change_out: *mut f64) -> IbcStatus {
    guard(|| {
        non_null(h, "handle")?;
        let h = &mut *h;
        let mut change = 0.0;
        for _ in 0..count {
            let (next, _) = lift(h.stepper.step(&h.state))?;
            let dv = next.v.flatten().iter().zip(h.state.v.flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            change = dv / (h.stepper.config().dt * h.state.v.max_abs() + 1e-300);
            h.state = next;
        }
        if !change_out.is_null() {
            *change_out = change;
        }
        Ok(())
    })
}

/// Step until steady state. The number of steps taken goes to `steps_out`
/// when it is not null. The state is left unchanged on failure.
///
/// # Safety
/// `h` must be a live handle and `steps_out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ibc_couette_run_to_steady(h: *mut IbcCouette, steps_out: *mut usize) -> IbcStatus {
    guard(|| {
        non_null(h, "handle")?;
        let h = &mut *h;
        let (s, hist) = lift(run_to_steady(&h.stepper, h.state.clone()))?;
        h.state = s;
        if !steps_out.is_null() {
            *steps_out = hist.steps;
        }
        Ok(())
    })
}

/// Simulated time, or NaN for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ibc_couette_time(h: *const IbcCouette) -> f64 {
    h.as_ref().map_or(f64::NAN, |h| h.state.t)
}

/// Number of entries per velocity component, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ibc_couette_face_count(h: *const IbcCouette) -> usize {
    h.as_ref().map_or(0, |h| h.state.v.x.len())
}

/// Copy the x and y face velocities.
///
/// # Safety
/// `h` must be a live handle; `vx` and `vy` must each point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ibc_couette_velocity(h: *const IbcCouette, vx: *mut f64, vy: *mut f64, len: usize) -> IbcStatus {
    guard(|| {
        non_null(h, "handle")?;
        let h = &*h;
        copy_out(&h.state.v.x, vx, len, "vx")?;
        copy_out(&h.state.v.y, vy, len, "vy")
    })
}

/// Largest velocity error relative to the exact steady profile.
///
/// # Safety
/// `h` must be a live handle and `err_out` writable.
#[no_mangle]
pub unsafe extern "C" fn ibc_couette_error(h: *const IbcCouette, err_out: *mut f64) -> IbcStatus {
    guard(|| {
        non_null(h, "handle")?;
        non_null(err_out, "err_out")?;
        let h = &*h;
        let ex = couette_velocity(&h.state.v.grid, COUETTE_KAPPA);
        let (inf, _) = lift(relative_error(&h.state.v.flatten(), &ex.flatten(), None))?;
        *err_out = inf;
        Ok(())
    })
}

/// Release a Couette handle. Null is ignored.
///
/// # Safety
/// `h` must be null or a handle from [`ibc_couette_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ibc_couette_free(h: *mut IbcCouette) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}
