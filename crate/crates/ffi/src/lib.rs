//! C interface to `chlab`.
//!
//! Objects are opaque heap handles created by `chlab_*_new`/`chlab_*_create`
//! style functions and released with the matching `*_free`. Every fallible
//! call returns a [`ChlabStatus`]; on failure a message is available from
//! [`chlab_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chlab::dynamics::Trajectory;
use chlab::{energy, preparation, Error, Interval, PeriodicField, PotentialModel, SolverConfig, SpectralWorkspace};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    GridSize = 3,
    OutsideHull = 4,
    Potential = 5,
    /// The run stopped early; the partial trajectory is still returned.
    SolverAbort = 6,
    /// A nonlinear solve failed; the partial trajectory is still returned.
    NonConvergence = 7,
    Io = 8,
    IndexOutOfRange = 9,
    Panic = 10,
}

/// Opaque potential handle.
pub struct ChlabPotential(PotentialModel);

/// Opaque periodic field handle.
pub struct ChlabField(PeriodicField);

/// Opaque trajectory handle.
pub struct ChlabTrajectory(Trajectory);

/// Solver settings. A negative `stabilization` selects it automatically.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ChlabSolverConfig {
    pub tau: f64,
    pub t_end: f64,
    pub stabilization: f64,
    pub snapshot_stride: usize,
    pub nonlinear_tol: f64,
    pub nonlinear_max_iter: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ChlabLedgerRecord {
    pub t: f64,
    pub energy: f64,
    pub dtnorm2: f64,
    pub slope2: f64,
    pub residual: f64,
}

impl From<&SolverConfig> for ChlabSolverConfig {
    fn from(c: &SolverConfig) -> Self {
        Self {
            tau: c.tau,
            t_end: c.t_end,
            stabilization: c.stabilization.unwrap_or(-1.0),
            snapshot_stride: c.snapshot_stride,
            nonlinear_tol: c.nonlinear_tol,
            nonlinear_max_iter: c.nonlinear_max_iter,
        }
    }
}

impl From<&ChlabSolverConfig> for SolverConfig {
    fn from(c: &ChlabSolverConfig) -> Self {
        Self {
            tau: c.tau,
            t_end: c.t_end,
            stabilization: (c.stabilization >= 0.0).then_some(c.stabilization),
            snapshot_stride: c.snapshot_stride,
            nonlinear_tol: c.nonlinear_tol,
            nonlinear_max_iter: c.nonlinear_max_iter,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> ChlabStatus {
    match e {
        Error::GridSize(_) | Error::GridMismatch(..) => ChlabStatus::GridSize,
        Error::DerivativeOrder(_) | Error::InvalidArgument(_) | Error::Config { .. } | Error::Parse { .. } => {
            ChlabStatus::InvalidArgument
        }
        Error::Potential(_) => ChlabStatus::Potential,
        Error::OutsideHull { .. } => ChlabStatus::OutsideHull,
        Error::SolverAbort { .. } => ChlabStatus::SolverAbort,
        Error::NonConvergence { .. } => ChlabStatus::NonConvergence,
        Error::OutputExists(_) | Error::Io(_) => ChlabStatus::Io,
    }
}

struct Failure(ChlabStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null() -> Failure {
    Failure(ChlabStatus::NullPointer, "null pointer argument".into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ChlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ChlabStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ChlabStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(null)
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null());
    }
    out.write(value);
    Ok(())
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message of the last failed call on this thread. Valid until the next
/// failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn chlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// The standard double well `(1 - v²)² / 4` tabulated on `[-3, 3]`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chlab_potential_double_well(out: *mut *mut ChlabPotential) -> ChlabStatus {
    guard(|| write(out, boxed(ChlabPotential(PotentialModel::double_well()))))
}

/// Polynomial potential `Σ c_i v^i` with its envelope tabulated on
/// `[lo, hi]` at `samples` points.
///
/// # Safety
/// `coefficients` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_potential_polynomial(
    coefficients: *const f64,
    len: usize,
    lo: f64,
    hi: f64,
    samples: usize,
    out: *mut *mut ChlabPotential,
) -> ChlabStatus {
    guard(|| {
        if coefficients.is_null() {
            return Err(null());
        }
        let c = std::slice::from_raw_parts(coefficients, len);
        let model = PotentialModel::polynomial(c, Interval::new(lo, hi), samples)?;
        write(out, boxed(ChlabPotential(model)))
    })
}

/// # Safety
/// `p` must come from a potential constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn chlab_potential_free(p: *mut ChlabPotential) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// `W(v)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_potential_eval(p: *const ChlabPotential, v: f64, out: *mut f64) -> ChlabStatus {
    guard(|| write(out, borrow(p)?.0.eval(v)))
}

/// Convex envelope `W**(v)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_potential_envelope(p: *const ChlabPotential, v: f64, out: *mut f64) -> ChlabStatus {
    guard(|| {
        let m = &borrow(p)?.0;
        m.check_domain(v)?;
        write(out, m.envelope(v))
    })
}

/// `W**'(v)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_potential_envelope_derivative(
    p: *const ChlabPotential,
    v: f64,
    out: *mut f64,
) -> ChlabStatus {
    guard(|| write(out, borrow(p)?.0.envelope_derivative(v)?))
}

/// Number of components of the global unstable set.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_potential_sigma_g_count(p: *const ChlabPotential, out: *mut usize) -> ChlabStatus {
    guard(|| write(out, borrow(p)?.0.sigma_g().len()))
}

/// Endpoints of component `index` of the global unstable set.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_potential_sigma_g(
    p: *const ChlabPotential,
    index: usize,
    lo: *mut f64,
    hi: *mut f64,
) -> ChlabStatus {
    guard(|| {
        let s = borrow(p)?.0.sigma_g();
        let c = s.get(index).ok_or_else(|| {
            Failure(
                ChlabStatus::IndexOutOfRange,
                format!("component {index} of {}", s.len()),
            )
        })?;
        write(lo, c.lo)?;
        write(hi, c.hi)
    })
}

/// Concavity defect `ψ(a, b)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_potential_psi(p: *const ChlabPotential, a: f64, b: f64, out: *mut f64) -> ChlabStatus {
    guard(|| write(out, borrow(p)?.0.psi(a, b)?))
}

/// Modulus `ω(ρ)` over pairs in `[-m, m]`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_potential_omega(
    p: *const ChlabPotential,
    rho: f64,
    m: f64,
    out: *mut f64,
) -> ChlabStatus {
    guard(|| write(out, borrow(p)?.0.omega(rho, m)?))
}

/// Field from `n` grid values at `x_j = j / n`.
///
/// # Safety
/// `values` must point to `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_field_new(values: *const f64, n: usize, out: *mut *mut ChlabField) -> ChlabStatus {
    guard(|| {
        if values.is_null() {
            return Err(null());
        }
        let f = PeriodicField::new(std::slice::from_raw_parts(values, n).to_vec())?;
        write(out, boxed(ChlabField(f)))
    })
}

/// # Safety
/// `f` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn chlab_field_free(f: *mut ChlabField) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Grid size, 0 for a null handle.
///
/// # Safety
/// `f` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_field_len(f: *const ChlabField) -> usize {
    f.as_ref().map_or(0, |f| f.0.n())
}

/// Copies the values into `buf`, which must hold `len >= n` doubles.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn chlab_field_values(f: *const ChlabField, buf: *mut f64, len: usize) -> ChlabStatus {
    guard(|| {
        let v = borrow(f)?.0.values();
        if buf.is_null() {
            return Err(null());
        }
        if len < v.len() {
            return Err(Failure(
                ChlabStatus::InvalidArgument,
                format!("buffer holds {len} values, field has {}", v.len()),
            ));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

/// `‖f - mean f‖₋₁`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_h_minus1_norm(f: *const ChlabField, out: *mut f64) -> ChlabStatus {
    guard(|| write(out, chlab::field::h_minus1_norm(&borrow(f)?.0)?))
}

/// `F_ε(f)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_energy_eps(
    p: *const ChlabPotential,
    f: *const ChlabField,
    eps: f64,
    out: *mut f64,
) -> ChlabStatus {
    guard(|| {
        let f = &borrow(f)?.0;
        let ws = SpectralWorkspace::new(f.n())?;
        write(out, energy::energy_eps(&borrow(p)?.0, &ws, f, eps)?)
    })
}

/// `F**(f)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_energy_star(
    p: *const ChlabPotential,
    f: *const ChlabField,
    out: *mut f64,
) -> ChlabStatus {
    guard(|| write(out, energy::energy_star(&borrow(p)?.0, &borrow(f)?.0)))
}

/// Cahn-Hilliard slope `‖(W'(f) - ε² f'')'‖`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_slope_eps(
    p: *const ChlabPotential,
    f: *const ChlabField,
    eps: f64,
    out: *mut f64,
) -> ChlabStatus {
    guard(|| {
        let f = &borrow(f)?.0;
        let ws = SpectralWorkspace::new(f.n())?;
        write(out, energy::slope_eps(&borrow(p)?.0, &ws, f, eps)?)
    })
}

/// Relaxed slope `‖(W**'(f))'‖`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_slope_star(
    p: *const ChlabPotential,
    f: *const ChlabField,
    out: *mut f64,
) -> ChlabStatus {
    guard(|| write(out, energy::slope_star(&borrow(p)?.0, &borrow(f)?.0)))
}

/// Well-prepared initial data for `target` at interface width `eps`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_prepare_recovery(
    p: *const ChlabPotential,
    target: *const ChlabField,
    eps: f64,
    out: *mut *mut ChlabField,
) -> ChlabStatus {
    guard(|| {
        let f = preparation::prepare_recovery(&borrow(p)?.0, &borrow(target)?.0, eps)?;
        write(out, boxed(ChlabField(f)))
    })
}

/// Default Cahn-Hilliard settings for `eps` up to `t_end`.
#[no_mangle]
pub extern "C" fn chlab_solver_config_cahn_hilliard(eps: f64, t_end: f64) -> ChlabSolverConfig {
    (&SolverConfig::cahn_hilliard(eps, t_end)).into()
}

/// Default relaxed-flow settings up to `t_end`.
#[no_mangle]
pub extern "C" fn chlab_solver_config_stefan(t_end: f64) -> ChlabSolverConfig {
    (&SolverConfig::stefan(t_end)).into()
}

fn finish_run(result: chlab::Result<Trajectory>, out: *mut *mut ChlabTrajectory) -> Result<(), Failure> {
    match result {
        Ok(t) => unsafe { write(out, boxed(ChlabTrajectory(t))) },
        Err(e) => {
            let failure = Failure(status_of(&e), e.to_string());
            match e {
                Error::SolverAbort { partial, .. } | Error::NonConvergence { partial, .. } => unsafe {
                    write(out, boxed(ChlabTrajectory(*partial)))?;
                },
                _ => {}
            }
            Err(failure)
        }
    }
}

/// Cahn-Hilliard run. On `SolverAbort` the partial trajectory is still
/// stored in `*out` and must be freed.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_run_cahn_hilliard(
    p: *const ChlabPotential,
    u0: *const ChlabField,
    eps: f64,
    config: *const ChlabSolverConfig,
    out: *mut *mut ChlabTrajectory,
) -> ChlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        out.write(ptr::null_mut());
        let cfg: SolverConfig = borrow(config)?.into();
        finish_run(chlab::run_cahn_hilliard(&borrow(p)?.0, &borrow(u0)?.0, eps, &cfg), out)
    })
}

/// Relaxed-flow run. On `SolverAbort` or `NonConvergence` the partial
/// trajectory is still stored in `*out` and must be freed.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_run_stefan(
    p: *const ChlabPotential,
    u0: *const ChlabField,
    config: *const ChlabSolverConfig,
    out: *mut *mut ChlabTrajectory,
) -> ChlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        out.write(ptr::null_mut());
        let cfg: SolverConfig = borrow(config)?.into();
        finish_run(chlab::run_stefan(&borrow(p)?.0, &borrow(u0)?.0, &cfg), out)
    })
}

/// # Safety
/// `t` must come from a run function and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn chlab_trajectory_free(t: *mut ChlabTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of ledger records (one per step plus the initial state).
///
/// # Safety
/// `t` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_trajectory_ledger_len(t: *const ChlabTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.0.ledger.len())
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_trajectory_ledger(
    t: *const ChlabTrajectory,
    index: usize,
    out: *mut ChlabLedgerRecord,
) -> ChlabStatus {
    guard(|| {
        let ledger = &borrow(t)?.0.ledger;
        let r = ledger.get(index).ok_or_else(|| {
            Failure(
                ChlabStatus::IndexOutOfRange,
                format!("record {index} of {}", ledger.len()),
            )
        })?;
        write(
            out,
            ChlabLedgerRecord {
                t: r.t,
                energy: r.energy,
                dtnorm2: r.dtnorm2,
                slope2: r.slope2,
                residual: r.residual,
            },
        )
    })
}

/// Number of stored snapshots.
///
/// # Safety
/// `t` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_trajectory_snapshot_count(t: *const ChlabTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.0.snapshots.len())
}

/// Copy of snapshot `index` and its time. The field must be freed.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_trajectory_snapshot(
    t: *const ChlabTrajectory,
    index: usize,
    time: *mut f64,
    out: *mut *mut ChlabField,
) -> ChlabStatus {
    guard(|| {
        let tr = &borrow(t)?.0;
        let s = tr.snapshots.get(index).ok_or_else(|| {
            Failure(
                ChlabStatus::IndexOutOfRange,
                format!("snapshot {index} of {}", tr.snapshots.len()),
            )
        })?;
        write(time, tr.times[index])?;
        write(out, boxed(ChlabField(s.clone())))
    })
}

/// Energy-dissipation residual at ledger time `time`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn chlab_trajectory_dissipation_residual(
    t: *const ChlabTrajectory,
    time: f64,
    out: *mut f64,
) -> ChlabStatus {
    guard(|| write(out, borrow(t)?.0.dissipation_residual(time)?))
}
