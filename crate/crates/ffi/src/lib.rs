//! C ABI over the solver.
//!
//! Every function returns a [`PisnnStatus`]; on failure the message is
//! available from [`pisnn_last_error_message`] on the same thread. A
//! [`PisnnSim`] handle is not thread-safe: use one handle per thread or lock
//! around calls.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use pisnn::dfp::{Integrator, Simulation, SolverConfig};
use pisnn::domain::{make_grid, AxisBoundary, GridSpec, QuotaParam, StateField};
use pisnn::flux::Constitutive;
use pisnn::metrics::total_mass;
use pisnn::projector::quantize_value;
use pisnn::sum::CompensatedSum;
use pisnn::Error;

pub const PISNN_BOUNDARY_DIRICHLET: u32 = 0;
pub const PISNN_BOUNDARY_INSULATED: u32 = 1;
pub const PISNN_BOUNDARY_PERIODIC: u32 = 2;

pub const PISNN_INTEGRATOR_EULER: u32 = 0;
pub const PISNN_INTEGRATOR_RK4: u32 = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PisnnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidGrid = 3,
    CflViolation = 4,
    ShapeMismatch = 5,
    NonFinite = 6,
    QuotaTooSmall = 7,
    IndexOutOfRange = 8,
    Panic = 9,
}

/// One axis: a `PISNN_BOUNDARY_*` kind and, for Dirichlet, the wall values.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PisnnAxis {
    pub kind: u32,
    pub lower: f64,
    pub upper: f64,
}

/// Grid description. `dims` is 1 or 2; `ly`, `dy` and `y` are ignored in 1D.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PisnnGridDesc {
    pub dims: u32,
    pub lx: f64,
    pub ly: f64,
    pub dx: f64,
    pub dy: f64,
    pub dt: f64,
    pub x: PisnnAxis,
    pub y: PisnnAxis,
}

/// Opaque simulation handle.
pub struct PisnnSim {
    sim: Simulation,
    spikes: CompensatedSum,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> PisnnStatus {
    match e {
        Error::NonIntegralGrid { .. } | Error::DegenerateGrid { .. } | Error::PeriodicMismatch { .. } => {
            PisnnStatus::InvalidGrid
        }
        Error::CflViolation { .. } => PisnnStatus::CflViolation,
        Error::ShapeMismatch { .. } => PisnnStatus::ShapeMismatch,
        Error::NonFiniteState { .. } => PisnnStatus::NonFinite,
        Error::QuotaTooSmall { .. } => PisnnStatus::QuotaTooSmall,
        Error::IndexOutOfRange { .. } => PisnnStatus::IndexOutOfRange,
        _ => PisnnStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PisnnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PisnnStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            PisnnStatus::NullPointer
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            PisnnStatus::Panic
        }
    }
}

fn axis(a: PisnnAxis) -> Result<AxisBoundary, Fail> {
    Ok(match a.kind {
        PISNN_BOUNDARY_DIRICHLET => AxisBoundary::dirichlet(a.lower, a.upper),
        PISNN_BOUNDARY_INSULATED => AxisBoundary::insulated(),
        PISNN_BOUNDARY_PERIODIC => AxisBoundary::periodic(),
        k => return Err(Error::InvalidParameter(format!("unknown boundary kind {k}")).into()),
    })
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn input<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or a live handle from [`pisnn_sim_new`].
unsafe fn handle<'a>(p: *mut PisnnSim) -> Result<&'a mut PisnnSim, Fail> {
    p.as_mut().ok_or(Fail::Null("sim"))
}

/// Creates a simulation with constant diffusivity `kappa` from `len` initial
/// cell values (row-major, x fastest). On success `*out` owns the handle.
///
/// # Safety
/// `desc` must point to a valid descriptor, `u0` to `len` doubles, and `out`
/// to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn pisnn_sim_new(
    desc: *const PisnnGridDesc,
    kappa: f64,
    quota: f64,
    integrator: u32,
    u0: *const f64,
    len: usize,
    out: *mut *mut PisnnSim,
) -> PisnnStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = ptr::null_mut();
        let d = *desc.as_ref().ok_or(Fail::Null("desc"))?;
        let spec = match d.dims {
            1 => GridSpec::one_d(d.lx, d.dx, d.dt, axis(d.x)?),
            2 => GridSpec::two_d(d.lx, d.ly, d.dx, d.dy, d.dt, axis(d.x)?, axis(d.y)?),
            n => return Err(Error::InvalidParameter(format!("dims must be 1 or 2, got {n}")).into()),
        };
        let grid = make_grid(spec)?;
        let integrator = match integrator {
            PISNN_INTEGRATOR_EULER => Integrator::ForwardEuler,
            PISNN_INTEGRATOR_RK4 => Integrator::Rk4,
            k => return Err(Error::InvalidParameter(format!("unknown integrator {k}")).into()),
        };
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")).into());
        }
        let state = StateField::new(&grid, input(u0, len, "u0")?.to_vec())?;
        let cfg = SolverConfig::new(Constitutive::constant(kappa), QuotaParam::new(quota)?, integrator);
        let sim = Simulation::new(grid, cfg, state)?;
        *out = Box::into_raw(Box::new(PisnnSim {
            sim,
            spikes: CompensatedSum::new(),
        }));
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `sim` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pisnn_sim_free(sim: *mut PisnnSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Number of cells, or 0 for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pisnn_sim_n_cells(sim: *const PisnnSim) -> usize {
    sim.as_ref().map_or(0, |s| s.sim.grid().n_cells())
}

/// Advances `n_steps` steps. On failure the state is left at the last
/// successful step.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pisnn_sim_step(sim: *mut PisnnSim, n_steps: usize) -> PisnnStatus {
    guard(|| {
        let h = handle(sim)?;
        for _ in 0..n_steps {
            let s = h.sim.step()?;
            h.spikes.add(s.spikes_this_step);
        }
        Ok(())
    })
}

/// Copies the state into `buf`, which must hold exactly `n_cells` values.
///
/// # Safety
/// `sim` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pisnn_sim_get_state(sim: *const PisnnSim, buf: *mut f64, len: usize) -> PisnnStatus {
    guard(|| {
        let h = sim.as_ref().ok_or(Fail::Null("sim"))?;
        let v = h.sim.state().values();
        if len != v.len() {
            return Err(Error::ShapeMismatch {
                expected: v.len(),
                found: len,
            }
            .into());
        }
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        slice::from_raw_parts_mut(buf, len).copy_from_slice(v);
        Ok(())
    })
}

/// Overwrites `n` cells with observed values; the change is booked as a source
/// in the conservation ledger.
///
/// # Safety
/// `sim` must be a live handle; `cells` and `values` valid for `n` reads.
#[no_mangle]
pub unsafe extern "C" fn pisnn_sim_assimilate(
    sim: *mut PisnnSim,
    cells: *const usize,
    values: *const f64,
    n: usize,
) -> PisnnStatus {
    guard(|| {
        let h = handle(sim)?;
        let c = input(cells, n, "cells")?;
        let v = input(values, n, "values")?;
        let obs: Vec<(usize, f64)> = c.iter().copied().zip(v.iter().copied()).collect();
        h.sim.assimilate(&obs)?;
        Ok(())
    })
}

/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pisnn_sim_set_quota(sim: *mut PisnnSim, quota: f64) -> PisnnStatus {
    guard(|| {
        handle(sim)?.sim.set_quota(QuotaParam::new(quota)?);
        Ok(())
    })
}

fn scalar(sim: *const PisnnSim, out: *mut f64, f: impl FnOnce(&PisnnSim) -> f64) -> PisnnStatus {
    guard(|| {
        // SAFETY: callers pass a live handle or null, checked here.
        let h = unsafe { sim.as_ref() }.ok_or(Fail::Null("sim"))?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        // SAFETY: non-null and documented as writable.
        unsafe { *out = f(h) };
        Ok(())
    })
}

/// Simulated time.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pisnn_sim_time(sim: *const PisnnSim, out: *mut f64) -> PisnnStatus {
    scalar(sim, out, |h| h.sim.time())
}

/// Total mass `ΔV·Σu`.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pisnn_sim_total_mass(sim: *const PisnnSim, out: *mut f64) -> PisnnStatus {
    scalar(sim, out, |h| total_mass(h.sim.state(), h.sim.grid()))
}

/// Spikes emitted since creation (stage-averaged per step).
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pisnn_sim_total_spikes(sim: *const PisnnSim, out: *mut f64) -> PisnnStatus {
    scalar(sim, out, |h| h.spikes.value())
}

/// Relative mismatch between the mass and the ledger's expected mass.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pisnn_sim_ledger_residual(sim: *const PisnnSim, out: *mut f64) -> PisnnStatus {
    scalar(sim, out, |h| h.sim.ledger().closure_residual(h.sim.mass()))
}

/// Quantizes `n` fluxes to signed quanta counts with `|out·quota − flux| ≤ quota/2`.
///
/// # Safety
/// `flux` must be valid for `n` reads and `out` for `n` writes.
#[no_mangle]
pub unsafe extern "C" fn pisnn_quantize(flux: *const f64, n: usize, quota: f64, out: *mut i64) -> PisnnStatus {
    guard(|| {
        let q = QuotaParam::new(quota)?.get();
        let f = input(flux, n, "flux")?;
        if n > 0 && out.is_null() {
            return Err(Fail::Null("out"));
        }
        let mut tmp = Vec::with_capacity(n);
        for (face, &v) in f.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteState { step: 0 }.into());
            }
            tmp.push(quantize_value(v, q).ok_or(Error::QuotaTooSmall {
                face,
                ratio: (v / q).abs(),
            })?);
        }
        if n > 0 {
            slice::from_raw_parts_mut(out, n).copy_from_slice(&tmp);
        }
        Ok(())
    })
}

/// Message for the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pisnn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pisnn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
