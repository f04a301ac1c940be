//! C interface to the model manifolds, explicit constants and the radial kernel solver.
//!
//! Every function returns an [`FdStatus`]; results go through out-pointers. Objects are
//! opaque handles released with their `_free` function. The message of the last error on the
//! calling thread is available from [`fd_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use fakedist::fake::{fake_distance, FakeDistanceField};
use fakedist::geom::{Domain, RadialGrid};
use fakedist::model::{CurvatureProfile, ModelKernel, ModelManifold};
use fakedist::psolve::{green_kernel_numeric, PSolveConfig, SolveReport};
use fakedist::verify;
use fakedist::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Range = 4,
    Parabolic = 5,
    NonConvergence = 6,
    Precondition = 7,
    Io = 8,
    Panic = 9,
}

/// A model manifold `dt² + h(t)² g_{S^{m−1}}`.
pub struct FdModel {
    inner: Arc<ModelManifold>,
}

/// A Green kernel on a radial grid of a model, with its fake distance.
pub struct FdSolution {
    r: Vec<f64>,
    report: SolveReport,
    fake: FakeDistanceField,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> FdStatus {
    match e {
        Error::Domain(_) | Error::InvalidProfile(_) | Error::InvalidMetric { .. } => FdStatus::Domain,
        Error::Range(_) => FdStatus::Range,
        Error::Parabolic { .. } | Error::Indeterminate(_) => FdStatus::Parabolic,
        Error::NonConvergence(_) | Error::NotMonotone(_) | Error::NoLimit(_) | Error::Degenerate(_) => FdStatus::NonConvergence,
        Error::Precondition(_) => FdStatus::Precondition,
        Error::Io(_) | Error::Parse { .. } | Error::Json(_) => FdStatus::Io,
        Error::Config(_) => FdStatus::InvalidArgument,
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), FdStatus>) -> FdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FdStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            FdStatus::Panic
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, FdStatus>;
}

impl<T> OrStatus<T> for fakedist::Result<T> {
    fn or_status(self) -> Result<T, FdStatus> {
        self.map_err(|e| {
            set_error(e.to_string());
            status_of(&e)
        })
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), FdStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(FdStatus::NullPointer);
    }
    Ok(())
}

unsafe fn write<T>(out: *mut T, v: T) -> Result<(), FdStatus> {
    non_null(out, "output pointer")?;
    out.write(v);
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated, truncated to
/// `len`). Returns the full message length without the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn fd_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let bytes = bytes.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Model of constant curvature `−kappa2` in dimension `m`, tabulated up to `t_max`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_model_new_constant(m: usize, kappa2: f64, t_max: f64, out: *mut *mut FdModel) -> FdStatus {
    guard(|| {
        non_null(out, "out")?;
        let mm = ModelManifold::new(m, CurvatureProfile::constant(kappa2), t_max).or_status()?;
        write(out, Box::into_raw(Box::new(FdModel { inner: Arc::new(mm) })))
    })
}

/// # Safety
/// `model` must be null or a handle from `fd_model_new_constant` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fd_model_free(model: *mut FdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// `h(t)`, the sphere volume `v_h(t)` and the ball volume `V_h(t)`.
///
/// # Safety
/// `model` must be a live handle; the outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_model_volumes(model: *const FdModel, t: f64, h: *mut f64, v: *mut f64, big_v: *mut f64) -> FdStatus {
    guard(|| {
        non_null(model, "model")?;
        let mm = &(*model).inner;
        let sv = mm.sphere_volume(t).or_status()?;
        let bv = mm.ball_volume(t).or_status()?;
        write(h, mm.h(t))?;
        write(v, sv)?;
        write(big_v, bv)
    })
}

/// Value of the entire model kernel of the `p`-Laplacian at distance `t`.
///
/// # Safety
/// `model` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_model_kernel(model: *const FdModel, p: f64, t: f64, out: *mut f64) -> FdStatus {
    guard(|| {
        non_null(model, "model")?;
        let k = ModelKernel::entire((*model).inner.clone(), p).or_status()?;
        write(out, k.value(t).or_status()?)
    })
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_decay_constant(p: f64, nu: f64, sobolev: f64, out: *mut f64) -> FdStatus {
    guard(|| write(out, verify::decay_constant(p, nu, sobolev).or_status()?))
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_half_harnack_constant(p: f64, nu: f64, q: f64, out: *mut f64) -> FdStatus {
    guard(|| write(out, verify::half_harnack_constants(p, nu, q).or_status()?))
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_flat_sobolev_constant(m: usize, p: f64, out: *mut f64) -> FdStatus {
    guard(|| write(out, verify::flat_sobolev_constant(m, p).or_status()?))
}

/// Green kernel of the `p`-Laplacian on a radial grid of `model` with `n` cells on
/// `[eps_pole, t_out]`, and its fake distance against the same model.
///
/// # Safety
/// `model` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_radial_solve(
    model: *const FdModel,
    p: f64,
    eps_pole: f64,
    t_out: f64,
    n: usize,
    out: *mut *mut FdSolution,
) -> FdStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        let mm = (*model).inner.clone();
        let dom = Domain::Radial(RadialGrid::new(mm.clone(), eps_pole, t_out, n, 0.01).or_status()?);
        let report = green_kernel_numeric(&dom, &PSolveConfig::with_p(p), &[]).or_status()?;
        let fake = fake_distance(&dom, &report, &ModelKernel::entire(mm, p).or_status()?).or_status()?;
        let sol = FdSolution { r: dom.distance().to_vec(), report, fake };
        write(out, Box::into_raw(Box::new(sol)))
    })
}

/// # Safety
/// `sol` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_solution_len(sol: *const FdSolution, out: *mut usize) -> FdStatus {
    guard(|| {
        non_null(sol, "solution")?;
        write(out, (*sol).r.len())
    })
}

/// Copies distances, log kernel values and fake distances per vertex. Any of the buffers may
/// be null; the others must hold `len` values, with `len` equal to `fd_solution_len`.
///
/// # Safety
/// `sol` must be a live handle and every non-null buffer valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fd_solution_fields(
    sol: *const FdSolution,
    r: *mut f64,
    log_kernel: *mut f64,
    rho: *mut f64,
    len: usize,
) -> FdStatus {
    guard(|| {
        non_null(sol, "solution")?;
        let s = &*sol;
        if len != s.r.len() {
            set_error(format!("buffer length {len} but the solution has {} vertices", s.r.len()));
            return Err(FdStatus::InvalidArgument);
        }
        for (dst, src) in [(r, &s.r), (log_kernel, &s.report.log_field), (rho, &s.fake.rho)] {
            if !dst.is_null() {
                ptr::copy_nonoverlapping(src.as_ptr(), dst, len);
            }
        }
        Ok(())
    })
}

/// Weak residual of the solve and its `log` capacity.
///
/// # Safety
/// `sol` must be a live handle; the outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_solution_stats(sol: *const FdSolution, residual: *mut f64, log_capacity: *mut f64) -> FdStatus {
    guard(|| {
        non_null(sol, "solution")?;
        write(residual, (*sol).report.residual_weak)?;
        write(log_capacity, (*sol).report.log_capacity)
    })
}

/// # Safety
/// `sol` must be null or a handle from `fd_radial_solve` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fd_solution_free(sol: *mut FdSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}
