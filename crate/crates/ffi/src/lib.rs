//! C ABI over the `pama` solvers.
//!
//! Every fallible entry point returns a [`PamaStatus`]; on anything other
//! than `PAMA_STATUS_OK` the message is available from [`pama_last_error`]
//! on the same thread until the next failing call. Handles are opaque and
//! owned by the caller once returned; each has exactly one `*_free`.
//! Panics never cross the boundary: they are caught and reported as
//! `PAMA_STATUS_PANIC`.
//!
//! Matrices cross the boundary column-major, `n × r` for `U` and `m × r`
//! for `V`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use pama::experiment::lambda_scale;
use pama::{
    run_palm, run_pama, Error, LossKind, Noise, ObservationSet, PalmConfig, PamaConfig, SmoothLoss, StopReason,
    ThetaSpec,
};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PamaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    Dimension = 3,
    Parse = 4,
    Numerical = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PamaNoise {
    Logistic = 0,
    Laplace = 1,
}

/// The regularizer family; `Scad` reads `theta_a` and `theta_rho`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PamaTheta {
    Count = 1,
    Square = 2,
    Abs = 3,
    Half = 4,
    TwoThirds = 5,
    Scad = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PamaSolver {
    Pama = 0,
    Palm = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PamaStop {
    MaxIterations = 0,
    RelativeChange = 1,
    ObjectiveStalled = 2,
}

/// Solver settings. Start from [`pama_solve_config_default`] and override.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct PamaSolveConfig {
    pub solver: PamaSolver,
    pub theta: PamaTheta,
    pub theta_a: f64,
    pub theta_rho: f64,
    pub lambda: f64,
    pub mu: f64,
    /// Number of factor columns `r`.
    pub rank: usize,
    pub max_iter: usize,
    /// Relative-change tolerance of the stopping rule.
    pub rel_tol: f64,
    /// Objective-stall tolerance of the stopping rule.
    pub obj_tol: f64,
    pub seed: u64,
}

/// A smooth loss together with its observations.
pub struct PamaProblem {
    loss: SmoothLoss,
}

/// Factors and summary of one solver run.
pub struct PamaResult {
    u: Vec<f64>,
    v: Vec<f64>,
    n: usize,
    m: usize,
    r: usize,
    iterations: usize,
    objective: f64,
    rank: usize,
    stop: PamaStop,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(PamaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidParameter { .. } | Error::Config(_) => PamaStatus::InvalidParameter,
            Error::Dimension(_) => PamaStatus::Dimension,
            Error::Parse(_) | Error::Checkpoint(_) => PamaStatus::Parse,
            Error::Svd(_) | Error::LineSearch { .. } | Error::DescentViolation { .. } => PamaStatus::Numerical,
            Error::Io(_) => PamaStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: PamaStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn set_last_error(msg: String) {
    // Interior NULs would truncate the C string; replace them.
    let msg = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(msg));
}

/// Runs `body`, recording any failure or panic as the thread's last error.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> PamaStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => PamaStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
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
            PamaStatus::Panic
        }
    }
}

fn theta_from(kind: PamaTheta, a: f64, rho: f64) -> Result<ThetaSpec, Failure> {
    Ok(match kind {
        PamaTheta::Count => ThetaSpec::Count,
        PamaTheta::Square => ThetaSpec::Square,
        PamaTheta::Abs => ThetaSpec::Abs,
        PamaTheta::Half => ThetaSpec::Half,
        PamaTheta::TwoThirds => ThetaSpec::TwoThirds,
        PamaTheta::Scad => ThetaSpec::scad(a, rho)?,
    })
}

/// # Safety
/// `p` must be null or valid for reads of `len` elements.
unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(PamaStatus::NullPointer, format!("`{name}` is null")));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `out` must be null or valid for a write.
unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(PamaStatus::NullPointer, format!("`{name}` is null")));
    }
    out.write(value);
    Ok(())
}

fn problem_ref<'a>(p: *const PamaProblem) -> Result<&'a PamaProblem, Failure> {
    // SAFETY: non-null handles come from `Box::into_raw` in this crate.
    unsafe { p.as_ref() }.ok_or_else(|| fail(PamaStatus::NullPointer, "problem handle is null"))
}

fn result_ref<'a>(p: *const PamaResult) -> Result<&'a PamaResult, Failure> {
    // SAFETY: non-null handles come from `Box::into_raw` in this crate.
    unsafe { p.as_ref() }.ok_or_else(|| fail(PamaStatus::NullPointer, "result handle is null"))
}

/// Message of the last failing call on this thread, or null if none failed.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn pama_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pama_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fills `config` with the CLI defaults: PAMA, θ1, `μ = 1e-8`, 200
/// iterations, tolerances `5e-4` and `1e-3`. `lambda` and `rank` are left
/// at zero and must be set.
///
/// # Safety
/// `config` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pama_solve_config_default(config: *mut PamaSolveConfig) -> PamaStatus {
    guard(|| {
        write_out(
            config,
            PamaSolveConfig {
                solver: PamaSolver::Pama,
                theta: PamaTheta::Count,
                theta_a: 3.0,
                theta_rho: 1.0,
                lambda: 0.0,
                mu: 1e-8,
                rank: 0,
                max_iter: 200,
                rel_tol: 5e-4,
                obj_tol: 1e-3,
                seed: 0,
            },
            "config",
        )
    })
}

/// Builds a one-bit problem from `count` draws `(rows[t], cols[t], signs[t])`
/// with 0-based indices and signs in `{1, -1}`. `laplace_b` is read only
/// for Laplace noise.
///
/// # Safety
/// `rows`, `cols` and `signs` must each be valid for `count` reads; `out`
/// must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pama_problem_new_onebit(
    n: usize,
    m: usize,
    count: usize,
    rows: *const usize,
    cols: *const usize,
    signs: *const i8,
    noise: PamaNoise,
    laplace_b: f64,
    out: *mut *mut PamaProblem,
) -> PamaStatus {
    guard(|| {
        let rows = slice_arg(rows, count, "rows")?;
        let cols = slice_arg(cols, count, "cols")?;
        let signs = slice_arg(signs, count, "signs")?;
        let mut obs = ObservationSet::new(n, m)?;
        for t in 0..count {
            obs.push(rows[t], cols[t], signs[t])?;
        }
        let noise = match noise {
            PamaNoise::Logistic => Noise::Logistic,
            PamaNoise::Laplace => Noise::laplace(laplace_b)?,
        };
        let loss = SmoothLoss::new(LossKind::OneBit(noise), obs)?;
        write_out(out, Box::into_raw(Box::new(PamaProblem { loss })), "out")
    })
}

/// Parses the observation text format (`n m`, `N`, then `N` lines `i j y`).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pama_problem_from_text(
    text: *const c_char,
    noise: PamaNoise,
    laplace_b: f64,
    out: *mut *mut PamaProblem,
) -> PamaStatus {
    guard(|| {
        if text.is_null() {
            return Err(fail(PamaStatus::NullPointer, "`text` is null"));
        }
        let text = CStr::from_ptr(text)
            .to_str()
            .map_err(|e| fail(PamaStatus::Parse, format!("text is not UTF-8: {e}")))?;
        let obs = ObservationSet::parse_text(text)?;
        let noise = match noise {
            PamaNoise::Logistic => Noise::Logistic,
            PamaNoise::Laplace => Noise::laplace(laplace_b)?,
        };
        let loss = SmoothLoss::new(LossKind::OneBit(noise), obs)?;
        write_out(out, Box::into_raw(Box::new(PamaProblem { loss })), "out")
    })
}

/// Releases a problem. Null is accepted and ignored.
///
/// # Safety
/// `problem` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pama_problem_free(problem: *mut PamaProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Largest column norm of the observed sign matrix; `λ = c_λ ·` this value.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pama_problem_lambda_scale(problem: *const PamaProblem, out: *mut f64) -> PamaStatus {
    guard(|| {
        let p = problem_ref(problem)?;
        write_out(out, lambda_scale(p.loss.observations()), "out")
    })
}

/// Runs the configured solver to its stopping rule.
///
/// # Safety
/// `config` must be valid for a read; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pama_solve(
    problem: *const PamaProblem,
    config: *const PamaSolveConfig,
    out: *mut *mut PamaResult,
) -> PamaStatus {
    guard(|| {
        let p = problem_ref(problem)?;
        let c = config
            .as_ref()
            .ok_or_else(|| fail(PamaStatus::NullPointer, "`config` is null"))?;
        let theta = theta_from(c.theta, c.theta_a, c.theta_rho)?;
        let (u, v, trace, stop) = match c.solver {
            PamaSolver::Pama => {
                let mut cfg = PamaConfig::new(c.lambda, theta, c.rank);
                cfg.mu = c.mu;
                cfg.max_iter = c.max_iter;
                cfg.eps1 = c.rel_tol;
                cfg.eps2 = c.obj_tol;
                cfg.seed = c.seed;
                let o = run_pama(&p.loss, &cfg, &mut |_| {})?;
                (o.u, o.v, o.trace, o.stop_reason)
            }
            PamaSolver::Palm => {
                let mut cfg = PalmConfig::new(c.lambda, theta, c.rank);
                cfg.mu = c.mu;
                cfg.max_iter = c.max_iter;
                cfg.eps3 = c.rel_tol;
                cfg.eps4 = c.obj_tol;
                cfg.seed = c.seed;
                let o = run_palm(&p.loss, &cfg)?;
                (o.u, o.v, o.trace, o.stop_reason)
            }
        };
        let last = trace.last().expect("trace is never empty");
        let result = PamaResult {
            n: u.nrows(),
            m: v.nrows(),
            r: u.ncols(),
            iterations: last.k,
            objective: last.objective,
            rank: last.rank,
            stop: match stop {
                StopReason::MaxIterations => PamaStop::MaxIterations,
                StopReason::RelativeChange => PamaStop::RelativeChange,
                StopReason::ObjectiveStalled => PamaStop::ObjectiveStalled,
            },
            // nalgebra storage is column-major already.
            u: u.as_slice().to_vec(),
            v: v.as_slice().to_vec(),
        };
        write_out(out, Box::into_raw(Box::new(result)), "out")
    })
}

/// Releases a result. Null is accepted and ignored.
///
/// # Safety
/// `result` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pama_result_free(result: *mut PamaResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Any of the output pointers may be null to skip that value.
///
/// # Safety
/// Non-null output pointers must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pama_result_dims(
    result: *const PamaResult,
    n: *mut usize,
    m: *mut usize,
    r: *mut usize,
) -> PamaStatus {
    guard(|| {
        let res = result_ref(result)?;
        for (dst, value) in [(n, res.n), (m, res.m), (r, res.r)] {
            if !dst.is_null() {
                dst.write(value);
            }
        }
        Ok(())
    })
}

/// Final iteration count, objective, nonzero-column count and stop reason.
/// Any of the output pointers may be null to skip that value.
///
/// # Safety
/// Non-null output pointers must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pama_result_summary(
    result: *const PamaResult,
    iterations: *mut usize,
    objective: *mut f64,
    rank: *mut usize,
    stop: *mut PamaStop,
) -> PamaStatus {
    guard(|| {
        let res = result_ref(result)?;
        if !iterations.is_null() {
            iterations.write(res.iterations);
        }
        if !objective.is_null() {
            objective.write(res.objective);
        }
        if !rank.is_null() {
            rank.write(res.rank);
        }
        if !stop.is_null() {
            stop.write(res.stop);
        }
        Ok(())
    })
}

unsafe fn copy_factor(src: &[f64], dst: *mut f64, len: usize) -> Result<(), Failure> {
    if len < src.len() {
        return Err(fail(
            PamaStatus::BufferTooSmall,
            format!("buffer holds {len} values, factor has {}", src.len()),
        ));
    }
    if dst.is_null() {
        return Err(fail(PamaStatus::NullPointer, "`buf` is null"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

/// Copies `U` (`n × r`, column-major) into `buf`, which must hold `n·r`.
///
/// # Safety
/// `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pama_result_copy_u(result: *const PamaResult, buf: *mut f64, len: usize) -> PamaStatus {
    guard(|| copy_factor(&result_ref(result)?.u, buf, len))
}

/// Copies `V` (`m × r`, column-major) into `buf`, which must hold `m·r`.
///
/// # Safety
/// `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pama_result_copy_v(result: *const PamaResult, buf: *mut f64, len: usize) -> PamaStatus {
    guard(|| copy_factor(&result_ref(result)?.v, buf, len))
}

/// Scalar proximal map `argmin_x (x − s)²/(2ν) + θ(x)` with the smallest
/// minimizer on ties.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pama_prox_theta(
    theta: PamaTheta,
    theta_a: f64,
    theta_rho: f64,
    nu: f64,
    s: f64,
    out: *mut f64,
) -> PamaStatus {
    guard(|| {
        let spec = theta_from(theta, theta_a, theta_rho)?;
        write_out(out, spec.prox(nu, s)?, "out")
    })
}
