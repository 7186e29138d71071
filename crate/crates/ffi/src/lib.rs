//! C ABI over `aqgd-core`.
//!
//! Objects cross the boundary as opaque pointers created by a `*_new` or
//! producing call and released by the matching `*_free`. Every fallible call
//! returns an [`AqgdStatus`]; on failure the message is available from
//! [`aqgd_last_error`] until the next failing call on the same thread.
//! Matrices are dense row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use aqgd_core::harness::{run_experiment, ExperimentConfig, ExperimentOutcome, HarnessError};
use aqgd_core::linalg::Matrix;
use aqgd_core::lqr::{lqr_cost, lqr_grad, optimal_policy, random_stable_instance, LqrError, LtiSystem};
use aqgd_core::quantize::{scalar_encode, scalar_gamma};

/// Result of every fallible call. Values 2 to 4 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AqgdStatus {
    Ok = 0,
    Failed = 1,
    InvariantViolation = 2,
    Divergence = 3,
    ConfigError = 4,
    NullPointer = 5,
    InvalidArgument = 6,
    Unstabilizing = 7,
    Panic = 8,
}

/// Opaque experiment configuration.
pub struct AqgdConfig(ExperimentConfig);

/// Opaque result of one experiment run.
pub struct AqgdRun(ExperimentOutcome);

/// Opaque linear system with quadratic cost.
pub struct AqgdSystem(LtiSystem);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(AqgdStatus, String);

impl From<HarnessError> for Fail {
    fn from(e: HarnessError) -> Self {
        let status = match e.exit_code() {
            2 => AqgdStatus::InvariantViolation,
            3 => AqgdStatus::Divergence,
            4 => AqgdStatus::ConfigError,
            _ => AqgdStatus::Failed,
        };
        Fail(status, e.to_string())
    }
}

impl From<LqrError> for Fail {
    fn from(e: LqrError) -> Self {
        let status = match e {
            LqrError::Unstabilizing { .. } => AqgdStatus::Unstabilizing,
            LqrError::InvalidSystem(_) | LqrError::Parse { .. } => AqgdStatus::InvalidArgument,
            _ => AqgdStatus::Failed,
        };
        Fail(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(AqgdStatus::InvalidArgument, msg.into())
}

fn null(what: &str) -> Fail {
    Fail(AqgdStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, converting errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AqgdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AqgdStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(format!("internal panic: {msg}"));
            AqgdStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn as_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{what}` is not UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn matrix(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<Matrix, Fail> {
    Ok(Matrix::from_row_slice(rows, cols, slice(p, rows * cols, what)?))
}

fn write_row_major(m: &Matrix, out: &mut [f64]) {
    for (i, row) in m.row_iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[i * m.ncols() + j] = *v;
        }
    }
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the most recent failure on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn aqgd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static description of a status value.
#[no_mangle]
pub extern "C" fn aqgd_status_str(status: AqgdStatus) -> *const c_char {
    let s: &'static CStr = match status {
        AqgdStatus::Ok => c"ok",
        AqgdStatus::Failed => c"failed",
        AqgdStatus::InvariantViolation => c"invariant violation",
        AqgdStatus::Divergence => c"divergence",
        AqgdStatus::ConfigError => c"configuration error",
        AqgdStatus::NullPointer => c"null pointer",
        AqgdStatus::InvalidArgument => c"invalid argument",
        AqgdStatus::Unstabilizing => c"policy is not stabilizing",
        AqgdStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// `√d / 2^b`, the contraction factor of the b-bit scalar quantizer.
#[no_mangle]
pub extern "C" fn aqgd_scalar_gamma(dim: usize, bits: u32) -> f64 {
    scalar_gamma(dim, bits)
}

/// Quantizes `x` (length `dim`, `‖x‖ ≤ range`) with `bits` per coordinate and
/// writes the reconstruction to `out`.
///
/// # Safety
/// `x` and `out` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn aqgd_scalar_quantize(
    x: *const f64,
    dim: usize,
    range: f64,
    bits: u32,
    out: *mut f64,
) -> AqgdStatus {
    guard(|| {
        let x = slice(x, dim, "x")?;
        let out = slice_mut(out, dim, "out")?;
        let (_, xhat) = scalar_encode(x, range, bits).map_err(|e| invalid(e.to_string()))?;
        out.copy_from_slice(&xhat);
        Ok(())
    })
}

/// Configuration with every key at its default.
#[no_mangle]
pub extern "C" fn aqgd_config_new() -> *mut AqgdConfig {
    Box::into_raw(Box::new(AqgdConfig(ExperimentConfig::default())))
}

/// Parses the `key = value` text format.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aqgd_config_parse(text: *const c_char, out: *mut *mut AqgdConfig) -> AqgdStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_text(as_str(text, "text")?)?;
        store(out, AqgdConfig(cfg))
    })
}

/// Assigns one key, using the names of the text format.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn aqgd_config_set(cfg: *mut AqgdConfig, key: *const c_char, value: *const c_char) -> AqgdStatus {
    guard(|| {
        let cfg = as_mut(cfg, "cfg")?;
        cfg.0.set(as_str(key, "key")?, as_str(value, "value")?)?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or come from this library, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn aqgd_config_free(cfg: *mut AqgdConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the experiment. Invariant violations are reported through
/// [`aqgd_run_violations`], not the status.
///
/// # Safety
/// `cfg` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aqgd_run(cfg: *const AqgdConfig, out: *mut *mut AqgdRun) -> AqgdStatus {
    guard(|| {
        let cfg = as_ref(cfg, "cfg")?;
        let outcome = run_experiment(&cfg.0)?;
        store(out, AqgdRun(outcome))
    })
}

/// Number of recorded iterates, `T + 1`; zero for a null handle.
///
/// # Safety
/// `run` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn aqgd_run_len(run: *const AqgdRun) -> usize {
    run.as_ref().map_or(0, |r| r.0.trace.len())
}

/// Copies the optimality gaps into `out`, which holds `len` doubles; `len`
/// must equal [`aqgd_run_len`].
///
/// # Safety
/// `run` must come from this library and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn aqgd_run_gaps(run: *const AqgdRun, out: *mut f64, len: usize) -> AqgdStatus {
    guard(|| {
        let run = as_ref(run, "run")?;
        let gaps = run.0.trace.gaps();
        if len != gaps.len() {
            return Err(invalid(format!("buffer holds {len} values, trace has {}", gaps.len())));
        }
        slice_mut(out, len, "out")?.copy_from_slice(&gaps);
        Ok(())
    })
}

/// # Safety
/// `run` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn aqgd_run_final_gap(run: *const AqgdRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.0.summary.final_gap)
}

/// # Safety
/// `run` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn aqgd_run_total_bits(run: *const AqgdRun) -> u64 {
    run.as_ref().map_or(0, |r| r.0.summary.total_bits)
}

/// # Safety
/// `run` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn aqgd_run_violations(run: *const AqgdRun) -> usize {
    run.as_ref().map_or(0, |r| r.0.summary.violations)
}

/// Writes the trace CSV and its summary file.
///
/// # Safety
/// `run` must come from this library and `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn aqgd_run_write_csv(run: *const AqgdRun, path: *const c_char) -> AqgdStatus {
    guard(|| {
        let run = as_ref(run, "run")?;
        run.0.write(Path::new(as_str(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `run` must be null or come from this library, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn aqgd_run_free(run: *mut AqgdRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Builds `x' = Ax + Bu + w` with stage cost `xᵀQx + uᵀRu` and noise
/// covariance `sigma_w`. `a`, `q`, `sigma_w` are n×n, `b` is n×m, `r` is m×m.
///
/// # Safety
/// Each matrix pointer must hold the stated number of doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aqgd_system_new(
    n: usize,
    m: usize,
    a: *const f64,
    b: *const f64,
    q: *const f64,
    r: *const f64,
    sigma_w: *const f64,
    out: *mut *mut AqgdSystem,
) -> AqgdStatus {
    guard(|| {
        if n == 0 || m == 0 {
            return Err(invalid("n and m must be positive"));
        }
        let sys = LtiSystem::new(
            matrix(a, n, n, "a")?,
            matrix(b, n, m, "b")?,
            matrix(q, n, n, "q")?,
            matrix(r, m, m, "r")?,
            matrix(sigma_w, n, n, "sigma_w")?,
        )?;
        store(out, AqgdSystem(sys))
    })
}

/// Random Schur-stable instance with spectral radius `rho`, `Q = R = 5I`, `Σ_w = I`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aqgd_system_random(
    n: usize,
    m: usize,
    seed: u64,
    rho: f64,
    out: *mut *mut AqgdSystem,
) -> AqgdStatus {
    guard(|| {
        if n == 0 || m == 0 || !(0.0..1.0).contains(&rho) {
            return Err(invalid("need n, m >= 1 and 0 <= rho < 1"));
        }
        store(out, AqgdSystem(random_stable_instance(n, m, seed, rho)))
    })
}

/// # Safety
/// `sys` must come from this library and `out` must point to two `size_t`s.
#[no_mangle]
pub unsafe extern "C" fn aqgd_system_dims(sys: *const AqgdSystem, n: *mut usize, m: *mut usize) -> AqgdStatus {
    guard(|| {
        let sys = as_ref(sys, "sys")?;
        *as_mut(n, "n")? = sys.0.n();
        *as_mut(m, "m")? = sys.0.m();
        Ok(())
    })
}

/// Average cost of `u = Kx` for the m×n gain `k`.
///
/// # Safety
/// `sys` must come from this library, `k` must hold m·n doubles, `cost` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aqgd_system_cost(sys: *const AqgdSystem, k: *const f64, cost: *mut f64) -> AqgdStatus {
    guard(|| {
        let sys = &as_ref(sys, "sys")?.0;
        let k = matrix(k, sys.m(), sys.n(), "k")?;
        *as_mut(cost, "cost")? = lqr_cost(sys, &k)?;
        Ok(())
    })
}

/// Exact gradient of the cost at `k`, written row-major to `grad`.
///
/// # Safety
/// `sys` must come from this library; `k` and `grad` must hold m·n doubles.
#[no_mangle]
pub unsafe extern "C" fn aqgd_system_grad(sys: *const AqgdSystem, k: *const f64, grad: *mut f64) -> AqgdStatus {
    guard(|| {
        let sys = &as_ref(sys, "sys")?.0;
        let k = matrix(k, sys.m(), sys.n(), "k")?;
        let g = lqr_grad(sys, &k)?;
        write_row_major(&g, slice_mut(grad, sys.m() * sys.n(), "grad")?);
        Ok(())
    })
}

/// Optimal gain (row-major, m×n) and its cost from the Riccati solution.
///
/// # Safety
/// `sys` must come from this library; `gain` must hold m·n doubles and `cost` be valid.
#[no_mangle]
pub unsafe extern "C" fn aqgd_system_optimal(sys: *const AqgdSystem, gain: *mut f64, cost: *mut f64) -> AqgdStatus {
    guard(|| {
        let sys = &as_ref(sys, "sys")?.0;
        let opt = optimal_policy(sys, 1e-12)?;
        write_row_major(&opt.gain, slice_mut(gain, sys.m() * sys.n(), "gain")?);
        *as_mut(cost, "cost")? = opt.cost;
        Ok(())
    })
}

/// # Safety
/// `sys` must be null or come from this library, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn aqgd_system_free(sys: *mut AqgdSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}
