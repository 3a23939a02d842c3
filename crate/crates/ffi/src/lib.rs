//! C ABI over `jumpsde`.
//!
//! Objects cross the boundary as opaque pointers created by a `*_new_*`
//! function and released by the matching `*_free`. Every fallible call
//! returns a [`JumpsdeStatus`]; on failure the message is kept per thread and
//! can be copied out with [`jumpsde_last_error`]. Panics are caught at the
//! boundary and reported as [`JumpsdeStatus::Panic`].

use jumpsde::error::Error;
use jumpsde::levy_measure::{EdgeBehavior, JumpLaw, LevyMeasure, Role, ScanGrid, TabulatedDensity};
use jumpsde::noise::{uniform_grid, NoiseModel, NoisePath, NoiseSpec};
use jumpsde::sde::{self, CbiParams, SdeSystem, SimulationMode, SolutionPath};
use jumpsde::yw::{self, Modulus, YwSequence};
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpsdeStatus {
    Ok = 0,
    NullPointer = 1,
    /// Argument outside the documented domain, or a malformed string.
    InvalidArgument = 2,
    /// The measure violates the integrability contract of its role.
    Integrability = 3,
    /// Quadrature, estimation or level construction failed.
    Numerical = 4,
    /// The scheme blew up or the noise does not fit the system.
    Simulation = 5,
    /// The output buffer is shorter than the result.
    BufferTooSmall = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpsdeRole {
    CompensatedDriver = 0,
    Subordinator = 1,
}

impl From<JumpsdeRole> for Role {
    fn from(r: JumpsdeRole) -> Self {
        match r {
            JumpsdeRole::CompensatedDriver => Role::CompensatedDriver,
            JumpsdeRole::Subordinator => Role::Subordinator,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpsdeEdgeKind {
    Zero = 0,
    Power = 1,
    Exponential = 2,
}

/// Extension of a tabulated density past its first or last knot. `param` is
/// the exponent of `Power` or the rate of `Exponential`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct JumpsdeEdge {
    pub kind: JumpsdeEdgeKind,
    pub param: f64,
}

impl From<JumpsdeEdge> for EdgeBehavior {
    fn from(e: JumpsdeEdge) -> Self {
        match e.kind {
            JumpsdeEdgeKind::Zero => EdgeBehavior::Zero,
            JumpsdeEdgeKind::Power => EdgeBehavior::Power { exponent: e.param },
            JumpsdeEdgeKind::Exponential => EdgeBehavior::Exponential { rate: e.param },
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpsdeMode {
    Plain = 0,
    Nonneg = 1,
    Truncated = 2,
    NonnegTruncated = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct JumpsdeBetaWindow {
    pub lower: f64,
    pub upper: f64,
    pub nonempty: bool,
}

/// A Lévy measure.
pub struct JumpsdeMeasure(LevyMeasure);

/// A coefficient system.
pub struct JumpsdeSystem(SdeSystem);

/// One sampled noise path.
pub struct JumpsdeNoise(NoisePath);

/// One solution path.
pub struct JumpsdePath(SolutionPath);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> JumpsdeStatus {
    match e {
        Error::Domain(_) | Error::Spec(_) | Error::Config(_) | Error::Format(_) => JumpsdeStatus::InvalidArgument,
        Error::Integrability(_) => JumpsdeStatus::Integrability,
        Error::Quadrature { .. } | Error::Estimation { .. } | Error::LevelExhaustion { .. } => JumpsdeStatus::Numerical,
        Error::BlowUp { .. } | Error::AtLevel { .. } | Error::NoiseSharing(_) | Error::Refinement(_) => JumpsdeStatus::Simulation,
        Error::Io(_) | Error::Json(_) => JumpsdeStatus::Io,
    }
}

struct Fail(JumpsdeStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(JumpsdeStatus::NullPointer, format!("{what} is null"))
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> JumpsdeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => JumpsdeStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            JumpsdeStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
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

unsafe fn boxed<T>(dst: *mut *mut T, value: T) -> Result<(), Fail> {
    *out(dst, "output handle")? = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating if needed. Returns the length the full
/// message needs, including the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len() + 1
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn jumpsde_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `scale · z^{-1-alpha} dz` with `1 < alpha < 2`, as a compensated driver.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_measure_new_stable(alpha: f64, scale: f64, out: *mut *mut JumpsdeMeasure) -> JumpsdeStatus {
    guard(|| boxed(out, JumpsdeMeasure(LevyMeasure::stable(alpha, scale)?)))
}

/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_measure_new_tempered_stable(
    alpha: f64,
    scale: f64,
    tempering: f64,
    role: JumpsdeRole,
    out: *mut *mut JumpsdeMeasure,
) -> JumpsdeStatus {
    guard(|| boxed(out, JumpsdeMeasure(LevyMeasure::tempered_stable(alpha, scale, tempering, role.into())?)))
}

/// `mass · δ_location`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_measure_new_point_mass(location: f64, mass: f64, role: JumpsdeRole, out: *mut *mut JumpsdeMeasure) -> JumpsdeStatus {
    guard(|| boxed(out, JumpsdeMeasure(LevyMeasure::point_mass(location, mass, role.into())?)))
}

/// Compound Poisson with the given rate and exponential jump sizes.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_measure_new_exponential_jumps(rate: f64, mean: f64, role: JumpsdeRole, out: *mut *mut JumpsdeMeasure) -> JumpsdeStatus {
    guard(|| boxed(out, JumpsdeMeasure(LevyMeasure::finite_activity(rate, JumpLaw::Exponential { mean }, role.into())?)))
}

/// Density tabulated at `n` increasing knots.
///
/// # Safety
/// `knots` and `values` must be valid for `n` reads; `out` for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_measure_new_tabulated(
    knots: *const f64,
    values: *const f64,
    n: usize,
    below: JumpsdeEdge,
    above: JumpsdeEdge,
    role: JumpsdeRole,
    out: *mut *mut JumpsdeMeasure,
) -> JumpsdeStatus {
    guard(|| {
        let k = slice(knots, n, "knots")?.to_vec();
        let v = slice(values, n, "values")?.to_vec();
        let d = TabulatedDensity::new(k, v, below.into(), above.into())?;
        boxed(out, JumpsdeMeasure(LevyMeasure::tabulated(d, role.into())?))
    })
}

/// # Safety
/// `m` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_measure_free(m: *mut JumpsdeMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpsdeTail {
    /// `ν((x, ∞))`.
    Mass = 0,
    /// `∫_{(x, ∞)} z ν(dz)`.
    FirstMoment = 1,
    /// `∫_{(0, x]} z² ν(dz)`.
    TruncatedSecondMoment = 2,
}

/// One tail functional of `m` at `x > 0`.
///
/// # Safety
/// `m` must be a live handle and `value` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_measure_tail(m: *const JumpsdeMeasure, which: JumpsdeTail, x: f64, value: *mut f64) -> JumpsdeStatus {
    guard(|| {
        let m = &get(m, "measure")?.0;
        *out(value, "value")? = match which {
            JumpsdeTail::Mass => m.tail_mass(x)?,
            JumpsdeTail::FirstMoment => m.tail_first_moment(x)?,
            JumpsdeTail::TruncatedSecondMoment => m.truncated_second_moment(x)?,
        };
        Ok(())
    })
}

/// `∫ (e^{-uz} - 1 + uz) ν(dz)` for a driver, `∫ (1 - e^{-uz}) ν(dz)` for a
/// subordinator.
///
/// # Safety
/// `m` must be a live handle and `value` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_measure_laplace_exponent(m: *const JumpsdeMeasure, u: f64, value: *mut f64) -> JumpsdeStatus {
    guard(|| {
        *out(value, "value")? = get(m, "measure")?.0.laplace_exponent(u)?;
        Ok(())
    })
}

/// Critical exponent of the measure. `exact` is set when it is known in
/// closed form; otherwise it is estimated over `[1e-9, 1e-1]`.
///
/// # Safety
/// `m` must be a live handle; `alpha` and `exact` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_measure_alpha_nu(m: *const JumpsdeMeasure, alpha: *mut f64, exact: *mut bool) -> JumpsdeStatus {
    guard(|| {
        let m = &get(m, "measure")?.0;
        let alpha = out(alpha, "alpha")?;
        let exact = out(exact, "exact")?;
        match m.alpha_nu_exact() {
            Some(a) => {
                *alpha = a;
                *exact = true;
            }
            None => {
                *alpha = m.estimate_alpha_nu(&ScanGrid::default())?.alpha_nu;
                *exact = false;
            }
        }
        Ok(())
    })
}

/// `(a|x|)^{1/r} dB + sign(x)(c|x|)^{1/q} dL0 + (beta·x + b) dt`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_system_new_cbi(a: f64, b: f64, beta: f64, c: f64, r: f64, q: f64, out: *mut *mut JumpsdeSystem) -> JumpsdeStatus {
    guard(|| boxed(out, JumpsdeSystem(SdeSystem::cbi(CbiParams { a, b, beta, c, r, q })?)))
}

/// `sigma_slope·x dB + (drift_slope·x + drift_intercept) dt`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_system_new_linear(sigma_slope: f64, drift_slope: f64, drift_intercept: f64, out: *mut *mut JumpsdeSystem) -> JumpsdeStatus {
    guard(|| {
        let s = SdeSystem::linear(sigma_slope, drift_slope, drift_intercept);
        s.validate()?;
        boxed(out, JumpsdeSystem(s))
    })
}

/// # Safety
/// `s` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_system_free(s: *mut JumpsdeSystem) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Samples stream `stream` of the noise with the given drivers on a uniform
/// grid of `cells` cells over `[0, horizon]`. `driver` and `subordinator`
/// may be null; the measures are copied.
///
/// # Safety
/// Non-null handles must be live; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_noise_sample(
    horizon: f64,
    master_seed: u64,
    brownian: bool,
    driver: *const JumpsdeMeasure,
    subordinator: *const JumpsdeMeasure,
    cells: usize,
    stream: u64,
    out: *mut *mut JumpsdeNoise,
) -> JumpsdeStatus {
    guard(|| {
        let mut spec = NoiseSpec::new(horizon, master_seed);
        spec.brownian = brownian;
        spec.nu0 = driver.as_ref().map(|m| m.0.clone());
        spec.nu1 = subordinator.as_ref().map(|m| m.0.clone());
        if cells == 0 {
            return Err(Fail(JumpsdeStatus::InvalidArgument, "cells must be positive".into()));
        }
        let model = NoiseModel::new(&spec, cells)?;
        let path = model.sample(&uniform_grid(horizon, cells), stream)?;
        boxed(out, JumpsdeNoise(path))
    })
}

/// Number of large jumps of both drivers; 0 for a null handle.
///
/// # Safety
/// `n` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_noise_jump_count(n: *const JumpsdeNoise) -> usize {
    n.as_ref().map_or(0, |n| n.0.jumps.len())
}

/// `B(T)`; 0 for a null handle.
///
/// # Safety
/// `n` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_noise_brownian_terminal(n: *const JumpsdeNoise) -> f64 {
    n.as_ref().map_or(0.0, |n| n.0.brownian_terminal())
}

/// # Safety
/// `n` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_noise_free(n: *mut JumpsdeNoise) {
    if !n.is_null() {
        drop(Box::from_raw(n));
    }
}

/// Integrates `system` from `x0` along `noise`. `truncation` is read only by
/// the truncated modes.
///
/// # Safety
/// Handles must be live; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_simulate(
    system: *const JumpsdeSystem,
    x0: f64,
    noise: *const JumpsdeNoise,
    mode: JumpsdeMode,
    truncation: f64,
    out: *mut *mut JumpsdePath,
) -> JumpsdeStatus {
    guard(|| {
        let system = &get(system, "system")?.0;
        let noise = &get(noise, "noise")?.0;
        let mode = match mode {
            JumpsdeMode::Plain => SimulationMode::Plain,
            JumpsdeMode::Nonneg => SimulationMode::Nonneg,
            JumpsdeMode::Truncated => SimulationMode::Truncated { m: truncation },
            JumpsdeMode::NonnegTruncated => SimulationMode::NonnegTruncated { m: truncation },
        };
        boxed(out, JumpsdePath(sde::simulate(system, x0, noise, mode)?))
    })
}

/// Number of stored points, grid points and jump times together.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_path_len(p: *const JumpsdePath) -> usize {
    p.as_ref().map_or(0, |p| p.0.states.len())
}

/// Number of clamps in non-negative mode.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_path_clamp_count(p: *const JumpsdePath) -> u64 {
    p.as_ref().map_or(0, |p| p.0.clamp_count)
}

/// Copies times and states into buffers of `cap` entries each. Either buffer
/// may be null to skip it.
///
/// # Safety
/// `p` must be a live handle; non-null buffers valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_path_copy(p: *const JumpsdePath, times: *mut f64, states: *mut f64, cap: usize) -> JumpsdeStatus {
    guard(|| {
        let p = &get(p, "path")?.0;
        let n = p.states.len();
        if cap < n {
            return Err(Fail(JumpsdeStatus::BufferTooSmall, format!("path has {n} points, buffer holds {cap}")));
        }
        if !times.is_null() {
            std::ptr::copy_nonoverlapping(p.times.as_ptr(), times, n);
        }
        if !states.is_null() {
            std::ptr::copy_nonoverlapping(p.states.as_ptr(), states, n);
        }
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_path_free(p: *mut JumpsdePath) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Writes the levels `a_0 = 1 > a_1 > … > a_count` of the modulus described
/// by `modulus` (`power:e[:s]`, `linear[:s]` or `log-osgood[:s]`) into
/// `levels`, which must hold `count + 1` values.
///
/// # Safety
/// `modulus` must be a NUL-terminated string; `levels` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn jumpsde_yw_levels(modulus: *const c_char, count: usize, levels: *mut f64, cap: usize) -> JumpsdeStatus {
    guard(|| {
        if modulus.is_null() {
            return Err(null("modulus"));
        }
        let text = CStr::from_ptr(modulus)
            .to_str()
            .map_err(|e| Fail(JumpsdeStatus::InvalidArgument, format!("modulus is not UTF-8: {e}")))?;
        let seq = YwSequence::new(Modulus::parse(text)?, count)?;
        if cap < count + 1 {
            return Err(Fail(JumpsdeStatus::BufferTooSmall, format!("{} levels, buffer holds {cap}", count + 1)));
        }
        if levels.is_null() {
            return Err(null("levels"));
        }
        for k in 0..=count {
            *levels.add(k) = seq.level(k);
        }
        Ok(())
    })
}

/// Admissible exponent window for `(p, alpha)`.
#[no_mangle]
pub extern "C" fn jumpsde_beta_window(p: f64, alpha: f64) -> JumpsdeBetaWindow {
    let w = yw::beta_window(p, alpha);
    JumpsdeBetaWindow { lower: w.lower, upper: w.upper, nonempty: w.nonempty }
}

/// `1 - 1/alpha`.
#[no_mangle]
pub extern "C" fn jumpsde_frontier(alpha: f64) -> f64 {
    yw::frontier(alpha)
}

/// Cut-off `v_k` of the stable boundary case.
#[no_mangle]
pub extern "C" fn jumpsde_stable_vk(alpha: f64, k: u64) -> f64 {
    yw::stable_vk(alpha, k)
}
