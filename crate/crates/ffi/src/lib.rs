//! C ABI over `btbeam`.
//!
//! Every fallible function returns a [`BtbeamStatus`]; on failure the message
//! is available from [`btbeam_last_error_message`] on the same thread. Traces
//! are opaque handles released with [`btbeam_trace_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use btbeam::analysis::{containment_report, fit_power_exponent};
use btbeam::cli::{write_trace, Format};
use btbeam::envelope::{
    envelope_constants, lower_envelope, upper_envelope, verify_nakao_hypothesis, EnvelopeConstants, LowerCoeffVariant,
};
use btbeam::integrate::{simulate_on, SimOptions};
use btbeam::model::{make_initial, validate_params, InitialKind, ModelParams, Scheme, Variant};
use btbeam::operators::{stiffness_eigendecomposition, DiscreteOperators};
use btbeam::{EnergyTrace, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BtbeamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParam = 2,
    Numerical = 3,
    Io = 4,
    OutOfRange = 5,
    NoEnvelope = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BtbeamVariant {
    Frictional = 0,
    Strong = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BtbeamScheme {
    Rk4 = 0,
    ModalSplit = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BtbeamInitialKind {
    SinSqMode = 0,
    Eigenmode = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BtbeamParams {
    pub kappa: f64,
    pub alpha: f64,
    pub q: f64,
    pub variant: BtbeamVariant,
    pub length: f64,
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: usize,
    pub scheme: BtbeamScheme,
    pub seed: u64,
    pub allow_low_q: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BtbeamInitial {
    pub kind: BtbeamInitialKind,
    pub k: usize,
    pub amp: f64,
}

/// One trace sample; missing envelope values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BtbeamSample {
    pub t: f64,
    pub energy: f64,
    pub bilap_sq: f64,
    pub vel_sq: f64,
    pub grad_sq: f64,
    pub coeff: f64,
    pub dissipation: f64,
    pub lower_env: f64,
    pub upper_env: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BtbeamEnvelope {
    pub e0: f64,
    pub alpha: f64,
    pub q: f64,
    pub kappa: f64,
    pub d: f64,
    pub c_prime: f64,
    pub k_of_e0: f64,
    pub j_of_e0: f64,
    /// Lower envelope uses `2^{2q+1}` instead of `2^{q+1}`.
    pub remark_variant: bool,
}

/// Opaque simulation result.
pub struct BtbeamTrace {
    trace: EnergyTrace,
    envelope: Option<EnvelopeConstants>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn status_of(err: &Error) -> BtbeamStatus {
    match err {
        Error::Io { .. } => BtbeamStatus::Io,
        Error::ConvergenceFailure(_)
        | Error::NotPositiveDefinite
        | Error::NonFiniteState { .. }
        | Error::SubstepDiverged { .. }
        | Error::NonPositiveEnergy { .. } => BtbeamStatus::Numerical,
        _ => BtbeamStatus::InvalidParam,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (BtbeamStatus, String)>) -> BtbeamStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            BtbeamStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            BtbeamStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (BtbeamStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (BtbeamStatus, String) {
    (BtbeamStatus::NullPointer, format!("{what} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (BtbeamStatus, String)> {
    // SAFETY: the caller guarantees `p` is null or valid for reads.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (BtbeamStatus, String)> {
    // SAFETY: the caller guarantees `p` is null or valid for writes.
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

impl From<&BtbeamParams> for ModelParams {
    fn from(p: &BtbeamParams) -> Self {
        ModelParams {
            kappa: p.kappa,
            alpha: p.alpha,
            q: p.q,
            variant: match p.variant {
                BtbeamVariant::Frictional => Variant::Frictional,
                BtbeamVariant::Strong => Variant::Strong,
            },
            length: p.length,
            n: p.n,
            dt: p.dt,
            t_end: p.t_end,
            sample_every: p.sample_every,
            scheme: match p.scheme {
                BtbeamScheme::Rk4 => Scheme::Rk4,
                BtbeamScheme::ModalSplit => Scheme::ModalSplit,
            },
            seed: p.seed,
            allow_low_q: p.allow_low_q,
        }
    }
}

impl From<&BtbeamInitial> for InitialKind {
    fn from(i: &BtbeamInitial) -> Self {
        match i.kind {
            BtbeamInitialKind::SinSqMode => InitialKind::SinSqMode { k: i.k, amp: i.amp },
            BtbeamInitialKind::Eigenmode => InitialKind::Eigenmode { k: i.k, amp: i.amp },
        }
    }
}

impl From<&EnvelopeConstants> for BtbeamEnvelope {
    fn from(ec: &EnvelopeConstants) -> Self {
        BtbeamEnvelope {
            e0: ec.e0,
            alpha: ec.alpha,
            q: ec.q,
            kappa: ec.kappa,
            d: ec.d,
            c_prime: ec.c_prime,
            k_of_e0: ec.k_of_e0,
            j_of_e0: ec.j_of_e0,
            remark_variant: ec.lower_coeff_variant == LowerCoeffVariant::Remark,
        }
    }
}

fn constants_from(env: &BtbeamEnvelope) -> EnvelopeConstants {
    EnvelopeConstants {
        e0: env.e0,
        alpha: env.alpha,
        q: env.q,
        kappa: env.kappa,
        d: env.d,
        c_prime: env.c_prime,
        k_of_e0: env.k_of_e0,
        j_of_e0: env.j_of_e0,
        lower_coeff_variant: if env.remark_variant { LowerCoeffVariant::Remark } else { LowerCoeffVariant::Theorem },
    }
}

fn operators(p: &ModelParams) -> Result<DiscreteOperators, Error> {
    let mut ops = DiscreteOperators::new(p.length, p.n)?;
    if p.scheme == Scheme::ModalSplit {
        ops.stiffness_eigs = Some(stiffness_eigendecomposition(&ops, p.kappa)?);
    }
    Ok(ops)
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn btbeam_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Fills `out` with the default parameters.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn btbeam_params_default(out: *mut BtbeamParams) -> BtbeamStatus {
    guard(|| {
        let out = unsafe { as_mut(out, "out") }?;
        let d = ModelParams::default();
        *out = BtbeamParams {
            kappa: d.kappa,
            alpha: d.alpha,
            q: d.q,
            variant: BtbeamVariant::Frictional,
            length: d.length,
            n: d.n,
            dt: d.dt,
            t_end: d.t_end,
            sample_every: d.sample_every,
            scheme: BtbeamScheme::ModalSplit,
            seed: d.seed,
            allow_low_q: d.allow_low_q,
        };
        Ok(())
    })
}

/// Runs a simulation and stores a new trace handle in `*out`.
///
/// # Safety
/// `params` and `initial` must be null or valid for reads, `out` null or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn btbeam_simulate(
    params: *const BtbeamParams,
    initial: *const BtbeamInitial,
    out: *mut *mut BtbeamTrace,
) -> BtbeamStatus {
    guard(|| {
        let params = unsafe { as_ref(params, "params") }?;
        let initial = unsafe { as_ref(initial, "initial") }?;
        let out = unsafe { as_mut(out, "out") }?;
        let p = validate_params(params.into()).map_err(lib_err)?;
        let ops = operators(&p).map_err(lib_err)?;
        let init = make_initial(&initial.into(), &ops).map_err(lib_err)?;
        let opts = SimOptions::from_params(&p);
        let trace = simulate_on(&ops, &p, &init, &opts).map_err(lib_err)?;
        let envelope = if p.variant == Variant::Frictional && p.alpha > 0.0 && trace.e0 > 0.0 {
            Some(envelope_constants(trace.e0, &p, &ops, opts.envelope_variant).map_err(lib_err)?)
        } else {
            None
        };
        *out = Box::into_raw(Box::new(BtbeamTrace { trace, envelope }));
        Ok(())
    })
}

/// Releases a trace handle. Null is ignored.
///
/// # Safety
/// `trace` must be null or a handle from [`btbeam_simulate`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn btbeam_trace_free(trace: *mut BtbeamTrace) {
    if !trace.is_null() {
        // SAFETY: the handle was created by Box::into_raw in btbeam_simulate.
        drop(unsafe { Box::from_raw(trace) });
    }
}

/// Number of samples; 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn btbeam_trace_len(trace: *const BtbeamTrace) -> usize {
    unsafe { trace.as_ref() }.map_or(0, |t| t.trace.len())
}

/// Copies sample `index` into `out`.
///
/// # Safety
/// `trace` must be null or a live handle, `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn btbeam_trace_sample(
    trace: *const BtbeamTrace,
    index: usize,
    out: *mut BtbeamSample,
) -> BtbeamStatus {
    guard(|| {
        let trace = unsafe { as_ref(trace, "trace") }?;
        let out = unsafe { as_mut(out, "out") }?;
        let s = trace.trace.samples.get(index).ok_or_else(|| {
            (BtbeamStatus::OutOfRange, format!("index {index} out of range for {} samples", trace.trace.len()))
        })?;
        *out = BtbeamSample {
            t: s.t,
            energy: s.energy.e_total,
            bilap_sq: s.energy.bilap_sq,
            vel_sq: s.energy.vel_sq,
            grad_sq: s.energy.grad_sq,
            coeff: s.energy.coeff,
            dissipation: s.dissipation,
            lower_env: s.lower_env.unwrap_or(f64::NAN),
            upper_env: s.upper_env.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Envelope constants attached to the trace.
///
/// # Safety
/// `trace` must be null or a live handle, `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn btbeam_trace_envelope(trace: *const BtbeamTrace, out: *mut BtbeamEnvelope) -> BtbeamStatus {
    guard(|| {
        let trace = unsafe { as_ref(trace, "trace") }?;
        let out = unsafe { as_mut(out, "out") }?;
        let ec = trace.envelope.as_ref().ok_or((
            BtbeamStatus::NoEnvelope,
            "envelopes need frictional damping with alpha > 0 and non-zero data".to_string(),
        ))?;
        *out = ec.into();
        Ok(())
    })
}

/// Writes the trace as CSV to the NUL-terminated UTF-8 `path`.
///
/// # Safety
/// `trace` must be null or a live handle, `path` null or a valid C string.
#[no_mangle]
pub unsafe extern "C" fn btbeam_trace_write_csv(trace: *const BtbeamTrace, path: *const c_char) -> BtbeamStatus {
    guard(|| {
        let trace = unsafe { as_ref(trace, "trace") }?;
        if path.is_null() {
            return Err(null("path"));
        }
        // SAFETY: checked non-null; the caller guarantees NUL termination.
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| (BtbeamStatus::InvalidParam, "path is not UTF-8".to_string()))?;
        write_trace(&trace.trace, trace.envelope.as_ref(), Path::new(path), Format::Csv).map_err(lib_err)
    })
}

/// Least-squares tail exponent of `log E` against `log t`.
///
/// # Safety
/// `trace` must be null or a live handle, the outputs null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn btbeam_trace_fit_exponent(
    trace: *const BtbeamTrace,
    tail_fraction: f64,
    exponent: *mut f64,
    r_squared: *mut f64,
) -> BtbeamStatus {
    guard(|| {
        let trace = unsafe { as_ref(trace, "trace") }?;
        let exponent = unsafe { as_mut(exponent, "exponent") }?;
        let r_squared = unsafe { as_mut(r_squared, "r_squared") }?;
        let fit = fit_power_exponent(&trace.trace, tail_fraction).map_err(lib_err)?;
        *exponent = fit.exponent;
        *r_squared = fit.r_squared;
        Ok(())
    })
}

/// Envelope containment and the unit-window decay hypothesis on the trace.
/// `*passed` is set to whether both checks pass.
///
/// # Safety
/// `trace` must be null or a live handle, `passed` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn btbeam_trace_verify(
    trace: *const BtbeamTrace,
    tol: f64,
    nakao_tol: f64,
    passed: *mut bool,
) -> BtbeamStatus {
    guard(|| {
        let trace = unsafe { as_ref(trace, "trace") }?;
        let passed = unsafe { as_mut(passed, "passed") }?;
        let ec = trace.envelope.as_ref().ok_or((
            BtbeamStatus::NoEnvelope,
            "envelopes need frictional damping with alpha > 0 and non-zero data".to_string(),
        ))?;
        let containment = containment_report(&trace.trace, ec, tol, tol).map_err(lib_err)?;
        let nakao = verify_nakao_hypothesis(&trace.trace, ec, nakao_tol).map_err(lib_err)?;
        *passed = containment.pass && nakao.pass;
        Ok(())
    })
}

/// Envelope constants for the given parameters and initial data, without
/// running a simulation.
///
/// # Safety
/// `params` and `initial` must be null or valid for reads, `out` null or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn btbeam_envelope_constants(
    params: *const BtbeamParams,
    initial: *const BtbeamInitial,
    remark_variant: bool,
    out: *mut BtbeamEnvelope,
) -> BtbeamStatus {
    guard(|| {
        let params = unsafe { as_ref(params, "params") }?;
        let initial = unsafe { as_ref(initial, "initial") }?;
        let out = unsafe { as_mut(out, "out") }?;
        let p = validate_params(params.into()).map_err(lib_err)?;
        let ops = DiscreteOperators::new(p.length, p.n).map_err(lib_err)?;
        let init = make_initial(&initial.into(), &ops).map_err(lib_err)?;
        let e0 = btbeam::dynamics::energy(&init, &ops, p.kappa, p.q).e_total;
        let variant = if remark_variant { LowerCoeffVariant::Remark } else { LowerCoeffVariant::Theorem };
        let ec = envelope_constants(e0, &p, &ops, variant).map_err(lib_err)?;
        *out = (&ec).into();
        Ok(())
    })
}

/// Lower envelope at time `t`; NaN for a null pointer.
///
/// # Safety
/// `env` must be null or valid for reads.
#[no_mangle]
pub unsafe extern "C" fn btbeam_lower_envelope(env: *const BtbeamEnvelope, t: f64) -> f64 {
    unsafe { env.as_ref() }.map_or(f64::NAN, |e| lower_envelope(t, &constants_from(e)))
}

/// Upper envelope at time `t`; NaN for a null pointer.
///
/// # Safety
/// `env` must be null or valid for reads.
#[no_mangle]
pub unsafe extern "C" fn btbeam_upper_envelope(env: *const BtbeamEnvelope, t: f64) -> f64 {
    unsafe { env.as_ref() }.map_or(f64::NAN, |e| upper_envelope(t, &constants_from(e)))
}
