//! C ABI over the `p2aircomp` library.
//!
//! Every fallible function returns a [`P2Status`]. On anything other than
//! `P2_STATUS_OK` a message is available from [`p2_last_error_message`] on the
//! same thread until the next failing call. Objects are handed out as opaque
//! pointers and must be released with the matching `*_free` function.
//! Output pointers are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use p2aircomp::analytics::{self, Truncation};
use p2aircomp::keys::{self, GeneratorMatrix, SecretKeyBundle};
use p2aircomp::oracle::{self, DiscreteScenario, View};
use p2aircomp::protocol::{self, NoiseScheme, ProtocolConfig, RoundResult};
use p2aircomp::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum P2Status {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Invariant = 4,
    Numerical = 5,
    Resource = 6,
    Config = 7,
    Io = 8,
    Serialization = 9,
    /// The caller's buffer is too small; the required size was reported.
    BufferTooSmall = 10,
    /// A Rust panic was caught at the boundary.
    Internal = 11,
}

/// Masking schemes, passed as `int32_t`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum P2Scheme {
    P2Modulo = 0,
    Independent = 1,
    Correlated = 2,
    ZeroSum = 3,
}

/// A truncated series value with its certified tail bound.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct P2Series {
    pub value: f64,
    pub truncation_l: u32,
    pub tail_bound: f64,
}

/// A Monte-Carlo mean with its standard error.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct P2McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: u64,
}

/// Opaque zero-sum key bundle.
pub struct P2KeyBundle(SecretKeyBundle);

/// Opaque round configuration.
pub struct P2Config(ProtocolConfig);

/// Opaque result of one simulated round.
pub struct P2Round(RoundResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(P2Status, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Domain(_) => P2Status::Domain,
            Error::Argument(_) => P2Status::InvalidArgument,
            Error::Invariant(_) => P2Status::Invariant,
            Error::Numerical(_) => P2Status::Numerical,
            Error::Resource(_) => P2Status::Resource,
            Error::Config(_) => P2Status::Config,
            Error::Io { .. } => P2Status::Io,
            Error::Csv(_) | Error::Json(_) => P2Status::Serialization,
        };
        Failure(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(P2Status::Serialization, e.to_string())
    }
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn call(f: impl FnOnce() -> Result<(), Failure>) -> P2Status {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => P2Status::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal error: {msg}"));
            P2Status::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(P2Status::NullPointer, format!("{what} is null"))
}

fn argument(msg: impl Into<String>) -> Failure {
    Failure(P2Status::InvalidArgument, msg.into())
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn in_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn in_slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn in_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| argument(format!("{what} is not valid UTF-8")))
}

unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize) -> Result<(), Failure> {
    if len != src.len() {
        return Err(argument(format!(
            "buffer holds {len} values, need {}",
            src.len()
        )));
    }
    if out.is_null() {
        return Err(null("output buffer"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, len);
    Ok(())
}

unsafe fn write_string(
    s: &str,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> Result<(), Failure> {
    let bytes = s.as_bytes();
    if let Some(n) = needed.as_mut() {
        *n = bytes.len() + 1;
    }
    if buf.is_null() || cap < bytes.len() + 1 {
        return Err(Failure(
            P2Status::BufferTooSmall,
            format!(
                "need {} bytes including the terminator, got {cap}",
                bytes.len() + 1
            ),
        ));
    }
    ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, bytes.len());
    *buf.add(bytes.len()) = 0;
    Ok(())
}

fn scheme_from(kind: i32, sigma: f64) -> Result<NoiseScheme, Failure> {
    Ok(match kind {
        0 => NoiseScheme::P2Modulo,
        1 => NoiseScheme::Independent { sigma },
        2 => NoiseScheme::Correlated { sigma },
        3 => NoiseScheme::ZeroSum { sigma },
        k => return Err(argument(format!("unknown scheme {k}"))),
    })
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn p2_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. The pointer is valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn p2_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code, or "unknown status".
#[no_mangle]
pub extern "C" fn p2_status_name(status: i32) -> *const c_char {
    let s: &'static str = match status {
        0 => "ok\0",
        1 => "null pointer\0",
        2 => "invalid argument\0",
        3 => "domain error\0",
        4 => "invariant violated\0",
        5 => "numerical error\0",
        6 => "resource limit exceeded\0",
        7 => "configuration error\0",
        8 => "I/O error\0",
        9 => "serialization error\0",
        10 => "buffer too small\0",
        11 => "internal error\0",
        _ => "unknown status\0",
    };
    s.as_ptr().cast()
}

/// Reduces `x` onto the torus `[-1/2, 1/2)`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn p2_mod1(x: f64, out: *mut f64) -> P2Status {
    call(|| {
        let out = out_ref(out, "out")?;
        *out = p2aircomp::numerics::mod1(x)?.value();
        Ok(())
    })
}

/// Samples zero-sum keys for `clients` clients and `dim` dimensions with the
/// default generator.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn p2_keys_sample(
    clients: usize,
    dim: usize,
    seed: u64,
    out: *mut *mut P2KeyBundle,
) -> P2Status {
    call(|| {
        let out = out_ref(out, "out")?;
        let generator = GeneratorMatrix::default_for(clients)?;
        let bundle = keys::sample_keys(&generator, dim, seed)?;
        *out = boxed(P2KeyBundle(bundle));
        Ok(())
    })
}

/// Parses a key bundle from its JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn p2_keys_from_json(
    json: *const c_char,
    out: *mut *mut P2KeyBundle,
) -> P2Status {
    call(|| {
        let out = out_ref(out, "out")?;
        let bundle = SecretKeyBundle::from_json(in_str(json, "json")?)?;
        *out = boxed(P2KeyBundle(bundle));
        Ok(())
    })
}

/// Writes the bundle's JSON form into `buf`. `needed`, if non-NULL, receives
/// the size including the terminator even when `buf` is too small.
///
/// # Safety
/// `bundle` must come from this library; `buf` must hold `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn p2_keys_to_json(
    bundle: *const P2KeyBundle,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> P2Status {
    call(|| {
        let b = in_ref(bundle, "bundle")?;
        write_string(&b.0.to_json()?, buf, cap, needed)
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn p2_keys_shape(
    bundle: *const P2KeyBundle,
    clients: *mut usize,
    dim: *mut usize,
) -> P2Status {
    call(|| {
        let b = in_ref(bundle, "bundle")?;
        *out_ref(clients, "clients")? = b.0.clients();
        *out_ref(dim, "dim")? = b.0.dim;
        Ok(())
    })
}

/// Copies client `k`'s key into `out`, which must hold exactly `dim` values.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn p2_keys_copy(
    bundle: *const P2KeyBundle,
    k: usize,
    out: *mut f64,
    len: usize,
) -> P2Status {
    call(|| {
        let b = in_ref(bundle, "bundle")?;
        if k >= b.0.clients() {
            return Err(argument(format!(
                "client {k} out of range for {} clients",
                b.0.clients()
            )));
        }
        let key: Vec<f64> = b.0.key(k).iter().map(|&t| t.into()).collect();
        copy_out(&key, out, len)
    })
}

/// Checks shape, the zero-sum property and the generator's rank conditions.
///
/// # Safety
/// Pointers must be valid; `residual` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn p2_keys_verify(
    bundle: *const P2KeyBundle,
    passed: *mut bool,
    residual: *mut f64,
) -> P2Status {
    call(|| {
        let b = in_ref(bundle, "bundle")?;
        let passed = out_ref(passed, "passed")?;
        let report = keys::verify_bundle(&b.0);
        *passed = report.passed();
        if let Some(r) = residual.as_mut() {
            *r = report.zero_sum_residual;
        }
        Ok(())
    })
}

/// # Safety
/// `bundle` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn p2_keys_free(bundle: *mut P2KeyBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// The reference round configuration (10 clients, 10 dimensions,
/// `P_X / N_0 = 15 dB`, Gaussian messages of variance 0.01) for a scheme.
/// `sigma` is ignored for `P2_SCHEME_P2_MODULO`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn p2_config_reference(
    scheme: i32,
    sigma: f64,
    truncate_messages: bool,
    out: *mut *mut P2Config,
) -> P2Status {
    call(|| {
        let out = out_ref(out, "out")?;
        let cfg = ProtocolConfig::reference(scheme_from(scheme, sigma)?, truncate_messages);
        cfg.validate()?;
        *out = boxed(P2Config(cfg));
        Ok(())
    })
}

/// Parses a configuration from the JSON form written by `p2_config_to_json`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn p2_config_from_json(
    json: *const c_char,
    out: *mut *mut P2Config,
) -> P2Status {
    call(|| {
        let out = out_ref(out, "out")?;
        let cfg: ProtocolConfig = serde_json::from_str(in_str(json, "json")?)?;
        cfg.validate()?;
        *out = boxed(P2Config(cfg));
        Ok(())
    })
}

/// # Safety
/// See `p2_keys_to_json`.
#[no_mangle]
pub unsafe extern "C" fn p2_config_to_json(
    config: *const P2Config,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> P2Status {
    call(|| {
        let c = in_ref(config, "config")?;
        write_string(&serde_json::to_string(&c.0)?, buf, cap, needed)
    })
}

/// # Safety
/// `config` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn p2_config_free(config: *mut P2Config) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Simulates one round. Rounds with equal seeds share fading, messages and
/// channel noise across schemes.
///
/// # Safety
/// `config` must come from this library and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn p2_round_run(
    config: *const P2Config,
    seed: u64,
    out: *mut *mut P2Round,
) -> P2Status {
    call(|| {
        let c = in_ref(config, "config")?;
        let out = out_ref(out, "out")?;
        *out = boxed(P2Round(protocol::run_round(&c.0, seed)?));
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn p2_round_summary(
    round: *const P2Round,
    mse_per_dim: *mut f64,
    sigma_eff: *mut f64,
    within_budget: *mut bool,
) -> P2Status {
    call(|| {
        let r = &in_ref(round, "round")?.0;
        *out_ref(mse_per_dim, "mse_per_dim")? = r.mse_per_dim();
        *out_ref(sigma_eff, "sigma_eff")? = r.sigma_eff;
        *out_ref(within_budget, "within_budget")? = r.within_budget();
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn p2_round_dim(round: *const P2Round, dim: *mut usize) -> P2Status {
    call(|| {
        *out_ref(dim, "dim")? = in_ref(round, "round")?.0.w_true.len();
        Ok(())
    })
}

/// Copies the true aggregate `W` into `out` (exactly `dim` values).
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn p2_round_copy_truth(
    round: *const P2Round,
    out: *mut f64,
    len: usize,
) -> P2Status {
    call(|| copy_out(&in_ref(round, "round")?.0.w_true, out, len))
}

/// Copies the server's estimate into `out` (exactly `dim` values).
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn p2_round_copy_estimate(
    round: *const P2Round,
    out: *mut f64,
    len: usize,
) -> P2Status {
    call(|| copy_out(&in_ref(round, "round")?.0.w_hat, out, len))
}

/// # Safety
/// `round` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn p2_round_free(round: *mut P2Round) {
    if !round.is_null() {
        drop(Box::from_raw(round));
    }
}

/// Closed-form expected squared error at aggregate `s[0..len]` with automatic
/// truncation.
///
/// # Safety
/// `s` must hold `len` doubles and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn p2_delta(
    s: *const f64,
    len: usize,
    sigma_eff: f64,
    out: *mut P2Series,
) -> P2Status {
    call(|| {
        let out = out_ref(out, "out")?;
        let v = analytics::delta_pointwise(in_slice(s, len, "s")?, sigma_eff, Truncation::Auto)?;
        *out = P2Series {
            value: v.value,
            truncation_l: v.truncation_l,
            tail_bound: v.tail_bound,
        };
        Ok(())
    })
}

/// Bounds of the closed form over the box `[-a, a]^dim`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn p2_delta_bounds(
    half_width: f64,
    sigma_eff: f64,
    dim: usize,
    lower: *mut f64,
    upper: *mut f64,
) -> P2Status {
    call(|| {
        let lower = out_ref(lower, "lower")?;
        let upper = out_ref(upper, "upper")?;
        let b = analytics::delta_bounds(half_width, sigma_eff, dim)?;
        *lower = b.lower;
        *upper = b.upper;
        Ok(())
    })
}

/// Derivative of the one-dimensional closed form in `s_d`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn p2_delta_derivative(s_d: f64, sigma_eff: f64, out: *mut f64) -> P2Status {
    call(|| {
        *out_ref(out, "out")? = analytics::delta_derivative(s_d, sigma_eff)?.value;
        Ok(())
    })
}

/// Per-dimension leakage in nats of a scheme against Gaussian messages of
/// standard deviation `sigma_w`. Zero for `P2_SCHEME_P2_MODULO`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn p2_leakage(
    scheme: i32,
    sigma: f64,
    clients: usize,
    sigma_w: f64,
    out: *mut f64,
) -> P2Status {
    call(|| {
        let out = out_ref(out, "out")?;
        let report = match scheme_from(scheme, sigma)? {
            NoiseScheme::P2Modulo => analytics::leakage_p2(),
            s => analytics::leakage_gaussian(s, clients, sigma_w)?,
        };
        *out = report.leakage_nats_per_dim;
        Ok(())
    })
}

/// Monte-Carlo estimate of the squared error at `s`, reproducible in `seed`
/// and independent of the thread count.
///
/// # Safety
/// `s` must hold `len` doubles and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn p2_mc_mse(
    s: *const f64,
    len: usize,
    sigma_eff: f64,
    trials: u64,
    seed: u64,
    out: *mut P2McEstimate,
) -> P2Status {
    call(|| {
        let out = out_ref(out, "out")?;
        let e = oracle::mc_mse(in_slice(s, len, "s")?, sigma_eff, trials, seed)?;
        *out = P2McEstimate {
            mean: e.mean,
            std_error: e.stderr,
            trials: e.trials,
        };
        Ok(())
    })
}

/// Exact mutual information (nats) between the messages and the server's
/// view over `Z_q`, with each client's message uniform on `support`.
///
/// # Safety
/// `support` must hold `support_len` values; outputs must be valid, and
/// `outcomes` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn p2_oracle_server_leakage(
    q: u32,
    clients: usize,
    support: *const u32,
    support_len: usize,
    mi_nats: *mut f64,
    outcomes: *mut u64,
) -> P2Status {
    call(|| {
        let mi_nats = out_ref(mi_nats, "mi_nats")?;
        if support.is_null() || support_len == 0 {
            return Err(argument("support must be non-empty"));
        }
        let support = std::slice::from_raw_parts(support, support_len);
        let sc = DiscreteScenario::uniform(q, clients, support, View::Server)?;
        let mi = oracle::exact_server_leakage(&sc)?;
        *mi_nats = mi.value_nats;
        if let Some(o) = outcomes.as_mut() {
            *o = mi.enumerated_outcomes;
        }
        Ok(())
    })
}
