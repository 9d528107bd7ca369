//! C ABI over `trapwalk`. Model objects are opaque handles created and freed
//! through this interface. Every fallible call returns a `TwStatus`; on
//! failure `tw_last_error` describes the most recent error on the calling
//! thread. Magnitudes that overflow `double` are passed as natural logs.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use trapwalk::extremal::marginal_cdf;
use trapwalk::kestentree::OffspringLaw;
use trapwalk::limits::{j1_distance, m1_distance, CadlagStep};
use trapwalk::seed::{derive_seed, stream, tag};
use trapwalk::trapline::{rescaled_hitting_path, run_to_level, TrapEnvironment, WalkOptions};
use trapwalk::{Error, TailFunction};

/// Return codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A step budget, size cap or table range was exceeded.
    Runtime = 3,
    Panic = 4,
}

/// Opaque tail function `F̄` of the trap depths.
pub struct TwTail(TailFunction);

/// Opaque offspring law of the Galton-Watson tree.
pub struct TwOffspringLaw(OffspringLaw);

/// A right-continuous step path on `[0, horizon]`: value `initial` until
/// `times[0]`, then `values[k]` from `times[k]` on.
#[repr(C)]
pub struct TwStep {
    pub initial: f64,
    pub times: *const f64,
    pub values: *const f64,
    pub len: usize,
    pub horizon: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TwStatus {
    match e {
        Error::InvalidParameter { .. } | Error::Config(_) => TwStatus::InvalidArgument,
        _ => TwStatus::Runtime,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (TwStatus, String)>) -> TwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TwStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TwStatus::Panic
        }
    }
}

fn lib<T>(r: trapwalk::Result<T>) -> Result<T, (TwStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(name: &str) -> (TwStatus, String) {
    (TwStatus::NullPointer, format!("{name} is null"))
}

unsafe fn out_ref<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, (TwStatus, String)> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn in_ref<'a, T>(p: *const T, name: &str) -> Result<&'a T, (TwStatus, String)> {
    p.as_ref().ok_or_else(|| null(name))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// `F̄(u) = (ln u)^{−γ}` for `u ≥ e`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tw_tail_log_power(gamma: f64, out: *mut *mut TwTail) -> TwStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = Box::into_raw(Box::new(TwTail(lib(TailFunction::log_power(gamma))?)));
        Ok(())
    })
}

/// `F̄(u) = (ln ln u)^{−γ}` for `u ≥ e^e`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tw_tail_iter_log(gamma: f64, out: *mut *mut TwTail) -> TwStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = Box::into_raw(Box::new(TwTail(lib(TailFunction::iter_log(gamma))?)));
        Ok(())
    })
}

/// Tabulated tail from `len` rows of `(ln u, F̄(u))`.
///
/// # Safety
/// `log_u` and `tail` must be null or point to `len` doubles; `out` must be
/// null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tw_tail_table(
    log_u: *const f64,
    tail: *const f64,
    len: usize,
    out: *mut *mut TwTail,
) -> TwStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if log_u.is_null() || tail.is_null() {
            return Err(null("log_u or tail"));
        }
        let xs = std::slice::from_raw_parts(log_u, len);
        let ps = std::slice::from_raw_parts(tail, len);
        let rows: Vec<(f64, f64)> = xs.iter().copied().zip(ps.iter().copied()).collect();
        let table = lib(trapwalk::svt::TailTable::from_log_rows(&rows))?;
        *out = Box::into_raw(Box::new(TwTail(TailFunction::table(table))));
        Ok(())
    })
}

/// # Safety
/// `tail` must be null or a handle from a `tw_tail_*` constructor, freed once.
#[no_mangle]
pub unsafe extern "C" fn tw_tail_free(tail: *mut TwTail) {
    if !tail.is_null() {
        drop(Box::from_raw(tail));
    }
}

/// `F̄(e^{log_u})`.
///
/// # Safety
/// `tail` must be a live handle or null; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tw_tail_eval_log(tail: *const TwTail, log_u: f64, out: *mut f64) -> TwStatus {
    guard(|| {
        let t = in_ref(tail, "tail")?;
        *out_ref(out, "out")? = t.0.eval_log(log_u);
        Ok(())
    })
}

/// `ln F̄⁻¹(p)` for `0 < p ≤ 1`.
///
/// # Safety
/// `tail` must be a live handle or null; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tw_tail_inverse_log(tail: *const TwTail, p: f64, out: *mut f64) -> TwStatus {
    guard(|| {
        let t = in_ref(tail, "tail")?;
        *out_ref(out, "out")? = lib(t.0.inverse(p))?.log();
        Ok(())
    })
}

/// `ln F̄⁻¹(ln n / n)`, the deep-trap level at scale `n ≥ 2`.
///
/// # Safety
/// `tail` must be a live handle or null; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tw_tail_critical_depth_log(tail: *const TwTail, n: f64, out: *mut f64) -> TwStatus {
    guard(|| {
        let t = in_ref(tail, "tail")?;
        *out_ref(out, "out")? = lib(t.0.critical_depth(n))?.log();
        Ok(())
    })
}

/// Critical geometric law `p_k = 2^{−k−1}`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tw_offspring_geometric(out: *mut *mut TwOffspringLaw) -> TwStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = Box::into_raw(Box::new(TwOffspringLaw(OffspringLaw::geometric())));
        Ok(())
    })
}

/// Critical Zipf-type law with tail index `1 < alpha < 2`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tw_offspring_zipf(alpha: f64, table_len: usize, out: *mut *mut TwOffspringLaw) -> TwStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = Box::into_raw(Box::new(TwOffspringLaw(lib(OffspringLaw::zipf(alpha, table_len))?)));
        Ok(())
    })
}

/// # Safety
/// `law` must be null or a handle from a `tw_offspring_*` constructor, freed once.
#[no_mangle]
pub unsafe extern "C" fn tw_offspring_free(law: *mut TwOffspringLaw) {
    if !law.is_null() {
        drop(Box::from_raw(law));
    }
}

/// Survival probability `q_n = P(Z_n > 0)`.
///
/// # Safety
/// `law` must be a live handle or null; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tw_offspring_survival(law: *const TwOffspringLaw, n: u64, out: *mut f64) -> TwStatus {
    guard(|| {
        let l = in_ref(law, "law")?;
        if let Some(len) = l.0.table_len() {
            if n > len {
                return Err((TwStatus::InvalidArgument, format!("n = {n} beyond the survival table ({len})")));
            }
        }
        *out_ref(out, "out")? = l.0.survival(n);
        Ok(())
    })
}

/// Probability generating function `f(s)` on `[0, 1]`.
///
/// # Safety
/// `law` must be a live handle or null; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tw_offspring_pgf(law: *const TwOffspringLaw, s: f64, out: *mut f64) -> TwStatus {
    guard(|| {
        let l = in_ref(law, "law")?;
        if !(0.0..=1.0).contains(&s) {
            return Err((TwStatus::InvalidArgument, format!("s = {s} outside [0, 1]")));
        }
        *out_ref(out, "out")? = l.0.pgf(s);
        Ok(())
    })
}

/// `P(m(t) ≤ x) = e^{−t/x}` for the extremal process.
#[no_mangle]
pub extern "C" fn tw_marginal_cdf(t: f64, x: f64) -> f64 {
    marginal_cdf(t, x)
}

/// Seed of replica `index` on stream `tag` under master seed `master`.
#[no_mangle]
pub extern "C" fn tw_derive_seed(master: u64, index: u64, tag: u64) -> u64 {
    derive_seed(master, index, tag)
}

unsafe fn step(p: *const TwStep, name: &str) -> Result<CadlagStep, (TwStatus, String)> {
    let s = in_ref(p, name)?;
    if s.len > 0 && (s.times.is_null() || s.values.is_null()) {
        return Err(null("times or values"));
    }
    let jumps: Vec<(f64, f64)> = if s.len == 0 {
        Vec::new()
    } else {
        let t = std::slice::from_raw_parts(s.times, s.len);
        let v = std::slice::from_raw_parts(s.values, s.len);
        t.iter().copied().zip(v.iter().copied()).collect()
    };
    lib(CadlagStep::new(s.initial, &jumps, s.horizon))
}

/// Skorohod J1 distance between two step paths with the same horizon.
///
/// # Safety
/// `f` and `g` must be null or point to valid `TwStep`s whose arrays hold
/// `len` doubles; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tw_j1_distance(f: *const TwStep, g: *const TwStep, out: *mut f64) -> TwStatus {
    guard(|| {
        let (f, g) = (step(f, "f")?, step(g, "g")?);
        *out_ref(out, "out")? = lib(j1_distance(&f, &g))?;
        Ok(())
    })
}

/// Skorohod M1 distance, graphs discretized with `resolution` points per jump.
///
/// # Safety
/// As for `tw_j1_distance`.
#[no_mangle]
pub unsafe extern "C" fn tw_m1_distance(
    f: *const TwStep,
    g: *const TwStep,
    resolution: usize,
    out: *mut f64,
) -> TwStatus {
    guard(|| {
        let (f, g) = (step(f, "f")?, step(g, "g")?);
        *out_ref(out, "out")? = lib(m1_distance(&f, &g, resolution))?;
        Ok(())
    })
}

/// One replica of `(1/n) L(Δ_n)` for the directed trap model, seeded as
/// replica `replica` of `trapwalk trap-hitting --seed seed --grid 1`.
///
/// # Safety
/// `tail` must be a live handle or null; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tw_trap_hitting_sample(
    tail: *const TwTail,
    beta: f64,
    n: u64,
    seed: u64,
    replica: u64,
    out: *mut f64,
) -> TwStatus {
    guard(|| {
        let t = in_ref(tail, "tail")?;
        let out = out_ref(out, "out")?;
        let mut env = lib(TrapEnvironment::generate(
            t.0.clone(),
            64,
            n,
            derive_seed(seed, replica, tag::ENVIRONMENT),
        ))?;
        let mut rng = stream(seed, replica, tag::WALK);
        let rec = lib(run_to_level(&mut env, beta, n, &WalkOptions::default(), &mut rng))?;
        *out = lib(rescaled_hitting_path(&rec, &t.0, n, &[1.0]))?.eval(1.0);
        Ok(())
    })
}
