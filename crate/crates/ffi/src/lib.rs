//! C interface to `riskla`.
//!
//! Every function returns a [`RisklaStatus`]; results go through out-pointers.
//! On failure the message is kept per thread and can be read with
//! [`riskla_last_error`]. Handles are opaque and must be released with their
//! `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use riskla::cli::{config, CliError, ExperimentConfig};
use riskla::policy::{Policy, PolicySpec, Theta};
use riskla::risk::{self, RiskLevel, Sample, Threshold};
use riskla::sim::{self, EpisodeTrace, Instance};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RisklaStatus {
    Ok = 0,
    NullPointer = 1,
    /// An argument or config value is out of range.
    InvalidArgument = 2,
    /// A solve or simulation failed.
    Runtime = 3,
    Panic = 4,
}

struct Failure {
    status: RisklaStatus,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            status: RisklaStatus::InvalidArgument,
            message: message.into(),
        }
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Self {
            status: RisklaStatus::Runtime,
            message: e.to_string(),
        }
    }

    fn null(name: &str) -> Self {
        Self {
            status: RisklaStatus::NullPointer,
            message: format!("{name} is null"),
        }
    }
}

impl From<CliError> for Failure {
    fn from(e: CliError) -> Self {
        match e {
            CliError::Validation(m) => Failure::invalid(m),
            CliError::Runtime(m) => Failure::runtime(m),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RisklaStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RisklaStatus::Ok,
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {message}"));
            RisklaStatus::Panic
        }
    }
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn riskla_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

unsafe fn slice<'a>(values: *const f64, len: usize) -> Result<&'a [f64], Failure> {
    if values.is_null() {
        return Err(Failure::null("values"));
    }
    Ok(std::slice::from_raw_parts(values, len))
}

unsafe fn sample(values: *const f64, len: usize) -> Result<Sample, Failure> {
    Sample::new(slice(values, len)?.to_vec()).map_err(|e| Failure::invalid(e.to_string()))
}

unsafe fn write<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null(name));
    }
    out.write(value);
    Ok(())
}

/// Value-at-risk at level `alpha` of `len` values.
///
/// # Safety
/// `values` must point to `len` readable doubles and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn riskla_var(values: *const f64, len: usize, alpha: f64, out: *mut f64) -> RisklaStatus {
    guard(|| {
        let s = sample(values, len)?;
        let level = RiskLevel::new(alpha).map_err(|e| Failure::invalid(e.to_string()))?;
        write(out, risk::var(&s, level.value()), "out")
    })
}

/// Conditional value-at-risk at level `alpha` of `len` values.
///
/// # Safety
/// `values` must point to `len` readable doubles and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn riskla_cvar(values: *const f64, len: usize, alpha: f64, out: *mut f64) -> RisklaStatus {
    guard(|| {
        let s = sample(values, len)?;
        let level = RiskLevel::new(alpha).map_err(|e| Failure::invalid(e.to_string()))?;
        write(out, risk::cvar(&s, level), "out")
    })
}

/// Fraction of values strictly above `zeta`.
///
/// # Safety
/// `values` must point to `len` readable doubles and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn riskla_poe(values: *const f64, len: usize, zeta: f64, out: *mut f64) -> RisklaStatus {
    guard(|| {
        let s = sample(values, len)?;
        let threshold = Threshold::new(zeta).map_err(|e| Failure::invalid(e.to_string()))?;
        write(out, risk::poe(&s, threshold.value()), "out")
    })
}

/// Buffered probability of exceedance of `zeta`.
///
/// # Safety
/// `values` must point to `len` readable doubles and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn riskla_bpoe(values: *const f64, len: usize, zeta: f64, out: *mut f64) -> RisklaStatus {
    guard(|| {
        let s = sample(values, len)?;
        let threshold = Threshold::new(zeta).map_err(|e| Failure::invalid(e.to_string()))?;
        write(out, risk::bpoe(&s, threshold), "out")
    })
}

/// A loaded experiment: system, data and configured policies.
pub struct RisklaInstance {
    config: ExperimentConfig,
    instance: Instance,
}

/// One closed-loop episode.
pub struct RisklaTrace {
    trace: EpisodeTrace,
}

/// State and decision of one simulated step.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RisklaStep {
    pub demand: f64,
    pub wind: f64,
    pub price: f64,
    pub battery_level: f64,
    pub hydrogen_level: f64,
    pub wind_to_load: f64,
    pub battery_to_load: f64,
    pub fuel_cell_to_load: f64,
    pub wind_to_battery: f64,
    pub fuel_cell_to_battery: f64,
    pub hydrogen_purchase: f64,
    pub wind_curtailed: f64,
    pub cost: f64,
    pub loss: f64,
}

unsafe fn instance_ref<'a>(handle: *const RisklaInstance) -> Result<&'a RisklaInstance, Failure> {
    handle.as_ref().ok_or_else(|| Failure::null("instance"))
}

/// Loads the TOML experiment at `path` into a new handle written to `out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn riskla_instance_load(path: *const c_char, out: *mut *mut RisklaInstance) -> RisklaStatus {
    guard(|| {
        if path.is_null() {
            return Err(Failure::null("path"));
        }
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure::invalid("path is not valid UTF-8"))?;
        let config = config::load(Path::new(path))?;
        let instance = config.instance()?;
        out.write(Box::into_raw(Box::new(RisklaInstance { config, instance })));
        Ok(())
    })
}

/// Releases a handle from [`riskla_instance_load`]; null is ignored.
///
/// # Safety
/// `handle` must be null or a live handle that is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn riskla_instance_free(handle: *mut RisklaInstance) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of steps `T` of an episode.
///
/// # Safety
/// `handle` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn riskla_instance_episode_length(handle: *const RisklaInstance, out: *mut usize) -> RisklaStatus {
    guard(|| write(out, instance_ref(handle)?.instance.params.episode_length, "out"))
}

/// Number of policies listed in the config.
///
/// # Safety
/// `handle` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn riskla_instance_policy_count(handle: *const RisklaInstance, out: *mut usize) -> RisklaStatus {
    guard(|| write(out, instance_ref(handle)?.config.policies.len(), "out"))
}

/// Writes the report name of policy `index` as a NUL-terminated string into
/// `buf` of `capacity` bytes. `required` receives the size including the NUL.
///
/// # Safety
/// `handle` must be live, `buf` must hold `capacity` bytes (or be null when
/// `capacity` is 0), and `required` must be writable.
#[no_mangle]
pub unsafe extern "C" fn riskla_instance_policy_name(
    handle: *const RisklaInstance,
    index: usize,
    buf: *mut c_char,
    capacity: usize,
    required: *mut usize,
) -> RisklaStatus {
    guard(|| {
        let name = configured(instance_ref(handle)?, index)?.name();
        let bytes = name.as_bytes();
        write(required, bytes.len() + 1, "required")?;
        if capacity == 0 {
            return Ok(());
        }
        if buf.is_null() {
            return Err(Failure::null("buf"));
        }
        if capacity < bytes.len() + 1 {
            return Err(Failure::invalid(format!("buffer of {capacity} bytes is too small")));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, bytes.len());
        buf.add(bytes.len()).write(0);
        Ok(())
    })
}

fn configured(handle: &RisklaInstance, index: usize) -> Result<&PolicySpec, Failure> {
    let policies = &handle.config.policies;
    policies
        .get(index)
        .ok_or_else(|| Failure::invalid(format!("policy index {index} out of range ({} configured)", policies.len())))
}

fn dla(theta: f64) -> Result<PolicySpec, Failure> {
    if !(theta.is_finite() && theta >= 0.0) {
        return Err(Failure::invalid(format!("theta must be nonnegative, got {theta}")));
    }
    Ok(PolicySpec::Dla {
        theta: Theta::Constant(theta),
    })
}

unsafe fn run_evaluation(
    handle: *const RisklaInstance,
    policy: &dyn Policy,
    scenarios: usize,
    seed: u64,
    costs: *mut f64,
    mean: *mut f64,
) -> Result<(), Failure> {
    let handle = instance_ref(handle)?;
    if scenarios == 0 {
        return Err(Failure::invalid("scenario count must be at least 1"));
    }
    let summary = sim::evaluate(policy, &handle.instance, scenarios, seed, &[]).map_err(Failure::runtime)?;
    if !costs.is_null() {
        ptr::copy_nonoverlapping(summary.costs.as_ptr(), costs, scenarios);
    }
    write(mean, summary.mean_cost, "mean")
}

/// Evaluates configured policy `index` on `scenarios` paired episodes from
/// `seed`. Per-episode costs go to `costs` when it is not null.
///
/// # Safety
/// `handle` must be live, `costs` null or writable for `scenarios` doubles,
/// and `mean` writable.
#[no_mangle]
pub unsafe extern "C" fn riskla_evaluate_policy(
    handle: *const RisklaInstance,
    index: usize,
    scenarios: usize,
    seed: u64,
    costs: *mut f64,
    mean: *mut f64,
) -> RisklaStatus {
    guard(|| {
        let policy = configured(instance_ref(handle)?, index)?.clone();
        run_evaluation(handle, &policy, scenarios, seed, costs, mean)
    })
}

/// Like [`riskla_evaluate_policy`] for a constant-θ deterministic look-ahead.
///
/// # Safety
/// Same as [`riskla_evaluate_policy`].
#[no_mangle]
pub unsafe extern "C" fn riskla_evaluate_dla(
    handle: *const RisklaInstance,
    theta: f64,
    scenarios: usize,
    seed: u64,
    costs: *mut f64,
    mean: *mut f64,
) -> RisklaStatus {
    guard(|| run_evaluation(handle, &dla(theta)?, scenarios, seed, costs, mean))
}

unsafe fn run_simulation(
    handle: *const RisklaInstance,
    policy: &dyn Policy,
    seed: u64,
    out: *mut *mut RisklaTrace,
) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null("out"));
    }
    let trace = sim::run_seeded_episode(policy, &instance_ref(handle)?.instance, seed).map_err(Failure::runtime)?;
    out.write(Box::into_raw(Box::new(RisklaTrace { trace })));
    Ok(())
}

/// Runs configured policy `index` for one episode and returns its trace.
///
/// # Safety
/// `handle` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn riskla_simulate_policy(
    handle: *const RisklaInstance,
    index: usize,
    seed: u64,
    out: *mut *mut RisklaTrace,
) -> RisklaStatus {
    guard(|| {
        let policy = configured(instance_ref(handle)?, index)?.clone();
        run_simulation(handle, &policy, seed, out)
    })
}

/// Runs a constant-θ deterministic look-ahead for one episode.
///
/// # Safety
/// `handle` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn riskla_simulate_dla(
    handle: *const RisklaInstance,
    theta: f64,
    seed: u64,
    out: *mut *mut RisklaTrace,
) -> RisklaStatus {
    guard(|| run_simulation(handle, &dla(theta)?, seed, out))
}

unsafe fn trace_ref<'a>(trace: *const RisklaTrace) -> Result<&'a EpisodeTrace, Failure> {
    trace.as_ref().map(|t| &t.trace).ok_or_else(|| Failure::null("trace"))
}

/// Releases a trace; null is ignored.
///
/// # Safety
/// `trace` must be null or a live trace that is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn riskla_trace_free(trace: *mut RisklaTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of steps in the trace.
///
/// # Safety
/// `trace` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn riskla_trace_len(trace: *const RisklaTrace, out: *mut usize) -> RisklaStatus {
    guard(|| write(out, trace_ref(trace)?.steps.len(), "out"))
}

/// Total cost and total unserved load of the episode.
///
/// # Safety
/// `trace` must be live; `cost` and `loss` writable.
#[no_mangle]
pub unsafe extern "C" fn riskla_trace_totals(trace: *const RisklaTrace, cost: *mut f64, loss: *mut f64) -> RisklaStatus {
    guard(|| {
        let t = trace_ref(trace)?;
        write(cost, t.total_cost, "cost")?;
        write(loss, t.total_loss, "loss")
    })
}

/// Copies step `t` of the trace.
///
/// # Safety
/// `trace` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn riskla_trace_step(trace: *const RisklaTrace, t: usize, out: *mut RisklaStep) -> RisklaStatus {
    guard(|| {
        let steps = &trace_ref(trace)?.steps;
        let s = steps
            .get(t)
            .ok_or_else(|| Failure::invalid(format!("step {t} out of range ({} steps)", steps.len())))?;
        let d = &s.decision;
        let step = RisklaStep {
            demand: s.state.demand,
            wind: s.state.wind,
            price: s.state.hydrogen_price,
            battery_level: s.state.battery_level,
            hydrogen_level: s.state.hydrogen_level,
            wind_to_load: d.wind_to_load,
            battery_to_load: d.battery_to_load,
            fuel_cell_to_load: d.fuel_cell_to_load,
            wind_to_battery: d.wind_to_battery,
            fuel_cell_to_battery: d.fuel_cell_to_battery,
            hydrogen_purchase: d.hydrogen_purchase,
            wind_curtailed: d.wind_curtailed,
            cost: s.cost,
            loss: s.loss,
        };
        write(out, step, "out")
    })
}
