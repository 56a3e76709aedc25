//! C ABI over `driftmdp`.
//!
//! Every fallible function returns a [`DmStatus`]; on failure the message is
//! kept per thread and can be copied out with [`dm_last_error_message`].
//! Instances and runs are opaque handles released with their `_free`
//! function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use driftmdp::borl::Borl;
use driftmdp::diameter::diameter;
use driftmdp::envs::{gen_drift, gen_stationary, prop3_replay, DriftPattern};
use driftmdp::evi::{evi, PlanningRegions};
use driftmdp::gain::optimal_gain;
use driftmdp::io::load_instance;
use driftmdp::mdp::{NonStationaryInstance, Shape};
use driftmdp::regret::{dynamic_regret, GainCache, RegretRecord, DEFAULT_GAIN_EPS};
use driftmdp::rng::stream;
use driftmdp::sim::{simulate, RewardNoise};
use driftmdp::swucrl::{SwConfig, SwUcrl2Cw};
use driftmdp::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidModel = 3,
    DiameterInfinite = 4,
    IterationCap = 5,
    Io = 6,
    Parse = 7,
    BufferTooSmall = 8,
    Internal = 9,
    Panic = 10,
}

impl From<&Error> for DmStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidModel(_) => DmStatus::InvalidModel,
            Error::InvalidArgument(_) | Error::LengthMismatch { .. } | Error::InvalidAction { .. } | Error::PastHorizon { .. } => {
                DmStatus::InvalidArgument
            }
            Error::DiameterInfinite => DmStatus::DiameterInfinite,
            Error::IterationCap { .. } => DmStatus::IterationCap,
            Error::Io(_) => DmStatus::Io,
            Error::Parse(_) | Error::Csv(_) => DmStatus::Parse,
            Error::Replay(_) | Error::Audit(_) => DmStatus::Internal,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

/// Runs `f`, recording its error or panic.
fn guard(f: impl FnOnce() -> Result<(), DmFail>) -> DmStatus {
    set_error(String::new());
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DmStatus::Ok,
        Ok(Err(DmFail(status, msg))) => {
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
            DmStatus::Panic
        }
    }
}

struct DmFail(DmStatus, String);

impl From<Error> for DmFail {
    fn from(e: Error) -> Self {
        DmFail(DmStatus::from(&e), e.to_string())
    }
}

fn fail(status: DmStatus, msg: &str) -> DmFail {
    DmFail(status, msg.to_string())
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), DmFail> {
    if p.is_null() {
        Err(fail(DmStatus::NullPointer, &format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to fit, into `buf`. Returns the full message length in bytes
/// without the terminator; pass a null `buf` to query it.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn dm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// A non-stationary instance.
pub struct DmInstance(Arc<NonStationaryInstance>);

/// A finished simulation with its regret curve.
pub struct DmRun {
    records: Vec<RegretRecord>,
}

fn emit<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers check `out` for null first.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Stationary random instance with `states` states and `actions` actions each.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dm_instance_generate_stationary(
    states: usize,
    actions: usize,
    horizon: usize,
    seed: u64,
    out: *mut *mut DmInstance,
) -> DmStatus {
    guard(|| {
        non_null(out, "out")?;
        emit(out, DmInstance(Arc::new(gen_stationary(states, actions, horizon, seed)?)));
        Ok(())
    })
}

/// Drifting instance with the given reward and kernel variation budgets
/// spread evenly over time.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dm_instance_generate_drift(
    states: usize,
    actions: usize,
    horizon: usize,
    reward_budget: f64,
    kernel_budget: f64,
    seed: u64,
    out: *mut *mut DmInstance,
) -> DmStatus {
    guard(|| {
        non_null(out, "out")?;
        let inst = gen_drift(states, actions, horizon, reward_budget, kernel_budget, DriftPattern::Uniform, seed)?;
        emit(out, DmInstance(Arc::new(inst)));
        Ok(())
    })
}

/// Loads an instance file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dm_instance_load(path: *const c_char, out: *mut *mut DmInstance) -> DmStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(DmStatus::InvalidArgument, "path is not UTF-8"))?;
        emit(out, DmInstance(Arc::new(load_instance(Path::new(path))?)));
        Ok(())
    })
}

/// # Safety
/// `inst` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dm_instance_free(inst: *mut DmInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Horizon of the instance, or 0 for a null handle.
///
/// # Safety
/// `inst` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_instance_horizon(inst: *const DmInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.0.horizon())
}

/// Realized reward and kernel variation budgets.
///
/// # Safety
/// `inst` must be a live handle; the outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dm_instance_budgets(inst: *const DmInstance, reward: *mut f64, kernel: *mut f64) -> DmStatus {
    guard(|| {
        non_null(inst, "inst")?;
        non_null(reward, "reward")?;
        non_null(kernel, "kernel")?;
        let b = (*inst).0.budgets();
        *reward = b.reward;
        *kernel = b.kernel;
        Ok(())
    })
}

fn snapshot_at(inst: *const DmInstance, t: usize) -> Result<Arc<driftmdp::mdp::MdpSnapshot>, DmFail> {
    non_null(inst, "inst")?;
    // SAFETY: checked non-null; liveness is the caller's contract.
    let inst = unsafe { &(*inst).0 };
    if t == 0 || t > inst.horizon() {
        return Err(fail(DmStatus::InvalidArgument, &format!("step {t} outside [1, {}]", inst.horizon())));
    }
    Ok(inst.snapshot(t).clone())
}

/// Diameter of the snapshot at step `t` (1-based).
///
/// # Safety
/// `inst` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dm_snapshot_diameter(inst: *const DmInstance, t: usize, out: *mut f64) -> DmStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = diameter(snapshot_at(inst, t)?.kernel())?;
        Ok(())
    })
}

/// Optimal long-run average reward of the snapshot at step `t`.
///
/// # Safety
/// `inst` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dm_snapshot_optimal_gain(inst: *const DmInstance, t: usize, eps: f64, out: *mut f64) -> DmStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = optimal_gain(&*snapshot_at(inst, t)?, eps)?.rho;
        Ok(())
    })
}

fn finish_run(inst: &NonStationaryInstance, traj: driftmdp::sim::Trajectory, out: *mut *mut DmRun) -> Result<(), DmFail> {
    let records = dynamic_regret(inst, &traj, &mut GainCache::new(DEFAULT_GAIN_EPS))?;
    emit(out, DmRun { records });
    Ok(())
}

/// Runs the sliding-window learner with window `window` and widening `eta`
/// from state 0 under Bernoulli rewards.
///
/// # Safety
/// `inst` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dm_run_swucrl(
    inst: *const DmInstance,
    window: usize,
    eta: f64,
    delta: f64,
    seed: u64,
    out: *mut *mut DmRun,
) -> DmStatus {
    guard(|| {
        non_null(inst, "inst")?;
        non_null(out, "out")?;
        let inst = &(*inst).0;
        let mut agent = SwUcrl2Cw::new(inst.shape().clone(), SwConfig::new(window, eta, delta, inst.horizon()))?;
        let traj = simulate(inst, &mut agent, 0, RewardNoise::Bernoulli, &mut stream(seed, 0, "env"))?;
        finish_run(inst, traj, out)
    })
}

/// Runs the bandit-tuned learner, which needs no budget knowledge.
///
/// # Safety
/// `inst` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dm_run_borl(inst: *const DmInstance, delta: f64, seed: u64, out: *mut *mut DmRun) -> DmStatus {
    guard(|| {
        non_null(inst, "inst")?;
        non_null(out, "out")?;
        let inst = &(*inst).0;
        let mut agent = Borl::new(inst.shape().clone(), inst.horizon(), delta, stream(seed, 0, "master"))?;
        let traj = simulate(inst, &mut agent, 0, RewardNoise::Bernoulli, &mut stream(seed, 0, "env"))?;
        finish_run(inst, traj, out)
    })
}

/// # Safety
/// `run` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dm_run_free(run: *mut DmRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of steps in the run, or 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_run_len(run: *const DmRun) -> usize {
    run.as_ref().map_or(0, |r| r.records.len())
}

/// Copies the cumulative regret curve into `buf`, which must hold
/// [`dm_run_len`] values.
///
/// # Safety
/// `run` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn dm_run_cum_regret(run: *const DmRun, buf: *mut f64, len: usize) -> DmStatus {
    guard(|| {
        non_null(run, "run")?;
        non_null(buf, "buf")?;
        let records = &(*run).records;
        if len < records.len() {
            return Err(fail(
                DmStatus::BufferTooSmall,
                &format!("buffer holds {len} values, run has {}", records.len()),
            ));
        }
        for (i, r) in records.iter().enumerate() {
            *buf.add(i) = r.cum_regret;
        }
        Ok(())
    })
}

/// Replays the two-state switching construction with phase length `tau`.
/// Writes the four displayed empirical transition probabilities and the
/// empirical kernel's diameter.
///
/// # Safety
/// `values` must be valid for 4 writes and `empirical_diameter` for one.
#[no_mangle]
pub unsafe extern "C" fn dm_prop3_replay(tau: usize, values: *mut f64, empirical_diameter: *mut f64) -> DmStatus {
    guard(|| {
        non_null(values, "values")?;
        non_null(empirical_diameter, "empirical_diameter")?;
        let r = prop3_replay(tau)?;
        std::ptr::copy_nonoverlapping(r.displayed().as_ptr(), values, 4);
        *empirical_diameter = r.empirical_diameter;
        Ok(())
    })
}

/// Extended value iteration over interval rewards and L1 kernel balls on a
/// uniform `states x actions` layout. Arrays are indexed by
/// `pair = s * actions + a`; `p_hat` holds `pair * states + next`.
/// Writes the optimistic policy (`states` entries), gain and bias
/// (`states` entries). `converged` is 0 when the iteration cap was hit.
///
/// # Safety
/// Inputs must be valid for their stated lengths and outputs for writes.
#[no_mangle]
pub unsafe extern "C" fn dm_evi_solve(
    states: usize,
    actions: usize,
    r_lo: *const f64,
    r_hi: *const f64,
    p_hat: *const f64,
    beta: *const f64,
    eps: f64,
    max_iter: usize,
    policy: *mut usize,
    gain: *mut f64,
    bias: *mut f64,
    converged: *mut i32,
) -> DmStatus {
    guard(|| {
        for (p, name) in [(r_lo, "r_lo"), (r_hi, "r_hi"), (p_hat, "p_hat"), (beta, "beta")] {
            non_null(p, name)?;
        }
        non_null(policy, "policy")?;
        non_null(gain, "gain")?;
        non_null(bias, "bias")?;
        non_null(converged, "converged")?;
        let shape = Arc::new(Shape::uniform(states, actions)?);
        let pairs = shape.num_pairs();
        let slice = |p: *const f64, n: usize| std::slice::from_raw_parts(p, n).to_vec();
        let regions = PlanningRegions::new(
            shape,
            slice(r_lo, pairs),
            slice(r_hi, pairs),
            slice(p_hat, pairs * states),
            slice(beta, pairs),
        )?;
        let out = evi(&regions, eps, max_iter)?;
        std::ptr::copy_nonoverlapping(out.policy.as_slice().as_ptr(), policy, states);
        std::ptr::copy_nonoverlapping(out.bias.as_ptr(), bias, states);
        *gain = out.gain;
        *converged = out.converged as i32;
        Ok(())
    })
}
