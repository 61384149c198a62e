//! C ABI over the reinet library.
//!
//! Objects cross the boundary as opaque handles created by a `*_new` or
//! `*_from_*` function and released with the matching `*_free`. Every entry
//! point returns a [`ReinetStatus`]; on failure, [`reinet_last_error`] gives a
//! message for the calling thread. Strings returned through `char **` out
//! parameters are owned by the caller and released with
//! [`reinet_string_free`]. Panics never unwind into the caller; they are
//! reported as `REINET_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use reinet::agents::ActionMode;
use reinet::envs::{make_env, EnvInstance, EnvParams, Environment};
use reinet::graph::Topology;
use reinet::runner::{evaluate, read_metrics, run_training, summarize, RunConfig};
use reinet::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReinetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Topology = 3,
    Config = 4,
    Shape = 5,
    Protocol = 6,
    Env = 7,
    NonFinite = 8,
    NoData = 9,
    Io = 10,
    Json = 11,
    BufferTooSmall = 12,
    Panic = 99,
}

/// How `reinet_evaluate` picks actions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReinetPolicy {
    Greedy = 0,
    Sample = 1,
    Random = 2,
}

/// Opaque directed acyclic graph.
pub struct ReinetTopology {
    inner: Topology,
}

/// Opaque environment instance.
pub struct ReinetEnv {
    inner: EnvInstance,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> ReinetStatus {
    match e {
        Error::Topology(_) | Error::Provenance(_) => ReinetStatus::Topology,
        Error::Config(_) => ReinetStatus::Config,
        Error::Shape { .. } => ReinetStatus::Shape,
        Error::Protocol(_) => ReinetStatus::Protocol,
        Error::Env(_) => ReinetStatus::Env,
        Error::NonFinite(_) => ReinetStatus::NonFinite,
        Error::NoData(_) => ReinetStatus::NoData,
        Error::Io { .. } => ReinetStatus::Io,
        Error::Json { .. } => ReinetStatus::Json,
    }
}

struct Fail(ReinetStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ReinetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ReinetStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            ReinetStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(ReinetStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(ReinetStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn out_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output string pointer"));
    }
    let c = CString::new(s).map_err(|_| Fail(ReinetStatus::InvalidArgument, "string holds a NUL byte".into()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, needed: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < needed {
        return Err(Fail(
            ReinetStatus::BufferTooSmall,
            format!("{what} holds {len} values, {needed} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn write_obs(obs: &[Vec<f64>], dst: &mut [f64]) {
    for (chunk, o) in dst.chunks_mut(obs.first().map_or(1, Vec::len).max(1)).zip(obs) {
        chunk[..o.len()].copy_from_slice(o);
    }
}

/// Message describing the last failure on this thread; empty after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn reinet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn reinet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a graph file document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn reinet_topology_from_json(json: *const c_char, out: *mut *mut ReinetTopology) -> ReinetStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = Topology::from_json_str(text)?;
        *out = Box::into_raw(Box::new(ReinetTopology { inner }));
        Ok(())
    })
}

/// # Safety
/// `t` must be null or a handle from `reinet_topology_from_json`.
#[no_mangle]
pub unsafe extern "C" fn reinet_topology_free(t: *mut ReinetTopology) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// # Safety
/// `t` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn reinet_topology_vertex_count(t: *const ReinetTopology, out: *mut usize) -> ReinetStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("topology"))?;
        *out_slice(out, 1, 1, "out")?.first_mut().expect("len 1") = t.inner.vertex_count();
        Ok(())
    })
}

/// Sets `*valid` and, when invalid, stores the reasons as the last error.
///
/// # Safety
/// `t` must be a live handle; `valid` must be writable.
#[no_mangle]
pub unsafe extern "C" fn reinet_topology_validate(t: *const ReinetTopology, valid: *mut bool) -> ReinetStatus {
    let mut reasons = String::new();
    let status = guard(|| {
        let t = t.as_ref().ok_or_else(|| null("topology"))?;
        let report = t.inner.validate();
        out_slice(valid, 1, 1, "valid")?[0] = report.is_valid();
        reasons = report.errors.join("; ");
        Ok(())
    });
    if status == ReinetStatus::Ok {
        set_error(&reasons);
    }
    status
}

/// Writes the outgoing depth of every vertex into `depths[0..len]`.
///
/// # Safety
/// `t` must be a live handle; `depths` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn reinet_topology_depths(t: *const ReinetTopology, depths: *mut usize, len: usize) -> ReinetStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("topology"))?;
        let d = t.inner.outgoing_depth()?;
        out_slice(depths, len, d.depth.len(), "depths")?[..d.depth.len()].copy_from_slice(&d.depth);
        Ok(())
    })
}

/// Layered form of the graph as a JSON document.
///
/// # Safety
/// `t` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn reinet_topology_to_layered_json(t: *const ReinetTopology, out: *mut *mut c_char) -> ReinetStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("topology"))?;
        out_string(out, t.inner.to_layered()?.to_json_string())
    })
}

/// Creates an environment by name (`"spread"` or `"balance"`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn reinet_env_new(name: *const c_char, out: *mut *mut ReinetEnv) -> ReinetStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = make_env(name, &EnvParams::default())?;
        *out = Box::into_raw(Box::new(ReinetEnv { inner }));
        Ok(())
    })
}

/// # Safety
/// `e` must be null or a handle from `reinet_env_new`.
#[no_mangle]
pub unsafe extern "C" fn reinet_env_free(e: *mut ReinetEnv) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// # Safety
/// `e` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn reinet_env_spec(
    e: *const ReinetEnv,
    n_agents: *mut usize,
    obs_dim: *mut usize,
    n_actions: *mut usize,
) -> ReinetStatus {
    guard(|| {
        let e = e.as_ref().ok_or_else(|| null("env"))?;
        let s = e.inner.spec();
        out_slice(n_agents, 1, 1, "n_agents")?[0] = s.n_agents;
        out_slice(obs_dim, 1, 1, "obs_dim")?[0] = s.obs_dim;
        out_slice(n_actions, 1, 1, "n_actions")?[0] = s.n_actions;
        Ok(())
    })
}

/// Resets and writes the agent-major observations (`n_agents * obs_dim`).
///
/// # Safety
/// `e` must be a live handle; `obs` must hold `obs_len` values.
#[no_mangle]
pub unsafe extern "C" fn reinet_env_reset(e: *mut ReinetEnv, seed: u64, obs: *mut f64, obs_len: usize) -> ReinetStatus {
    guard(|| {
        let e = e.as_mut().ok_or_else(|| null("env"))?;
        let s = e.inner.spec();
        let dst = out_slice(obs, obs_len, s.n_agents * s.obs_dim, "obs")?;
        let o = e.inner.reset(seed);
        write_obs(&o, dst);
        Ok(())
    })
}

/// Applies one action per agent.
///
/// # Safety
/// `e` must be a live handle; `actions` must hold `n_actions_in` values,
/// `obs` `obs_len` values and `rewards` `rewards_len` values; `done` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn reinet_env_step(
    e: *mut ReinetEnv,
    actions: *const usize,
    n_actions_in: usize,
    obs: *mut f64,
    obs_len: usize,
    rewards: *mut f64,
    rewards_len: usize,
    done: *mut bool,
) -> ReinetStatus {
    guard(|| {
        let e = e.as_mut().ok_or_else(|| null("env"))?;
        if actions.is_null() {
            return Err(null("actions"));
        }
        let s = e.inner.spec();
        let acts = std::slice::from_raw_parts(actions, n_actions_in);
        let obs_dst = out_slice(obs, obs_len, s.n_agents * s.obs_dim, "obs")?;
        let rew_dst = out_slice(rewards, rewards_len, s.n_agents, "rewards")?;
        let done = out_slice(done, 1, 1, "done")?;
        let step = e.inner.step(acts)?;
        write_obs(&step.obs, obs_dst);
        rew_dst[..step.rewards.len()].copy_from_slice(&step.rewards);
        done[0] = step.done;
        Ok(())
    })
}

/// Trains from a run-config JSON document. When `out_dir` is non-null,
/// metrics and checkpoints are written there. `*metrics_json` receives the
/// metrics rows as a JSON array.
///
/// # Safety
/// `config_json` must be a NUL-terminated string, `out_dir` null or one;
/// `metrics_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn reinet_train(
    config_json: *const c_char,
    out_dir: *const c_char,
    metrics_json: *mut *mut c_char,
) -> ReinetStatus {
    guard(|| {
        let cfg = RunConfig::from_json_str(str_arg(config_json, "config_json")?)?;
        let out = if out_dir.is_null() {
            None
        } else {
            Some(Path::new(str_arg(out_dir, "out_dir")?))
        };
        let result = run_training(&cfg, out)?;
        out_string(metrics_json, serde_json::to_string(&result.rows).map_err(Error::from)?)
    })
}

/// Evaluates a checkpoint directory.
///
/// # Safety
/// `checkpoint_dir` must be a NUL-terminated string; `mean` and `std` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn reinet_evaluate(
    checkpoint_dir: *const c_char,
    episodes: usize,
    seed: u64,
    policy: ReinetPolicy,
    mean: *mut f64,
    std: *mut f64,
) -> ReinetStatus {
    guard(|| {
        let dir = str_arg(checkpoint_dir, "checkpoint_dir")?;
        let mode = match policy {
            ReinetPolicy::Greedy => ActionMode::Greedy,
            ReinetPolicy::Sample => ActionMode::Sample,
            ReinetPolicy::Random => ActionMode::Uniform,
        };
        let mean = out_slice(mean, 1, 1, "mean")?;
        let std = out_slice(std, 1, 1, "std")?;
        let r = evaluate(Path::new(dir), episodes, seed, mode)?;
        mean[0] = r.mean;
        std[0] = r.std;
        Ok(())
    })
}

/// Bins a metrics CSV and returns the summary rows as a JSON array.
///
/// # Safety
/// `metrics_csv` must be a NUL-terminated path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn reinet_summarize(metrics_csv: *const c_char, bin: usize, out: *mut *mut c_char) -> ReinetStatus {
    guard(|| {
        let rows = read_metrics(Path::new(str_arg(metrics_csv, "metrics_csv")?))?;
        let (summary, _) = summarize(&rows, bin)?;
        out_string(out, serde_json::to_string(&summary).map_err(Error::from)?)
    })
}
