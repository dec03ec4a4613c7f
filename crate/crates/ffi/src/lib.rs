//! C interface to `npwnet`.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `*_free` function. Every fallible call returns an
//! [`NpwStatus`]; on failure a description is kept per thread and can be
//! copied out with [`npw_last_error_message`]. Panics are caught and reported
//! as [`NpwStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use npwnet::cli::io::read_edge_list;
use npwnet::metrics::rand_index;
use npwnet::simulate::{simulate, GeneratorConfig, WeightModel};
use npwnet::variational::{fit, FitConfig, FitResult, WeightMode};
use npwnet::{Labels, WeightedNetwork};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Network = 3,
    Fit = 4,
    Io = 5,
    Panic = 6,
    BufferTooSmall = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpwWeightMode {
    Nonparametric = 0,
    Normal = 1,
    Gamma = 2,
    Binary = 3,
}

impl From<NpwWeightMode> for WeightMode {
    fn from(m: NpwWeightMode) -> Self {
        match m {
            NpwWeightMode::Nonparametric => WeightMode::Nonparametric,
            NpwWeightMode::Normal => WeightMode::Normal,
            NpwWeightMode::Gamma => WeightMode::Gamma,
            NpwWeightMode::Binary => WeightMode::Binary,
        }
    }
}

/// Fit settings; obtain defaults from [`npw_fit_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NpwFitConfig {
    pub k: usize,
    pub max_iter: usize,
    pub elbo_rel_tol: f64,
    pub restarts: usize,
    pub mm_inner_iters: usize,
    pub seed: u64,
    pub weight_mode: NpwWeightMode,
    pub density_degree: usize,
    pub density_grid_size: usize,
}

impl From<&NpwFitConfig> for FitConfig {
    fn from(c: &NpwFitConfig) -> Self {
        FitConfig {
            k: c.k,
            max_iter: c.max_iter,
            elbo_rel_tol: c.elbo_rel_tol,
            restarts: c.restarts,
            mm_inner_iters: c.mm_inner_iters,
            seed: c.seed,
            weight_mode: c.weight_mode.into(),
            density_degree: c.density_degree,
            density_grid_size: c.density_grid_size,
        }
    }
}

/// An undirected weighted network.
pub struct NpwNetwork(WeightedNetwork);

/// The outcome of [`npw_fit`].
pub struct NpwFitResult(FitResult);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: NpwStatus, msg: impl std::fmt::Display) -> NpwStatus {
    set_error(msg.to_string());
    status
}

fn guarded(body: impl FnOnce() -> NpwStatus) -> NpwStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(NpwStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn slice<'a, T>(data: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if data.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(data, len))
    }
}

unsafe fn copy_out<T: Copy>(src: &[T], out: *mut T, capacity: usize) -> NpwStatus {
    if out.is_null() && !src.is_empty() {
        return fail(NpwStatus::NullPointer, "output buffer is null");
    }
    if capacity < src.len() {
        return fail(NpwStatus::BufferTooSmall, format!("need {} elements, got {capacity}", src.len()));
    }
    if !src.is_empty() {
        ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    }
    NpwStatus::Ok
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the length
/// including the terminator that the full message needs.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn npw_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Builds a network on `n` nodes from `m` edges `(i[e], j[e], w[e])`.
///
/// # Safety
/// `i`, `j` and `w` must each point to `m` readable elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npw_network_new(
    n: usize,
    i: *const usize,
    j: *const usize,
    w: *const f64,
    m: usize,
    out: *mut *mut NpwNetwork,
) -> NpwStatus {
    guarded(|| {
        if out.is_null() {
            return fail(NpwStatus::NullPointer, "out is null");
        }
        let (Some(i), Some(j), Some(w)) = (slice(i, m), slice(j, m), slice(w, m)) else {
            return fail(NpwStatus::NullPointer, "edge arrays are null");
        };
        let triples = i.iter().zip(j).zip(w).map(|((&a, &b), &x)| (a, b, x));
        match WeightedNetwork::new(n, triples) {
            Ok(net) => {
                *out = Box::into_raw(Box::new(NpwNetwork(net)));
                NpwStatus::Ok
            }
            Err(e) => fail(NpwStatus::Network, e),
        }
    })
}

/// Reads an `i,j,w` edge list; the node count is one more than the largest index.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npw_network_read_edge_list(path: *const c_char, out: *mut *mut NpwNetwork) -> NpwStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return fail(NpwStatus::NullPointer, "path or out is null");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(NpwStatus::InvalidArgument, "path is not UTF-8");
        };
        match read_edge_list(Path::new(path), None) {
            Ok(net) => {
                *out = Box::into_raw(Box::new(NpwNetwork(net)));
                NpwStatus::Ok
            }
            Err(e) => fail(NpwStatus::Io, e),
        }
    })
}

/// # Safety
/// `net` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn npw_network_free(net: *mut NpwNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Returns 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npw_network_node_count(net: *const NpwNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.node_count())
}

/// Returns 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npw_network_edge_count(net: *const NpwNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.edge_count())
}

/// # Safety
/// `net` must be null or a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npw_network_degree(net: *const NpwNetwork, node: usize, out: *mut usize) -> NpwStatus {
    guarded(|| {
        let (Some(net), false) = (net.as_ref(), out.is_null()) else {
            return fail(NpwStatus::NullPointer, "net or out is null");
        };
        match net.0.degree(node) {
            Ok(d) => {
                *out = d;
                NpwStatus::Ok
            }
            Err(e) => fail(NpwStatus::InvalidArgument, e),
        }
    })
}

/// Draws a planted network with the default block parameters for `weight_mode`
/// (`Nonparametric` is treated as Normal). `labels_out` receives `n` labels.
///
/// # Safety
/// `pi` and `theta` must point to `k` readable values; `labels_out` to `n`
/// writable slots; `net_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npw_simulate(
    n: usize,
    k: usize,
    pi: *const f64,
    theta: *const f64,
    weight_mode: NpwWeightMode,
    seed: u64,
    net_out: *mut *mut NpwNetwork,
    labels_out: *mut usize,
) -> NpwStatus {
    guarded(|| {
        let (Some(pi), Some(theta)) = (slice(pi, k), slice(theta, k)) else {
            return fail(NpwStatus::NullPointer, "pi or theta is null");
        };
        if net_out.is_null() || (labels_out.is_null() && n > 0) {
            return fail(NpwStatus::NullPointer, "outputs are null");
        }
        let weight_model = match weight_mode {
            NpwWeightMode::Binary => WeightModel::none(),
            NpwWeightMode::Gamma if k == 2 => WeightModel::default_gamma(),
            NpwWeightMode::Gamma => return fail(NpwStatus::InvalidArgument, "default gamma blocks need K = 2"),
            NpwWeightMode::Normal | NpwWeightMode::Nonparametric => WeightModel::default_normal(k),
        };
        let cfg = GeneratorConfig { n, k, pi: pi.to_vec(), theta: theta.to_vec(), weight_model, seed };
        match simulate(&cfg) {
            Ok((labels, net)) => {
                ptr::copy_nonoverlapping(labels.as_slice().as_ptr(), labels_out, n);
                *net_out = Box::into_raw(Box::new(NpwNetwork(net)));
                NpwStatus::Ok
            }
            Err(e) => fail(NpwStatus::InvalidArgument, e),
        }
    })
}

#[no_mangle]
pub extern "C" fn npw_fit_config_default(k: usize) -> NpwFitConfig {
    let d = FitConfig::with_k(k);
    NpwFitConfig {
        k: d.k,
        max_iter: d.max_iter,
        elbo_rel_tol: d.elbo_rel_tol,
        restarts: d.restarts,
        mm_inner_iters: d.mm_inner_iters,
        seed: d.seed,
        weight_mode: NpwWeightMode::Nonparametric,
        density_degree: d.density_degree,
        density_grid_size: d.density_grid_size,
    }
}

/// Fits the model. A fit that hits `max_iter` still succeeds; check
/// [`npw_fit_result_converged`].
///
/// # Safety
/// `net` and `config` must be live pointers; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npw_fit(
    net: *const NpwNetwork,
    config: *const NpwFitConfig,
    out: *mut *mut NpwFitResult,
) -> NpwStatus {
    guarded(|| {
        let (Some(net), Some(config), false) = (net.as_ref(), config.as_ref(), out.is_null()) else {
            return fail(NpwStatus::NullPointer, "net, config or out is null");
        };
        match fit(&net.0, &FitConfig::from(config)) {
            Ok(res) => {
                *out = Box::into_raw(Box::new(NpwFitResult(res)));
                NpwStatus::Ok
            }
            Err(e) => fail(NpwStatus::Fit, e),
        }
    })
}

/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npw_fit_result_free(res: *mut NpwFitResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Number of clusters, or 0 for a null handle.
///
/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npw_fit_result_k(res: *const NpwFitResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.params.k())
}

/// Number of nodes, or 0 for a null handle.
///
/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npw_fit_result_n(res: *const NpwFitResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.gamma.n())
}

/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npw_fit_result_converged(res: *const NpwFitResult) -> bool {
    res.as_ref().is_some_and(|r| r.0.converged)
}

/// Length of the ELBO trace, or 0 for a null handle.
///
/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npw_fit_result_elbo_trace_len(res: *const NpwFitResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.elbo_trace.len())
}

unsafe fn copy_from_result<T: Copy>(
    res: *const NpwFitResult,
    out: *mut T,
    len: usize,
    extract: impl FnOnce(&FitResult) -> &[T],
) -> NpwStatus {
    guarded(|| {
        let Some(r) = res.as_ref() else {
            return fail(NpwStatus::NullPointer, "result handle is null");
        };
        copy_out(extract(&r.0), out, len)
    })
}

/// Copies the `K` sparsity parameters.
///
/// # Safety
/// `res` must be null or a live handle; `out` must point to `len` writable elements.
#[no_mangle]
pub unsafe extern "C" fn npw_fit_result_theta(res: *const NpwFitResult, out: *mut f64, len: usize) -> NpwStatus {
    copy_from_result(res, out, len, |r| &r.params.theta)
}

/// Copies the `K` cluster proportions.
///
/// # Safety
/// `res` must be null or a live handle; `out` must point to `len` writable elements.
#[no_mangle]
pub unsafe extern "C" fn npw_fit_result_pi(res: *const NpwFitResult, out: *mut f64, len: usize) -> NpwStatus {
    copy_from_result(res, out, len, |r| &r.params.pi)
}

/// Copies the `n` hard labels.
///
/// # Safety
/// `res` must be null or a live handle; `out` must point to `len` writable elements.
#[no_mangle]
pub unsafe extern "C" fn npw_fit_result_labels(res: *const NpwFitResult, out: *mut usize, len: usize) -> NpwStatus {
    copy_from_result(res, out, len, |r| r.hard_labels.as_slice())
}

/// Copies the `n x K` responsibilities, row-major.
///
/// # Safety
/// `res` must be null or a live handle; `out` must point to `len` writable elements.
#[no_mangle]
pub unsafe extern "C" fn npw_fit_result_gamma(res: *const NpwFitResult, out: *mut f64, len: usize) -> NpwStatus {
    copy_from_result(res, out, len, |r| r.gamma.as_slice())
}

/// Copies the ELBO after each iteration, starting with the initial value.
///
/// # Safety
/// `res` must be null or a live handle; `out` must point to `len` writable elements.
#[no_mangle]
pub unsafe extern "C" fn npw_fit_result_elbo_trace(res: *const NpwFitResult, out: *mut f64, len: usize) -> NpwStatus {
    copy_from_result(res, out, len, |r| &r.elbo_trace)
}

/// Writes the ICL score; fails with `InvalidArgument` when it was not computed.
///
/// # Safety
/// `res` must be null or a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npw_fit_result_icl(res: *const NpwFitResult, out: *mut f64) -> NpwStatus {
    guarded(|| {
        let (Some(r), false) = (res.as_ref(), out.is_null()) else {
            return fail(NpwStatus::NullPointer, "res or out is null");
        };
        match r.0.icl {
            Some(v) => {
                *out = v;
                NpwStatus::Ok
            }
            None => fail(NpwStatus::InvalidArgument, "ICL is unavailable for this fit"),
        }
    })
}

/// Rand index between two labelings of `n` nodes.
///
/// # Safety
/// `a` and `b` must point to `n` readable labels; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npw_rand_index(a: *const usize, b: *const usize, n: usize, out: *mut f64) -> NpwStatus {
    guarded(|| {
        let (Some(a), Some(b), false) = (slice(a, n), slice(b, n), out.is_null()) else {
            return fail(NpwStatus::NullPointer, "labels or out is null");
        };
        let (za, zb) = (Labels::from_assignments(a.to_vec()), Labels::from_assignments(b.to_vec()));
        match rand_index(&za, &zb) {
            Ok(v) => {
                *out = v;
                NpwStatus::Ok
            }
            Err(e) => fail(NpwStatus::InvalidArgument, e),
        }
    })
}
