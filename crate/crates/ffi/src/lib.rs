//! C interface to `motionunits`.
//!
//! Every fallible function returns an `int32_t` status: `MU_OK` (0) on
//! success, the library error code (1..=14) on failure, or one of the
//! `MU_ERR_*` codes defined here for problems at the boundary itself.
//! The message of the most recent failure on the calling thread is
//! available through [`mu_last_error_message`].
//!
//! Objects are opaque handles created by `*_new`/`*_load`/computing
//! functions and released with the matching `*_free`. Freeing NULL is a
//! no-op. Handles are immutable after creation and may be shared between
//! threads for reading.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use motionunits::cluster::{affinity, clustering_accuracy, normalized_cut};
use motionunits::factorize::{factorize, FactorizeConfig};
use motionunits::features::{build_feature_matrix, TrajectoryField};
use motionunits::graph::{knn_heat_graph, Bandwidth, NeighborGraph};
use motionunits::labels::LabelVector;
use motionunits::method::{gsnmf_ncut, MethodConfig};
use motionunits::rng::SeededRng;
use motionunits::select::{dispersion_of, select_k};
use motionunits::tensor::{load_tensor, save_tensor, Tensor};
use motionunits::Error;
use ndarray::{Array2, Array3, ArrayView2};

/// Success.
pub const MU_OK: i32 = 0;
pub const MU_ERR_IO: i32 = 1;
pub const MU_ERR_BAD_MAGIC: i32 = 2;
pub const MU_ERR_TRUNCATED: i32 = 3;
pub const MU_ERR_DIM_MISMATCH: i32 = 4;
pub const MU_ERR_INVALID_TENSOR: i32 = 5;
pub const MU_ERR_NON_FINITE: i32 = 6;
pub const MU_ERR_LABEL_PARSE: i32 = 7;
pub const MU_ERR_INVALID_ARGUMENT: i32 = 8;
pub const MU_ERR_NEGATIVE_ENTRY: i32 = 9;
pub const MU_ERR_EIGEN: i32 = 10;
pub const MU_ERR_EMPTY_CLUSTER: i32 = 11;
pub const MU_ERR_DIVERGED: i32 = 12;
pub const MU_ERR_CONFIG: i32 = 13;
pub const MU_ERR_SELECTION_RUN: i32 = 14;

/// A required pointer argument was NULL.
pub const MU_ERR_NULL: i32 = 100;
/// A string argument was not valid UTF-8.
pub const MU_ERR_UTF8: i32 = 101;
/// The library panicked; this indicates a bug.
pub const MU_ERR_PANIC: i32 = 102;
/// A caller-supplied output buffer is too small.
pub const MU_ERR_BUFFER: i32 = 103;

/// Dense row-major matrix of doubles.
pub struct MuMatrix {
    inner: Array2<f64>,
}

/// k-nearest-neighbor heat-kernel graph over matrix columns.
pub struct MuGraph {
    inner: NeighborGraph,
}

/// Result of a factorization `U ~ V W`.
pub struct MuFactorization {
    v: Array2<f64>,
    w: Array2<f64>,
    iterations: usize,
    final_cost: f64,
}

/// Cluster assignment of each column.
pub struct MuLabels {
    inner: LabelVector,
}

struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: e.code(),
            message: e.to_string(),
        }
    }
}

fn failure(code: i32, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            MU_OK
        }
        Ok(Err(e)) => {
            set_last_error(&e.message);
            e.code
        }
        Err(_) => {
            set_last_error("internal panic");
            MU_ERR_PANIC
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| failure(MU_ERR_NULL, format!("{name} is NULL")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(failure(MU_ERR_NULL, format!("{name} is NULL")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(failure(MU_ERR_NULL, "path is NULL"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| failure(MU_ERR_UTF8, "path is not valid UTF-8"))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(failure(MU_ERR_NULL, "output pointer is NULL"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn store<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(failure(MU_ERR_NULL, "output pointer is NULL"));
    }
    *out = value;
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn to_labels(ids: &[u32]) -> LabelVector {
    LabelVector::new(ids.iter().map(|&l| l as usize).collect())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mu_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (always
/// NUL-terminated, truncated to `len - 1` bytes). Returns the full message
/// length excluding the terminator.
///
/// # Safety
/// `buf` must be NULL or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mu_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let bytes = bytes.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Copies `rows * cols` row-major values into a new matrix.
///
/// # Safety
/// `data` must point to `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mu_matrix_new(rows: usize, cols: usize, data: *const f64, out: *mut *mut MuMatrix) -> i32 {
    guard(|| {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| failure(MU_ERR_INVALID_ARGUMENT, "matrix size overflows"))?;
        let values = slice(data, len, "data")?.to_vec();
        let inner = Array2::from_shape_vec((rows, cols), values).expect("length checked");
        emit(out, MuMatrix { inner })
    })
}

/// Loads a rank-2 MTF1 tensor file.
///
/// # Safety
/// `file` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mu_matrix_load(file: *const c_char, out: *mut *mut MuMatrix) -> i32 {
    guard(|| {
        let inner = load_tensor(path(file)?)?.to_array2()?;
        emit(out, MuMatrix { inner })
    })
}

/// Writes the matrix as an MTF1 tensor file.
///
/// # Safety
/// `m` must be a live handle; `file` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mu_matrix_save(m: *const MuMatrix, file: *const c_char) -> i32 {
    guard(|| {
        let m = borrow(m, "matrix")?;
        save_tensor(&Tensor::from_array2(m.inner.view())?, path(file)?)?;
        Ok(())
    })
}

/// Number of rows, or 0 for NULL.
///
/// # Safety
/// `m` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mu_matrix_rows(m: *const MuMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.nrows())
}

/// Number of columns, or 0 for NULL.
///
/// # Safety
/// `m` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mu_matrix_cols(m: *const MuMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.ncols())
}

/// Copies the row-major values into `buf`, which must hold at least
/// `rows * cols` doubles (`len`).
///
/// # Safety
/// `m` must be a live handle and `buf` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mu_matrix_copy(m: *const MuMatrix, buf: *mut f64, len: usize) -> i32 {
    guard(|| {
        let m = borrow(m, "matrix")?;
        let n = m.inner.len();
        if len < n {
            return Err(failure(MU_ERR_BUFFER, format!("buffer holds {len} values, need {n}")));
        }
        if buf.is_null() {
            return Err(failure(MU_ERR_NULL, "buffer is NULL"));
        }
        for (i, v) in m.inner.iter().enumerate() {
            *buf.add(i) = *v;
        }
        Ok(())
    })
}

/// # Safety
/// `m` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mu_matrix_free(m: *mut MuMatrix) {
    release(m)
}

/// Builds the rescaled feature matrix from `points x frames x 3`
/// row-major positions.
///
/// # Safety
/// `positions` must point to `points * frames * 3` doubles.
#[no_mangle]
pub unsafe extern "C" fn mu_features(points: usize, frames: usize, positions: *const f64, out: *mut *mut MuMatrix) -> i32 {
    guard(|| {
        let len = points.saturating_mul(frames).saturating_mul(3);
        let values = slice(positions, len, "positions")?.to_vec();
        let arr = Array3::from_shape_vec((points, frames, 3), values).expect("length checked");
        let u = build_feature_matrix(&TrajectoryField::new(arr)?)?;
        emit(out, MuMatrix { inner: u.into_matrix() })
    })
}

/// Neighbor graph over the columns of `u`. A `bandwidth` of zero or less
/// selects the automatic bandwidth.
///
/// # Safety
/// `u` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mu_graph_build(u: *const MuMatrix, neighbors: usize, bandwidth: f64, out: *mut *mut MuGraph) -> i32 {
    guard(|| {
        let u = borrow(u, "u")?;
        let bw = if bandwidth > 0.0 { Bandwidth::Fixed(bandwidth) } else { Bandwidth::Auto };
        emit(out, MuGraph { inner: knn_heat_graph(&u.inner, neighbors, bw)? })
    })
}

/// Number of undirected edges, or 0 for NULL.
///
/// # Safety
/// `g` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mu_graph_edge_count(g: *const MuGraph) -> usize {
    g.as_ref().map_or(0, |g| g.inner.edges().len())
}

/// # Safety
/// `g` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mu_graph_free(g: *mut MuGraph) {
    release(g)
}

/// Graph-regularized sparse NMF with the L1/2 penalty.
///
/// # Safety
/// `u` and `g` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mu_factorize(
    u: *const MuMatrix,
    g: *const MuGraph,
    rank: usize,
    eta: f64,
    lambda: f64,
    max_iters: usize,
    rel_tol: f64,
    seed: u64,
    out: *mut *mut MuFactorization,
) -> i32 {
    guard(|| {
        let (u, g) = (borrow(u, "u")?, borrow(g, "graph")?);
        let cfg = FactorizeConfig {
            eta,
            lambda,
            max_iters,
            rel_tol,
            ..Default::default()
        };
        let f = factorize(u.inner.view(), rank, &g.inner, &cfg, &mut SeededRng::new(seed))?;
        let final_cost = *f.cost_trace.last().unwrap_or(&f64::NAN);
        emit(
            out,
            MuFactorization {
                v: f.v,
                w: f.w,
                iterations: f.iterations,
                final_cost,
            },
        )
    })
}

/// New matrix handle holding a copy of the building blocks `V`.
///
/// # Safety
/// `f` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mu_factorization_v(f: *const MuFactorization, out: *mut *mut MuMatrix) -> i32 {
    guard(|| emit(out, MuMatrix { inner: borrow(f, "factorization")?.v.clone() }))
}

/// New matrix handle holding a copy of the weighting map `W`.
///
/// # Safety
/// `f` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mu_factorization_w(f: *const MuFactorization, out: *mut *mut MuMatrix) -> i32 {
    guard(|| emit(out, MuMatrix { inner: borrow(f, "factorization")?.w.clone() }))
}

/// Iterations run, or 0 for NULL.
///
/// # Safety
/// `f` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mu_factorization_iterations(f: *const MuFactorization) -> usize {
    f.as_ref().map_or(0, |f| f.iterations)
}

/// Total cost after the last iteration, or NaN for NULL.
///
/// # Safety
/// `f` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mu_factorization_cost(f: *const MuFactorization) -> f64 {
    f.as_ref().map_or(f64::NAN, |f| f.final_cost)
}

/// # Safety
/// `f` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mu_factorization_free(f: *mut MuFactorization) {
    release(f)
}

/// Normalized-cut clustering of the columns of `w` into `k` groups.
///
/// # Safety
/// `w` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mu_cluster(
    w: *const MuMatrix,
    k: usize,
    sigma: f64,
    squared: bool,
    seed: u64,
    out: *mut *mut MuLabels,
) -> i32 {
    guard(|| {
        let a = affinity(borrow(w, "w")?.inner.view(), sigma, squared)?;
        let inner = normalized_cut(&a, k, &mut SeededRng::new(seed))?;
        emit(out, MuLabels { inner })
    })
}

/// Factorization followed by normalized cut, with rank `k`.
///
/// # Safety
/// `u` and `g` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mu_gsnmf_ncut(
    u: *const MuMatrix,
    g: *const MuGraph,
    k: usize,
    eta: f64,
    lambda: f64,
    sigma: f64,
    seed: u64,
    out: *mut *mut MuLabels,
) -> i32 {
    guard(|| {
        let cfg = method_config(eta, lambda, sigma);
        let o = gsnmf_ncut(&borrow(u, "u")?.inner, &borrow(g, "graph")?.inner, k, &cfg, &mut SeededRng::new(seed))?;
        emit(out, MuLabels { inner: o.labels })
    })
}

fn method_config(eta: f64, lambda: f64, sigma: f64) -> MethodConfig {
    let mut cfg = MethodConfig {
        sigma,
        ..Default::default()
    };
    cfg.factorize.eta = eta;
    cfg.factorize.lambda = lambda;
    cfg
}

/// Number of labels, or 0 for NULL.
///
/// # Safety
/// `l` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mu_labels_len(l: *const MuLabels) -> usize {
    l.as_ref().map_or(0, |l| l.inner.len())
}

/// Copies the labels into `buf` of capacity `len`.
///
/// # Safety
/// `l` must be a live handle and `buf` point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn mu_labels_copy(l: *const MuLabels, buf: *mut u32, len: usize) -> i32 {
    guard(|| {
        let l = borrow(l, "labels")?;
        if len < l.inner.len() {
            return Err(failure(MU_ERR_BUFFER, format!("buffer holds {len} labels, need {}", l.inner.len())));
        }
        if buf.is_null() {
            return Err(failure(MU_ERR_NULL, "buffer is NULL"));
        }
        for (i, &v) in l.inner.labels().iter().enumerate() {
            *buf.add(i) = v as u32;
        }
        Ok(())
    })
}

/// # Safety
/// `l` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mu_labels_free(l: *mut MuLabels) {
    release(l)
}

/// Clustering accuracy in percent between two label arrays of length `n`.
///
/// # Safety
/// `pred` and `truth` must point to `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mu_accuracy(pred: *const u32, truth: *const u32, n: usize, out: *mut f64) -> i32 {
    guard(|| {
        let p = to_labels(slice(pred, n, "pred")?);
        let t = to_labels(slice(truth, n, "truth")?);
        store(out, clustering_accuracy(&p, &t)?)
    })
}

/// Dispersion of an `n x n` row-major consensus matrix.
///
/// # Safety
/// `c` must point to `n * n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mu_dispersion(c: *const f64, n: usize, out: *mut f64) -> i32 {
    guard(|| {
        let values = slice(c, n.saturating_mul(n), "consensus")?;
        let view = ArrayView2::from_shape((n, n), values).expect("length checked");
        store(out, dispersion_of(view))
    })
}

/// Chooses `k` in `k_min..=k_max` by consensus dispersion over `runs`
/// seeded runs. When `rho` is not NULL it receives one value per
/// candidate and must hold `k_max - k_min + 1` doubles.
///
/// # Safety
/// `u` and `g` must be live handles; `best_k` must be writable; `rho`
/// NULL or writable for the stated length.
#[no_mangle]
pub unsafe extern "C" fn mu_select_k(
    u: *const MuMatrix,
    g: *const MuGraph,
    k_min: usize,
    k_max: usize,
    runs: usize,
    eta: f64,
    lambda: f64,
    sigma: f64,
    seed: u64,
    best_k: *mut usize,
    rho: *mut f64,
) -> i32 {
    guard(|| {
        let cfg = method_config(eta, lambda, sigma);
        let sel = select_k(&borrow(u, "u")?.inner, &borrow(g, "graph")?.inner, (k_min, k_max), runs, &cfg, seed)?;
        if !rho.is_null() {
            for (i, e) in sel.report.rho.iter().enumerate() {
                *rho.add(i) = e.rho;
            }
        }
        store(best_k, sel.report.best_k)
    })
}
