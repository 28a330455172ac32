//! C ABI over the topoleak library.
//!
//! Objects are opaque handles created by `tl_*_new`/`tl_*_generate` style
//! calls and released with the matching `tl_*_free`. Every fallible call
//! returns a `TlStatus`; on failure `tl_last_error` describes the error for
//! the calling thread. Strings returned by the library must be released
//! with `tl_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use topoleak::adversary::{honest_partition, select_corrupt, Amount, CorruptionStrategy, HonestPartition};
use topoleak::attack::{ssim, GrayImage};
use topoleak::consensus::{metropolis_weights, run_consensus, ConsensusOptions, NodeVectors};
use topoleak::graph::{read_edge_list, write_edge_list, Graph, Topology};
use topoleak::privacy::{analytic_mi_asymptotic, analytic_mi_exact, ksg_mi};
use topoleak::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    GenerationFailed = 3,
    Parse = 4,
    ReconstructionInfeasible = 5,
    ConsensusNotConverged = 6,
    AttackFailed = 7,
    UndefinedScore = 8,
    Config = 9,
    Io = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlTopology {
    Poisson = 0,
    PowerLaw = 1,
}

/// Opaque graph handle.
pub struct TlGraph(Graph);

/// Opaque honest-partition handle.
pub struct TlPartition(HonestPartition);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TlStatus {
    match e {
        Error::InvalidParameter(_) => TlStatus::InvalidParameter,
        Error::GenerationFailed { .. } => TlStatus::GenerationFailed,
        Error::Parse { .. } => TlStatus::Parse,
        Error::ReconstructionInfeasible(_) => TlStatus::ReconstructionInfeasible,
        Error::ConsensusNotConverged { .. } => TlStatus::ConsensusNotConverged,
        Error::AttackFailed(_) => TlStatus::AttackFailed,
        Error::UndefinedScore(_) => TlStatus::UndefinedScore,
        Error::Config(_) => TlStatus::Config,
        Error::Io(_) => TlStatus::Io,
    }
}

struct Failure(TlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(TlStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TlStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TlStatus::Panic
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn graph_ref<'a>(g: *const TlGraph) -> Result<&'a Graph, Failure> {
    g.as_ref().map(|g| &g.0).ok_or_else(|| null("graph"))
}

unsafe fn partition_ref<'a>(p: *const TlPartition) -> Result<&'a HonestPartition, Failure> {
    p.as_ref().map(|p| &p.0).ok_or_else(|| null("partition"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Copies `src` into the caller's buffer, always reporting the full length.
unsafe fn copy_out(src: &[usize], buf: *mut usize, capacity: usize, out_len: *mut usize) -> Result<(), Failure> {
    *out_ref(out_len, "out_len")? = src.len();
    if src.len() > capacity {
        return Err(Failure(
            TlStatus::BufferTooSmall,
            format!("need {} slots, buffer has {capacity}", src.len()),
        ));
    }
    if !src.is_empty() {
        if buf.is_null() {
            return Err(null("buffer"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    }
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Generates a random graph with exactly `m` edges. `gamma` is ignored for
/// Poisson graphs. With `connected`, draws are repeated until connected.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tl_graph_generate(
    topology: TlTopology,
    n: usize,
    m: usize,
    gamma: f64,
    seed: u64,
    connected: bool,
    out: *mut *mut TlGraph,
) -> TlStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let t = match topology {
            TlTopology::Poisson => Topology::Poisson,
            TlTopology::PowerLaw => Topology::PowerLaw { gamma },
        };
        let g = if connected {
            t.generate_connected(n, m, seed)?
        } else {
            t.generate(n, m, seed)?
        };
        *out = Box::into_raw(Box::new(TlGraph(g)));
        Ok(())
    })
}

/// Builds a graph from `n` nodes and `edge_count` pairs laid out as
/// `[i0, j0, i1, j1, ...]`.
///
/// # Safety
/// `edges` must point to `2 * edge_count` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tl_graph_from_edges(
    n: usize,
    edges: *const usize,
    edge_count: usize,
    out: *mut *mut TlGraph,
) -> TlStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let flat = slice(edges, 2 * edge_count, "edges")?;
        let g = Graph::from_edges(n, flat.chunks_exact(2).map(|p| (p[0], p[1])))?;
        *out = Box::into_raw(Box::new(TlGraph(g)));
        Ok(())
    })
}

/// Parses the edge-list text format.
///
/// # Safety
/// `text` must be a nul-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tl_graph_read_edge_list(text: *const c_char, out: *mut *mut TlGraph) -> TlStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if text.is_null() {
            return Err(null("text"));
        }
        let text = CStr::from_ptr(text)
            .to_str()
            .map_err(|e| Failure(TlStatus::Parse, format!("edge list is not UTF-8: {e}")))?;
        *out = Box::into_raw(Box::new(TlGraph(read_edge_list(text)?)));
        Ok(())
    })
}

/// Writes the edge-list text format. Free the result with `tl_string_free`.
///
/// # Safety
/// `g` must be a live graph handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tl_graph_write_edge_list(g: *const TlGraph, out: *mut *mut c_char) -> TlStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let text = write_edge_list(graph_ref(g)?);
        *out = CString::new(text).expect("edge list has no nul bytes").into_raw();
        Ok(())
    })
}

/// # Safety
/// `g` must be a live graph handle or null.
#[no_mangle]
pub unsafe extern "C" fn tl_graph_node_count(g: *const TlGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.node_count())
}

/// # Safety
/// `g` must be a live graph handle or null.
#[no_mangle]
pub unsafe extern "C" fn tl_graph_edge_count(g: *const TlGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.edge_count())
}

/// # Safety
/// `g` must be a live graph handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tl_graph_degree(g: *const TlGraph, node: usize, out: *mut usize) -> TlStatus {
    guard(|| {
        let g = graph_ref(g)?;
        if node >= g.node_count() {
            return Err(Failure(
                TlStatus::InvalidParameter,
                format!("node {node} out of range for n={}", g.node_count()),
            ));
        }
        *out_ref(out, "out")? = g.degree(node);
        Ok(())
    })
}

/// # Safety
/// `g` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn tl_graph_free(g: *mut TlGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Degree-targeted corrupt set for a fraction of the nodes. Writes the ids
/// to `buf` and the count to `out_len`; if `capacity` is too small, only
/// `out_len` is set and `BufferTooSmall` is returned.
///
/// # Safety
/// `g` must be a live graph handle; `buf` must hold `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn tl_select_corrupt(
    g: *const TlGraph,
    fraction: f64,
    adaptive: bool,
    buf: *mut usize,
    capacity: usize,
    out_len: *mut usize,
) -> TlStatus {
    guard(|| {
        let g = graph_ref(g)?;
        let strategy = CorruptionStrategy::DegreeTargeted {
            amount: Amount::Fraction(fraction),
            adaptive,
        };
        let ids = select_corrupt(g, &strategy, 0)?;
        copy_out(&ids, buf, capacity, out_len)
    })
}

/// Honest components left after removing the `corrupt_len` corrupt nodes.
///
/// # Safety
/// `g` must be a live graph handle, `corrupt` must hold `corrupt_len`
/// values, and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tl_partition_new(
    g: *const TlGraph,
    corrupt: *const usize,
    corrupt_len: usize,
    out: *mut *mut TlPartition,
) -> TlStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let p = honest_partition(graph_ref(g)?, slice(corrupt, corrupt_len, "corrupt")?)?;
        *out = Box::into_raw(Box::new(TlPartition(p)));
        Ok(())
    })
}

/// # Safety
/// `p` must be a live partition handle or null.
#[no_mangle]
pub unsafe extern "C" fn tl_partition_component_count(p: *const TlPartition) -> usize {
    p.as_ref().map_or(0, |p| p.0.count())
}

/// Nodes of component `index`, ascending. Buffer protocol as in
/// `tl_select_corrupt`.
///
/// # Safety
/// `p` must be a live partition handle; `buf` must hold `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn tl_partition_component(
    p: *const TlPartition,
    index: usize,
    buf: *mut usize,
    capacity: usize,
    out_len: *mut usize,
) -> TlStatus {
    guard(|| {
        let p = partition_ref(p)?;
        let comp = p.components.get(index).ok_or_else(|| {
            Failure(
                TlStatus::InvalidParameter,
                format!("component {index} out of range ({} components)", p.count()),
            )
        })?;
        copy_out(comp, buf, capacity, out_len)
    })
}

/// # Safety
/// `p` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn tl_partition_free(p: *mut TlPartition) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Exact leakage in nats for an honest component of size `m`; positive
/// infinity for `m = 1`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tl_mi_exact(m: usize, out: *mut f64) -> TlStatus {
    guard(|| {
        *out_ref(out, "out")? = analytic_mi_exact(m)?.nats();
        Ok(())
    })
}

/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tl_mi_asymptotic(m: usize, out: *mut f64) -> TlStatus {
    guard(|| {
        *out_ref(out, "out")? = analytic_mi_asymptotic(m)?;
        Ok(())
    })
}

/// KSG mutual-information estimate in nats between paired samples.
///
/// # Safety
/// `x` and `y` must each hold `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tl_ksg_mi(x: *const f64, y: *const f64, len: usize, k: usize, out: *mut f64) -> TlStatus {
    guard(|| {
        let est = ksg_mi(slice(x, len, "x")?, slice(y, len, "y")?, k)?;
        *out_ref(out, "out")? = est.value;
        Ok(())
    })
}

/// Global SSIM of two row-major grayscale images with values in [0, 1].
///
/// # Safety
/// `a` and `b` must each hold `width * height` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tl_ssim(a: *const f64, b: *const f64, width: usize, height: usize, out: *mut f64) -> TlStatus {
    guard(|| {
        let len = width
            .checked_mul(height)
            .ok_or_else(|| Failure(TlStatus::InvalidParameter, "image size overflows".into()))?;
        let a = GrayImage::new(width, height, slice(a, len, "a")?.to_vec())?;
        let b = GrayImage::new(width, height, slice(b, len, "b")?.to_vec())?;
        *out_ref(out, "out")? = ssim(&a, &b)?;
        Ok(())
    })
}

/// Average consensus with Metropolis weights on `dim`-dimensional node
/// values stored row-major in `values` (`n * dim` entries), updated in
/// place. Writes the rounds used to `out_rounds`.
///
/// # Safety
/// `g` must be a live graph handle, `values` must hold `n * dim` values and
/// `out_rounds` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tl_consensus_average(
    g: *const TlGraph,
    values: *mut f64,
    dim: usize,
    tol: f64,
    max_rounds: usize,
    out_rounds: *mut usize,
) -> TlStatus {
    guard(|| {
        let g = graph_ref(g)?;
        let rounds = out_ref(out_rounds, "out_rounds")?;
        let n = g.node_count();
        if dim == 0 || values.is_null() {
            return Err(Failure(TlStatus::InvalidParameter, "values must be non-empty".into()));
        }
        let flat = std::slice::from_raw_parts_mut(values, n * dim);
        let rows: Vec<Vec<f64>> = flat.chunks_exact(dim).map(<[f64]>::to_vec).collect();
        let a = metropolis_weights(g)?;
        let opts = ConsensusOptions {
            tol,
            max_rounds,
            ..ConsensusOptions::default()
        };
        let out = run_consensus(g, &a, &NodeVectors::new(&rows)?, &opts)?;
        *rounds = out.rounds_used();
        if !out.converged {
            return Err(Error::ConsensusNotConverged { rounds: *rounds }.into());
        }
        for (dst, row) in flat.chunks_exact_mut(dim).zip(out.state.x.to_rows()) {
            dst.copy_from_slice(&row);
        }
        Ok(())
    })
}
