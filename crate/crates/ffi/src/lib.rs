//! C bindings for `multihop-topo`.
//!
//! Every fallible call returns an [`MtStatus`]. On failure the message is kept
//! per thread and can be read with [`mt_last_error`]. Handles are opaque and
//! must be released with their matching `_free` function; strings returned
//! through out-parameters are released with [`mt_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use multihop_topo::degree::{largest_component_selection, select_constant_degree};
use multihop_topo::graph::{BetaGrid, GraphFamily};
use multihop_topo::tree::{monitored_bfs, reduce_tree, revalidate, sweep_trees, KappaSpec};
use multihop_topo::{DegreeSelection, LayeredTree, LossMatrix, NodeId};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Solver = 4,
    NotFound = 5,
    BufferTooSmall = 6,
    Panic = 99,
}

/// A loss matrix.
pub struct MtMatrix(LossMatrix);

/// A layered tree.
pub struct MtTree(LayeredTree);

/// A constant-degree selection.
pub struct MtSelection(DegreeSelection);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(MtStatus, String);

impl Failure {
    fn new(status: MtStatus, err: impl ToString) -> Self {
        Failure(status, err.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MtStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MtStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(
            MtStatus::NullPointer,
            format!("{what} is null"),
        ));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(MtStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(MtStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(MtStatus::NullPointer, format!("{what} is null")))
}

fn kappa_arg(s: &str) -> Result<KappaSpec, Failure> {
    s.parse()
        .map_err(|e| Failure::new(MtStatus::InvalidArgument, e))
}

fn grid_arg(min: f64, max: f64, step: f64) -> Result<BetaGrid, Failure> {
    BetaGrid::new(min, max, step).map_err(|e| Failure::new(MtStatus::InvalidArgument, e))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("nul bytes removed")
        .into_raw()
}

/// Copies `nodes` into `buf` (capacity `cap`) and stores the full count in
/// `len`. Fails with `BufferTooSmall` if `cap` is short; `len` is still set.
unsafe fn copy_nodes(
    nodes: impl ExactSizeIterator<Item = NodeId>,
    buf: *mut u32,
    cap: usize,
    len: *mut usize,
) -> Result<(), Failure> {
    let n = nodes.len();
    *out_arg(len, "len")? = n;
    if n > cap {
        return Err(Failure::new(
            MtStatus::BufferTooSmall,
            format!("need room for {n} ids, got {cap}"),
        ));
    }
    if n > 0 && buf.is_null() {
        return Err(Failure::new(MtStatus::NullPointer, "buf is null"));
    }
    for (i, node) in nodes.enumerate() {
        *buf.add(i) = node.0;
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a loss matrix from its JSON form.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mt_matrix_from_json(
    json: *const c_char,
    out: *mut *mut MtMatrix,
) -> MtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(json, "json")?;
        let m = LossMatrix::from_json(text).map_err(|e| Failure::new(MtStatus::Parse, e))?;
        *out = Box::into_raw(Box::new(MtMatrix(m)));
        Ok(())
    })
}

/// Serializes a matrix to JSON; release the result with [`mt_string_free`].
///
/// # Safety
/// `matrix` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mt_matrix_to_json(
    matrix: *const MtMatrix,
    out: *mut *mut c_char,
) -> MtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = ref_arg(matrix, "matrix")?;
        *out = into_c_string(m.0.to_json());
        Ok(())
    })
}

/// Number of nodes in the matrix, 0 for a null handle.
///
/// # Safety
/// `matrix` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mt_matrix_node_count(matrix: *const MtMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.0.nodes().len())
}

/// Mean loss from `tx` to `rx` in dB.
///
/// # Safety
/// `matrix` must be a live handle; `loss` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mt_matrix_loss(
    matrix: *const MtMatrix,
    tx: u32,
    rx: u32,
    loss: *mut f64,
) -> MtStatus {
    guard(|| {
        let loss = out_arg(loss, "loss")?;
        let m = ref_arg(matrix, "matrix")?;
        match m.0.loss(NodeId(tx), NodeId(rx)) {
            Some(l) => {
                *loss = l;
                Ok(())
            }
            None => Err(Failure::new(
                MtStatus::NotFound,
                format!("no entry {tx} -> {rx}"),
            )),
        }
    })
}

/// # Safety
/// `matrix` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mt_matrix_free(matrix: *mut MtMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// Best constant-degree selection over the sweep `beta_min..=beta_max`:
/// the largest connected c-regular induced component.
///
/// # Safety
/// `matrix` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mt_degree_select(
    matrix: *const MtMatrix,
    c: usize,
    beta_min: f64,
    beta_max: f64,
    beta_step: f64,
    out: *mut *mut MtSelection,
) -> MtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = ref_arg(matrix, "matrix")?;
        let grid = grid_arg(beta_min, beta_max, beta_step)?;
        let family =
            GraphFamily::new(&m.0, grid).map_err(|e| Failure::new(MtStatus::InvalidArgument, e))?;
        let all = select_constant_degree(&m.0, c, &family)
            .map_err(|e| Failure::new(MtStatus::Solver, e))?;
        let best =
            largest_component_selection(&all).map_err(|e| Failure::new(MtStatus::NotFound, e))?;
        *out = Box::into_raw(Box::new(MtSelection(best)));
        Ok(())
    })
}

/// # Safety
/// `sel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mt_selection_beta(sel: *const MtSelection) -> f64 {
    sel.as_ref().map_or(f64::NAN, |s| s.0.beta)
}

/// # Safety
/// `sel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mt_selection_size(sel: *const MtSelection) -> usize {
    sel.as_ref().map_or(0, |s| s.0.selected.len())
}

/// Copies the selected node ids, ascending, into `buf`.
///
/// # Safety
/// `sel` must be a live handle; `buf` must hold `cap` ids; `len` writable.
#[no_mangle]
pub unsafe extern "C" fn mt_selection_nodes(
    sel: *const MtSelection,
    buf: *mut u32,
    cap: usize,
    len: *mut usize,
) -> MtStatus {
    guard(|| {
        let s = ref_arg(sel, "selection")?;
        copy_nodes(s.0.selected.iter().copied(), buf, cap, len)
    })
}

/// # Safety
/// `sel` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mt_selection_free(sel: *mut MtSelection) {
    if !sel.is_null() {
        drop(Box::from_raw(sel));
    }
}

/// Grows one layered tree from `root` at budget `beta`.
///
/// # Safety
/// `matrix` must be a live handle; `kappa` a nul-terminated string such as
/// `"linear"` or `"const:2"`; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mt_tree_build(
    matrix: *const MtMatrix,
    root: u32,
    beta: f64,
    margin: f64,
    kappa: *const c_char,
    out: *mut *mut MtTree,
) -> MtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = ref_arg(matrix, "matrix")?;
        let kappa = kappa_arg(str_arg(kappa, "kappa")?)?;
        let tree = monitored_bfs(&m.0, NodeId(root), beta, margin, &kappa)
            .map_err(|e| Failure::new(MtStatus::InvalidArgument, e))?;
        *out = Box::into_raw(Box::new(MtTree(tree)));
        Ok(())
    })
}

/// Deepest tree over all roots and the sweep `beta_min..=beta_max`.
///
/// # Safety
/// As for [`mt_tree_build`].
#[no_mangle]
pub unsafe extern "C" fn mt_tree_sweep_best(
    matrix: *const MtMatrix,
    beta_min: f64,
    beta_max: f64,
    beta_step: f64,
    margin: f64,
    kappa: *const c_char,
    out: *mut *mut MtTree,
) -> MtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = ref_arg(matrix, "matrix")?;
        let kappa = kappa_arg(str_arg(kappa, "kappa")?)?;
        let grid = grid_arg(beta_min, beta_max, beta_step)?;
        let family =
            GraphFamily::new(&m.0, grid).map_err(|e| Failure::new(MtStatus::InvalidArgument, e))?;
        let trees = sweep_trees(&m.0, &kappa, margin, &family)
            .map_err(|e| Failure::new(MtStatus::InvalidArgument, e))?;
        let best = trees
            .into_iter()
            .next()
            .ok_or_else(|| Failure::new(MtStatus::NotFound, "matrix has no nodes"))?;
        *out = Box::into_raw(Box::new(MtTree(best)));
        Ok(())
    })
}

/// Minimal-node version of `tree`, written to `out` as a new handle.
///
/// # Safety
/// `tree` and `matrix` must be live handles; `kappa` nul-terminated; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn mt_tree_reduce(
    tree: *const MtTree,
    matrix: *const MtMatrix,
    kappa: *const c_char,
    out: *mut *mut MtTree,
) -> MtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let t = ref_arg(tree, "tree")?;
        let m = ref_arg(matrix, "matrix")?;
        let kappa = kappa_arg(str_arg(kappa, "kappa")?)?;
        let reduced =
            reduce_tree(&t.0, &m.0, &kappa).map_err(|e| Failure::new(MtStatus::Solver, e))?;
        *out = Box::into_raw(Box::new(MtTree(reduced)));
        Ok(())
    })
}

/// Checks the tree against `fresh`; `passed` is set to 1 or 0. The violation
/// list is available through [`mt_last_error`] when the check fails.
///
/// # Safety
/// `tree` and `fresh` must be live handles; `kappa` nul-terminated; `passed`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn mt_tree_verify(
    tree: *const MtTree,
    fresh: *const MtMatrix,
    kappa: *const c_char,
    passed: *mut i32,
) -> MtStatus {
    guard(|| {
        let passed = out_arg(passed, "passed")?;
        let t = ref_arg(tree, "tree")?;
        let m = ref_arg(fresh, "fresh")?;
        let kappa = kappa_arg(str_arg(kappa, "kappa")?)?;
        let report =
            revalidate(&t.0, &m.0, &kappa).map_err(|e| Failure::new(MtStatus::NotFound, e))?;
        *passed = i32::from(report.passed());
        if !report.passed() {
            set_error(report.to_string());
        }
        Ok(())
    })
}

/// # Safety
/// `tree` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mt_tree_depth(tree: *const MtTree) -> usize {
    tree.as_ref().map_or(0, |t| t.0.depth())
}

/// # Safety
/// `tree` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mt_tree_node_count(tree: *const MtTree) -> usize {
    tree.as_ref().map_or(0, |t| t.0.node_count())
}

/// # Safety
/// `tree` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mt_tree_root(tree: *const MtTree) -> u32 {
    tree.as_ref().map_or(0, |t| t.0.root.0)
}

/// # Safety
/// `tree` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mt_tree_beta(tree: *const MtTree) -> f64 {
    tree.as_ref().map_or(f64::NAN, |t| t.0.beta)
}

/// Copies the ids of one level, ascending, into `buf`.
///
/// # Safety
/// `tree` must be a live handle; `buf` must hold `cap` ids; `len` writable.
#[no_mangle]
pub unsafe extern "C" fn mt_tree_level(
    tree: *const MtTree,
    level: usize,
    buf: *mut u32,
    cap: usize,
    len: *mut usize,
) -> MtStatus {
    guard(|| {
        let t = ref_arg(tree, "tree")?;
        let nodes = t.0.levels.get(level).ok_or_else(|| {
            Failure::new(MtStatus::NotFound, format!("tree has no level {level}"))
        })?;
        copy_nodes(nodes.iter().copied(), buf, cap, len)
    })
}

/// # Safety
/// `tree` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mt_tree_free(tree: *mut MtTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}
