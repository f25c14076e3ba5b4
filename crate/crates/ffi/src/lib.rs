//! C ABI over the verifier.
//!
//! Models, graphs and perturbation specs are parsed from the JSON
//! interchange formats into opaque handles owned by the caller and released
//! with the matching `_free` function. Every fallible call returns a
//! [`GnnvStatus`]; on failure, [`gnnv_last_error`] describes the problem
//! until the next failing call on the same thread. Strings returned through
//! out-parameters are released with [`gnnv_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::time::Duration;

use gnnverify::bounds::BoundMethod;
use gnnverify::encoder::ObjectiveMode;
use gnnverify::graph::{AttributedGraph, PerturbationSpec};
use gnnverify::io::{graph_from_json, model_from_json, spec_from_json};
use gnnverify::model::{forward, predict, GnnModel};
use gnnverify::verifier::{verify_node, Mode, VerifyOptions};
use gnnverify::Error;
use serde::Deserialize;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnnvStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Malformed or inconsistent input.
    InputError = 3,
    InternalError = 4,
    BufferTooSmall = 5,
}

pub struct GnnvModel(GnnModel);

pub struct GnnvGraph(AttributedGraph);

pub struct GnnvSpec(PerturbationSpec);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: GnnvStatus, msg: impl Into<String>) -> GnnvStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> GnnvStatus {
    let status = if e.is_input_error() {
        GnnvStatus::InputError
    } else {
        GnnvStatus::InternalError
    };
    fail(status, e.to_string())
}

fn guarded(body: impl FnOnce() -> GnnvStatus) -> GnnvStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(s) => s,
        Err(_) => fail(GnnvStatus::InternalError, "panic inside gnnverify"),
    }
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, GnnvStatus> {
    if s.is_null() {
        return Err(fail(GnnvStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(GnnvStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, GnnvStatus> {
    p.as_ref()
        .ok_or_else(|| fail(GnnvStatus::NullArgument, format!("{what} is null")))
}

fn into_c_string(s: String) -> Result<*mut c_char, GnnvStatus> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| fail(GnnvStatus::InternalError, "output contains a NUL byte"))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message for the last failing call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gnnv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gnnv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gnnv_model_from_json(json: *const c_char, out: *mut *mut GnnvModel) -> GnnvStatus {
    guarded(|| {
        if out.is_null() {
            return fail(GnnvStatus::NullArgument, "out is null");
        }
        let json = tri!(text(json, "json"));
        match model_from_json(json) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(GnnvModel(m)));
                GnnvStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `model` must come from [`gnnv_model_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gnnv_model_free(model: *mut GnnvModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of output classes, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gnnv_model_num_classes(model: *const GnnvModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.num_classes())
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gnnv_graph_from_json(json: *const c_char, out: *mut *mut GnnvGraph) -> GnnvStatus {
    guarded(|| {
        if out.is_null() {
            return fail(GnnvStatus::NullArgument, "out is null");
        }
        let json = tri!(text(json, "json"));
        match graph_from_json(json) {
            Ok(g) => {
                *out = Box::into_raw(Box::new(GnnvGraph(g)));
                GnnvStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `graph` must come from [`gnnv_graph_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gnnv_graph_free(graph: *mut GnnvGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Number of nodes, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gnnv_graph_num_nodes(graph: *const GnnvGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.num_nodes())
}

/// Parses a perturbation spec against `graph`.
///
/// # Safety
/// `graph` must be a live handle, `json` a NUL-terminated string and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gnnv_spec_from_json(
    graph: *const GnnvGraph,
    json: *const c_char,
    out: *mut *mut GnnvSpec,
) -> GnnvStatus {
    guarded(|| {
        if out.is_null() {
            return fail(GnnvStatus::NullArgument, "out is null");
        }
        let g = tri!(handle(graph, "graph"));
        let json = tri!(text(json, "json"));
        match spec_from_json(json, &g.0) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(GnnvSpec(s)));
                GnnvStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `spec` must come from [`gnnv_spec_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gnnv_spec_free(spec: *mut GnnvSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Predicted class of `node`.
///
/// # Safety
/// Handles must be live and `out_class` valid.
#[no_mangle]
pub unsafe extern "C" fn gnnv_predict(
    model: *const GnnvModel,
    graph: *const GnnvGraph,
    node: usize,
    out_class: *mut usize,
) -> GnnvStatus {
    guarded(|| {
        let m = tri!(handle(model, "model"));
        let g = tri!(handle(graph, "graph"));
        if out_class.is_null() {
            return fail(GnnvStatus::NullArgument, "out_class is null");
        }
        match predict(&m.0, &g.0, node) {
            Ok(c) => {
                *out_class = c;
                GnnvStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Writes the logits of `node` into `out[0..len]`. `len` must be at least
/// the number of classes; otherwise `BUFFER_TOO_SMALL` is returned and
/// nothing is written.
///
/// # Safety
/// Handles must be live and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gnnv_forward(
    model: *const GnnvModel,
    graph: *const GnnvGraph,
    node: usize,
    out: *mut f64,
    len: usize,
) -> GnnvStatus {
    guarded(|| {
        let m = tri!(handle(model, "model"));
        let g = tri!(handle(graph, "graph"));
        if out.is_null() {
            return fail(GnnvStatus::NullArgument, "out is null");
        }
        let logits = match forward(&m.0, &g.0, node) {
            Ok(l) => l.values,
            Err(e) => return from_error(e),
        };
        if len < logits.len() {
            return fail(
                GnnvStatus::BufferTooSmall,
                format!("need {} entries, got {len}", logits.len()),
            );
        }
        ptr::copy_nonoverlapping(logits.as_ptr(), out, logits.len());
        GnnvStatus::Ok
    })
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct FfiOptions {
    mode: Option<Mode>,
    objective: Option<ObjectiveMode>,
    bounds: Option<BoundMethod>,
    time_limit_s: Option<f64>,
    node_limit: Option<u64>,
}

impl FfiOptions {
    fn into_options(self) -> Result<VerifyOptions, GnnvStatus> {
        let mut o = VerifyOptions::default();
        if let Some(m) = self.mode {
            o.mode = m;
        }
        if let Some(obj) = self.objective {
            o.objective = obj;
        }
        if let Some(b) = self.bounds {
            o.bound_method = b;
        }
        if let Some(t) = self.time_limit_s {
            if !(t.is_finite() && t >= 0.0) {
                return Err(fail(GnnvStatus::InputError, format!("bad time limit {t}")));
            }
            o.time_limit = Some(Duration::from_secs_f64(t));
        }
        o.solver.node_limit = self.node_limit;
        Ok(o)
    }
}

/// Verifies `node` and returns the verdict as JSON in `out_json`.
///
/// `options_json` may be null for defaults, or an object with any of
/// `mode` (`"incremental"`, `"monolithic"`), `objective` (`"full"`,
/// `"pairwise-next"`), `bounds` (`"tightened"`, `"plain"`),
/// `time_limit_s` and `node_limit`.
///
/// # Safety
/// Handles must be live, `options_json` null or NUL-terminated, and
/// `out_json` valid. The returned string is freed with
/// [`gnnv_string_free`].
#[no_mangle]
pub unsafe extern "C" fn gnnv_verify(
    model: *const GnnvModel,
    graph: *const GnnvGraph,
    spec: *const GnnvSpec,
    node: usize,
    options_json: *const c_char,
    out_json: *mut *mut c_char,
) -> GnnvStatus {
    guarded(|| {
        let m = tri!(handle(model, "model"));
        let g = tri!(handle(graph, "graph"));
        let s = tri!(handle(spec, "spec"));
        if out_json.is_null() {
            return fail(GnnvStatus::NullArgument, "out_json is null");
        }
        let parsed: FfiOptions = if options_json.is_null() {
            FfiOptions::default()
        } else {
            let t = tri!(text(options_json, "options_json"));
            tri!(serde_json::from_str(t).map_err(|e| fail(GnnvStatus::InputError, format!("options: {e}"))))
        };
        let options = tri!(parsed.into_options());
        let verdict = match verify_node(&m.0, &g.0, &s.0, node, &options) {
            Ok(v) => v,
            Err(e) => return from_error(e),
        };
        let json = tri!(serde_json::to_string(&verdict).map_err(|e| fail(GnnvStatus::InternalError, e.to_string())));
        *out_json = tri!(into_c_string(json));
        GnnvStatus::Ok
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn gnnv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
