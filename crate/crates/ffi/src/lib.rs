//! C interface to the unitseg decoder.
//!
//! Objects are opaque handles created and destroyed through this API. Every
//! fallible call returns a [`UsStatus`]; on failure a description is kept per
//! thread and can be read with [`us_last_error`]. Strings handed out by the
//! library must be released with [`us_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use unitseg::datamodel::FeatureSequence;
use unitseg::decoder::{decode, DecodeReport, DecodeResult};
use unitseg::grammar::{compose, ComposeOptions, DecodingGraph};
use unitseg::pipeline::ModelBundle;
use unitseg::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UsStatus {
    Ok = 0,
    /// A null pointer, bad UTF-8 or out-of-range argument.
    InvalidArgument = 1,
    Io = 2,
    /// Malformed file contents.
    Parse = 3,
    /// Inconsistent data, such as a dimension mismatch.
    Data = 4,
    /// No path through the model explains the input.
    NoPath = 5,
    /// Beam pruning removed every path.
    BeamPruned = 6,
    /// A Rust panic was caught at the boundary.
    Internal = 7,
}

/// A trained model bundle with its compiled decoding graphs.
pub struct UsModel {
    bundle: ModelBundle,
    graph: DecodingGraph,
    prior_graph: DecodingGraph,
}

/// A feature sequence, frames by dimensions.
pub struct UsSequence(FeatureSequence);

/// The outcome of one decode.
pub struct UsResult {
    result: DecodeResult,
    report: DecodeReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> UsStatus {
    match err {
        Error::Io { .. } => UsStatus::Io,
        Error::Parse { .. } | Error::Json(_) | Error::Manifest(_) | Error::Grammar(_) => UsStatus::Parse,
        Error::NoPath(_) => UsStatus::NoPath,
        Error::BeamPruned { .. } => UsStatus::BeamPruned,
        Error::Config(_) => UsStatus::InvalidArgument,
        _ => UsStatus::Data,
    }
}

struct Fail(UsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Fail {
    Fail(UsStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> UsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            UsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal error".into());
            UsStatus::Internal
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    // SAFETY: the caller passes either null or a live handle from this library.
    unsafe { p.as_ref() }.ok_or_else(|| invalid(&format!("{what} is null")))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(invalid("output pointer is null"));
    }
    // SAFETY: checked non-null; the caller provides writable storage.
    unsafe { out.write(value) };
    Ok(())
}

fn into_c_string(s: &str) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(UsStatus::Data, "string contains a NUL byte".into()))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn us_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn us_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn us_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: produced by CString::into_raw in this library.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Loads a model bundle directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn us_model_load(dir: *const c_char, out: *mut *mut UsModel) -> UsStatus {
    guard(|| {
        if dir.is_null() {
            return Err(invalid("directory is null"));
        }
        // SAFETY: checked non-null, NUL-terminated per contract.
        let dir = unsafe { CStr::from_ptr(dir) }.to_str().map_err(|_| invalid("directory is not UTF-8"))?;
        let bundle = ModelBundle::load(dir)?;
        let graph = compose(&bundle.grammar, bundle.hmms.clone(), ComposeOptions { use_prior: false })?;
        let prior_graph = compose(&bundle.grammar, bundle.hmms.clone(), ComposeOptions { use_prior: true })?;
        let model = Box::new(UsModel { bundle, graph, prior_graph });
        // SAFETY: forwarded caller contract.
        unsafe { put(out, Box::into_raw(model)) }
    })
}

/// # Safety
/// `model` must be null or a handle from [`us_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn us_model_free(model: *mut UsModel) {
    if !model.is_null() {
        // SAFETY: produced by Box::into_raw in us_model_load.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Feature dimension the model expects.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn us_model_dim(model: *const UsModel, out: *mut usize) -> UsStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let m = unsafe { borrow(model, "model") }?;
        unsafe { put(out, m.bundle.hmms.dim().unwrap_or(0)) }
    })
}

/// Number of units in the model's vocabulary.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn us_model_num_units(model: *const UsModel, out: *mut usize) -> UsStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let m = unsafe { borrow(model, "model") }?;
        unsafe { put(out, m.bundle.lexicon().len()) }
    })
}

/// Name of unit `id`; free the result with [`us_string_free`].
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn us_model_unit_name(model: *const UsModel, id: usize, out: *mut *mut c_char) -> UsStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let m = unsafe { borrow(model, "model") }?;
        let lex = m.bundle.lexicon();
        if id >= lex.len() {
            return Err(invalid(&format!("unit id {id} out of range")));
        }
        let s = into_c_string(lex.name(id))?;
        unsafe { put(out, s) }
    })
}

/// Copies `frames * dim` row-major values into a new sequence.
///
/// # Safety
/// `data` must point to `frames * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn us_sequence_new(
    data: *const f64,
    frames: usize,
    dim: usize,
    out: *mut *mut UsSequence,
) -> UsStatus {
    guard(|| {
        if data.is_null() {
            return Err(invalid("data is null"));
        }
        let len = frames.checked_mul(dim).ok_or_else(|| invalid("size overflow"))?;
        // SAFETY: caller guarantees `len` readable doubles.
        let flat = unsafe { std::slice::from_raw_parts(data, len) }.to_vec();
        let seq = FeatureSequence::from_flat("ffi", dim, flat, unitseg::datamodel::DEFAULT_FRAME_RATE)?;
        unsafe { put(out, Box::into_raw(Box::new(UsSequence(seq)))) }
    })
}

/// # Safety
/// `seq` must be null or a handle from [`us_sequence_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn us_sequence_free(seq: *mut UsSequence) {
    if !seq.is_null() {
        // SAFETY: produced by Box::into_raw in us_sequence_new.
        drop(unsafe { Box::from_raw(seq) });
    }
}

/// Decodes `seq` with the model's grammar. `beam <= 0` decodes exactly;
/// `use_prior != 0` adds the unit prior on every unit entry.
///
/// # Safety
/// `model` and `seq` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn us_decode(
    model: *const UsModel,
    seq: *const UsSequence,
    beam: f64,
    use_prior: i32,
    out: *mut *mut UsResult,
) -> UsStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let m = unsafe { borrow(model, "model") }?;
        let s = unsafe { borrow(seq, "sequence") }?;
        if beam.is_nan() {
            return Err(invalid("beam is NaN"));
        }
        let graph = if use_prior != 0 { &m.prior_graph } else { &m.graph };
        let result = decode(graph, &s.0, (beam > 0.0).then_some(beam))?;
        let report = DecodeReport::new("", &result, m.bundle.lexicon());
        unsafe { put(out, Box::into_raw(Box::new(UsResult { result, report }))) }
    })
}

/// # Safety
/// `result` must be null or a handle from [`us_decode`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn us_result_free(result: *mut UsResult) {
    if !result.is_null() {
        // SAFETY: produced by Box::into_raw in us_decode.
        drop(unsafe { Box::from_raw(result) });
    }
}

/// Log-probability of the best path.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn us_result_log_prob(result: *const UsResult, out: *mut f64) -> UsStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let r = unsafe { borrow(result, "result") }?;
        unsafe { put(out, r.result.log_prob) }
    })
}

/// Recognised activity; writes null when the graph carries none.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn us_result_activity(result: *const UsResult, out: *mut *mut c_char) -> UsStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let r = unsafe { borrow(result, "result") }?;
        let s = match &r.result.activity {
            Some(a) => into_c_string(a)?,
            None => ptr::null_mut(),
        };
        unsafe { put(out, s) }
    })
}

/// Number of unit segments.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn us_result_num_segments(result: *const UsResult, out: *mut usize) -> UsStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let r = unsafe { borrow(result, "result") }?;
        unsafe { put(out, r.result.segmentation.len()) }
    })
}

/// Segment `i`: unit id and inclusive frame range.
///
/// # Safety
/// `result` must be a live handle; the output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn us_result_segment(
    result: *const UsResult,
    i: usize,
    unit: *mut usize,
    start: *mut usize,
    end: *mut usize,
) -> UsStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let r = unsafe { borrow(result, "result") }?;
        let seg = r
            .result
            .segmentation
            .segments()
            .get(i)
            .ok_or_else(|| invalid(&format!("segment {i} out of range")))?;
        if unit.is_null() || start.is_null() || end.is_null() {
            return Err(invalid("output pointer is null"));
        }
        unsafe {
            put(unit, seg.unit)?;
            put(start, seg.start)?;
            put(end, seg.end)
        }
    })
}

/// The result as JSON; free with [`us_string_free`].
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn us_result_to_json(result: *const UsResult, out: *mut *mut c_char) -> UsStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let r = unsafe { borrow(result, "result") }?;
        let json = serde_json::to_string(&r.report).map_err(Error::from)?;
        let s = into_c_string(&json)?;
        unsafe { put(out, s) }
    })
}
