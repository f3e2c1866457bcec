//! C ABI over `ctxknow`.
//!
//! Conventions:
//! * every fallible function returns a [`CtxknowStatus`]; on failure the
//!   message is available from [`ctxknow_last_error`] on the same thread;
//! * strings returned through out-pointers are owned by the caller and must
//!   be released with [`ctxknow_string_free`];
//! * models are opaque handles released with [`ctxknow_model_free`];
//! * panics never cross the boundary; they surface as `CTXKNOW_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ctxknow::error::Error;
use ctxknow::extract::{extract_scenes, ExtractConfig};
use ctxknow::instances::McInstance;
use ctxknow::parser::{parse_script, ParserConfig, RawScript};
use ctxknow::reader::{argmax, option_probs, ReaderParams};
use ctxknow::stoplist::Stoplist;
use ctxknow::train::mix_soft_label;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtxknowStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Json = 4,
    InvalidArgument = 5,
    NonFinite = 6,
    BufferTooSmall = 7,
    Panic = 8,
    Internal = 9,
}

/// Trained reader loaded from a checkpoint.
pub struct CtxknowModel {
    params: ReaderParams,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(CtxknowStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Decode { .. } => CtxknowStatus::InvalidUtf8,
            Error::Io { .. } => CtxknowStatus::Io,
            Error::Json { .. } | Error::Serialize(_) => CtxknowStatus::Json,
            Error::NonFinite { .. } => CtxknowStatus::NonFinite,
            Error::InvalidArgument(_) | Error::EmptyDataset(_) | Error::MissingLabel(_) | Error::UnknownPreset(_) => {
                CtxknowStatus::InvalidArgument
            }
        };
        Failure(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(CtxknowStatus::Json, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CtxknowStatus::NullArgument, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status plus last-error text.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> CtxknowStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CtxknowStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            CtxknowStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or point to a NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(CtxknowStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(CtxknowStatus::Internal, "output contains NUL".into()))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ctxknow_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static version string.
#[no_mangle]
pub extern "C" fn ctxknow_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ctxknow_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses one script with default settings and writes its knowledge triples
/// as a JSON array to `*out_json`.
///
/// # Safety
/// `script_id` and `text` must be NUL-terminated; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ctxknow_extract_json(
    script_id: *const c_char,
    text: *const c_char,
    out_json: *mut *mut c_char,
) -> CtxknowStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let id = str_arg(script_id, "script_id")?;
        let text = str_arg(text, "text")?;
        let script = RawScript::new(id, text, "<ffi>");
        let scenes = parse_script(&script, &ParserConfig::default());
        let extraction = extract_scenes(&scenes, &ExtractConfig::default(), &Stoplist::default_list());
        *out_json = into_c_string(serde_json::to_string(&extraction.triples)?)?;
        Ok(())
    })
}

/// Loads a checkpoint file into a new handle.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ctxknow_model_load(path: *const c_char, out: *mut *mut CtxknowModel) -> CtxknowStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let (params, _) = ReaderParams::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(CtxknowModel { params }));
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from [`ctxknow_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ctxknow_model_free(model: *mut CtxknowModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Embedding dimension of the model, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ctxknow_model_dim(model: *const CtxknowModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.dim)
}

unsafe fn model_and_instance<'a>(
    model: *const CtxknowModel,
    instance_json: *const c_char,
) -> Result<(&'a CtxknowModel, McInstance), Failure> {
    let model = model.as_ref().ok_or_else(|| null("model"))?;
    let inst: McInstance = serde_json::from_str(str_arg(instance_json, "instance_json")?)?;
    inst.validate()?;
    Ok((model, inst))
}

/// Option probabilities for one instance given as JSON. Writes the option
/// count to `*n_out` and, when `capacity` suffices, the probabilities to
/// `probs`. Returns `CTXKNOW_STATUS_BUFFER_TOO_SMALL` otherwise.
///
/// # Safety
/// `probs` must have room for `capacity` doubles (or be null with capacity 0);
/// `n_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ctxknow_model_option_probs(
    model: *const CtxknowModel,
    instance_json: *const c_char,
    probs: *mut f64,
    capacity: usize,
    n_out: *mut usize,
) -> CtxknowStatus {
    guard(|| {
        if n_out.is_null() {
            return Err(null("n_out"));
        }
        let (model, inst) = model_and_instance(model, instance_json)?;
        let p = option_probs(&inst, &model.params)?;
        *n_out = p.len();
        if capacity < p.len() || probs.is_null() {
            return Err(Failure(
                CtxknowStatus::BufferTooSmall,
                format!("need room for {} probabilities", p.len()),
            ));
        }
        ptr::copy_nonoverlapping(p.as_ptr(), probs, p.len());
        Ok(())
    })
}

/// Predicted option index (lowest index on ties).
///
/// # Safety
/// `instance_json` must be NUL-terminated; `index_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ctxknow_model_predict(
    model: *const CtxknowModel,
    instance_json: *const c_char,
    index_out: *mut usize,
) -> CtxknowStatus {
    guard(|| {
        if index_out.is_null() {
            return Err(null("index_out"));
        }
        let (model, inst) = model_and_instance(model, instance_json)?;
        *index_out = argmax(&option_probs(&inst, &model.params)?);
        Ok(())
    })
}

/// Soft label `lambda * onehot(gold) + (1 - lambda) * mean_j teacher_probs[j]`.
/// `teacher_probs` is row-major, `n_teachers` rows of `n_options` values;
/// `out` receives `n_options` values.
///
/// # Safety
/// `teacher_probs` must hold `n_teachers * n_options` doubles and `out`
/// must have room for `n_options`.
#[no_mangle]
pub unsafe extern "C" fn ctxknow_soft_label(
    gold: usize,
    teacher_probs: *const f64,
    n_teachers: usize,
    n_options: usize,
    lambda: f64,
    out: *mut f64,
) -> CtxknowStatus {
    guard(|| {
        if teacher_probs.is_null() {
            return Err(null("teacher_probs"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Failure(
                CtxknowStatus::InvalidArgument,
                format!("lambda {lambda} outside [0, 1]"),
            ));
        }
        let flat = std::slice::from_raw_parts(teacher_probs, n_teachers * n_options);
        let rows: Vec<Vec<f64>> = flat.chunks(n_options.max(1)).map(<[f64]>::to_vec).collect();
        let s = mix_soft_label(gold, &rows, lambda)?;
        ptr::copy_nonoverlapping(s.values().as_ptr(), out, n_options);
        Ok(())
    })
}
