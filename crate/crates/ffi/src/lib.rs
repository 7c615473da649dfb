//! C ABI for the language identifier.
//!
//! Handles are opaque pointers created by `*_load` and released by the
//! matching `*_free`. Every fallible call returns a [`C2v2lStatus`]; on
//! failure [`c2v2l_last_error`] describes the problem. Strings returned
//! through out-pointers are owned by the caller and released with
//! [`c2v2l_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use c2v2l::checkpoint::NeuralModel;
use c2v2l::ngram::NgramClassifier;
use c2v2l::text::{normalize, normalize_lossy};
use c2v2l::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum C2v2lStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    /// Checkpoint and vocabulary (or shapes) disagree.
    Mismatch = 5,
    /// Text that normalizes to nothing, or an empty corpus.
    Empty = 6,
    InvalidArgument = 7,
    /// A Rust panic was caught at the boundary.
    Panic = 8,
}

/// A trained n-gram classifier.
pub struct C2v2lNgram(NgramClassifier);

/// A neural checkpoint with its vocabulary.
pub struct C2v2lModel(NeuralModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> C2v2lStatus {
    match e {
        Error::Io(_) => C2v2lStatus::Io,
        Error::Format { .. } | Error::Malformed { .. } => C2v2lStatus::Format,
        Error::CheckpointMismatch(_) | Error::Shape(_) => C2v2lStatus::Mismatch,
        Error::EmptyText | Error::EmptyCorpus(_) => C2v2lStatus::Empty,
        _ => C2v2lStatus::InvalidArgument,
    }
}

struct Failure(C2v2lStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, recording any error or panic for [`c2v2l_last_error`].
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> C2v2lStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            C2v2lStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            C2v2lStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(C2v2lStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(C2v2lStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn out_arg<T>(p: *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure(C2v2lStatus::NullPointer, format!("{what} is null")));
    }
    Ok(())
}

fn to_c_string(s: &str) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(C2v2lStatus::InvalidArgument, "string contains a nul byte".into()))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn c2v2l_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn c2v2l_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Normalizes a tweet; `*out` receives its tokens joined by single spaces.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn c2v2l_normalize(text: *const c_char, out: *mut *mut c_char) -> C2v2lStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        out_arg(out, "out")?;
        let normalized = normalize(text)?;
        *out = to_c_string(&normalized.joined())?;
        Ok(())
    })
}

/// Loads an n-gram classifier file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn c2v2l_ngram_load(path: *const c_char, out: *mut *mut C2v2lNgram) -> C2v2lStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        out_arg(out, "out")?;
        let file = File::open(path).map_err(Error::from)?;
        let clf = NgramClassifier::read(BufReader::new(file))?;
        *out = Box::into_raw(Box::new(C2v2lNgram(clf)));
        Ok(())
    })
}

/// Classifies a tweet; `*label` receives the language code or `und`.
///
/// # Safety
/// `model` must come from [`c2v2l_ngram_load`], `text` must be a
/// nul-terminated string and `label` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn c2v2l_ngram_classify(
    model: *const C2v2lNgram,
    text: *const c_char,
    label: *mut *mut c_char,
) -> C2v2lStatus {
    guard(|| {
        let model = model
            .as_ref()
            .ok_or_else(|| Failure(C2v2lStatus::NullPointer, "model is null".into()))?;
        let text = str_arg(text, "text")?;
        out_arg(label, "label")?;
        let lang = model.0.predict(&normalize_lossy(text))?;
        *label = to_c_string(&lang)?;
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`c2v2l_ngram_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn c2v2l_ngram_free(model: *mut C2v2lNgram) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Loads a neural checkpoint, refusing it if `vocab_path` is not the
/// vocabulary it was trained with.
///
/// # Safety
/// Paths must be nul-terminated strings and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn c2v2l_model_load(
    vocab_path: *const c_char,
    checkpoint_path: *const c_char,
    out: *mut *mut C2v2lModel,
) -> C2v2lStatus {
    guard(|| {
        let vocab = str_arg(vocab_path, "vocab_path")?;
        let ckpt = str_arg(checkpoint_path, "checkpoint_path")?;
        out_arg(out, "out")?;
        let model = NeuralModel::load(vocab, ckpt)?;
        *out = Box::into_raw(Box::new(C2v2lModel(model)));
        Ok(())
    })
}

/// Number of output labels; 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from [`c2v2l_model_load`].
#[no_mangle]
pub unsafe extern "C" fn c2v2l_model_num_labels(model: *const C2v2lModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.labels().len())
}

/// Label code at `index`.
///
/// # Safety
/// `model` must come from [`c2v2l_model_load`] and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn c2v2l_model_label(model: *const C2v2lModel, index: usize, out: *mut *mut c_char) -> C2v2lStatus {
    guard(|| {
        let model = model
            .as_ref()
            .ok_or_else(|| Failure(C2v2lStatus::NullPointer, "model is null".into()))?;
        out_arg(out, "out")?;
        let label = model.0.labels().get(index).ok_or_else(|| {
            Failure(C2v2lStatus::InvalidArgument, format!("label index {index} out of range"))
        })?;
        *out = to_c_string(label)?;
        Ok(())
    })
}

/// Writes the tweet's label distribution, in label order, into `probs`,
/// which must hold `len` = [`c2v2l_model_num_labels`] values.
///
/// # Safety
/// `model` must come from [`c2v2l_model_load`], `text` must be a
/// nul-terminated string and `probs` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn c2v2l_model_predict(
    model: *const C2v2lModel,
    text: *const c_char,
    probs: *mut f64,
    len: usize,
) -> C2v2lStatus {
    guard(|| {
        let model = model
            .as_ref()
            .ok_or_else(|| Failure(C2v2lStatus::NullPointer, "model is null".into()))?;
        let text = str_arg(text, "text")?;
        out_arg(probs, "probs")?;
        let n = model.0.labels().len();
        if len != n {
            return Err(Failure(
                C2v2lStatus::InvalidArgument,
                format!("buffer holds {len} values, model has {n} labels"),
            ));
        }
        let pred = model.0.predict_text(text)?;
        ptr::copy_nonoverlapping(pred.sentence.as_ptr(), probs, n);
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`c2v2l_model_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn c2v2l_model_free(model: *mut C2v2lModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
