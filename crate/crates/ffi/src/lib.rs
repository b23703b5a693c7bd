//! C interface to `elitist_core`.
//!
//! Objects cross the boundary as opaque handles created by `*_load` or
//! `*_run` functions and released by the matching `*_free`. Every fallible
//! function returns an [`EltStatus`]; on failure the message is available
//! from [`elt_last_error`] on the same thread. Strings returned through out
//! parameters are owned by the caller and released with [`elt_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use elitist_core::align::{align, AlignmentCounts, Equivalence};
use elitist_core::corpus::{load_corpus, ContextMap, Corpus};
use elitist_core::decoder::{decode_corpus, hypotheses_to_jsonl, LoopGraph};
use elitist_core::elitist::{run_loop, ElitistConfig, IterationTrace};
use elitist_core::eval::two_proportion_test;
use elitist_core::hmm::ModelSet;
use elitist_core::label::Label;
use elitist_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EltStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Data = 4,
    Numerical = 5,
    Panic = 6,
}

/// Loaded acoustic models.
pub struct EltModelSet(Arc<ModelSet>);

/// Loaded annotated corpus.
pub struct EltCorpus(Corpus);

/// Result of a training loop run.
pub struct EltTrace(IterationTrace);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EltCounts {
    pub ok: u64,
    pub ins: u64,
    pub sub: u64,
    pub omi: u64,
}

impl From<AlignmentCounts> for EltCounts {
    fn from(c: AlignmentCounts) -> Self {
        EltCounts {
            ok: c.ok as u64,
            ins: c.ins as u64,
            sub: c.sub as u64,
            omi: c.omi as u64,
        }
    }
}

impl From<EltCounts> for AlignmentCounts {
    fn from(c: EltCounts) -> Self {
        AlignmentCounts {
            ok: c.ok as usize,
            ins: c.ins as usize,
            sub: c.sub as usize,
            omi: c.omi as usize,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EltIterationRecord {
    pub index: u64,
    pub accuracy_all: f64,
    pub accuracy_subset: f64,
    pub retained_all: f64,
    pub retained_subset: f64,
    pub relabeled: u64,
    pub counts_all: EltCounts,
    pub counts_subset: EltCounts,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(EltStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => EltStatus::Io,
            Error::Config(_) | Error::InvalidLabel(_) => EltStatus::InvalidArgument,
            Error::Numerical(_) | Error::NoAdmissiblePath(_) | Error::ZeroDenominator(_) => EltStatus::Numerical,
            _ => EltStatus::Data,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(EltStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EltStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            EltStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {message}"));
            EltStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(EltStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn owned_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(EltStatus::Data, "string contains a nul byte".into()))
}

unsafe fn labels_arg(p: *const *const c_char, n: usize, what: &str) -> Result<Vec<Label>, Failure> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(null(what));
    }
    std::slice::from_raw_parts(p, n)
        .iter()
        .map(|&s| Ok(str_arg(s, what)?.parse::<Label>()?))
        .collect()
}

/// Message of the last failed call on this thread, or null after a
/// success. Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn elt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn elt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn elt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn elt_model_set_load(path: *const c_char, out: *mut *mut EltModelSet) -> EltStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let models = ModelSet::load(PathBuf::from(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(EltModelSet(Arc::new(models))));
        Ok(())
    })
}

/// # Safety
/// `models` and `path` must be valid.
#[no_mangle]
pub unsafe extern "C" fn elt_model_set_save(models: *const EltModelSet, path: *const c_char) -> EltStatus {
    guard(|| {
        let models = handle(models, "models")?;
        models.0.save(PathBuf::from(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `models` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn elt_model_set_len(models: *const EltModelSet, out: *mut usize) -> EltStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(models, "models")?.0.len();
        Ok(())
    })
}

/// # Safety
/// `models` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn elt_model_set_free(models: *mut EltModelSet) {
    if !models.is_null() {
        drop(Box::from_raw(models));
    }
}

/// Loads a corpus manifest with the default context map.
///
/// # Safety
/// `manifest` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn elt_corpus_load(manifest: *const c_char, out: *mut *mut EltCorpus) -> EltStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let corpus = load_corpus(PathBuf::from(str_arg(manifest, "manifest")?), ContextMap::default())?;
        *out = Box::into_raw(Box::new(EltCorpus(corpus)));
        Ok(())
    })
}

/// New corpus with context-bearing consonants annotated by their successor.
///
/// # Safety
/// `corpus` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn elt_corpus_contextualize(corpus: *const EltCorpus, out: *mut *mut EltCorpus) -> EltStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ctx = handle(corpus, "corpus")?.0.contextualize()?;
        *out = Box::into_raw(Box::new(EltCorpus(ctx)));
        Ok(())
    })
}

/// # Safety
/// `corpus` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn elt_corpus_token_count(corpus: *const EltCorpus, out: *mut usize) -> EltStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(corpus, "corpus")?.0.token_count();
        Ok(())
    })
}

/// # Safety
/// `corpus` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn elt_corpus_effective_label_count(corpus: *const EltCorpus, out: *mut usize) -> EltStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(corpus, "corpus")?.0.effective_label_count();
        Ok(())
    })
}

/// # Safety
/// `corpus` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn elt_corpus_free(corpus: *mut EltCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Decodes every utterance with a phone loop over `models`. Writes one JSON
/// hypothesis per line to `*out_jsonl`.
///
/// # Safety
/// Handles must be valid and `out_jsonl` writable.
#[no_mangle]
pub unsafe extern "C" fn elt_decode(
    models: *const EltModelSet,
    corpus: *const EltCorpus,
    insertion_penalty: f64,
    out_jsonl: *mut *mut c_char,
) -> EltStatus {
    guard(|| {
        let out = out_arg(out_jsonl, "out_jsonl")?;
        let models = handle(models, "models")?;
        let corpus = handle(corpus, "corpus")?;
        let graph = LoopGraph::new(&models.0, insertion_penalty)?;
        let hyps = decode_corpus(&graph, &corpus.0)?;
        *out = owned_string(hypotheses_to_jsonl(&hyps))?;
        Ok(())
    })
}

/// Minimum-edit alignment of two label sequences. `class_equivalence`
/// nonzero ignores context classes when matching.
///
/// # Safety
/// Each array must hold the given number of nul-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn elt_align_counts(
    reference: *const *const c_char,
    reference_len: usize,
    hypothesis: *const *const c_char,
    hypothesis_len: usize,
    class_equivalence: i32,
    out: *mut EltCounts,
) -> EltStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let r = labels_arg(reference, reference_len, "reference")?;
        let h = labels_arg(hypothesis, hypothesis_len, "hypothesis")?;
        let eq = if class_equivalence != 0 {
            Equivalence::Class
        } else {
            Equivalence::Exact
        };
        *out = align(&r, &h, eq).counts.into();
        Ok(())
    })
}

/// (Ok - Ins) / (Ok + Sub + Omi).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn elt_accuracy(counts: EltCounts, out: *mut f64) -> EltStatus {
    guard(|| {
        *out_arg(out, "out")? = AlignmentCounts::from(counts).accuracy()?;
        Ok(())
    })
}

/// Pooled two-proportion z-test; two-sided p-value.
///
/// # Safety
/// `z` and `p_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn elt_two_proportion_test(
    ok1: u64,
    n1: u64,
    ok2: u64,
    n2: u64,
    z: *mut f64,
    p_value: *mut f64,
) -> EltStatus {
    guard(|| {
        let z = out_arg(z, "z")?;
        let p_value = out_arg(p_value, "p_value")?;
        let t = two_proportion_test(ok1, n1, ok2, n2)?;
        *z = t.z;
        *p_value = t.p_value;
        Ok(())
    })
}

/// Runs the training loop. `config_toml` may be null for defaults.
///
/// # Safety
/// `corpus` must be valid, `config_toml` null or nul-terminated, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn elt_run_elitist(
    corpus: *const EltCorpus,
    config_toml: *const c_char,
    out: *mut *mut EltTrace,
) -> EltStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let corpus = handle(corpus, "corpus")?;
        let cfg = if config_toml.is_null() {
            ElitistConfig::default()
        } else {
            ElitistConfig::from_toml(str_arg(config_toml, "config_toml")?)?
        };
        let trace = run_loop(&corpus.0, &cfg)?;
        *out = Box::into_raw(Box::new(EltTrace(trace)));
        Ok(())
    })
}

/// # Safety
/// `trace` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn elt_trace_len(trace: *const EltTrace, out: *mut usize) -> EltStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(trace, "trace")?.0.records.len();
        Ok(())
    })
}

/// # Safety
/// `trace` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn elt_trace_record(
    trace: *const EltTrace,
    index: usize,
    out: *mut EltIterationRecord,
) -> EltStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let trace = handle(trace, "trace")?;
        let r = trace.0.records.get(index).ok_or_else(|| {
            Failure(
                EltStatus::InvalidArgument,
                format!("record {index} out of range ({} records)", trace.0.records.len()),
            )
        })?;
        *out = EltIterationRecord {
            index: r.index as u64,
            accuracy_all: r.accuracy_all,
            accuracy_subset: r.accuracy_subset,
            retained_all: r.retained_all,
            retained_subset: r.retained_subset,
            relabeled: r.relabeled as u64,
            counts_all: r.counts_all.into(),
            counts_subset: r.counts_subset.into(),
        };
        Ok(())
    })
}

/// # Safety
/// `trace` must be valid and `out_csv` writable.
#[no_mangle]
pub unsafe extern "C" fn elt_trace_csv(trace: *const EltTrace, out_csv: *mut *mut c_char) -> EltStatus {
    guard(|| {
        let out = out_arg(out_csv, "out_csv")?;
        *out = owned_string(handle(trace, "trace")?.0.to_csv())?;
        Ok(())
    })
}

/// Models after the last retraining, as a new handle.
///
/// # Safety
/// `trace` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn elt_trace_final_models(trace: *const EltTrace, out: *mut *mut EltModelSet) -> EltStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let models = Arc::clone(&handle(trace, "trace")?.0.final_models);
        *out = Box::into_raw(Box::new(EltModelSet(models)));
        Ok(())
    })
}

/// # Safety
/// `trace` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn elt_trace_free(trace: *mut EltTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}
