//! C ABI over the corpus pipeline, span ranking and QA metrics.
//!
//! Every function returns an [`SrStatus`]. On failure a message is kept in a
//! thread-local slot and can be read with [`sr_last_error`]. Strings handed
//! out by the library must be released with [`sr_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use spanreason::example_gen::{generate, serialize_example, GenConfig, Vocab};
use spanreason::ingest::{ingest, CorpusStore};
use spanreason::neural::rank_spans;
use spanreason::pair_index::{build_index, build_query_groups, Profile, QueryGroup};
use spanreason::qa::{em_f1, normalize_answer, window_split};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Corpus = 5,
    Generation = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Profile selector for [`sr_groups_build`].
pub const SR_PROFILE_TEXT: u32 = 0;
pub const SR_PROFILE_HYBRID: u32 = 1;

/// Bits for the `flags` argument of [`sr_generate_jsonl`].
pub const SR_GEN_NO_MLM: u32 = 1;
pub const SR_GEN_NO_UNANSWERABLE: u32 = 2;
pub const SR_GEN_SINGLE_EVIDENCE: u32 = 4;

/// An ingested corpus with its vocabulary.
pub struct SrCorpus {
    store: CorpusStore,
    vocab: Vocab,
}

/// Query groups built from one corpus under one profile.
pub struct SrGroups {
    profile: Profile,
    groups: Vec<QueryGroup>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SrStatus, String);

type Res<T> = Result<T, Failure>;

fn fail<T>(status: SrStatus, msg: impl Into<String>) -> Res<T> {
    Err(Failure(status, msg.into()))
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(body: impl FnOnce() -> Res<()>) -> SrStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Res<&'a str> {
    if p.is_null() {
        return fail(SrStatus::NullArgument, format!("{name} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(SrStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Res<&'a T> {
    p.as_ref().ok_or_else(|| Failure(SrStatus::NullArgument, format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Res<&'a mut T> {
    p.as_mut().ok_or_else(|| Failure(SrStatus::NullArgument, format!("{name} is null")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, name: &str) -> Res<&'a [T]> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(SrStatus::NullArgument, format!("{name} is null"));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn to_c(s: String) -> Res<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .or_else(|_| fail(SrStatus::InvalidArgument, "output contains a NUL byte"))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn sr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

fn load(store: CorpusStore) -> *mut SrCorpus {
    let vocab = Vocab::build(&store);
    Box::into_raw(Box::new(SrCorpus { store, vocab }))
}

/// Ingests a corpus given as JSONL text.
///
/// # Safety
/// `jsonl` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_corpus_from_jsonl(jsonl: *const c_char, out: *mut *mut SrCorpus) -> SrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(jsonl, "jsonl")?;
        let store = ingest(text.as_bytes()).or_else(|e| fail(SrStatus::Corpus, e.to_string()))?;
        *out = load(store);
        Ok(())
    })
}

/// Ingests a corpus from a JSONL file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_corpus_from_file(path: *const c_char, out: *mut *mut SrCorpus) -> SrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let file = std::fs::File::open(path).or_else(|e| fail(SrStatus::Io, format!("{path}: {e}")))?;
        let store = ingest(BufReader::new(file)).or_else(|e| fail(SrStatus::Corpus, e.to_string()))?;
        *out = load(store);
        Ok(())
    })
}

/// # Safety
/// `corpus` must come from `sr_corpus_from_*` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sr_corpus_free(corpus: *mut SrCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Page, sentence, table and vocabulary counts. Any output may be null.
///
/// # Safety
/// `corpus` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sr_corpus_counts(
    corpus: *const SrCorpus,
    pages: *mut usize,
    sentences: *mut usize,
    tables: *mut usize,
    vocab: *mut usize,
) -> SrStatus {
    guard(|| {
        let c = ref_arg(corpus, "corpus")?;
        let stats = &c.store.stats;
        for (p, v) in [(pages, stats.n_pages), (sentences, stats.n_sentences), (tables, stats.n_tables), (vocab, c.vocab.len())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Builds the pair index and the query groups for `profile`.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_groups_build(corpus: *const SrCorpus, profile: u32, out: *mut *mut SrGroups) -> SrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let c = ref_arg(corpus, "corpus")?;
        let profile = match profile {
            SR_PROFILE_TEXT => Profile::Text,
            SR_PROFILE_HYBRID => Profile::Hybrid,
            p => return fail(SrStatus::InvalidArgument, format!("unknown profile {p}")),
        };
        let groups = build_query_groups(&c.store, &build_index(&c.store), profile);
        *out = Box::into_raw(Box::new(SrGroups { profile, groups }));
        Ok(())
    })
}

/// # Safety
/// `groups` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sr_groups_len(groups: *const SrGroups, len: *mut usize) -> SrStatus {
    guard(|| {
        let g = ref_arg(groups, "groups")?;
        *out_arg(len, "len")? = g.groups.len();
        Ok(())
    })
}

/// # Safety
/// `groups` must come from `sr_groups_build` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sr_groups_free(groups: *mut SrGroups) {
    if !groups.is_null() {
        drop(Box::from_raw(groups));
    }
}

/// Generates one example per viable group and returns them as JSONL, one
/// example per line. `flags` is a bitwise or of `SR_GEN_*`.
///
/// # Safety
/// Handles must be live and built from the same corpus; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_generate_jsonl(
    corpus: *const SrCorpus,
    groups: *const SrGroups,
    seed: u64,
    flags: u32,
    out: *mut *mut c_char,
) -> SrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let c = ref_arg(corpus, "corpus")?;
        let g = ref_arg(groups, "groups")?;
        if flags & !(SR_GEN_NO_MLM | SR_GEN_NO_UNANSWERABLE | SR_GEN_SINGLE_EVIDENCE) != 0 {
            return fail(SrStatus::InvalidArgument, format!("unknown flag bits {flags:#x}"));
        }
        let cfg = GenConfig {
            profile: g.profile,
            mlm: flags & SR_GEN_NO_MLM == 0,
            unanswerable: flags & SR_GEN_NO_UNANSWERABLE == 0,
            single_evidence: flags & SR_GEN_SINGLE_EVIDENCE != 0,
            ..GenConfig::default()
        };
        let (examples, _) =
            generate(&c.store, &c.vocab, &g.groups, &cfg, seed, 0).or_else(|e| fail(SrStatus::Generation, e.to_string()))?;
        let mut text = String::new();
        for ex in &examples {
            text.push_str(&serialize_example(ex));
            text.push('\n');
        }
        *out = to_c(text)?;
        Ok(())
    })
}

/// Answer normalization used by the metrics.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_normalize_answer(text: *const c_char, out: *mut *mut c_char) -> SrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        *out = to_c(normalize_answer(str_arg(text, "text")?))?;
        Ok(())
    })
}

/// Max EM and F1 of `prediction` over `n_golds` gold answers. A null
/// prediction means no answer.
///
/// # Safety
/// `golds` must point to `n_golds` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn sr_em_f1(
    prediction: *const c_char,
    golds: *const *const c_char,
    n_golds: usize,
    em: *mut f64,
    f1: *mut f64,
) -> SrStatus {
    guard(|| {
        let em = out_arg(em, "em")?;
        let f1 = out_arg(f1, "f1")?;
        let pred = if prediction.is_null() { None } else { Some(str_arg(prediction, "prediction")?) };
        let golds = slice_arg(golds, n_golds, "golds")?
            .iter()
            .map(|&g| str_arg(g, "gold").map(str::to_string))
            .collect::<Res<Vec<_>>>()?;
        (*em, *f1) = em_f1(pred, &golds);
        Ok(())
    })
}

/// Ranks spans over the `n` domain positions (entry 0 is CLS) and writes
/// up to `capacity` best spans. `n_out` receives the number written.
///
/// # Safety
/// Input arrays must hold `n` elements; output arrays `capacity` elements.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sr_rank_spans(
    f_start: *const f64,
    f_end: *const f64,
    positions: *const usize,
    n: usize,
    max_len: usize,
    starts: *mut usize,
    ends: *mut usize,
    scores: *mut f64,
    capacity: usize,
    n_out: *mut usize,
) -> SrStatus {
    guard(|| {
        let n_out = out_arg(n_out, "n_out")?;
        *n_out = 0;
        let fs = slice_arg(f_start, n, "f_start")?;
        let fe = slice_arg(f_end, n, "f_end")?;
        let pos = slice_arg(positions, n, "positions")?;
        let ranked = rank_spans(fs, fe, pos, max_len);
        let k = ranked.len().min(capacity);
        if k > 0 && (starts.is_null() || ends.is_null() || scores.is_null()) {
            return fail(SrStatus::NullArgument, "output array is null");
        }
        for (i, s) in ranked.iter().take(k).enumerate() {
            *starts.add(i) = s.start;
            *ends.add(i) = s.end;
            *scores.add(i) = s.score;
        }
        *n_out = k;
        Ok(())
    })
}

/// Splits `n_tokens` into sliding windows as half-open `[start, end)`
/// ranges. When `capacity` is too small, `n_out` receives the required
/// count and `SR_STATUS_BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// Output arrays must hold `capacity` elements.
#[no_mangle]
pub unsafe extern "C" fn sr_window_split(
    n_tokens: usize,
    window: usize,
    stride: usize,
    starts: *mut usize,
    ends: *mut usize,
    capacity: usize,
    n_out: *mut usize,
) -> SrStatus {
    guard(|| {
        let n_out = out_arg(n_out, "n_out")?;
        *n_out = 0;
        let windows = window_split(n_tokens, window, stride).or_else(|e| fail(SrStatus::InvalidArgument, e.to_string()))?;
        *n_out = windows.len();
        if windows.len() > capacity {
            return fail(SrStatus::BufferTooSmall, format!("need {} windows, capacity {capacity}", windows.len()));
        }
        if !windows.is_empty() && (starts.is_null() || ends.is_null()) {
            return fail(SrStatus::NullArgument, "output array is null");
        }
        for (i, w) in windows.iter().enumerate() {
            *starts.add(i) = w.start;
            *ends.add(i) = w.end;
        }
        Ok(())
    })
}
