//! C ABI over the modescope library.
//!
//! Every fallible function returns an [`MsStatus`]; on failure the message is
//! available from [`ms_last_error`] on the same thread. Handles are opaque and
//! must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use modescope::corpus::{load_corpus, Corpus};
use modescope::rlhf_sim::{kl_divergence, ppo_clip_objective, run_table1, simulate, BanditTask, TrajectoryLog, UpdateRule};
use modescope::sentiment::{load_lexicon, score, SentimentLexicon};
use modescope::syntactic::{corpus_entropy_summary, softmax_with_temperature, top_k_entropy, EntropyMode, TokenDistribution};
use modescope::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Io = 4,
    MalformedData = 5,
    MissingCapability = 6,
    Numerical = 7,
    Network = 8,
    Rejected = 9,
    Protocol = 10,
    Serialization = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsRule {
    Naive = 0,
    /// Parameter is the clip epsilon.
    PpoClip = 1,
    /// Parameter is the penalty coefficient beta.
    KlPenalty = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MsSentiment {
    pub compound: f64,
    pub pos: f64,
    pub neu: f64,
    pub neg: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MsEntropySummary {
    pub mean: f64,
    pub std: f64,
    pub included: usize,
    pub excluded: usize,
}

/// A loaded JSONL generation corpus.
pub struct MsCorpus(Corpus);

/// A sentiment lexicon, optionally with emoji descriptions.
pub struct MsLexicon(SentimentLexicon);

/// A bandit simulation trajectory.
pub struct MsTrajectory(TrajectoryLog);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(MsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => MsStatus::Io,
            Error::MalformedLine { .. } => MsStatus::MalformedData,
            Error::InvalidInput(_) => MsStatus::InvalidInput,
            Error::Capability(_) => MsStatus::MissingCapability,
            Error::Numerical(_) => MsStatus::Numerical,
            Error::Network(_) => MsStatus::Network,
            Error::Rejected { .. } => MsStatus::Rejected,
            Error::Protocol(_) => MsStatus::Protocol,
            Error::Serialization(_) => MsStatus::Serialization,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MsStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(MsStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(MsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ms_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn ms_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn ms_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Shannon entropy in bits of a top-k probability vector.
///
/// # Safety
/// `probs` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_top_k_entropy(probs: *const f64, len: usize, renormalize: bool, out: *mut f64) -> MsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let dist = TokenDistribution::new(slice_arg(probs, len, "probs")?.to_vec())?;
        let mode = if renormalize { EntropyMode::Renormalize } else { EntropyMode::Raw };
        *out = top_k_entropy(&dist, mode);
        Ok(())
    })
}

/// Softmax of `logits / temperature`, written to `out_probs` in input order.
///
/// # Safety
/// `logits` must point to `len` readable doubles and `out_probs` to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ms_softmax_with_temperature(
    logits: *const f64,
    len: usize,
    temperature: f64,
    out_probs: *mut f64,
) -> MsStatus {
    guard(|| {
        let logits = slice_arg(logits, len, "logits")?;
        if out_probs.is_null() {
            return Err(null("out_probs"));
        }
        let dist = softmax_with_temperature(logits, temperature)?;
        std::slice::from_raw_parts_mut(out_probs, len).copy_from_slice(dist.probs());
        Ok(())
    })
}

/// KL(p || q) in nats.
///
/// # Safety
/// `p` and `q` must each point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_kl_divergence(p: *const f64, q: *const f64, len: usize, out: *mut f64) -> MsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = kl_divergence(slice_arg(p, len, "p")?, slice_arg(q, len, "q")?)?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn ms_ppo_clip_objective(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    ppo_clip_objective(ratio, advantage, epsilon)
}

/// Loads a JSONL corpus.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_corpus_load(path: *const c_char, out: *mut *mut MsCorpus) -> MsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let corpus = load_corpus(PathBuf::from(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(MsCorpus(corpus)));
        Ok(())
    })
}

/// Number of records, or 0 for a null handle.
///
/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ms_corpus_len(corpus: *const MsCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// Mean per-completion token entropy over records that carry logprobs.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_corpus_entropy(
    corpus: *const MsCorpus,
    renormalize: bool,
    out: *mut MsEntropySummary,
) -> MsStatus {
    guard(|| {
        let corpus = handle(corpus, "corpus")?;
        let out = out_arg(out, "out")?;
        let mode = if renormalize { EntropyMode::Renormalize } else { EntropyMode::Raw };
        let p = corpus_entropy_summary(&corpus.0, mode, false)?;
        *out = MsEntropySummary {
            mean: p.mean,
            std: p.std,
            included: p.per_completion_means.len(),
            excluded: p.excluded,
        };
        Ok(())
    })
}

/// # Safety
/// `corpus` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ms_corpus_free(corpus: *mut MsCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Loads a tab-separated valence lexicon. `emoji_path` may be null.
///
/// # Safety
/// Paths must be nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_lexicon_load(
    lexicon_path: *const c_char,
    emoji_path: *const c_char,
    out: *mut *mut MsLexicon,
) -> MsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let mut lex = load_lexicon(str_arg(lexicon_path, "lexicon_path")?)?;
        if !emoji_path.is_null() {
            lex = lex.with_emoji_file(str_arg(emoji_path, "emoji_path")?)?;
        }
        *out = Box::into_raw(Box::new(MsLexicon(lex)));
        Ok(())
    })
}

/// Scores one text.
///
/// # Safety
/// `lexicon` must be a live handle, `text` a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ms_sentiment_score(
    lexicon: *const MsLexicon,
    text: *const c_char,
    out: *mut MsSentiment,
) -> MsStatus {
    guard(|| {
        let lex = handle(lexicon, "lexicon")?;
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        let s = score(text, &lex.0);
        *out = MsSentiment {
            compound: s.compound,
            pos: s.pos,
            neu: s.neu,
            neg: s.neg,
        };
        Ok(())
    })
}

/// # Safety
/// `lexicon` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ms_lexicon_free(lexicon: *mut MsLexicon) {
    if !lexicon.is_null() {
        drop(Box::from_raw(lexicon));
    }
}

/// Runs the chatbot-name bandit with the given rule. `param` is ignored for
/// the naive rule.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_simulate(
    rule: MsRule,
    param: f64,
    steps: usize,
    seed: u64,
    out: *mut *mut MsTrajectory,
) -> MsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let rule = match rule {
            MsRule::Naive => UpdateRule::Naive,
            MsRule::PpoClip => UpdateRule::ppo(param),
            MsRule::KlPenalty => UpdateRule::kl(param),
        };
        let log = simulate(&BanditTask::chatbot_names(), &rule, steps, seed)?;
        *out = Box::into_raw(Box::new(MsTrajectory(log)));
        Ok(())
    })
}

/// The scripted four-step walkthrough.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_table1(out: *mut *mut MsTrajectory) -> MsStatus {
    guard(|| {
        *out_arg(out, "out")? = Box::into_raw(Box::new(MsTrajectory(run_table1())));
        Ok(())
    })
}

/// Number of recorded steps, or 0 for a null handle.
///
/// # Safety
/// `trajectory` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ms_trajectory_len(trajectory: *const MsTrajectory) -> usize {
    trajectory.as_ref().map_or(0, |t| t.0.entries.len())
}

/// Number of actions, or 0 for a null handle.
///
/// # Safety
/// `trajectory` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ms_trajectory_n_actions(trajectory: *const MsTrajectory) -> usize {
    trajectory.as_ref().map_or(0, |t| t.0.actions.len())
}

/// Copies the policy after the last step into `buf`, in action order.
///
/// # Safety
/// `trajectory` must be a live handle and `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ms_trajectory_final_probs(trajectory: *const MsTrajectory, buf: *mut f64, len: usize) -> MsStatus {
    guard(|| {
        let t = handle(trajectory, "trajectory")?;
        let probs = t.0.final_probs();
        if len < probs.len() {
            return Err(Failure(
                MsStatus::BufferTooSmall,
                format!("buffer holds {len} values, need {}", probs.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        std::slice::from_raw_parts_mut(buf, probs.len()).copy_from_slice(probs);
        Ok(())
    })
}

/// Serializes the trajectory as JSON. Free the result with [`ms_string_free`].
///
/// # Safety
/// `trajectory` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_trajectory_to_json(trajectory: *const MsTrajectory, out: *mut *mut c_char) -> MsStatus {
    guard(|| {
        let t = handle(trajectory, "trajectory")?;
        let out = out_arg(out, "out")?;
        let text = serde_json::to_string(&t.0).map_err(Error::from)?;
        *out = CString::new(text).expect("JSON has no nul bytes").into_raw();
        Ok(())
    })
}

/// # Safety
/// `trajectory` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ms_trajectory_free(trajectory: *mut MsTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}
