use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use modescope_ffi::*;

fn core_data(name: &str) -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name);
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = ms_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn entropy_and_softmax() {
    let mut h = f64::NAN;
    let uniform = [0.2; 5];
    assert_eq!(unsafe { ms_top_k_entropy(uniform.as_ptr(), 5, false, &mut h) }, MsStatus::Ok);
    assert!((h - 5f64.log2()).abs() < 1e-15);
    assert!(ms_last_error().is_null());

    let mut probs = [0.0; 2];
    assert_eq!(unsafe { ms_softmax_with_temperature([0.0, 1.0].as_ptr(), 2, 1.0, probs.as_mut_ptr()) }, MsStatus::Ok);
    assert!((probs[0] - 0.26894).abs() < 1e-5 && (probs[1] - 0.73106).abs() < 1e-5);

    let bad = [0.7, 0.6];
    assert_eq!(unsafe { ms_top_k_entropy(bad.as_ptr(), 2, false, &mut h) }, MsStatus::InvalidInput);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { ms_top_k_entropy(ptr::null(), 3, false, &mut h) }, MsStatus::NullArgument);
    assert_eq!(unsafe { ms_softmax_with_temperature([0.0].as_ptr(), 1, 0.0, probs.as_mut_ptr()) }, MsStatus::InvalidInput);
}

#[test]
fn kl_and_ppo() {
    let mut d = f64::NAN;
    assert_eq!(unsafe { ms_kl_divergence([1.0, 0.0].as_ptr(), [0.5, 0.5].as_ptr(), 2, &mut d) }, MsStatus::Ok);
    assert!((d - 2f64.ln()).abs() < 1e-12);
    assert_ne!(unsafe { ms_kl_divergence([0.5, 0.5].as_ptr(), [1.0, 0.0].as_ptr(), 2, &mut d) }, MsStatus::Ok);
    assert!(last_error().contains("infinite"));
    assert_eq!(ms_ppo_clip_objective(2.0, 1.0, 0.2), 1.2);
    assert_eq!(ms_ppo_clip_objective(0.5, -1.0, 0.2), -0.8);
}

#[test]
fn lexicon_scoring() {
    let mut lex = ptr::null_mut();
    let status = unsafe { ms_lexicon_load(core_data("vader_lexicon.txt").as_ptr(), core_data("emoji_utf8_lexicon.txt").as_ptr(), &mut lex) };
    assert_eq!(status, MsStatus::Ok);
    let mut s = MsSentiment::default();
    let text = CString::new("VADER is smart, handsome, and funny.").unwrap();
    assert_eq!(unsafe { ms_sentiment_score(lex, text.as_ptr(), &mut s) }, MsStatus::Ok);
    assert!((s.compound - 0.8316).abs() < 5e-5);
    assert!((s.pos + s.neu + s.neg - 1.0).abs() < 1e-2);
    unsafe { ms_lexicon_free(lex) };

    let missing = CString::new("/nonexistent/lexicon.txt").unwrap();
    assert_eq!(unsafe { ms_lexicon_load(missing.as_ptr(), ptr::null(), &mut lex) }, MsStatus::Io);
    let not_utf8 = [0xffu8 as i8, 0];
    assert_eq!(unsafe { ms_lexicon_load(not_utf8.as_ptr().cast(), ptr::null(), &mut lex) }, MsStatus::InvalidUtf8);
}

#[test]
fn corpus_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    modescope::corpus::save_corpus(&modescope::synthetic::corpus(modescope::synthetic::Regime::Hot, 10, 1), &path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { ms_corpus_load(cpath.as_ptr(), &mut c) }, MsStatus::Ok);
    assert_eq!(unsafe { ms_corpus_len(c) }, 10);
    let mut e = MsEntropySummary::default();
    assert_eq!(unsafe { ms_corpus_entropy(c, false, &mut e) }, MsStatus::Ok);
    assert_eq!(e.included + e.excluded, 10);
    assert!(e.mean > 0.0);
    unsafe { ms_corpus_free(c) };
    assert_eq!(unsafe { ms_corpus_len(ptr::null()) }, 0);

    std::fs::write(&path, "{\"id\": \n").unwrap();
    assert_eq!(unsafe { ms_corpus_load(cpath.as_ptr(), &mut c) }, MsStatus::MalformedData);
    assert!(last_error().contains("line 1"));
}

#[test]
fn trajectories() {
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { ms_table1(&mut t) }, MsStatus::Ok);
    assert_eq!(unsafe { ms_trajectory_len(t) }, 4);
    let n = unsafe { ms_trajectory_n_actions(t) };
    let mut probs = vec![0.0; n];
    assert_eq!(unsafe { ms_trajectory_final_probs(t, probs.as_mut_ptr(), n) }, MsStatus::Ok);
    assert!((probs.iter().cloned().fold(0.0, f64::max) - 0.900).abs() <= 0.001);
    assert_eq!(unsafe { ms_trajectory_final_probs(t, probs.as_mut_ptr(), n - 1) }, MsStatus::BufferTooSmall);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { ms_trajectory_to_json(t, &mut json) }, MsStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { ms_string_free(json) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["entries"].as_array().unwrap().len(), 4);
    unsafe { ms_trajectory_free(t) };

    assert_eq!(unsafe { ms_simulate(MsRule::KlPenalty, 10.0, 200, 3, &mut t) }, MsStatus::Ok);
    assert_eq!(unsafe { ms_trajectory_len(t) }, 200);
    unsafe { ms_trajectory_free(t) };
    assert_eq!(unsafe { ms_simulate(MsRule::PpoClip, 1.5, 10, 3, &mut t) }, MsStatus::InvalidInput);
    assert_eq!(unsafe { ms_simulate(MsRule::Naive, 0.0, 10, 3, ptr::null_mut()) }, MsStatus::NullArgument);
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(ms_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
