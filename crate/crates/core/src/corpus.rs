//! Generation records and their JSONL persistence.
//!
//! A corpus file holds one [`GenerationRecord`] per line. Free-form
//! provenance (endpoint, date, prompt family) lives in a sidecar file
//! `<corpus>.provenance.json` so that the line count of the corpus always
//! equals its record count.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOP_K: usize = 5;
pub const MAX_TOP_K: usize = 20;

/// Tolerance on the probability mass carried by a step's candidates.
const MASS_TOLERANCE: f64 = 1e-6;

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

fn is_default_top_k(k: &usize) -> bool {
    *k == DEFAULT_TOP_K
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One generated token with the endpoint's top-k alternatives at that position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenStep {
    #[serde(rename = "token")]
    pub chosen_token: String,
    /// Natural-log probability of the chosen token.
    #[serde(rename = "logprob")]
    pub chosen_logprob: f64,
    /// `(token, natural-log probability)` pairs, most likely first.
    pub candidates: Vec<(String, f64)>,
}

impl TokenStep {
    pub fn chosen_in_candidates(&self) -> bool {
        self.candidates.iter().any(|(t, _)| *t == self.chosen_token)
    }

    pub fn candidate_probs(&self) -> Vec<f64> {
        self.candidates.iter().map(|(_, lp)| lp.exp()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub id: String,
    pub prompt: String,
    pub completion: String,
    #[serde(default)]
    pub steps: Vec<TokenStep>,
    pub model_id: String,
    pub temperature: f64,
    pub n_predict: usize,
    pub stopped_on_eos: bool,
    pub created_at: DateTime<Utc>,
    /// Number of candidates requested per step.
    #[serde(default = "default_top_k", skip_serializing_if = "is_default_top_k")]
    pub top_k: usize,
    /// Token strings are exact substrings of the completion, so the
    /// concatenation invariant can be checked.
    #[serde(default, skip_serializing_if = "is_false")]
    pub tokens_exact: bool,
    /// At least one chosen token fell outside the reported top-k.
    #[serde(default, skip_serializing_if = "is_false")]
    pub chosen_outside_topk: bool,
}

impl GenerationRecord {
    /// A text-only record (no per-token data).
    pub fn text_only(
        id: impl Into<String>,
        prompt: impl Into<String>,
        completion: impl Into<String>,
        model_id: impl Into<String>,
        created_at: DateTime<Utc>,
    ) -> Self {
        GenerationRecord {
            id: id.into(),
            prompt: prompt.into(),
            completion: completion.into(),
            steps: Vec::new(),
            model_id: model_id.into(),
            temperature: 1.0,
            n_predict: 128,
            stopped_on_eos: false,
            created_at,
            top_k: DEFAULT_TOP_K,
            tokens_exact: false,
            chosen_outside_topk: false,
        }
    }

    pub fn has_steps(&self) -> bool {
        !self.steps.is_empty()
    }
}

/// An ordered collection of records plus free-text provenance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub records: Vec<GenerationRecord>,
    pub provenance: BTreeMap<String, String>,
}

impl Corpus {
    pub fn new(records: Vec<GenerationRecord>) -> Result<Self> {
        let corpus = Corpus {
            records,
            provenance: BTreeMap::new(),
        };
        corpus.check_unique_ids()?;
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: GenerationRecord) -> Result<()> {
        if self.records.iter().any(|r| r.id == record.id) {
            return Err(Error::invalid(format!("duplicate record id {:?}", record.id)));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn check_unique_ids(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.records.len());
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::invalid(format!("duplicate record id {:?}", r.id)));
            }
        }
        Ok(())
    }

    pub fn completions(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.completion.as_str()).collect()
    }
}

/// A line that lenient loading skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedLine {
    pub line: usize,
    pub message: String,
}

pub fn provenance_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".provenance.json");
    path.with_file_name(name)
}

/// Loads a corpus, failing on the first malformed line.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let (corpus, _) = load_impl(path.as_ref(), true)?;
    Ok(corpus)
}

/// Loads a corpus, skipping malformed lines and reporting them.
pub fn load_corpus_lenient(path: impl AsRef<Path>) -> Result<(Corpus, Vec<SkippedLine>)> {
    load_impl(path.as_ref(), false)
}

fn load_impl(path: &Path, strict: bool) -> Result<(Corpus, Vec<SkippedLine>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut corpus = Corpus::default();
    let mut skipped = Vec::new();
    let mut ids = HashSet::new();

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let parsed = if line.trim().is_empty() {
            Err("empty line".to_string())
        } else {
            serde_json::from_str::<GenerationRecord>(line).map_err(|e| e.to_string())
        };
        let parsed = parsed.and_then(|rec| {
            if ids.contains(&rec.id) {
                Err(format!("duplicate record id {:?}", rec.id))
            } else {
                Ok(rec)
            }
        });
        match parsed {
            Ok(rec) => {
                ids.insert(rec.id.clone());
                corpus.records.push(rec);
            }
            Err(message) if strict => {
                return Err(Error::MalformedLine {
                    path: path.to_path_buf(),
                    line: line_no,
                    message,
                });
            }
            Err(message) => {
                log::warn!("{}: skipping line {}: {}", path.display(), line_no, message);
                skipped.push(SkippedLine {
                    line: line_no,
                    message,
                });
            }
        }
    }

    let prov = provenance_path(path);
    if prov.exists() {
        let raw = fs::read_to_string(&prov).map_err(|e| Error::io(&prov, e))?;
        corpus.provenance = serde_json::from_str(&raw)?;
    }
    Ok((corpus, skipped))
}

/// Writes one JSON object per line. An empty corpus produces an empty file.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    corpus.check_unique_ids()?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for rec in &corpus.records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;

    let prov = provenance_path(path);
    if corpus.provenance.is_empty() {
        if prov.exists() {
            fs::remove_file(&prov).map_err(|e| Error::io(&prov, e))?;
        }
    } else {
        let body = serde_json::to_string_pretty(&corpus.provenance)?;
        fs::write(&prov, body).map_err(|e| Error::io(&prov, e))?;
    }
    Ok(())
}

/// A broken record invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TemperatureOutOfRange(f64),
    NonPositiveNPredict,
    TopKOutOfRange(usize),
    TooManySteps { steps: usize, n_predict: usize },
    TooManyCandidates { step: usize, count: usize },
    NonFiniteLogprob { step: usize },
    PositiveLogprob { step: usize },
    CandidatesUnsorted { step: usize },
    CandidateMassExceedsOne { step: usize, mass: f64 },
    ChosenOutsideTopK { step: usize },
    CompletionMismatch,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TemperatureOutOfRange(_) => write!(f, "temperature out of (0,1]"),
            Violation::NonPositiveNPredict => write!(f, "n_predict must be positive"),
            Violation::TopKOutOfRange(k) => write!(f, "top_k {k} out of [1,{MAX_TOP_K}]"),
            Violation::TooManySteps { steps, n_predict } => {
                write!(f, "{steps} steps exceed n_predict {n_predict}")
            }
            Violation::TooManyCandidates { step, count } => {
                write!(f, "step {step}: {count} candidates exceed top_k")
            }
            Violation::NonFiniteLogprob { step } => write!(f, "step {step}: non-finite logprob"),
            Violation::PositiveLogprob { step } => write!(f, "step {step}: logprob above 0"),
            Violation::CandidatesUnsorted { step } => {
                write!(f, "step {step}: candidates not sorted by descending logprob")
            }
            Violation::CandidateMassExceedsOne { .. } => write!(f, "candidate mass exceeds 1"),
            Violation::ChosenOutsideTopK { step } => write!(
                f,
                "step {step}: chosen token missing from candidates and record not flagged chosen_outside_topk"
            ),
            Violation::CompletionMismatch => {
                write!(f, "completion differs from concatenated chosen tokens")
            }
        }
    }
}

/// Checks every record invariant; an empty result means the record is
/// safe to hand to any downstream analysis.
pub fn validate_record(record: &GenerationRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(record.temperature > 0.0 && record.temperature <= 1.0) {
        out.push(Violation::TemperatureOutOfRange(record.temperature));
    }
    if record.n_predict == 0 {
        out.push(Violation::NonPositiveNPredict);
    }
    if record.top_k == 0 || record.top_k > MAX_TOP_K {
        out.push(Violation::TopKOutOfRange(record.top_k));
    }
    if record.steps.len() > record.n_predict {
        out.push(Violation::TooManySteps {
            steps: record.steps.len(),
            n_predict: record.n_predict,
        });
    }

    for (i, step) in record.steps.iter().enumerate() {
        if step.candidates.len() > record.top_k {
            out.push(Violation::TooManyCandidates {
                step: i,
                count: step.candidates.len(),
            });
        }
        let logprobs = std::iter::once(step.chosen_logprob).chain(step.candidates.iter().map(|c| c.1));
        let mut non_finite = false;
        let mut positive = false;
        for lp in logprobs {
            non_finite |= !lp.is_finite();
            positive |= lp > 0.0;
        }
        if non_finite {
            out.push(Violation::NonFiniteLogprob { step: i });
            continue;
        }
        if positive {
            out.push(Violation::PositiveLogprob { step: i });
        }
        if step.candidates.windows(2).any(|w| w[0].1 < w[1].1) {
            out.push(Violation::CandidatesUnsorted { step: i });
        }
        let mass: f64 = step.candidates.iter().map(|c| c.1.exp()).sum();
        if mass > 1.0 + MASS_TOLERANCE {
            out.push(Violation::CandidateMassExceedsOne { step: i, mass });
        }
        if !record.chosen_outside_topk && !step.chosen_in_candidates() {
            out.push(Violation::ChosenOutsideTopK { step: i });
        }
    }

    if record.tokens_exact && record.has_steps() {
        let joined: String = record.steps.iter().map(|s| s.chosen_token.as_str()).collect();
        if joined != record.completion {
            out.push(Violation::CompletionMismatch);
        }
    }
    out
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn sorted_step() -> TokenStep {
        step(" a", &[(" a", 0.5), (" b", 0.2), (" c", 0.1), (" d", 0.1), (" e", 0.05)])
    }

    #[test]
    fn valid_record_has_no_violations() {
        let rec = record("r0", vec![sorted_step(), sorted_step()]);
        assert!(validate_record(&rec).is_empty(), "{:?}", validate_record(&rec));
    }

    #[test]
    fn temperature_above_one_is_flagged() {
        let mut rec = record("r0", vec![sorted_step()]);
        rec.temperature = 1.5;
        let v: Vec<String> = validate_record(&rec).iter().map(|v| v.to_string()).collect();
        assert_eq!(v, vec!["temperature out of (0,1]".to_string()]);
    }

    #[test]
    fn excess_candidate_mass_is_flagged() {
        let mut rec = record("r0", vec![step("x", &[("x", 0.6), ("y", 0.6)])]);
        rec.tokens_exact = false;
        let v: Vec<String> = validate_record(&rec).iter().map(|v| v.to_string()).collect();
        assert_eq!(v, vec!["candidate mass exceeds 1".to_string()]);
    }

    #[test]
    fn unsorted_and_outside_topk_are_flagged() {
        let mut rec = record("r0", vec![step("z", &[("x", 0.1), ("y", 0.3)])]);
        rec.tokens_exact = false;
        let v = validate_record(&rec);
        assert!(v.contains(&Violation::CandidatesUnsorted { step: 0 }));
        assert!(v.contains(&Violation::ChosenOutsideTopK { step: 0 }));
        rec.chosen_outside_topk = true;
        assert!(!validate_record(&rec).contains(&Violation::ChosenOutsideTopK { step: 0 }));
    }

    #[test]
    fn completion_mismatch_only_checked_when_tokens_exact() {
        let mut rec = record("r0", vec![sorted_step()]);
        rec.completion = "something else".into();
        assert_eq!(validate_record(&rec), vec![Violation::CompletionMismatch]);
        rec.tokens_exact = false;
        assert!(validate_record(&rec).is_empty());
    }

    #[test]
    fn too_many_steps() {
        let mut rec = record("r0", vec![sorted_step(), sorted_step()]);
        rec.n_predict = 1;
        assert!(matches!(validate_record(&rec)[0], Violation::TooManySteps { .. }));
    }

    #[test]
    fn empty_file_loads_as_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        fs::write(&p, "").unwrap();
        assert!(load_corpus(&p).unwrap().is_empty());
    }

    #[test]
    fn empty_corpus_saves_zero_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        save_corpus(&Corpus::default(), &p).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 0);
    }

    #[test]
    fn single_record_round_trips_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let q = dir.path().join("d.jsonl");
        let c = Corpus::new(vec![record("r0", vec![sorted_step()])]).unwrap();
        save_corpus(&c, &p).unwrap();
        let loaded = load_corpus(&p).unwrap();
        assert_eq!(loaded, c);
        save_corpus(&loaded, &q).unwrap();
        assert_eq!(fs::read(&p).unwrap(), fs::read(&q).unwrap());
    }

    #[test]
    fn emoji_text_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let mut rec = GenerationRecord::text_only("e", "Review:", "Love it 👍👍 ☕️", "m", epoch());
        rec.temperature = 0.7;
        let c = Corpus::new(vec![rec]).unwrap();
        save_corpus(&c, &p).unwrap();
        assert_eq!(load_corpus(&p).unwrap().records[0].completion, "Love it 👍👍 ☕️");
    }

    #[test]
    fn truncated_line_reports_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let recs = (0..3).map(|i| record(&format!("r{i}"), vec![sorted_step()])).collect();
        save_corpus(&Corpus::new(recs).unwrap(), &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let half = lines[1].len() / 2;
        lines[1].truncate(half);
        fs::write(&p, lines.join("\n") + "\n").unwrap();

        let err = load_corpus(&p).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");

        let (c, skipped) = load_corpus_lenient(&p).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(skipped.len(), 1);
        assert_eq!(skipped[0].line, 2);
    }

    #[test]
    fn thousand_records_make_thousand_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let recs = (0..1000)
            .map(|i| GenerationRecord::text_only(format!("r{i}"), "p", "c", "m", epoch()))
            .collect();
        save_corpus(&Corpus::new(recs).unwrap(), &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap().lines().count(), 1000);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = GenerationRecord::text_only("same", "p", "c", "m", epoch());
        assert!(Corpus::new(vec![a.clone(), a]).is_err());
    }

    #[test]
    fn provenance_round_trips_through_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let mut c = Corpus::new(vec![record("r0", vec![sorted_step()])]).unwrap();
        c.provenance.insert("endpoint".into(), "http://localhost:8080".into());
        c.provenance.insert("prompt_family".into(), "grace-hopper".into());
        save_corpus(&c, &p).unwrap();
        assert_eq!(load_corpus(&p).unwrap(), c);
        assert_eq!(fs::read_to_string(&p).unwrap().lines().count(), 1);
    }

    #[test]
    fn schema_uses_wire_field_names() {
        let rec = record("r0", vec![step("a", &[("a", 1.0)])]);
        let v: serde_json::Value = serde_json::to_value(&rec).unwrap();
        let step = &v["steps"][0];
        assert_eq!(step["token"], "a");
        assert!(step["logprob"].is_number());
        assert_eq!(step["candidates"][0][0], "a");
        for key in ["id", "prompt", "completion", "model_id", "temperature", "n_predict", "stopped_on_eos", "created_at"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["created_at"], "2024-05-01T12:00:00Z");
    }
}
