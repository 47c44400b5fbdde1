//! Rule-based polarity scoring in the style of VADER (valence lookup plus
//! capitalization, degree-adverb, negation, contrastive "but" and
//! punctuation heuristics) over an external lexicon file.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::semantic::split_sentences;

pub const BOOST_INCREMENT: f64 = 0.293;
pub const CAPS_INCREMENT: f64 = 0.733;
pub const NEGATION_SCALAR: f64 = -0.74;
pub const NORMALIZATION_ALPHA: f64 = 15.0;
pub const MAX_VALENCE: f64 = 4.0;
pub const DEFAULT_BINS: usize = 40;

const EXCLAMATION_INCREMENT: f64 = 0.292;
const QUESTION_INCREMENT: f64 = 0.18;
const QUESTION_FLOOD: f64 = 0.96;

const ASCII_PUNCTUATION: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

pub const NEGATIONS: &[&str] = &[
    "aint", "arent", "cannot", "cant", "couldnt", "darent", "didnt", "doesnt", "ain't", "aren't", "can't",
    "couldn't", "daren't", "didn't", "doesn't", "dont", "hadnt", "hasnt", "havent", "isnt", "mightnt",
    "mustnt", "neither", "don't", "hadn't", "hasn't", "haven't", "isn't", "mightn't", "mustn't", "neednt",
    "needn't", "never", "none", "nope", "nor", "not", "nothing", "nowhere", "oughtnt", "shant", "shouldnt",
    "uhuh", "wasnt", "werent", "oughtn't", "shan't", "shouldn't", "uh-uh", "wasn't", "weren't", "without",
    "wont", "wouldnt", "won't", "wouldn't", "rarely", "seldom", "despite",
];

const BOOSTERS_UP: &[&str] = &[
    "absolutely", "amazingly", "awfully", "completely", "considerable", "considerably", "decidedly", "deeply",
    "effing", "enormous", "enormously", "entirely", "especially", "exceptional", "exceptionally", "extreme",
    "extremely", "fabulously", "flipping", "flippin", "frackin", "fracking", "fricking", "frickin", "frigging",
    "friggin", "fully", "fuckin", "fucking", "fuggin", "fugging", "greatly", "hella", "highly", "hugely",
    "incredible", "incredibly", "intensely", "major", "majorly", "more", "most", "particularly", "purely",
    "quite", "really", "remarkably", "so", "substantially", "thoroughly", "total", "totally", "tremendous",
    "tremendously", "uber", "unbelievably", "unusually", "utter", "utterly", "very",
];

const BOOSTERS_DOWN: &[&str] = &[
    "almost", "barely", "hardly", "just enough", "kind of", "kinda", "kindof", "kind-of", "less", "little",
    "marginal", "marginally", "occasional", "occasionally", "partly", "scarce", "scarcely", "slight",
    "slightly", "somewhat", "sort of", "sorta", "sortof", "sort-of",
];

const SPECIAL_CASES: &[(&str, f64)] = &[
    ("the shit", 3.0),
    ("the bomb", 3.0),
    ("bad ass", 1.5),
    ("badass", 1.5),
    ("bus stop", 0.0),
    ("yeah right", -2.0),
    ("kiss of death", -1.5),
    ("to die for", 3.0),
    ("beating heart", 3.5),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentScore {
    pub compound: f64,
    pub pos: f64,
    pub neu: f64,
    pub neg: f64,
}

impl SentimentScore {
    pub const NEUTRAL: SentimentScore = SentimentScore {
        compound: 0.0,
        pos: 0.0,
        neu: 1.0,
        neg: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentimentLexicon {
    pub valences: HashMap<String, f64>,
    /// Degree adverbs and their signed increment.
    pub boosters: HashMap<String, f64>,
    pub negations: HashSet<String>,
    /// Single-character emoji to textual description, substituted before scoring.
    pub emoji: HashMap<char, String>,
}

impl SentimentLexicon {
    /// Valence table plus the standard booster and negation lists.
    pub fn from_valences(valences: HashMap<String, f64>) -> Result<Self> {
        if valences.is_empty() {
            return Err(Error::invalid("empty lexicon"));
        }
        if let Some((w, v)) = valences.iter().find(|(_, v)| !(v.abs() <= MAX_VALENCE)) {
            return Err(Error::invalid(format!("valence {v} for {w:?} outside [-4,4]")));
        }
        let boosters = BOOSTERS_UP
            .iter()
            .map(|w| (w.to_string(), BOOST_INCREMENT))
            .chain(BOOSTERS_DOWN.iter().map(|w| (w.to_string(), -BOOST_INCREMENT)))
            .collect();
        Ok(SentimentLexicon {
            valences,
            boosters,
            negations: NEGATIONS.iter().map(|w| w.to_string()).collect(),
            emoji: HashMap::new(),
        })
    }

    /// Loads an emoji description table (`emoji \t description`).
    pub fn with_emoji_file(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for line in text.lines() {
            let mut cols = line.trim().split('\t');
            let (Some(key), Some(desc)) = (cols.next(), cols.next()) else {
                continue;
            };
            let mut chars = key.chars();
            // multi-codepoint sequences never match a single character of input
            if let (Some(c), None) = (chars.next(), chars.next()) {
                self.emoji.insert(c, desc.to_string());
            }
        }
        Ok(self)
    }

    /// Same lexicon with every valence sign-flipped.
    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        for v in out.valences.values_mut() {
            *v = -*v;
        }
        out
    }

    pub fn len(&self) -> usize {
        self.valences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valences.is_empty()
    }

    fn valence(&self, lower: &str) -> Option<f64> {
        self.valences.get(lower).copied()
    }

    fn contains(&self, lower: &str) -> bool {
        self.valences.contains_key(lower)
    }

    fn is_negation(&self, lower: &str) -> bool {
        self.negations.contains(lower) || lower.contains("n't")
    }
}

/// Reads `token \t valence [\t ...]` lines; extra columns are ignored.
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<SentimentLexicon> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut valences = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_matches(|c| c == '\r' || c == '\n');
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let token = cols.next().unwrap_or_default().trim();
        let malformed = |message: String| Error::MalformedLine {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let raw = cols.next().ok_or_else(|| malformed("missing valence column".into()))?;
        let v: f64 = raw
            .trim()
            .parse()
            .map_err(|_| malformed(format!("unparseable valence {raw:?}")))?;
        if !(v.abs() <= MAX_VALENCE) {
            return Err(malformed(format!("valence {v} outside [-4,4]")));
        }
        if valences.insert(token.to_string(), v).is_some() {
            log::warn!("{}: duplicate lexicon entry {token:?}; keeping the later value", path.display());
        }
    }
    if valences.is_empty() {
        return Err(Error::invalid(format!("{}: empty lexicon", path.display())));
    }
    SentimentLexicon::from_valences(valences)
}

/// Python `str.isupper`: at least one cased character and no lowercase ones.
fn is_upper(word: &str) -> bool {
    word.chars().any(|c| c.is_uppercase()) && !word.chars().any(|c| c.is_lowercase())
}

fn strip_punctuation(token: &str) -> &str {
    let stripped = token.trim_matches(|c| ASCII_PUNCTUATION.contains(c));
    if stripped.chars().count() <= 2 {
        token
    } else {
        stripped
    }
}

fn replace_emoji(text: &str, lex: &SentimentLexicon) -> String {
    if lex.emoji.is_empty() {
        return text.trim().to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut prev_space = true;
    for c in text.chars() {
        if let Some(desc) = lex.emoji.get(&c) {
            if !prev_space {
                out.push(' ');
            }
            out.push_str(desc);
            prev_space = false;
        } else {
            out.push(c);
            prev_space = c == ' ';
        }
    }
    out.trim().to_string()
}

struct Words<'a> {
    raw: Vec<&'a str>,
    lower: Vec<String>,
    cap_differential: bool,
}

impl<'a> Words<'a> {
    fn new(text: &'a str) -> Self {
        let raw: Vec<&str> = text.split_whitespace().map(strip_punctuation).collect();
        let lower = raw.iter().map(|w| w.to_lowercase()).collect();
        let caps = raw.iter().filter(|w| is_upper(w)).count();
        let cap_differential = caps > 0 && caps < raw.len();
        Words {
            raw,
            lower,
            cap_differential,
        }
    }

    fn len(&self) -> usize {
        self.raw.len()
    }
}

fn booster_scalar(lex: &SentimentLexicon, word: &str, lower: &str, valence: f64, cap_diff: bool) -> f64 {
    let Some(&b) = lex.boosters.get(lower) else {
        return 0.0;
    };
    let mut scalar = if valence < 0.0 { -b } else { b };
    if is_upper(word) && cap_diff {
        scalar += if valence > 0.0 { CAPS_INCREMENT } else { -CAPS_INCREMENT };
    }
    scalar
}

fn negation_check(lex: &SentimentLexicon, valence: f64, w: &[String], dist: usize, i: usize) -> f64 {
    match dist {
        0 => {
            if lex.is_negation(&w[i - 1]) {
                return valence * NEGATION_SCALAR;
            }
        }
        1 => {
            if w[i - 2] == "never" && (w[i - 1] == "so" || w[i - 1] == "this") {
                return valence * 1.25;
            } else if w[i - 2] == "without" && w[i - 1] == "doubt" {
                return valence;
            } else if lex.is_negation(&w[i - 2]) {
                return valence * NEGATION_SCALAR;
            }
        }
        _ => {
            if (w[i - 3] == "never" && (w[i - 2] == "so" || w[i - 2] == "this"))
                || (w[i - 1] == "so" || w[i - 1] == "this")
            {
                return valence * 1.25;
            } else if w[i - 3] == "without" && (w[i - 2] == "doubt" || w[i - 1] == "doubt") {
                return valence;
            } else if lex.is_negation(&w[i - 3]) {
                return valence * NEGATION_SCALAR;
            }
        }
    }
    valence
}

fn special_case(seq: &str) -> Option<f64> {
    SPECIAL_CASES.iter().find(|(k, _)| *k == seq).map(|(_, v)| *v)
}

fn idiom_check(lex: &SentimentLexicon, mut valence: f64, w: &[String], i: usize) -> f64 {
    let one_zero = format!("{} {}", w[i - 1], w[i]);
    let two_one_zero = format!("{} {} {}", w[i - 2], w[i - 1], w[i]);
    let two_one = format!("{} {}", w[i - 2], w[i - 1]);
    let three_two_one = format!("{} {} {}", w[i - 3], w[i - 2], w[i - 1]);
    let three_two = format!("{} {}", w[i - 3], w[i - 2]);
    for seq in [&one_zero, &two_one_zero, &two_one, &three_two_one, &three_two] {
        if let Some(v) = special_case(seq) {
            valence = v;
            break;
        }
    }
    if w.len() - 1 > i {
        if let Some(v) = special_case(&format!("{} {}", w[i], w[i + 1])) {
            valence = v;
        }
    }
    if w.len() - 1 > i + 1 {
        if let Some(v) = special_case(&format!("{} {} {}", w[i], w[i + 1], w[i + 2])) {
            valence = v;
        }
    }
    for gram in [&three_two_one, &three_two, &two_one] {
        if let Some(b) = lex.boosters.get(gram.as_str()) {
            valence += b;
        }
    }
    valence
}

fn least_check(lex: &SentimentLexicon, valence: f64, w: &[String], i: usize) -> f64 {
    if i > 1 && !lex.contains(&w[i - 1]) && w[i - 1] == "least" {
        if w[i - 2] != "at" && w[i - 2] != "very" {
            return valence * NEGATION_SCALAR;
        }
    } else if i > 0 && !lex.contains(&w[i - 1]) && w[i - 1] == "least" {
        return valence * NEGATION_SCALAR;
    }
    valence
}

fn word_valence(lex: &SentimentLexicon, words: &Words, i: usize) -> f64 {
    let w = &words.lower;
    let Some(base) = lex.valence(&w[i]) else {
        return 0.0;
    };
    let mut valence = base;
    if w[i] == "no" && i + 1 != words.len() && lex.contains(&w[i + 1]) {
        valence = 0.0;
    }
    if (i > 0 && w[i - 1] == "no")
        || (i > 1 && w[i - 2] == "no")
        || (i > 2 && w[i - 3] == "no" && (w[i - 1] == "or" || w[i - 1] == "nor"))
    {
        valence = base * NEGATION_SCALAR;
    }
    if is_upper(words.raw[i]) && words.cap_differential {
        valence += if valence > 0.0 { CAPS_INCREMENT } else { -CAPS_INCREMENT };
    }
    for dist in 0..3 {
        if i > dist && !lex.contains(&w[i - dist - 1]) {
            let mut s = booster_scalar(lex, words.raw[i - dist - 1], &w[i - dist - 1], valence, words.cap_differential);
            if dist == 1 && s != 0.0 {
                s *= 0.95;
            }
            if dist == 2 && s != 0.0 {
                s *= 0.9;
            }
            valence += s;
            valence = negation_check(lex, valence, w, dist, i);
            if dist == 2 {
                valence = idiom_check(lex, valence, w, i);
            }
        }
    }
    least_check(lex, valence, w, i)
}

/// Contrastive "but": halves sentiment before the first "but" and boosts
/// it by half after. Each value is located by its first equal occurrence,
/// so repeated values are rescaled at that position only.
fn but_check(lower: &[String], sentiments: &mut [f64]) {
    let Some(bi) = lower.iter().position(|w| w == "but") else {
        return;
    };
    for k in 0..sentiments.len() {
        let v = sentiments[k];
        let si = sentiments.iter().position(|x| *x == v).unwrap_or(k);
        if si < bi {
            sentiments[si] = v * 0.5;
        } else if si > bi {
            sentiments[si] = v * 1.5;
        }
    }
}

fn punctuation_emphasis(text: &str) -> f64 {
    let ep = text.matches('!').count().min(4) as f64 * EXCLAMATION_INCREMENT;
    let qm = match text.matches('?').count() {
        0 | 1 => 0.0,
        n @ 2..=3 => n as f64 * QUESTION_INCREMENT,
        _ => QUESTION_FLOOD,
    };
    ep + qm
}

/// `x / sqrt(x² + alpha)`, clamped to [-1, 1].
pub fn normalize(score: f64, alpha: f64) -> f64 {
    (score / (score * score + alpha).sqrt()).clamp(-1.0, 1.0)
}

/// Scores `text`. Unknown tokens contribute nothing; text without any
/// tokens is fully neutral.
pub fn score(text: &str, lex: &SentimentLexicon) -> SentimentScore {
    let text = replace_emoji(text, lex);
    let words = Words::new(&text);
    if words.len() == 0 {
        return SentimentScore::NEUTRAL;
    }
    let mut sentiments = Vec::with_capacity(words.len());
    for i in 0..words.len() {
        let w = &words.lower[i];
        let skip = lex.boosters.contains_key(w.as_str())
            || (w == "kind" && i + 1 < words.len() && words.lower[i + 1] == "of");
        sentiments.push(if skip { 0.0 } else { word_valence(lex, &words, i) });
    }
    but_check(&words.lower, &mut sentiments);

    let emphasis = punctuation_emphasis(&text);
    let mut sum: f64 = sentiments.iter().sum();
    if sum > 0.0 {
        sum += emphasis;
    } else if sum < 0.0 {
        sum -= emphasis;
    }
    let compound = normalize(sum, NORMALIZATION_ALPHA);

    let mut pos_sum = 0.0;
    let mut neg_sum = 0.0;
    let mut neu_count = 0.0;
    for &s in &sentiments {
        if s > 0.0 {
            pos_sum += s + 1.0;
        }
        if s < 0.0 {
            neg_sum += s - 1.0;
        }
        if s == 0.0 {
            neu_count += 1.0;
        }
    }
    if pos_sum > neg_sum.abs() {
        pos_sum += emphasis;
    } else if pos_sum < neg_sum.abs() {
        neg_sum -= emphasis;
    }
    let total = pos_sum + neg_sum.abs() + neu_count;
    SentimentScore {
        compound,
        pos: (pos_sum / total).abs(),
        neu: (neu_count / total).abs(),
        neg: (neg_sum / total).abs(),
    }
}

/// Which part of each completion gets scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextSelector {
    #[default]
    Completion,
    /// Text after the persona `Review:` marker; records without one are skipped.
    Review,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::invalid("histogram needs bins > 0 and hi > lo"));
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            if !(lo..=hi).contains(&v) {
                continue;
            }
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Ok(Histogram { edges, counts })
    }

    pub fn nonzero_bins(&self) -> usize {
        self.counts.iter().filter(|c| **c > 0).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentDistribution {
    pub scores: Vec<SentimentScore>,
    /// Record id for each score (repeated when scoring per sentence).
    pub record_ids: Vec<String>,
    pub histogram: Histogram,
    pub per_sentence: bool,
}

impl SentimentDistribution {
    pub fn compounds(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.compound).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentOptions {
    pub selector: TextSelector,
    pub bins: usize,
    /// Score each sentence separately instead of whole texts.
    pub per_sentence: bool,
}

impl Default for SentimentOptions {
    fn default() -> Self {
        SentimentOptions {
            selector: TextSelector::Completion,
            bins: DEFAULT_BINS,
            per_sentence: false,
        }
    }
}

pub fn corpus_sentiment_distribution(
    corpus: &Corpus,
    lex: &SentimentLexicon,
    opts: &SentimentOptions,
) -> Result<SentimentDistribution> {
    let mut scores = Vec::new();
    let mut record_ids = Vec::new();
    for rec in &corpus.records {
        let text = match opts.selector {
            TextSelector::Completion => Some(rec.completion.as_str()),
            TextSelector::Review => crate::persona::review_text(&rec.completion),
        };
        let Some(text) = text else { continue };
        if opts.per_sentence {
            for s in split_sentences(text, 1) {
                scores.push(score(&s, lex));
                record_ids.push(rec.id.clone());
            }
        } else {
            scores.push(score(text, lex));
            record_ids.push(rec.id.clone());
        }
    }
    if scores.is_empty() {
        return Err(Error::invalid("no texts selected for sentiment scoring"));
    }
    let compounds: Vec<f64> = scores.iter().map(|s| s.compound).collect();
    Ok(SentimentDistribution {
        histogram: Histogram::new(&compounds, -1.0, 1.0, opts.bins)?,
        scores,
        record_ids,
        per_sentence: opts.per_sentence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mini() -> SentimentLexicon {
        let v = [("good", 1.9), ("bad", -2.5), ("great", 3.1), ("cold", -0.3), ("love", 3.2)];
        SentimentLexicon::from_valences(v.iter().map(|(k, v)| (k.to_string(), *v)).collect()).unwrap()
    }

    #[test]
    fn empty_text_is_neutral() {
        assert_eq!(score("", &mini()), SentimentScore::NEUTRAL);
        assert_eq!(score("   ", &mini()), SentimentScore::NEUTRAL);
    }

    #[test]
    fn single_word_closed_form() {
        let s = score("good", &mini());
        assert!((s.compound - 1.9 / (1.9f64 * 1.9 + 15.0).sqrt()).abs() < 1e-12);
        assert!((s.pos - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negation_flips_and_scales() {
        let s = score("not good", &mini());
        let v = 1.9 * NEGATION_SCALAR;
        assert!((s.compound - v / (v * v + 15.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn booster_adds_increment() {
        let s = score("very good", &mini());
        let v = 1.9 + BOOST_INCREMENT;
        assert!((s.compound - v / (v * v + 15.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn caps_emphasis_needs_mixed_case() {
        let mixed = score("GOOD coffee", &mini()).compound;
        let plain = score("good coffee", &mini()).compound;
        let all = score("GOOD COFFEE", &mini()).compound;
        assert!(mixed > plain);
        assert_eq!(all, plain);
    }

    #[test]
    fn but_reweights_clauses() {
        let s = score("good but bad", &mini());
        let sum = 1.9 * 0.5 - 2.5 * 1.5;
        assert!((s.compound - normalize(sum, 15.0)).abs() < 1e-12);
    }

    #[test]
    fn exclamations_cap_at_four() {
        let four = score("good!!!!", &mini()).compound;
        let six = score("good!!!!!!", &mini()).compound;
        assert_eq!(four, six);
        assert!(four > score("good", &mini()).compound);
    }

    #[test]
    fn histogram_closed_on_right() {
        let h = Histogram::new(&[-1.0, 1.0, 0.0], -1.0, 1.0, 4).unwrap();
        assert_eq!(h.counts, vec![1, 0, 1, 1]);
    }

    #[test]
    fn duplicate_entries_last_wins() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lex.tsv");
        std::fs::write(&p, "good\t1.0\ngood\t2.0\n").unwrap();
        let lex = load_lexicon(&p).unwrap();
        assert_eq!(lex.len(), 1);
        assert_eq!(lex.valences["good"], 2.0);
    }

    #[test]
    fn unparseable_valence_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lex.tsv");
        std::fs::write(&p, "good\tvery\n").unwrap();
        let err = load_lexicon(&p).unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
