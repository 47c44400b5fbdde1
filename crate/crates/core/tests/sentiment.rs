use std::path::PathBuf;

use modescope::corpus::{Corpus, GenerationRecord};
use modescope::sentiment::{
    corpus_sentiment_distribution, load_lexicon, score, SentimentLexicon, SentimentOptions, TextSelector,
};
use proptest::prelude::*;
use serde::Deserialize;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(name)
}

fn full_lexicon() -> SentimentLexicon {
    load_lexicon(data("data/vader_lexicon.txt"))
        .unwrap()
        .with_emoji_file(data("data/emoji_utf8_lexicon.txt"))
        .unwrap()
}

#[derive(Deserialize)]
struct OracleRow {
    text: String,
    compound: f64,
    pos: f64,
    neu: f64,
    neg: f64,
}

fn oracle() -> Vec<OracleRow> {
    let text = std::fs::read_to_string(data("tests/data/vader_oracle.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn reference_lexicon_size() {
    let lex = full_lexicon();
    assert!(lex.len() >= 7000, "{}", lex.len());
    assert!(!lex.emoji.is_empty());
}

#[test]
fn mini_lexicon_loads() {
    assert_eq!(load_lexicon(data("tests/data/mini_lexicon.tsv")).unwrap().len(), 50);
}

#[test]
fn two_line_and_empty_lexicons() {
    let dir = tempfile::tempdir().unwrap();
    let two = dir.path().join("two.tsv");
    std::fs::write(&two, "good\t1.9\nbad\t-2.5\n").unwrap();
    assert_eq!(load_lexicon(&two).unwrap().len(), 2);
    let empty = dir.path().join("empty.tsv");
    std::fs::write(&empty, "").unwrap();
    let err = load_lexicon(&empty).unwrap_err();
    assert!(err.to_string().contains("empty lexicon"));
}

#[test]
fn matches_reference_implementation() {
    let lex = full_lexicon();
    let rows = oracle();
    assert_eq!(rows.len(), 50);
    for row in rows {
        let s = score(&row.text, &lex);
        assert!((s.compound - row.compound).abs() < 1e-6, "{:?}: {} vs {}", row.text, s.compound, row.compound);
        assert!((s.pos - row.pos).abs() < 1e-6, "{:?} pos", row.text);
        assert!((s.neu - row.neu).abs() < 1e-6, "{:?} neu", row.text);
        assert!((s.neg - row.neg).abs() < 1e-6, "{:?} neg", row.text);
    }
}

#[test]
fn worked_examples() {
    let lex = full_lexicon();
    let s = score("VADER is smart, handsome, and funny.", &lex);
    assert!((s.compound - 0.8316).abs() < 5e-5);
    // "cold" has no lexicon entry, so the reference scores this sentence as neutral
    assert_eq!(score("The coffee is always cold when I get back to my office.", &lex).compound, 0.0);
    let e = score("", &lex);
    assert_eq!((e.compound, e.neu), (0.0, 1.0));
}

fn record(id: &str, text: &str) -> GenerationRecord {
    GenerationRecord::text_only(id, "p", text, "m", chrono::DateTime::UNIX_EPOCH)
}

#[test]
fn empty_reviews_score_zero() {
    let lex = full_lexicon();
    let c = Corpus::new(vec![record("a", ""), record("b", "")]).unwrap();
    let d = corpus_sentiment_distribution(&c, &lex, &SentimentOptions::default()).unwrap();
    assert!(d.compounds().iter().all(|c| *c == 0.0));
}

#[test]
fn bimodal_fixture_fills_two_bins() {
    let lex = full_lexicon();
    let c = Corpus::new(vec![
        record("a", "I love this wonderful machine, it is amazing!"),
        record("b", "Horrible, broken and useless. I hate it!"),
    ])
    .unwrap();
    let d = corpus_sentiment_distribution(&c, &lex, &SentimentOptions::default()).unwrap();
    assert_eq!(d.histogram.counts.len(), 40);
    assert_eq!(d.histogram.nonzero_bins(), 2);
}

#[test]
fn review_selector_and_per_sentence() {
    let lex = full_lexicon();
    let c = Corpus::new(vec![
        record("a", "First Name: Emily\nReview: I love it so much. The coffee is always cold when I get back."),
        record("b", "no persona here"),
    ])
    .unwrap();
    let opts = SentimentOptions {
        selector: TextSelector::Review,
        per_sentence: true,
        ..Default::default()
    };
    let d = corpus_sentiment_distribution(&c, &lex, &opts).unwrap();
    assert_eq!(d.scores.len(), 2);
    assert_eq!(d.record_ids, vec!["a", "a"]);
    let none = Corpus::new(vec![record("b", "no persona here")]).unwrap();
    let opts = SentimentOptions {
        selector: TextSelector::Review,
        ..Default::default()
    };
    assert!(corpus_sentiment_distribution(&none, &lex, &opts).is_err());
}

fn plain_words() -> impl Strategy<Value = String> {
    let words = vec![
        "good", "bad", "coffee", "machine", "great", "love", "hate", "warm", "nice", "awful", "broken", "the",
        "it", "is", "happy", "sad",
    ];
    proptest::collection::vec(proptest::sample::select(words), 0..12).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn scores_are_well_formed(text in ".{0,80}") {
        let lex = load_lexicon(data("tests/data/mini_lexicon.tsv")).unwrap();
        let s = score(&text, &lex);
        prop_assert!((-1.0..=1.0).contains(&s.compound));
        prop_assert!((s.pos + s.neu + s.neg - 1.0).abs() < 1e-6);
    }

    #[test]
    fn negated_lexicon_negates_compound(text in plain_words()) {
        let lex = load_lexicon(data("tests/data/mini_lexicon.tsv")).unwrap();
        let a = score(&text, &lex).compound;
        let b = score(&text, &lex.negated()).compound;
        prop_assert!((a + b).abs() < 1e-12);
    }

    #[test]
    fn trailing_whitespace_is_ignored(text in ".{0,60}", pad in "[ \t\n]{0,5}") {
        let lex = load_lexicon(data("tests/data/mini_lexicon.tsv")).unwrap();
        prop_assert_eq!(score(&text, &lex), score(&format!("{text}{pad}"), &lex));
    }

    #[test]
    fn normalization_saturates_monotonically(x in 0.0f64..1e6, dx in 0.001f64..100.0) {
        let n = modescope::sentiment::normalize;
        prop_assert!(n(x + dx, 15.0) >= n(x, 15.0));
        prop_assert!(n(-x - dx, 15.0) <= n(-x, 15.0));
        prop_assert!(n(x, 15.0) < 1.0 || x > 1e3);
    }
}
