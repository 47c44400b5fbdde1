use chrono::DateTime;
use modescope::corpus::{load_corpus, load_corpus_lenient, save_corpus, validate_record, Corpus, GenerationRecord, TokenStep};
use modescope::synthetic::{corpus, Regime};
use proptest::prelude::*;

fn record_from(id: usize, text: &str, masses: &[Vec<f64>]) -> GenerationRecord {
    let steps: Vec<TokenStep> = masses
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let mut sorted = m.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let candidates: Vec<(String, f64)> = sorted.iter().enumerate().map(|(r, p)| (format!(" t{j}_{r}"), p.ln())).collect();
            TokenStep {
                chosen_token: candidates[0].0.clone(),
                chosen_logprob: candidates[0].1,
                candidates,
            }
        })
        .collect();
    GenerationRecord {
        id: format!("rec-{id}"),
        prompt: text.to_string(),
        completion: steps.iter().map(|s| s.chosen_token.as_str()).collect(),
        n_predict: steps.len().max(1),
        steps,
        model_id: "m".into(),
        temperature: 0.7,
        stopped_on_eos: id.is_multiple_of(2),
        created_at: DateTime::from_timestamp(1_700_000_000 + id as i64, 0).unwrap(),
        top_k: 5,
        tokens_exact: true,
        chosen_outside_topk: false,
    }
}

fn mass_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6f64..1.0, 1..=5).prop_map(|v| {
        let s: f64 = v.iter().sum::<f64>() * 1.01;
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_then_load_is_identity(
        prompts in prop::collection::vec("\\PC{0,40}", 0..8),
        masses in prop::collection::vec(prop::collection::vec(mass_vec(), 0..6), 8),
    ) {
        let records: Vec<GenerationRecord> = prompts.iter().enumerate().map(|(i, p)| record_from(i, p, &masses[i])).collect();
        for r in &records {
            prop_assert!(validate_record(r).is_empty(), "{:?}", validate_record(r));
        }
        let c = Corpus::new(records).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        save_corpus(&c, &path).unwrap();
        let back = load_corpus(&path).unwrap();
        prop_assert_eq!(&back.records, &c.records);
        let path2 = dir.path().join("c2.jsonl");
        save_corpus(&back, &path2).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }
}

#[test]
fn empty_corpus_is_an_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    save_corpus(&Corpus::default(), &path).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 0);
    assert!(load_corpus(&path).unwrap().is_empty());
}

#[test]
fn emoji_review_round_trips() {
    let r = GenerationRecord::text_only("e", "Write a review", " Love it 👍👍 ☕️", "m", DateTime::UNIX_EPOCH);
    let c = Corpus::new(vec![r]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.jsonl");
    save_corpus(&c, &path).unwrap();
    assert_eq!(load_corpus(&path).unwrap().records[0].completion, " Love it 👍👍 ☕️");
}

#[test]
fn thousand_records_make_thousand_lines() {
    let c = corpus(Regime::Cold, 1000, 9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.jsonl");
    save_corpus(&c, &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1000);
}

#[test]
fn truncated_line_is_reported_by_number() {
    let c = corpus(Regime::Hot, 3, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    save_corpus(&c, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let broken = format!("{}\n{}\n{}\n", lines[0], &lines[1][..lines[1].len() / 2], lines[2]);
    std::fs::write(&path, broken).unwrap();

    let err = load_corpus(&path).unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");

    let (c, skipped) = load_corpus_lenient(&path).unwrap();
    assert_eq!(c.len(), 2);
    assert_eq!(skipped.len(), 1);
    assert_eq!(skipped[0].line, 2);
}

#[test]
fn jsonl_field_names() {
    let c = corpus(Regime::Cold, 1, 1);
    let line = serde_json::to_value(&c.records[0]).unwrap();
    for field in ["id", "prompt", "completion", "steps", "model_id", "temperature", "n_predict", "stopped_on_eos", "created_at"] {
        assert!(line.get(field).is_some(), "{field}");
    }
    let step = &line["steps"][0];
    assert!(step["token"].is_string() && step["logprob"].is_number());
    assert!(step["candidates"][0].is_array());
    assert_eq!(line["created_at"], "2024-05-01T12:00:00Z");
}

#[test]
fn violations_are_named() {
    let mut r = record_from(0, "p", &[vec![0.5, 0.3]]);
    assert!(validate_record(&r).is_empty());
    r.temperature = 1.5;
    let v: Vec<String> = validate_record(&r).iter().map(ToString::to_string).collect();
    assert_eq!(v, ["temperature out of (0,1]"]);

    let mut r = record_from(0, "p", &[vec![0.5, 0.3]]);
    r.steps[0].candidates = vec![(" a".into(), 0.6f64.ln()), (" b".into(), 0.6f64.ln())];
    r.steps[0].chosen_token = " a".into();
    r.completion = " a".into();
    let v: Vec<String> = validate_record(&r).iter().map(ToString::to_string).collect();
    assert_eq!(v, ["candidate mass exceeds 1"]);
}

#[test]
fn duplicate_ids_are_rejected() {
    let a = GenerationRecord::text_only("same", "p", "x", "m", DateTime::UNIX_EPOCH);
    assert!(Corpus::new(vec![a.clone(), a]).is_err());
}
