//! Seeded constructors for corpora and point clouds with known structure.

use chrono::{DateTime, Utc};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{Corpus, GenerationRecord, TokenStep, DEFAULT_TOP_K};
use crate::error::{Error, Result};
use crate::rng::seeded;

const TOPICS: [&[&str]; 6] = [
    &["compiler", "navy", "admiral", "bug", "cobol", "program", "machine", "code", "harvard", "mark"],
    &["river", "canoe", "pine", "trail", "summit", "cabin", "fog", "moss", "lake", "granite"],
    &["violin", "sonata", "tempo", "choir", "opera", "rehearsal", "melody", "bass", "chord", "encore"],
    &["saffron", "oven", "dough", "basil", "simmer", "pepper", "crust", "garlic", "ladle", "broth"],
    &["orbit", "comet", "nebula", "rocket", "crater", "lunar", "telescope", "quasar", "galaxy", "probe"],
    &["ledger", "invoice", "tariff", "audit", "bond", "equity", "margin", "dividend", "broker", "asset"],
];

const COLD_TEMPLATE: [&str; 12] = [
    "Grace", "Hopper", "was", "an", "American", "computer", "scientist", "and", "United", "States", "Navy", "rear",
];
const COLD_ENDINGS: [&str; 2] = ["admiral", "officer"];

const COLD_MASSES: [f64; 5] = [0.9, 0.04, 0.03, 0.02, 0.01];
const FILLER: [&str; 8] = ["the", "a", "of", "and", "to", "in", "is", "that"];

/// How a synthetic corpus is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Near-uniform top-5 masses; texts drawn from six disjoint topic
    /// vocabularies.
    Hot,
    /// Peaked top-5 masses; texts are one template with two possible endings.
    Cold,
}

fn created_at() -> DateTime<Utc> {
    DateTime::from_timestamp(1_714_564_800, 0).expect("valid timestamp")
}

fn step_for(word: &str, regime: Regime, rng: &mut impl Rng) -> TokenStep {
    let token = format!(" {word}");
    let masses: Vec<f64> = match regime {
        Regime::Cold => COLD_MASSES.to_vec(),
        Regime::Hot => {
            let mut m: Vec<f64> = (0..DEFAULT_TOP_K).map(|_| 0.18 + 0.02 * rng.random::<f64>()).collect();
            m.sort_by(|a, b| b.total_cmp(a));
            m
        }
    };
    let chosen_rank = match regime {
        Regime::Cold => 0,
        Regime::Hot => rng.random_range(0..DEFAULT_TOP_K),
    };
    let mut fillers = FILLER.iter().filter(|f| **f != word);
    let candidates: Vec<(String, f64)> = masses
        .iter()
        .enumerate()
        .map(|(rank, p)| {
            let t = if rank == chosen_rank {
                token.clone()
            } else {
                format!(" {}", fillers.next().expect("enough filler words"))
            };
            (t, p.ln())
        })
        .collect();
    TokenStep {
        chosen_token: token,
        chosen_logprob: masses[chosen_rank].ln(),
        candidates,
    }
}

/// `n` records with per-token top-5 data. Deterministic in `seed`.
pub fn corpus(regime: Regime, n: usize, seed: u64) -> Corpus {
    let mut rng = seeded(seed, 0x5e7);
    let mut records = Vec::with_capacity(n);
    let tag = match regime {
        Regime::Hot => "hot",
        Regime::Cold => "cold",
    };
    for i in 0..n {
        let words: Vec<&str> = match regime {
            Regime::Hot => {
                let topic = TOPICS[i % TOPICS.len()];
                (0..10).map(|_| *topic.choose(&mut rng).expect("non-empty topic")).collect()
            }
            Regime::Cold => {
                let mut w = COLD_TEMPLATE.to_vec();
                w.push(COLD_ENDINGS[rng.random_range(0..COLD_ENDINGS.len())]);
                w
            }
        };
        let steps: Vec<TokenStep> = words.iter().map(|w| step_for(w, regime, &mut rng)).collect();
        let completion: String = steps.iter().map(|s| s.chosen_token.as_str()).collect();
        records.push(GenerationRecord {
            id: format!("{tag}-{i:05}"),
            prompt: "Grace Hopper was".into(),
            completion,
            n_predict: steps.len(),
            steps,
            model_id: format!("synthetic-{tag}"),
            temperature: 1.0,
            stopped_on_eos: true,
            created_at: created_at(),
            top_k: DEFAULT_TOP_K,
            tokens_exact: true,
            chosen_outside_topk: false,
        });
    }
    let mut c = Corpus::new(records).expect("ids are unique by construction");
    c.provenance.insert("generator".into(), format!("synthetic {tag}, seed {seed}"));
    c
}

const FIRST_NAMES: [&str; 8] = ["Emily", "Raj", "Sofia", "Kwame", "Mei", "Lars", "Amara", "Diego"];
const LAST_NAMES: [&str; 8] = ["Chen", "Patel", "Rossi", "Mensah", "Wong", "Berg", "Okafor", "Lopez"];
const GENDERS: [&str; 3] = ["Female", "Male", "Non-binary"];
const NATIONALITIES: [&str; 6] = ["American", "Indian", "Italian", "Ghanaian", "Swedish", "Mexican"];
const ETHNICITIES: [&str; 5] = ["Asian", "White", "Black", "Hispanic", "Mixed"];
const MBTI: [&str; 6] = ["INTJ", "ENFP", "ISTJ", "ESFJ", "INFP", "ENTP"];
const REVIEWS: [&str; 4] = [
    "I love this machine. My coffee stays warm and the app is great.",
    "The connection keeps dropping. I am disappointed and the coffee gets cold.",
    "It works as described. Setup took ten minutes.",
    "Absolutely wonderful gadget! Best purchase this year.",
];

/// Persona-format completions. `Cold` repeats one persona with small
/// review variations; `Hot` cycles through varied attribute values.
pub fn persona_corpus(regime: Regime, n: usize, seed: u64) -> Corpus {
    let mut rng = seeded(seed, 0x9e5);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let pick = |xs: &[&'static str], rng: &mut rand_chacha::ChaCha8Rng| match regime {
            Regime::Cold => xs[0],
            Regime::Hot => *xs.choose(rng).expect("non-empty"),
        };
        let first = pick(&FIRST_NAMES, &mut rng);
        let last = pick(&LAST_NAMES, &mut rng);
        let gender = pick(&GENDERS, &mut rng);
        let nationality = pick(&NATIONALITIES, &mut rng);
        let ethnicity = pick(&ETHNICITIES, &mut rng);
        let mbti = pick(&MBTI, &mut rng);
        let age = match regime {
            Regime::Cold => 32 + (i % 2) as u32,
            Regime::Hot => rng.random_range(18..80),
        };
        let review = REVIEWS[match regime {
            Regime::Cold => i % 2,
            Regime::Hot => rng.random_range(0..REVIEWS.len()),
        }];
        let completion = format!(
            " First Name: {first}\nLast Name: {last}\nGender: {gender}\nAge: {age}\nNationality: {nationality}\nEthnicity: {ethnicity}\nPersonality Type: {mbti}\nReview: {review}"
        );
        records.push(GenerationRecord::text_only(
            format!("persona-{i:05}"),
            "Create one fictional customer persona",
            completion,
            "synthetic",
            created_at(),
        ));
    }
    Corpus::new(records).expect("ids are unique by construction")
}

/// Isotropic Gaussian samples around each center, with their center index.
pub fn gaussian_blobs(centers: &[Vec<f64>], n_per: usize, sigma: f64, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    if centers.is_empty() || !(sigma > 0.0) {
        return Err(Error::invalid("need at least one center and a positive sigma"));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = seeded(seed, 0xb10b);
    let mut points = Vec::with_capacity(centers.len() * n_per);
    let mut labels = Vec::with_capacity(centers.len() * n_per);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..n_per {
            points.push(center.iter().map(|x| x + normal.sample(&mut rng)).collect());
            labels.push(c);
        }
    }
    Ok((points, labels))
}
