//! Tokenization, sentence splitting and sparse-to-dense text vectorizers.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hasher;

use fnv::FnvHasher;

use super::{EmbeddingMatrix, EmbeddingSource};
use crate::error::{Error, Result};

/// Rough Extended_Pictographic test: the main emoji blocks plus the
/// miscellaneous-symbols and dingbats ranges.
pub fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF | 0x2600..=0x27BF | 0x2B00..=0x2BFF | 0x2190..=0x21FF | 0x2300..=0x23FF)
}

/// Lowercases, splits on non-alphanumeric boundaries and keeps tokens of
/// at least two characters. Each emoji becomes its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let flush = |current: &mut String, tokens: &mut Vec<String>| {
        if current.chars().count() >= 2 {
            tokens.push(std::mem::take(current));
        } else {
            current.clear();
        }
    };
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else {
            flush(&mut current, &mut tokens);
            if is_emoji(c) {
                tokens.push(c.to_string());
            }
        }
    }
    flush(&mut current, &mut tokens);
    tokens
}

/// Splits on `.`, `!` or `?` followed by whitespace, and on newlines.
/// Fragments with fewer than `min_tokens` tokens are dropped.
pub fn split_sentences(text: &str, min_tokens: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\n' {
            push_sentence(&mut out, &mut current, min_tokens);
            continue;
        }
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_some_and(|n| n.is_whitespace()) {
            push_sentence(&mut out, &mut current, min_tokens);
        }
    }
    push_sentence(&mut out, &mut current, min_tokens);
    out
}

fn push_sentence(out: &mut Vec<String>, current: &mut String, min_tokens: usize) {
    let s = current.trim();
    if !s.is_empty() && tokenize(s).len() >= min_tokens {
        out.push(s.to_string());
    }
    current.clear();
}

/// TF-IDF with raw counts, smooth idf `ln((1+N)/(1+df)) + 1`, and L2 row
/// normalization. Vocabulary columns are in lexicographic order.
pub fn tfidf_vectorize(docs: &[&str]) -> Result<EmbeddingMatrix> {
    let tokenized: Vec<Vec<String>> = docs.iter().map(|d| tokenize(d)).collect();
    let vocab: BTreeSet<&str> = tokenized.iter().flatten().map(String::as_str).collect();
    if vocab.is_empty() {
        return Err(Error::invalid("tf-idf needs at least one non-empty document"));
    }
    let index: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, t)| (*t, i)).collect();

    let mut df = vec![0usize; vocab.len()];
    for toks in &tokenized {
        let unique: BTreeSet<&str> = toks.iter().map(String::as_str).collect();
        for t in unique {
            df[index[t]] += 1;
        }
    }
    let n = docs.len() as f64;
    let idf: Vec<f64> = df.iter().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();

    let vectors = tokenized
        .iter()
        .map(|toks| {
            let mut row = vec![0.0; vocab.len()];
            for t in toks {
                row[index[t.as_str()]] += 1.0;
            }
            for (w, idf) in row.iter_mut().zip(&idf) {
                *w *= idf;
            }
            l2_normalize(&mut row);
            row
        })
        .collect();

    let mut m = EmbeddingMatrix::new(vectors, EmbeddingSource::Tfidf)?;
    m.normalized = true;
    m.vocabulary = Some(vocab.into_iter().map(str::to_string).collect());
    Ok(m)
}

/// Seeded feature hashing with sign hashing over [`tokenize`] tokens.
pub fn hashed_embed(texts: &[&str], dim: usize, seed: u64) -> Result<EmbeddingMatrix> {
    if dim == 0 {
        return Err(Error::invalid("hashed embedding dimension must be positive"));
    }
    let vectors = texts
        .iter()
        .map(|t| {
            let mut row = vec![0.0; dim];
            for tok in tokenize(t) {
                let mut h = FnvHasher::default();
                h.write_u64(seed);
                h.write(tok.as_bytes());
                let bucket = h.finish();
                let mut s = FnvHasher::with_key(bucket);
                s.write_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
                let sign = if s.finish() & 1 == 0 { 1.0 } else { -1.0 };
                row[(bucket % dim as u64) as usize] += sign;
            }
            l2_normalize(&mut row);
            row
        })
        .collect();
    let mut m = EmbeddingMatrix::new(vectors, EmbeddingSource::HashedFallback)?;
    m.normalized = true;
    Ok(m)
}

pub(crate) fn l2_normalize(row: &mut [f64]) {
    let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in row.iter_mut() {
            *x /= norm;
        }
    }
}
