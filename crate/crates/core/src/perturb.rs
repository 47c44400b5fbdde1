//! Attractor probe: edit a completion prefix, regenerate, and measure
//! whether the continuations fall back into the baseline clusters and how
//! quickly per-token confidence recovers.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, GenerationRecord};
use crate::error::{Error, Result};
use crate::llm_client::{Client, GenerationConfig};
use crate::semantic::{embed_texts, squared_distance, ClusteringResult, Embedder, EmbeddingMatrix};

pub const DEFAULT_RADIUS_QUANTILE: f64 = 0.9;
pub const DEFAULT_RECOVERY_THRESHOLD: f64 = 0.5;

const COPULAS: [&str; 4] = ["was", "is", "were", "are"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Edit {
    /// Append " not" after a trailing was/is/were/are.
    NegateTerminalVerb,
    AppendText { text: String },
    /// Replace the last occurrence of `span`.
    Replace { span: String, text: String },
}

impl Edit {
    pub fn apply(&self, prefix: &str) -> Result<String> {
        let edited = match self {
            Edit::NegateTerminalVerb => {
                let trimmed = prefix.trim_end();
                let last = trimmed.rsplit(char::is_whitespace).next().unwrap_or("");
                if !COPULAS.contains(&last.to_lowercase().as_str()) {
                    return Err(Error::invalid(format!(
                        "cannot negate: prefix does not end with was/is/were/are (ends with {last:?})"
                    )));
                }
                format!("{trimmed} not")
            }
            Edit::AppendText { text } => format!("{prefix}{text}"),
            Edit::Replace { span, text } => {
                let at = prefix
                    .rfind(span.as_str())
                    .filter(|_| !span.is_empty())
                    .ok_or_else(|| Error::invalid(format!("span {span:?} not found in prefix")))?;
                format!("{}{}{}", &prefix[..at], text, &prefix[at + span.len()..])
            }
        };
        if edited == prefix {
            return Err(Error::invalid("edit leaves the prefix unchanged"));
        }
        Ok(edited)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub base_prompt: String,
    pub exemplar_prefix: String,
    pub edit: Edit,
}

/// Joins with one space unless either side already has whitespace at the seam.
fn join(base: &str, tail: &str) -> String {
    if base.is_empty() || tail.is_empty() || base.ends_with(char::is_whitespace) || tail.starts_with(char::is_whitespace) {
        format!("{base}{tail}")
    } else {
        format!("{base} {tail}")
    }
}

/// The edited prefix, without the base prompt.
pub fn edited_prefix(spec: &PerturbationSpec) -> Result<String> {
    if spec.exemplar_prefix.trim().is_empty() {
        return Err(Error::invalid("empty exemplar prefix"));
    }
    spec.edit.apply(&spec.exemplar_prefix)
}

/// `base_prompt` followed by the edited prefix.
pub fn make_perturbed_prompt(spec: &PerturbationSpec) -> Result<String> {
    Ok(join(&spec.base_prompt, &edited_prefix(spec)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryProfile {
    pub per_token_chosen_prob: Vec<f64>,
    /// Smallest `i` such that every chosen-token probability from `i` on
    /// exceeds `threshold`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovery_index: Option<usize>,
    pub threshold: f64,
    /// Steps whose chosen token is absent from the candidates.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flagged_steps: Vec<usize>,
}

pub fn recovery_profile(record: &GenerationRecord, threshold: f64) -> Result<RecoveryProfile> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!("threshold {threshold} outside [0,1]")));
    }
    if !record.has_steps() {
        return Err(Error::Capability(format!("record {} has no logprob data", record.id)));
    }
    let probs: Vec<f64> = record.steps.iter().map(|s| s.chosen_logprob.exp()).collect();
    let flagged_steps = record
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.chosen_in_candidates())
        .map(|(i, _)| i)
        .collect();
    Ok(RecoveryProfile {
        recovery_index: recovery_index(&probs, threshold),
        per_token_chosen_prob: probs,
        threshold,
        flagged_steps,
    })
}

fn recovery_index(probs: &[f64], threshold: f64) -> Option<usize> {
    let mut idx = None;
    for i in (0..probs.len()).rev() {
        if probs[i] > threshold {
            idx = Some(i);
        } else {
            break;
        }
    }
    idx
}

/// Linear-interpolation quantile of unsorted data.
fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return 0.0;
    }
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnAnalysis {
    pub rate: f64,
    pub radius_quantile: f64,
    /// Per-cluster radius: the quantile of member-to-centroid distances.
    pub radii: Vec<f64>,
    pub nearest_cluster: Vec<usize>,
    pub returned: Vec<bool>,
}

/// Fraction of perturbed points within the radius of their nearest
/// baseline centroid.
pub fn attractor_return_rate(
    baseline: &ClusteringResult,
    baseline_emb: &EmbeddingMatrix,
    perturbed: &EmbeddingMatrix,
    radius_quantile: f64,
) -> Result<f64> {
    Ok(return_analysis(baseline, baseline_emb, perturbed, radius_quantile)?.rate)
}

pub fn return_analysis(
    baseline: &ClusteringResult,
    baseline_emb: &EmbeddingMatrix,
    perturbed: &EmbeddingMatrix,
    radius_quantile: f64,
) -> Result<ReturnAnalysis> {
    if !(0.0..=1.0).contains(&radius_quantile) {
        return Err(Error::invalid(format!("radius quantile {radius_quantile} outside [0,1]")));
    }
    if baseline.assignments.len() != baseline_emb.len() {
        return Err(Error::invalid("clustering does not match the baseline embeddings"));
    }
    let dim = baseline.centroids.first().map_or(0, Vec::len);
    if baseline_emb.dim() != dim || perturbed.dim() != dim {
        return Err(Error::invalid(format!(
            "dimension mismatch: centroids {dim}, baseline {}, perturbed {}",
            baseline_emb.dim(),
            perturbed.dim()
        )));
    }
    if perturbed.is_empty() {
        return Err(Error::invalid("no perturbed points"));
    }
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); baseline.centroids.len()];
    for (row, &c) in baseline_emb.vectors.iter().zip(&baseline.assignments) {
        members[c].push(squared_distance(row, &baseline.centroids[c]).sqrt());
    }
    let radii: Vec<f64> = members.iter().map(|d| quantile(d, radius_quantile)).collect();

    let mut nearest_cluster = Vec::with_capacity(perturbed.len());
    let mut returned = Vec::with_capacity(perturbed.len());
    for row in &perturbed.vectors {
        let (c, d2) = baseline
            .centroids
            .iter()
            .enumerate()
            .map(|(c, cen)| (c, squared_distance(row, cen)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one centroid");
        nearest_cluster.push(c);
        returned.push(d2.sqrt() <= radii[c]);
    }
    let rate = returned.iter().filter(|r| **r).count() as f64 / returned.len() as f64;
    Ok(ReturnAnalysis {
        rate,
        radius_quantile,
        radii,
        nearest_cluster,
        returned,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorConfig {
    pub edit: Edit,
    pub n_per_exemplar: usize,
    pub radius_quantile: f64,
    pub recovery_threshold: f64,
}

impl Default for AttractorConfig {
    fn default() -> Self {
        AttractorConfig {
            edit: Edit::NegateTerminalVerb,
            n_per_exemplar: 10,
            radius_quantile: DEFAULT_RADIUS_QUANTILE,
            recovery_threshold: DEFAULT_RECOVERY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarOutcome {
    pub exemplar_prefix: String,
    pub perturbed_prompt: String,
    pub record_ids: Vec<String>,
    pub returned: Vec<bool>,
    pub return_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorReport {
    pub return_rate: f64,
    pub radius_quantile: f64,
    pub radii: Vec<f64>,
    pub exemplars: Vec<ExemplarOutcome>,
    pub recovery: Vec<(String, RecoveryProfile)>,
    #[serde(skip)]
    pub perturbed_corpus: Corpus,
}

/// Perturbs each exemplar prefix, generates continuations, embeds
/// `edited prefix + completion` and compares against the baseline clusters.
/// The embedder must place texts in the baseline's space, so corpus-fitted
/// TF-IDF is refused.
#[allow(clippy::too_many_arguments)]
pub fn run_attractor_experiment(
    client: &Client,
    base_prompt: &str,
    exemplar_prefixes: &[String],
    gcfg: &GenerationConfig,
    baseline: &ClusteringResult,
    baseline_emb: &EmbeddingMatrix,
    embedder: &Embedder,
    cfg: &AttractorConfig,
) -> Result<AttractorReport> {
    if matches!(embedder, Embedder::Tfidf) {
        return Err(Error::invalid(
            "tf-idf vectors are fitted per corpus; use an endpoint or hashed embedder for attractor probes",
        ));
    }
    if exemplar_prefixes.is_empty() || cfg.n_per_exemplar == 0 {
        return Err(Error::invalid("need at least one exemplar and one completion per exemplar"));
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = exemplar_prefixes.iter().find(|p| !seen.insert(p.as_str())) {
        return Err(Error::invalid(format!("duplicate exemplar prefix {dup:?}")));
    }
    let mut corpus = Corpus::default();
    let mut exemplars = Vec::new();
    let mut recovery = Vec::new();
    let mut radii = Vec::new();
    let mut returned_total = 0usize;
    let mut total = 0usize;

    for prefix in exemplar_prefixes {
        let spec = PerturbationSpec {
            base_prompt: base_prompt.to_string(),
            exemplar_prefix: prefix.clone(),
            edit: cfg.edit.clone(),
        };
        let edited = edited_prefix(&spec)?;
        let prompt = join(base_prompt, &edited);
        let batch = client
            .generate_batch(&prompt, cfg.n_per_exemplar, gcfg)
            .map_err(|e| e.failures.into_iter().next().map(|f| f.1).expect("batch error has a failure"))?;
        let texts: Vec<String> = batch.records.iter().map(|r| format!("{edited}{}", r.completion)).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let emb = embed_texts(&refs, embedder)?;
        let analysis = return_analysis(baseline, baseline_emb, &emb, cfg.radius_quantile)?;
        radii = analysis.radii.clone();
        returned_total += analysis.returned.iter().filter(|r| **r).count();
        total += analysis.returned.len();
        for rec in &batch.records {
            recovery.push((rec.id.clone(), recovery_profile(rec, cfg.recovery_threshold)?));
        }
        exemplars.push(ExemplarOutcome {
            exemplar_prefix: prefix.clone(),
            perturbed_prompt: prompt,
            record_ids: batch.records.iter().map(|r| r.id.clone()).collect(),
            returned: analysis.returned,
            return_rate: analysis.rate,
        });
        for rec in batch.records {
            corpus.push(rec)?;
        }
    }
    corpus.provenance.insert("base_prompt".into(), base_prompt.to_string());
    corpus.provenance.insert("embedder".into(), embedder.describe());
    Ok(AttractorReport {
        return_rate: returned_total as f64 / total as f64,
        radius_quantile: cfg.radius_quantile,
        radii,
        exemplars,
        recovery,
        perturbed_corpus: corpus,
    })
}
