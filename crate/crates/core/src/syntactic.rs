//! Token-level diversity: temperature softmax and top-k Shannon entropy.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, GenerationRecord};
use crate::error::{Error, Result};

/// Probabilities over top-k candidates or over a full logit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

impl TokenDistribution {
    /// Rejects negative, non-finite, or above-one probabilities and total
    /// mass beyond `1 + 1e-9`. Order is preserved.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("empty distribution"));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0) {
            return Err(Error::invalid(format!("probability {p} outside [0,1]")));
        }
        let total: f64 = probs.iter().sum();
        if total > 1.0 + 1e-9 {
            return Err(Error::invalid(format!("probability mass {total} exceeds 1")));
        }
        Ok(TokenDistribution { probs })
    }

    /// Candidate log-probabilities as reported by an endpoint.
    pub fn from_logprobs(logprobs: &[f64]) -> Result<Self> {
        Self::new(logprobs.iter().map(|lp| lp.exp()).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Endpoint candidate lists come most-likely first.
    pub fn is_descending(&self) -> bool {
        self.probs.windows(2).all(|w| w[0] >= w[1])
    }
}

/// How top-k masses enter the entropy sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    /// Use the endpoint's masses as-is, even though they sum to less than 1.
    #[default]
    Raw,
    /// Divide by the top-k total first.
    Renormalize,
}

/// Softmax of `logits / temperature`, computed with max subtraction.
/// Output follows the order of `logits`.
pub fn softmax_with_temperature(logits: &[f64], temperature: f64) -> Result<TokenDistribution> {
    if logits.is_empty() {
        return Err(Error::invalid("empty logits"));
    }
    if !(temperature > 0.0 && temperature <= 1.0) {
        return Err(Error::invalid(format!("temperature {temperature} outside (0,1]")));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::invalid("non-finite logit"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| ((l - max) / temperature).exp()).collect();
    let z: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();
    Ok(TokenDistribution { probs })
}

/// Plain softmax at unit temperature with no input checks.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Shannon entropy in bits of a probability vector, `0 log 0 = 0`.
pub fn entropy_bits(probs: &[f64]) -> f64 {
    let h: f64 = probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.log2())
        .sum();
    // -0.0 for one-hot inputs
    h.max(0.0)
}

/// Top-k Shannon entropy (bits).
pub fn top_k_entropy(dist: &TokenDistribution, mode: EntropyMode) -> f64 {
    match mode {
        EntropyMode::Raw => entropy_bits(dist.probs()),
        EntropyMode::Renormalize => {
            let mass = dist.mass();
            if mass <= 0.0 {
                return 0.0;
            }
            let scaled: Vec<f64> = dist.probs().iter().map(|p| p / mass).collect();
            entropy_bits(&scaled)
        }
    }
}

/// Per-step entropies of a record, in generation order.
pub fn step_entropies(record: &GenerationRecord, mode: EntropyMode) -> Result<Vec<f64>> {
    if record.steps.is_empty() {
        return Err(Error::Capability(format!("record {}: no logprob data", record.id)));
    }
    record
        .steps
        .iter()
        .map(|s| {
            let lps: Vec<f64> = s.candidates.iter().map(|c| c.1).collect();
            TokenDistribution::from_logprobs(&lps).map(|d| top_k_entropy(&d, mode))
        })
        .collect()
}

/// Mean of the per-token entropies of one completion.
pub fn completion_mean_entropy(record: &GenerationRecord, mode: EntropyMode) -> Result<f64> {
    let hs = step_entropies(record, mode)?;
    Ok(hs.iter().sum::<f64>() / hs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    pub per_completion_means: Vec<f64>,
    pub mean: f64,
    /// Sample (n-1) standard deviation.
    pub std: f64,
    /// Records without per-token data that were left out.
    pub excluded: usize,
    pub mode: EntropyMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_token_series: Option<Vec<Vec<f64>>>,
}

/// Mean and sample standard deviation of per-completion mean entropies.
pub fn corpus_entropy_summary(corpus: &Corpus, mode: EntropyMode, keep_series: bool) -> Result<EntropyProfile> {
    let mut means = Vec::new();
    let mut series = Vec::new();
    let mut excluded = 0;
    for rec in &corpus.records {
        if !rec.has_steps() {
            excluded += 1;
            continue;
        }
        let hs = step_entropies(rec, mode)?;
        means.push(hs.iter().sum::<f64>() / hs.len() as f64);
        if keep_series {
            series.push(hs);
        }
    }
    if excluded > 0 {
        log::warn!("{excluded} record(s) without logprob data excluded from entropy summary");
    }
    if means.len() < 2 {
        return Err(Error::Capability(format!(
            "entropy summary needs at least 2 records with logprob data, found {}",
            means.len()
        )));
    }
    let (mean, std) = mean_and_sample_std(&means);
    Ok(EntropyProfile {
        per_completion_means: means,
        mean,
        std,
        excluded,
        mode,
        per_token_series: keep_series.then_some(series),
    })
}

pub(crate) fn mean_and_sample_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.iter().all(|x| *x == xs[0]) {
        return (xs.first().copied().unwrap_or(f64::NAN), 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::{record, step};
    use approx::assert_abs_diff_eq;

    const LOG2_5: f64 = 2.321_928_094_887_362;

    #[test]
    fn softmax_anchor_values() {
        let d = softmax_with_temperature(&[0.0, 1.0], 1.0).unwrap();
        assert_abs_diff_eq!(d.probs()[0], 0.268_941_421_369_995_1, epsilon = 1e-12);
        assert_abs_diff_eq!(d.probs()[1], 0.731_058_578_630_004_9, epsilon = 1e-12);

        let d = softmax_with_temperature(&[0.0, 1.0], 0.5).unwrap();
        // exp(2) / (1 + exp(2))
        assert_abs_diff_eq!(d.probs()[0], 0.119_202_922_022_117_6, epsilon = 1e-12);
        assert_abs_diff_eq!(d.probs()[1], 0.880_797_077_977_882_3, epsilon = 1e-12);
    }

    #[test]
    fn equal_logits_are_uniform() {
        for t in [0.1, 0.5, 1.0] {
            let d = softmax_with_temperature(&[3.3; 5], t).unwrap();
            for p in d.probs() {
                assert_abs_diff_eq!(*p, 0.2, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(softmax_with_temperature(&[], 1.0).is_err());
        assert!(softmax_with_temperature(&[0.0], 0.0).is_err());
        assert!(softmax_with_temperature(&[0.0], 1.5).is_err());
        assert!(softmax_with_temperature(&[f64::NAN], 1.0).is_err());
        assert!(softmax_with_temperature(&[1e308, -1e308], 1.0).is_ok());
    }

    #[test]
    fn entropy_anchor_values() {
        let u = TokenDistribution::new(vec![0.2; 5]).unwrap();
        assert_abs_diff_eq!(top_k_entropy(&u, EntropyMode::Raw), LOG2_5, epsilon = 1e-12);
        let one_hot = TokenDistribution::new(vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(top_k_entropy(&one_hot, EntropyMode::Raw), 0.0);
        let half = TokenDistribution::new(vec![0.5, 0.5, 0.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(top_k_entropy(&half, EntropyMode::Raw), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn negative_probability_rejected() {
        assert!(TokenDistribution::new(vec![0.5, -0.1]).is_err());
    }

    #[test]
    fn modes_agree_on_full_mass_and_differ_otherwise() {
        let full = TokenDistribution::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        assert_abs_diff_eq!(
            top_k_entropy(&full, EntropyMode::Raw),
            top_k_entropy(&full, EntropyMode::Renormalize),
            epsilon = 1e-12
        );
        let partial = TokenDistribution::new(vec![0.25, 0.25]).unwrap();
        assert_abs_diff_eq!(top_k_entropy(&partial, EntropyMode::Raw), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(top_k_entropy(&partial, EntropyMode::Renormalize), 1.0, epsilon = 1e-15);
        let skew = TokenDistribution::new(vec![0.5, 0.1]).unwrap();
        assert!(top_k_entropy(&skew, EntropyMode::Raw) != top_k_entropy(&skew, EntropyMode::Renormalize));
    }

    fn uniform_step() -> crate::corpus::TokenStep {
        step("a", &[("a", 0.2), ("b", 0.2), ("c", 0.2), ("d", 0.2), ("e", 0.2)])
    }

    #[test]
    fn completion_mean_of_uniform_steps() {
        let rec = record("r", vec![uniform_step(), uniform_step(), uniform_step()]);
        assert_abs_diff_eq!(completion_mean_entropy(&rec, EntropyMode::Raw).unwrap(), LOG2_5, epsilon = 1e-12);
    }

    #[test]
    fn completion_mean_of_zero_and_one_bit() {
        let rec = record(
            "r",
            vec![step("a", &[("a", 1.0)]), step("a", &[("a", 0.5), ("b", 0.5)])],
        );
        assert_abs_diff_eq!(completion_mean_entropy(&rec, EntropyMode::Raw).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn record_without_steps_errors() {
        let rec = record("r", vec![]);
        let err = completion_mean_entropy(&rec, EntropyMode::Raw).unwrap_err();
        assert!(err.to_string().contains("no logprob data"));
    }

    fn const_entropy_record(id: &str, p: f64) -> GenerationRecord {
        // two-candidate step whose entropy is H(p, 1-p)
        record(id, vec![step("a", &[("a", p.max(1.0 - p)), ("b", p.min(1.0 - p))])])
    }

    #[test]
    fn summary_mean_and_sample_std() {
        let (m, s) = mean_and_sample_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);

        let c = Corpus::new(vec![
            const_entropy_record("a", 0.3),
            const_entropy_record("b", 0.3),
            const_entropy_record("c", 0.3),
        ])
        .unwrap();
        let prof = corpus_entropy_summary(&c, EntropyMode::Raw, false).unwrap();
        assert_eq!(prof.std, 0.0);
    }

    #[test]
    fn summary_excludes_text_only_records_and_needs_two() {
        let mut recs = vec![const_entropy_record("a", 0.3), record("b", vec![])];
        let c = Corpus::new(recs.clone()).unwrap();
        assert!(corpus_entropy_summary(&c, EntropyMode::Raw, false).is_err());
        recs.push(const_entropy_record("c", 0.1));
        let prof = corpus_entropy_summary(&Corpus::new(recs).unwrap(), EntropyMode::Raw, true).unwrap();
        assert_eq!(prof.excluded, 1);
        assert_eq!(prof.per_completion_means.len(), 2);
        assert_eq!(prof.per_token_series.unwrap().len(), 2);
    }
}
