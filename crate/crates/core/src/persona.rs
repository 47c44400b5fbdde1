//! Persona prompts, parsing of `Key: Value` persona answers and
//! attribute-distribution analytics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::sentiment::{score, Histogram, SentimentLexicon};
use crate::syntactic::{entropy_bits, mean_and_sample_std};

pub const COFFEE_MACHINE: &str =
    "A coffee machine that connects to your smartwatch so it keeps your coffee warm if you are far away from it.";

pub const PRODUCT_PLACEHOLDER: &str = "{product}";

pub const DEFAULT_TEMPLATE: &str = "\
Create one fictional customer persona and a review they wrote for the following product.

Product: {product}

Answer with exactly these lines, in this order, then the review:
First Name: <first name>
Last Name: <last name>
Gender: <gender>
Age: <age in years, digits only>
Nationality: <nationality>
Ethnicity: <ethnicity>
Personality Type: <four-letter Myers-Briggs type>
Review: <the customer's review of the product>
";

pub const AGE_RANGE: (u32, u32) = (1, 120);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    FirstName,
    LastName,
    Gender,
    Age,
    Nationality,
    Ethnicity,
    Mbti,
}

impl Attribute {
    pub const ALL: [Attribute; 7] = [
        Attribute::FirstName,
        Attribute::LastName,
        Attribute::Gender,
        Attribute::Age,
        Attribute::Nationality,
        Attribute::Ethnicity,
        Attribute::Mbti,
    ];

    /// The key used in persona answers.
    pub fn label(self) -> &'static str {
        match self {
            Attribute::FirstName => "First Name",
            Attribute::LastName => "Last Name",
            Attribute::Gender => "Gender",
            Attribute::Age => "Age",
            Attribute::Nationality => "Nationality",
            Attribute::Ethnicity => "Ethnicity",
            Attribute::Mbti => "Personality Type",
        }
    }

    pub fn column(self) -> &'static str {
        match self {
            Attribute::FirstName => "first_name",
            Attribute::LastName => "last_name",
            Attribute::Gender => "gender",
            Attribute::Age => "age",
            Attribute::Nationality => "nationality",
            Attribute::Ethnicity => "ethnicity",
            Attribute::Mbti => "personality_type",
        }
    }

    /// Accepts answer keys, column names and common aliases, ignoring case.
    pub fn from_name(name: &str) -> Option<Attribute> {
        let key: String = name
            .trim()
            .to_lowercase()
            .chars()
            .map(|c| if c == '_' || c == '-' { ' ' } else { c })
            .collect();
        let key = key.split_whitespace().collect::<Vec<_>>().join(" ");
        Some(match key.as_str() {
            "first name" | "firstname" | "given name" => Attribute::FirstName,
            "last name" | "lastname" | "surname" | "family name" => Attribute::LastName,
            "gender" => Attribute::Gender,
            "age" => Attribute::Age,
            "nationality" => Attribute::Nationality,
            "ethnicity" => Attribute::Ethnicity,
            "personality type" | "personality" | "mbti" => Attribute::Mbti,
            _ => return None,
        })
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

/// All 16 Myers-Briggs codes, in lexicographic order.
pub fn mbti_codes() -> Vec<String> {
    let mut out = Vec::with_capacity(16);
    for a in ['E', 'I'] {
        for b in ['N', 'S'] {
            for c in ['F', 'T'] {
                for d in ['J', 'P'] {
                    out.push([a, b, c, d].iter().collect());
                }
            }
        }
    }
    out.sort();
    out
}

pub fn is_valid_mbti(code: &str) -> bool {
    let c: Vec<char> = code.chars().collect();
    c.len() == 4
        && matches!(c[0], 'E' | 'I')
        && matches!(c[1], 'S' | 'N')
        && matches!(c[2], 'T' | 'F')
        && matches!(c[3], 'J' | 'P')
}

/// Prompt text with a `{product}` placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaTemplate {
    pub text: String,
}

impl Default for PersonaTemplate {
    fn default() -> Self {
        PersonaTemplate {
            text: DEFAULT_TEMPLATE.to_string(),
        }
    }
}

impl PersonaTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if !text.contains(PRODUCT_PLACEHOLDER) {
            return Err(Error::invalid(format!("persona template lacks {PRODUCT_PLACEHOLDER}")));
        }
        Ok(PersonaTemplate { text })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text)
    }

    pub fn render(&self, product_description: &str) -> Result<String> {
        if product_description.trim().is_empty() {
            return Err(Error::invalid("empty product description"));
        }
        Ok(self.text.replace(PRODUCT_PLACEHOLDER, product_description))
    }
}

/// The default persona prompt for `product_description`.
pub fn persona_prompt(product_description: &str) -> Result<String> {
    PersonaTemplate::default().render(product_description)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaRecord {
    pub first_name: Option<String>,
    pub last_name: Option<String>,
    pub gender: Option<String>,
    pub age: Option<u32>,
    pub nationality: Option<String>,
    pub ethnicity: Option<String>,
    pub mbti: Option<String>,
    pub review: String,
    pub source_record_id: String,
}

impl PersonaRecord {
    /// The attribute as text; ages are rendered in decimal.
    pub fn get(&self, attr: Attribute) -> Option<String> {
        match attr {
            Attribute::FirstName => self.first_name.clone(),
            Attribute::LastName => self.last_name.clone(),
            Attribute::Gender => self.gender.clone(),
            Attribute::Age => self.age.map(|a| a.to_string()),
            Attribute::Nationality => self.nationality.clone(),
            Attribute::Ethnicity => self.ethnicity.clone(),
            Attribute::Mbti => self.mbti.clone(),
        }
    }

    /// Review length in characters.
    pub fn review_length(&self) -> usize {
        self.review.chars().count()
    }

    /// Renders the persona in the answer format the prompt asks for.
    pub fn render_answer(&self) -> String {
        let mut out = String::new();
        for attr in Attribute::ALL {
            out.push_str(&format!("{}: {}\n", attr.label(), self.get(attr).unwrap_or_default()));
        }
        out.push_str("Review: ");
        out.push_str(&self.review);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldIssue {
    Missing { attribute: Attribute },
    UnparseableAge { value: String },
    AgeOutOfRange { value: u32 },
    InvalidMbti { value: String },
}

impl FieldIssue {
    pub fn attribute(&self) -> Attribute {
        match self {
            FieldIssue::Missing { attribute } => *attribute,
            FieldIssue::UnparseableAge { .. } | FieldIssue::AgeOutOfRange { .. } => Attribute::Age,
            FieldIssue::InvalidMbti { .. } => Attribute::Mbti,
        }
    }
}

impl fmt::Display for FieldIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldIssue::Missing { attribute } => write!(f, "missing {attribute}"),
            FieldIssue::UnparseableAge { value } => write!(f, "age {value:?} is not a number"),
            FieldIssue::AgeOutOfRange { value } => write!(f, "age {value} outside [1,120]"),
            FieldIssue::InvalidMbti { value } => write!(f, "invalid mbti {value:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedPersona {
    pub record: PersonaRecord,
    pub issues: Vec<FieldIssue>,
}

impl ParsedPersona {
    pub fn is_complete(&self) -> bool {
        self.issues.is_empty()
    }

    /// Attributes that are absent or failed validation, in template order.
    pub fn missing_fields(&self) -> Vec<Attribute> {
        let set: BTreeSet<Attribute> = self.issues.iter().map(FieldIssue::attribute).collect();
        set.into_iter().collect()
    }
}

fn clean(s: &str) -> &str {
    s.trim().trim_matches('*').trim()
}

/// Splits a line into `(key, value)` at the first colon, dropping list
/// bullets and bold markers around the key.
fn key_value(line: &str) -> Option<(&str, &str)> {
    let line = line.trim_start().trim_start_matches(['-', '•']).trim_start();
    let (k, v) = line.split_once(':')?;
    Some((clean(k), clean(v)))
}

fn is_review_key(key: &str) -> bool {
    key.eq_ignore_ascii_case("review")
}

/// Text after the `Review:` marker, trimmed, or `None` when absent.
pub fn review_text(completion: &str) -> Option<&str> {
    let mut offset = 0;
    for line in completion.split_inclusive('\n') {
        if let Some((key, _)) = key_value(line) {
            if is_review_key(key) {
                let colon = line.find(':').expect("key_value found a colon");
                return Some(completion[offset + colon + 1..].trim_start().trim_start_matches('*').trim());
            }
        }
        offset += line.len();
    }
    None
}

pub fn parse_persona(completion: &str, source_record_id: &str) -> Result<ParsedPersona> {
    let mut rec = PersonaRecord {
        source_record_id: source_record_id.to_string(),
        ..Default::default()
    };
    let mut seen = BTreeSet::new();
    let mut issues = Vec::new();
    for line in completion.lines() {
        let Some((key, value)) = key_value(line) else { continue };
        if is_review_key(key) {
            break;
        }
        let Some(attr) = Attribute::from_name(key) else { continue };
        if value.is_empty() || !seen.insert(attr) {
            continue;
        }
        let text = Some(value.to_string());
        match attr {
            Attribute::FirstName => rec.first_name = text,
            Attribute::LastName => rec.last_name = text,
            Attribute::Gender => rec.gender = text,
            Attribute::Nationality => rec.nationality = text,
            Attribute::Ethnicity => rec.ethnicity = text,
            Attribute::Age => match value.parse::<u32>() {
                Ok(a) if (AGE_RANGE.0..=AGE_RANGE.1).contains(&a) => rec.age = Some(a),
                Ok(a) => issues.push(FieldIssue::AgeOutOfRange { value: a }),
                Err(_) => issues.push(FieldIssue::UnparseableAge {
                    value: value.to_string(),
                }),
            },
            Attribute::Mbti => {
                let code = value.to_uppercase();
                if is_valid_mbti(&code) {
                    rec.mbti = Some(code);
                } else {
                    issues.push(FieldIssue::InvalidMbti {
                        value: value.to_string(),
                    });
                }
            }
        }
    }
    if seen.is_empty() {
        return Err(Error::invalid(format!(
            "unparseable persona in {source_record_id:?}: no attributes found"
        )));
    }
    for attr in Attribute::ALL {
        if !seen.contains(&attr) {
            issues.push(FieldIssue::Missing { attribute: attr });
        }
    }
    rec.review = review_text(completion).unwrap_or_default().to_string();
    Ok(ParsedPersona { record: rec, issues })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersonaParseSummary {
    pub personas: Vec<PersonaRecord>,
    /// Issues for partially parsed records, keyed by record id.
    pub issues: BTreeMap<String, Vec<FieldIssue>>,
    /// Records with no recognizable attributes.
    pub unparseable: Vec<String>,
}

/// Parses every completion; partial personas are kept.
pub fn parse_corpus_personas(corpus: &Corpus) -> PersonaParseSummary {
    let mut out = PersonaParseSummary::default();
    for rec in &corpus.records {
        match parse_persona(&rec.completion, &rec.id) {
            Ok(p) => {
                if !p.issues.is_empty() {
                    out.issues.insert(rec.id.clone(), p.issues);
                }
                out.personas.push(p.record);
            }
            Err(_) => out.unparseable.push(rec.id.clone()),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDistribution {
    pub attribute: Attribute,
    /// Trimmed, casefolded value to count.
    pub counts: BTreeMap<String, usize>,
    pub total: usize,
}

fn normalize_value(v: &str) -> String {
    v.trim().to_lowercase()
}

pub fn attribute_distribution(personas: &[PersonaRecord], attribute: &str) -> Result<AttributeDistribution> {
    let attr = Attribute::from_name(attribute).ok_or_else(|| Error::invalid(format!("unknown attribute {attribute:?}")))?;
    distribution_of(personas, attr)
}

pub fn distribution_of(personas: &[PersonaRecord], attr: Attribute) -> Result<AttributeDistribution> {
    if personas.is_empty() {
        return Err(Error::invalid("no personas"));
    }
    let mut counts = BTreeMap::new();
    for p in personas {
        if let Some(v) = p.get(attr) {
            *counts.entry(normalize_value(&v)).or_insert(0) += 1;
        }
    }
    let total = counts.values().sum();
    Ok(AttributeDistribution {
        attribute: attr,
        counts,
        total,
    })
}

/// Names ranked by count, ties broken lexicographically. Counting is
/// case-insensitive; each name is shown in its first-seen spelling.
pub fn name_frequency(personas: &[PersonaRecord], field: Attribute) -> Result<Vec<(String, usize)>> {
    if !matches!(field, Attribute::FirstName | Attribute::LastName) {
        return Err(Error::invalid(format!("{field} is not a name field")));
    }
    if personas.is_empty() {
        return Err(Error::invalid("no personas"));
    }
    let mut counts: BTreeMap<String, (String, usize)> = BTreeMap::new();
    for p in personas {
        if let Some(v) = p.get(field) {
            let e = counts.entry(normalize_value(&v)).or_insert_with(|| (v.trim().to_string(), 0));
            e.1 += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_values().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeScore {
    pub attribute: Attribute,
    /// Shannon entropy over the reference-set size, in [0, 1].
    pub normalized_entropy: f64,
    pub entropy_bits: f64,
    pub distinct_observed: usize,
    pub reference_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeSummary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: u32,
    pub max: u32,
    /// Ten-year bins over [0, 120].
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityScorecard {
    pub scores: Vec<AttributeScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<AgeSummary>,
    pub persona_count: usize,
}

impl DiversityScorecard {
    pub fn score(&self, attr: Attribute) -> Option<f64> {
        self.scores.iter().find(|s| s.attribute == attr).map(|s| s.normalized_entropy)
    }
}

/// Normalized entropy per categorical attribute. MBTI is normalized by
/// the 16 valid codes; other attributes by `reference_sizes` when given
/// (e.g. the union of values across two compared corpora), else by the
/// number of distinct observed values.
pub fn diversity_scorecard(
    personas: &[PersonaRecord],
    reference_sizes: &BTreeMap<Attribute, usize>,
) -> Result<DiversityScorecard> {
    if personas.len() < 2 {
        return Err(Error::invalid("diversity scorecard needs at least 2 personas"));
    }
    let mut scores = Vec::new();
    for attr in Attribute::ALL {
        if attr == Attribute::Age {
            continue;
        }
        let dist = distribution_of(personas, attr)?;
        let distinct = dist.counts.len();
        let reference_size = match attr {
            Attribute::Mbti => 16,
            _ => reference_sizes.get(&attr).copied().unwrap_or(distinct).max(distinct),
        };
        let h = if dist.total == 0 {
            0.0
        } else {
            let probs: Vec<f64> = dist.counts.values().map(|&c| c as f64 / dist.total as f64).collect();
            entropy_bits(&probs)
        };
        let normalized_entropy = if reference_size > 1 {
            (h / (reference_size as f64).log2()).clamp(0.0, 1.0)
        } else {
            0.0
        };
        scores.push(AttributeScore {
            attribute: attr,
            normalized_entropy,
            entropy_bits: h,
            distinct_observed: distinct,
            reference_size,
        });
    }
    let ages: Vec<u32> = personas.iter().filter_map(|p| p.age).collect();
    let age = if ages.is_empty() {
        None
    } else {
        let as_f: Vec<f64> = ages.iter().map(|&a| a as f64).collect();
        let (mean, std) = mean_and_sample_std(&as_f);
        Some(AgeSummary {
            count: ages.len(),
            mean,
            std,
            min: *ages.iter().min().expect("non-empty"),
            max: *ages.iter().max().expect("non-empty"),
            histogram: Histogram::new(&as_f, 0.0, 120.0, 12)?,
        })
    };
    Ok(DiversityScorecard {
        scores,
        age,
        persona_count: personas.len(),
    })
}

/// Writes one row per persona: the seven attributes, review length in
/// characters and (with a lexicon) the review's compound sentiment.
pub fn write_personas_csv(path: &Path, personas: &[PersonaRecord], lex: Option<&SentimentLexicon>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::Serialization(e.to_string());
    let mut header: Vec<&str> = vec!["source_record_id"];
    header.extend(Attribute::ALL.iter().map(|a| a.column()));
    header.extend(["review_length", "compound"]);
    w.write_record(&header).map_err(csv_err)?;
    for p in personas {
        let mut row = vec![p.source_record_id.clone()];
        row.extend(Attribute::ALL.iter().map(|a| p.get(*a).unwrap_or_default()));
        row.push(p.review_length().to_string());
        row.push(lex.map_or(String::new(), |l| crate::report::fmt_float(score(&p.review, l).compound)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
