//! Audit report serialization (canonical JSON) and standalone SVG charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::perturb::{AttractorReport, RecoveryProfile};
use crate::persona::DiversityScorecard;
use crate::semantic::Projection2D;
use crate::sentiment::Histogram;
use crate::syntactic::EntropyProfile;

pub const SCHEMA_VERSION: &str = "1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Rounds to 9 significant digits and prints the shortest decimal form
/// that reads back to the rounded value.
pub fn fmt_float(x: f64) -> String {
    let r: f64 = format!("{x:.8e}").parse().unwrap_or(x);
    if r == 0.0 {
        "0".into()
    } else if (1e-6..1e15).contains(&r.abs()) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

/// A result together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section<T> {
    pub config: Value,
    pub result: T,
}

impl<T> Section<T> {
    pub fn new(config: impl Serialize, result: T) -> Result<Self> {
        Ok(Section {
            config: serde_json::to_value(config)?,
            result,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySummary {
    pub n_docs: usize,
    pub mean_offdiag: f64,
    pub std_offdiag: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringSummary {
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub silhouette: Option<f64>,
    pub inertia: f64,
    pub cluster_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSummary {
    pub n_points: usize,
    pub initial_kl: f64,
    pub final_kl: f64,
    pub unconverged_bandwidths: usize,
}

impl From<&Projection2D> for ProjectionSummary {
    fn from(p: &Projection2D) -> Self {
        ProjectionSummary {
            n_points: p.points.len(),
            initial_kl: p.initial_kl,
            final_kl: p.final_kl,
            unconverged_bandwidths: p.unconverged_bandwidths,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentSummary {
    pub n_scored: usize,
    pub mean_compound: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaSummary {
    pub n_records: usize,
    pub n_parsed: usize,
    pub n_partial: usize,
    pub n_unparseable: usize,
    pub mean_review_length: f64,
    /// Attribute column name to value counts.
    pub distributions: BTreeMap<String, BTreeMap<String, usize>>,
    pub scorecard: DiversityScorecard,
    /// Clusters of review sentences.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_clustering: Option<ClusteringSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub this: f64,
    pub other: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub other_label: String,
    pub rows: Vec<ComparisonRow>,
    pub other: Box<DiversityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub schema_version: String,
    pub tool_version: String,
    pub label: String,
    pub provenance: BTreeMap<String, String>,
    pub config: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy: Option<Section<EntropyProfile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<Section<SimilaritySummary>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clustering: Option<Section<ClusteringSummary>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<Section<ProjectionSummary>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment: Option<Section<SentimentSummary>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub personas: Option<Section<PersonaSummary>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attractor: Option<Section<AttractorReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
}

impl DiversityReport {
    pub fn new(label: impl Into<String>, provenance: BTreeMap<String, String>, config: impl Serialize) -> Result<Self> {
        Ok(DiversityReport {
            schema_version: SCHEMA_VERSION.into(),
            tool_version: TOOL_VERSION.into(),
            label: label.into(),
            provenance,
            config: serde_json::to_value(config)?,
            entropy: None,
            similarity: None,
            clustering: None,
            projection: None,
            sentiment: None,
            personas: None,
            attractor: None,
            comparison: None,
        })
    }

    /// Headline metrics present in both reports, for side-by-side output.
    pub fn compare(&self, other: &DiversityReport) -> Vec<ComparisonRow> {
        let mut rows = Vec::new();
        let mut push = |metric: &str, a: Option<f64>, b: Option<f64>| {
            if let (Some(this), Some(other)) = (a, b) {
                rows.push(ComparisonRow {
                    metric: metric.into(),
                    this,
                    other,
                });
            }
        };
        push(
            "entropy.mean",
            self.entropy.as_ref().map(|s| s.result.mean),
            other.entropy.as_ref().map(|s| s.result.mean),
        );
        push(
            "entropy.std",
            self.entropy.as_ref().map(|s| s.result.std),
            other.entropy.as_ref().map(|s| s.result.std),
        );
        push(
            "similarity.mean_offdiag",
            self.similarity.as_ref().map(|s| s.result.mean_offdiag),
            other.similarity.as_ref().map(|s| s.result.mean_offdiag),
        );
        push(
            "clustering.k",
            self.clustering.as_ref().map(|s| s.result.k as f64),
            other.clustering.as_ref().map(|s| s.result.k as f64),
        );
        push(
            "clustering.silhouette",
            self.clustering.as_ref().and_then(|s| s.result.silhouette),
            other.clustering.as_ref().and_then(|s| s.result.silhouette),
        );
        push(
            "sentiment.mean_compound",
            self.sentiment.as_ref().map(|s| s.result.mean_compound),
            other.sentiment.as_ref().map(|s| s.result.mean_compound),
        );
        if let (Some(a), Some(b)) = (&self.personas, &other.personas) {
            for s in &a.result.scorecard.scores {
                push(
                    &format!("personas.{}", s.attribute),
                    Some(s.normalized_entropy),
                    b.result.scorecard.score(s.attribute),
                );
            }
        }
        rows
    }
}

/// Pretty-printed JSON with sorted keys and floats at 9 significant
/// digits. Non-finite floats are an error.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&v, 0, "$", &mut out)?;
    out.push('\n');
    Ok(out)
}

fn write_value(v: &Value, indent: usize, path: &str, out: &mut String) -> Result<()> {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        // serde_json turns NaN and infinities into null
        Value::Null => return Err(Error::Serialization(format!("non-finite metric at {path}"))),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&fmt_float(n.as_f64().expect("f64 number")));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s)?),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
            } else if items.iter().all(|i| matches!(i, Value::Number(_) | Value::Bool(_))) {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(item, indent, &format!("{path}[{i}]"), out)?;
                }
                out.push(']');
            } else {
                out.push_str("[\n");
                for (i, item) in items.iter().enumerate() {
                    out.push_str(&pad(indent + 1));
                    write_value(item, indent + 1, &format!("{path}[{i}]"), out)?;
                    if i + 1 < items.len() {
                        out.push(',');
                    }
                    out.push('\n');
                }
                out.push_str(&pad(indent));
                out.push(']');
            }
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return Ok(());
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k)?);
                out.push_str(": ");
                write_value(&map[*k], indent + 1, &format!("{path}.{k}"), out)?;
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = to_canonical_json(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_report(report: &DiversityReport, path: &Path) -> Result<()> {
    write_json(report, path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_report(path: &Path) -> Result<DiversityReport> {
    let report: DiversityReport = read_json(path)?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(Error::Serialization(format!(
            "{}: schema version {:?}, expected {SCHEMA_VERSION:?}",
            path.display(),
            report.schema_version
        )));
    }
    Ok(report)
}

// ---------------------------------------------------------------- SVG

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub const STRIP_RED_BELOW: f64 = 0.2;
pub const STRIP_GREEN_FROM: f64 = 0.6;
const STRIP_COLORS: [(&str, &str); 3] = [("red", "#d73027"), ("yellow", "#fee08b"), ("green", "#1a9850")];

pub fn category_color(i: usize) -> String {
    if i < PALETTE.len() {
        PALETTE[i].to_string()
    } else {
        format!("hsl({:.1},65%,45%)", (i as f64 * 137.508) % 360.0)
    }
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && c != '\t' && c != '\n' => out.push('\u{FFFD}'),
            c => out.push(c),
        }
    }
    out
}

fn n(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x}")
    }
}

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Svg {
            body: String::new(),
            width,
            height,
        }
    }

    fn metadata(&mut self, entries: &[(&str, String)]) {
        self.body.push_str("<metadata>\n");
        for (k, v) in entries {
            let _ = writeln!(self.body, "{}: {}", esc(k), esc(v));
        }
        self.body.push_str("</metadata>\n");
    }

    fn title(&mut self, title: &str) {
        let _ = writeln!(
            self.body,
            r#"<text class="title" x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
            n(self.width / 2.0),
            esc(title)
        );
    }

    fn line(&mut self, class: &str, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<line class="{class}" x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}"/>"#,
            n(x1),
            n(y1),
            n(x2),
            n(y2)
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" text-anchor="{anchor}" font-size="11">{}</text>"#,
            n(x),
            n(y),
            esc(s)
        );
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n<rect class=\"background\" x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = n(self.width),
            h = n(self.height)
        )
    }
}

/// Linear map from a data range onto plot coordinates.
#[derive(Clone, Copy)]
struct Scale {
    d0: f64,
    d1: f64,
    r0: f64,
    r1: f64,
}

impl Scale {
    fn new(d0: f64, d1: f64, r0: f64, r1: f64) -> Self {
        let (d0, d1) = if d1 > d0 { (d0, d1) } else { (d0 - 0.5, d0 + 0.5) };
        Scale { d0, d1, r0, r1 }
    }

    fn map(&self, x: f64) -> f64 {
        self.r0 + (x - self.d0) / (self.d1 - self.d0) * (self.r1 - self.r0)
    }
}

fn extent(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

fn axes(svg: &mut Svg, xs: Scale, ys: Scale, x_label: &str, y_label: &str) {
    let (x0, x1) = (MARGIN, svg.width - MARGIN);
    let (y0, y1) = (svg.height - MARGIN, MARGIN);
    svg.line("axis", x0, y0, x1, y0, "black");
    svg.line("axis", x0, y0, x0, y1, "black");
    for (v, anchor, x) in [(xs.d0, "start", x0), (xs.d1, "end", x1)] {
        svg.text(x, y0 + 16.0, anchor, &fmt_float(v));
    }
    for (v, y) in [(ys.d0, y0), (ys.d1, y1 + 4.0)] {
        svg.text(x0 - 6.0, y, "end", &fmt_float(v));
    }
    svg.text((x0 + x1) / 2.0, svg.height - 16.0, "middle", x_label);
    let _ = writeln!(
        svg.body,
        r#"<text x="16" y="{}" text-anchor="middle" font-size="11" transform="rotate(-90 16 {})">{}</text>"#,
        n((y0 + y1) / 2.0),
        n((y0 + y1) / 2.0),
        esc(y_label)
    );
}

fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

/// Scatter of 2-D points coloured by cluster label, with a legend.
pub fn scatter_svg(points: &[[f64; 2]], labels: &[usize], title: &str) -> Result<String> {
    if points.len() != labels.len() {
        return Err(Error::invalid(format!("{} points but {} labels", points.len(), labels.len())));
    }
    let mut svg = Svg::new(WIDTH, HEIGHT);
    svg.metadata(&[("chart", "scatter".into()), ("points", points.len().to_string())]);
    svg.title(title);
    let (xl, xh) = extent(points.iter().map(|p| p[0])).unwrap_or((0.0, 1.0));
    let (yl, yh) = extent(points.iter().map(|p| p[1])).unwrap_or((0.0, 1.0));
    let xs = Scale::new(xl, xh, MARGIN + 8.0, WIDTH - MARGIN - 120.0);
    let ys = Scale::new(yl, yh, HEIGHT - MARGIN - 8.0, MARGIN + 8.0);
    axes(&mut svg, xs, ys, "dim 1", "dim 2");
    for (p, &l) in points.iter().zip(labels) {
        let _ = writeln!(
            svg.body,
            r#"<circle class="point" cx="{}" cy="{}" r="3" fill="{}" data-cluster="{l}"/>"#,
            n(xs.map(p[0])),
            n(ys.map(p[1])),
            category_color(l)
        );
    }
    let mut clusters: Vec<usize> = labels.to_vec();
    clusters.sort_unstable();
    clusters.dedup();
    for (row, c) in clusters.iter().enumerate() {
        let y = MARGIN + 14.0 * row as f64;
        let _ = writeln!(
            svg.body,
            r#"<rect class="legend" x="{}" y="{}" width="10" height="10" fill="{}"/>"#,
            n(WIDTH - MARGIN - 100.0),
            n(y),
            category_color(*c)
        );
        svg.text(WIDTH - MARGIN - 84.0, y + 9.0, "start", &format!("cluster {c}"));
    }
    Ok(svg.finish())
}

pub fn render_scatter(projection: &Projection2D, labels: &[usize], title: &str, path: &Path) -> Result<()> {
    write_svg(path, &scatter_svg(&projection.points, labels, title)?)
}

/// Band name for a chosen-token probability: red below 0.2, yellow below
/// 0.6, green otherwise.
pub fn strip_band(p: f64) -> &'static str {
    if p < STRIP_RED_BELOW {
        "red"
    } else if p < STRIP_GREEN_FROM {
        "yellow"
    } else {
        "green"
    }
}

fn band_color(band: &str) -> &'static str {
    STRIP_COLORS.iter().find(|(b, _)| *b == band).map_or("#999999", |(_, c)| c)
}

/// One box per token, coloured by the chosen token's probability.
pub fn token_strip_svg(tokens: &[String], probs: &[f64], title: &str) -> Result<String> {
    if tokens.len() != probs.len() {
        return Err(Error::invalid(format!("{} tokens but {} probabilities", tokens.len(), probs.len())));
    }
    const ROW_W: f64 = 800.0;
    const BOX_H: f64 = 22.0;
    const CHAR_W: f64 = 7.5;
    let mut placed = Vec::with_capacity(tokens.len());
    let (mut x, mut row) = (0.0, 0usize);
    for t in tokens {
        let w = (t.chars().count() as f64 * CHAR_W + 8.0).max(16.0);
        if x + w > ROW_W && x > 0.0 {
            x = 0.0;
            row += 1;
        }
        placed.push((x, row, w));
        x += w + 2.0;
    }
    let rows = placed.last().map_or(1, |p| p.1 + 1);
    let mut svg = Svg::new(ROW_W + 20.0, 50.0 + rows as f64 * (BOX_H + 6.0) + 10.0);
    svg.metadata(&[
        ("chart", "token strip".into()),
        ("bands", format!("red p < {STRIP_RED_BELOW}; yellow {STRIP_RED_BELOW} <= p < {STRIP_GREEN_FROM}; green p >= {STRIP_GREEN_FROM}")),
    ]);
    svg.title(title);
    for ((t, p), (x, row, w)) in tokens.iter().zip(probs).zip(placed) {
        let band = strip_band(*p);
        let (bx, by) = (10.0 + x, 40.0 + row as f64 * (BOX_H + 6.0));
        let _ = writeln!(
            svg.body,
            r#"<rect class="token" x="{}" y="{}" width="{}" height="{}" fill="{}" data-band="{band}" data-p="{}"/>"#,
            n(bx),
            n(by),
            n(w),
            n(BOX_H),
            band_color(band),
            fmt_float(*p)
        );
        let _ = writeln!(
            svg.body,
            r#"<text x="{}" y="{}" font-size="12" font-family="monospace" xml:space="preserve">{}</text>"#,
            n(bx + 4.0),
            n(by + 15.0),
            esc(&t.replace('\n', "\u{21b5}"))
        );
    }
    Ok(svg.finish())
}

pub fn render_token_strip(tokens: &[String], profile: &RecoveryProfile, title: &str, path: &Path) -> Result<()> {
    write_svg(path, &token_strip_svg(tokens, &profile.per_token_chosen_prob, title)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramSpec {
    pub bins: usize,
    /// Fixed range; defaults to the data range.
    pub range: Option<(f64, f64)>,
    pub title: String,
    pub x_label: String,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        HistogramSpec {
            bins: 40,
            range: None,
            title: String::new(),
            x_label: String::new(),
        }
    }
}

/// Bins `values`; without a fixed range, identical values get a single
/// bin centred on them.
pub fn histogram_of(values: &[f64], spec: &HistogramSpec) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::invalid("histogram of empty series"));
    }
    match spec.range {
        Some((lo, hi)) => Histogram::new(values, lo, hi, spec.bins),
        None => {
            let (lo, hi) = extent(values.iter().copied()).expect("non-empty");
            if lo == hi {
                Histogram::new(values, lo - 0.5, hi + 0.5, 1)
            } else {
                Histogram::new(values, lo, hi, spec.bins)
            }
        }
    }
}

pub fn histogram_svg(values: &[f64], spec: &HistogramSpec) -> Result<String> {
    let h = histogram_of(values, spec)?;
    histogram_svg_from(&h, spec)
}

pub fn histogram_svg_from(h: &Histogram, spec: &HistogramSpec) -> Result<String> {
    let (lo, hi) = (h.edges[0], *h.edges.last().expect("edges"));
    let max = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let mut svg = Svg::new(WIDTH, HEIGHT);
    svg.metadata(&[
        ("chart", "histogram".into()),
        ("bins", h.counts.len().to_string()),
        ("bin edges", h.edges.iter().map(|e| fmt_float(*e)).collect::<Vec<_>>().join(" ")),
        ("bin rule", "left-closed bins; the last bin also includes its right edge".into()),
    ]);
    svg.title(&spec.title);
    let xs = Scale::new(lo, hi, MARGIN, WIDTH - MARGIN);
    let ys = Scale::new(0.0, max, HEIGHT - MARGIN, MARGIN);
    axes(&mut svg, xs, ys, &spec.x_label, "count");
    for (i, &c) in h.counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let (x0, x1) = (xs.map(h.edges[i]), xs.map(h.edges[i + 1]));
        let y = ys.map(c as f64);
        let _ = writeln!(
            svg.body,
            r##"<rect class="bar" x="{}" y="{}" width="{}" height="{}" fill="#4c72b0" data-count="{c}" data-lo="{}" data-hi="{}"/>"##,
            n(x0),
            n(y),
            n((x1 - x0).max(1.0)),
            n(HEIGHT - MARGIN - y),
            fmt_float(h.edges[i]),
            fmt_float(h.edges[i + 1])
        );
    }
    Ok(svg.finish())
}

pub fn render_histogram(values: &[f64], spec: &HistogramSpec, path: &Path) -> Result<()> {
    write_svg(path, &histogram_svg(values, spec)?)
}

/// Linear-interpolation quantile of sorted data.
fn sorted_quantile(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

/// Quartiles by linear interpolation; whiskers reach the most extreme
/// data within 1.5 IQR of the box.
pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::invalid("box plot of empty series"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (sorted_quantile(&v, 0.25), sorted_quantile(&v, 0.5), sorted_quantile(&v, 0.75));
    let iqr = q3 - q1;
    let (fence_lo, fence_hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| (fence_lo..=fence_hi).contains(x)).collect();
    Ok(BoxStats {
        q1,
        median,
        q3,
        whisker_lo: inside.first().copied().unwrap_or(q1),
        whisker_hi: inside.last().copied().unwrap_or(q3),
        outliers: v.iter().copied().filter(|x| !(fence_lo..=fence_hi).contains(x)).collect(),
    })
}

pub fn boxplot_svg(series: &[(String, Vec<f64>)], title: &str, y_label: &str) -> Result<String> {
    if series.is_empty() || series.iter().any(|(_, v)| v.is_empty()) {
        return Err(Error::invalid("box plot needs non-empty series"));
    }
    let stats: Vec<BoxStats> = series.iter().map(|(_, v)| box_stats(v)).collect::<Result<_>>()?;
    let (lo, hi) = extent(series.iter().flat_map(|(_, v)| v.iter().copied())).expect("non-empty");
    let mut svg = Svg::new(WIDTH, HEIGHT);
    svg.metadata(&[
        ("chart", "box plot".into()),
        ("quartiles", "linear interpolation between order statistics".into()),
        ("whiskers", "Tukey: most extreme data within 1.5 * IQR of the box".into()),
    ]);
    svg.title(title);
    let ys = Scale::new(lo, hi, HEIGHT - MARGIN - 8.0, MARGIN + 8.0);
    let xs = Scale::new(0.0, series.len() as f64, MARGIN, WIDTH - MARGIN);
    axes(&mut svg, xs, ys, "", y_label);
    let slot = (WIDTH - 2.0 * MARGIN) / series.len() as f64;
    for (i, ((name, _), s)) in series.iter().zip(&stats).enumerate() {
        let cx = MARGIN + slot * (i as f64 + 0.5);
        let half = (slot * 0.25).min(40.0);
        let color = category_color(i);
        svg.line("whisker", cx, ys.map(s.whisker_lo), cx, ys.map(s.q1), "black");
        svg.line("whisker", cx, ys.map(s.q3), cx, ys.map(s.whisker_hi), "black");
        svg.line("whisker-cap", cx - half / 2.0, ys.map(s.whisker_lo), cx + half / 2.0, ys.map(s.whisker_lo), "black");
        svg.line("whisker-cap", cx - half / 2.0, ys.map(s.whisker_hi), cx + half / 2.0, ys.map(s.whisker_hi), "black");
        let _ = writeln!(
            svg.body,
            r#"<rect class="box" x="{}" y="{}" width="{}" height="{}" fill="{color}" fill-opacity="0.5" stroke="black"/>"#,
            n(cx - half),
            n(ys.map(s.q3)),
            n(2.0 * half),
            n(ys.map(s.q1) - ys.map(s.q3))
        );
        let _ = writeln!(
            svg.body,
            r#"<line class="median" x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="black" stroke-width="2" data-value="{}"/>"#,
            n(cx - half),
            n(cx + half),
            fmt_float(s.median),
            y = n(ys.map(s.median))
        );
        for o in &s.outliers {
            let _ = writeln!(
                svg.body,
                r#"<circle class="outlier" cx="{}" cy="{}" r="2.5" fill="none" stroke="{color}"/>"#,
                n(cx),
                n(ys.map(*o))
            );
        }
        svg.text(cx, HEIGHT - MARGIN + 30.0, "middle", name);
    }
    Ok(svg.finish())
}

pub fn render_boxplot(series: &[(String, Vec<f64>)], title: &str, y_label: &str, path: &Path) -> Result<()> {
    write_svg(path, &boxplot_svg(series, title, y_label)?)
}

pub const STACK_PLOT_HEIGHT: f64 = HEIGHT - 2.0 * MARGIN;

/// One bar per position, one segment per candidate; a segment's height is
/// its probability times [`STACK_PLOT_HEIGHT`].
pub fn stacked_bars_svg(positions: &[Vec<(String, f64)>], title: &str) -> Result<String> {
    if positions.is_empty() {
        return Err(Error::invalid("stacked bars need at least one position"));
    }
    for (i, pos) in positions.iter().enumerate() {
        let s: f64 = pos.iter().map(|c| c.1).sum();
        if s > 1.0 + 1e-6 || pos.iter().any(|c| !(0.0..=1.0).contains(&c.1)) {
            return Err(Error::invalid(format!("position {i} probabilities sum to {s}")));
        }
    }
    let mut svg = Svg::new(WIDTH, HEIGHT);
    svg.metadata(&[
        ("chart", "stacked bars".into()),
        ("scale", format!("segment height = probability * {}", n(STACK_PLOT_HEIGHT))),
    ]);
    svg.title(title);
    let xs = Scale::new(0.0, positions.len() as f64, MARGIN, WIDTH - MARGIN);
    let ys = Scale::new(0.0, 1.0, HEIGHT - MARGIN, MARGIN);
    axes(&mut svg, xs, ys, "position", "probability");
    let slot = (WIDTH - 2.0 * MARGIN) / positions.len() as f64;
    for (i, pos) in positions.iter().enumerate() {
        let x = MARGIN + slot * i as f64 + slot * 0.1;
        let mut base = HEIGHT - MARGIN;
        for (rank, (tok, p)) in pos.iter().enumerate() {
            let h = p * STACK_PLOT_HEIGHT;
            base -= h;
            let _ = writeln!(
                svg.body,
                r#"<rect class="segment" x="{}" y="{}" width="{}" height="{}" fill="{}" data-position="{i}" data-token="{}"/>"#,
                n(x),
                n(base),
                n(slot * 0.8),
                n(h),
                category_color(rank),
                esc(tok)
            );
        }
    }
    Ok(svg.finish())
}

pub fn render_stacked_bars(positions: &[Vec<(String, f64)>], title: &str, path: &Path) -> Result<()> {
    write_svg(path, &stacked_bars_svg(positions, title)?)
}

/// Category counts as vertical bars, in the given order.
pub fn bar_chart_svg(categories: &[(String, usize)], title: &str) -> Result<String> {
    if categories.is_empty() {
        return Err(Error::invalid("bar chart needs at least one category"));
    }
    let max = categories.iter().map(|c| c.1).max().unwrap_or(0).max(1) as f64;
    let mut svg = Svg::new(WIDTH.max(40.0 * categories.len() as f64 + 2.0 * MARGIN), HEIGHT);
    svg.metadata(&[("chart", "bar chart".into()), ("categories", categories.len().to_string())]);
    svg.title(title);
    let xs = Scale::new(0.0, categories.len() as f64, MARGIN, svg.width - MARGIN);
    let ys = Scale::new(0.0, max, HEIGHT - MARGIN, MARGIN);
    axes(&mut svg, xs, ys, "", "count");
    let slot = (svg.width - 2.0 * MARGIN) / categories.len() as f64;
    for (i, (name, c)) in categories.iter().enumerate() {
        let x = MARGIN + slot * i as f64 + slot * 0.1;
        let y = ys.map(*c as f64);
        let _ = writeln!(
            svg.body,
            r##"<rect class="bar" x="{}" y="{}" width="{}" height="{}" fill="#4c72b0" data-count="{c}"/>"##,
            n(x),
            n(y),
            n(slot * 0.8),
            n(HEIGHT - MARGIN - y)
        );
        let lx = x + slot * 0.4;
        let ly = HEIGHT - MARGIN + 12.0;
        let _ = writeln!(
            svg.body,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="end" transform="rotate(-45 {} {})">{}</text>"#,
            n(lx),
            n(ly),
            n(lx),
            n(ly),
            esc(name)
        );
    }
    Ok(svg.finish())
}

pub fn render_bar_chart(categories: &[(String, usize)], title: &str, path: &Path) -> Result<()> {
    write_svg(path, &bar_chart_svg(categories, title)?)
}

/// One polyline per series over x = 0, 1, 2, ...
pub fn line_chart_svg(series: &[(String, Vec<f64>)], title: &str, x_label: &str, y_label: &str) -> Result<String> {
    if series.is_empty() || series.iter().all(|(_, v)| v.is_empty()) {
        return Err(Error::invalid("line chart needs data"));
    }
    let max_len = series.iter().map(|(_, v)| v.len()).max().unwrap_or(1);
    let (lo, hi) = extent(series.iter().flat_map(|(_, v)| v.iter().copied())).expect("non-empty");
    let mut svg = Svg::new(WIDTH, HEIGHT);
    svg.metadata(&[("chart", "line chart".into()), ("series", series.len().to_string())]);
    svg.title(title);
    let xs = Scale::new(0.0, (max_len - 1).max(1) as f64, MARGIN, WIDTH - MARGIN - 120.0);
    let ys = Scale::new(lo.min(0.0), hi, HEIGHT - MARGIN, MARGIN);
    axes(&mut svg, xs, ys, x_label, y_label);
    for (i, (name, v)) in series.iter().enumerate() {
        let pts: Vec<String> = v
            .iter()
            .enumerate()
            .map(|(x, y)| format!("{},{}", n(xs.map(x as f64)), n(ys.map(*y))))
            .collect();
        let color = category_color(i);
        let _ = writeln!(
            svg.body,
            r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let y = MARGIN + 14.0 * i as f64;
        let _ = writeln!(
            svg.body,
            r#"<rect class="legend" x="{}" y="{}" width="10" height="10" fill="{color}"/>"#,
            n(WIDTH - MARGIN - 100.0),
            n(y)
        );
        svg.text(WIDTH - MARGIN - 84.0, y + 9.0, "start", name);
    }
    Ok(svg.finish())
}

pub fn render_line_chart(series: &[(String, Vec<f64>)], title: &str, x_label: &str, y_label: &str, path: &Path) -> Result<()> {
    write_svg(path, &line_chart_svg(series, title, x_label, y_label)?)
}
