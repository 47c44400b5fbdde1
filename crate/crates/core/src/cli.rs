//! Command-line front end. `run` parses arguments, executes one
//! subcommand and returns the process exit code.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{load_corpus, save_corpus, Corpus};
use crate::error::{Error, Result};
use crate::llm_client::{Client, EndpointConfig, GenerationConfig};
use crate::persona::{
    diversity_scorecard, distribution_of, name_frequency, parse_corpus_personas, write_personas_csv, Attribute,
    PersonaParseSummary,
};
use crate::perturb::{run_attractor_experiment, AttractorConfig, Edit};
use crate::report::{
    self, fmt_float, ClusteringSummary, Comparison, DiversityReport, HistogramSpec, PersonaSummary,
    ProjectionSummary, Section, SentimentSummary, SimilaritySummary,
};
use crate::rlhf_sim::{run_table1, sweep, BanditTask, UpdateRule, JEEPITI};
use crate::semantic::{
    embed_texts, kmeans, select_k, similarity_report, split_sentences, tfidf_vectorize, tsne, ClusteringResult,
    Embedder, EmbeddingMatrix, KmeansConfig, TsneConfig,
};
use crate::sentiment::{corpus_sentiment_distribution, load_lexicon, SentimentLexicon, SentimentOptions, TextSelector};
use crate::syntactic::{corpus_entropy_summary, EntropyMode};

pub const DEFAULT_OUT: &str = "./modescope-out";
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NETWORK: i32 = 3;
pub const EXIT_DATA: i32 = 4;

const DEFAULT_LEXICON: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/vader_lexicon.txt");
const EMOJI_LEXICON_NAME: &str = "emoji_utf8_lexicon.txt";
const MAX_STRIP_POSITIONS: usize = 40;
const SENTENCE_MIN_TOKENS: usize = 2;
/// Collapse thresholds used in the simulate summary.
const COLLAPSE_BEST_PROB: f64 = 0.99;
const COLLAPSE_ENTROPY_BITS: f64 = 0.1;
const KL_TOLERANCE_NATS: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(name = "modescope", version, about = "Output-diversity audits for text-generation models")]
pub struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory [default: ./modescope-out]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample completions with per-token top-k logprobs into a JSONL corpus.
    Generate(GenerateArgs),
    /// Audit one corpus, or compare two (tokens: entropy; semantic: similarity,
    /// clusters, t-SNE; personas: attributes, sentiment, sentence clusters).
    Audit(AuditArgs),
    /// Perturb cluster exemplars, regenerate, and measure return to the baseline clusters.
    Perturb(PerturbArgs),
    /// Run the bandit policy-update simulator.
    Simulate(SimulateArgs),
}

#[derive(Debug, Default, Args)]
pub struct EndpointArgs {
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Request timeout in seconds.
    #[arg(long)]
    pub timeout: Option<f64>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    #[arg(long)]
    pub retries: Option<u32>,
    /// Replay canned responses from this directory instead of calling an endpoint.
    #[arg(long)]
    pub mock_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct GenerationArgs {
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub n_predict: Option<usize>,
    /// Candidates per position (top_logprobs).
    #[arg(long)]
    pub logprobs: Option<usize>,
    #[arg(long, overrides_with = "no_chat_template")]
    pub chat_template: bool,
    #[arg(long, overrides_with = "chat_template")]
    pub no_chat_template: bool,
    #[arg(long = "stop")]
    pub stop_sequences: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub prompt: String,
    #[arg(long)]
    pub n: usize,
    /// Corpus file name inside the output directory.
    #[arg(long, default_value = "corpus.jsonl")]
    pub output: String,
    #[command(flatten)]
    pub endpoint: EndpointArgs,
    #[command(flatten)]
    pub generation: GenerationArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditMode {
    Tokens,
    Semantic,
    Personas,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Hashed,
    Endpoint,
    Tfidf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilaritySpace {
    Tfidf,
    Embeddings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyModeArg {
    Raw,
    Renormalize,
}

impl From<EntropyModeArg> for EntropyMode {
    fn from(m: EntropyModeArg) -> Self {
        match m {
            EntropyModeArg::Raw => EntropyMode::Raw,
            EntropyModeArg::Renormalize => EntropyMode::Renormalize,
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct AnalysisArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub embedder: Option<EmbedderKind>,
    /// Dimension of hashed embeddings.
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Model id sent to the embeddings endpoint [default: the endpoint model].
    #[arg(long)]
    pub embedding_model: Option<String>,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// k-means restarts per k.
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// One or more of tokens, semantic, personas (comma-separated or repeated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub mode: Vec<AuditMode>,
    /// One corpus, or two to compare side by side.
    #[arg(required = true, num_args = 1..=2)]
    pub corpora: Vec<PathBuf>,
    /// Label per corpus [default: file stem].
    #[arg(long)]
    pub label: Vec<String>,
    #[arg(long)]
    pub entropy_mode: Option<EntropyModeArg>,
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long)]
    pub tsne_iterations: Option<usize>,
    /// Space for the pairwise cosine matrix.
    #[arg(long)]
    pub similarity_space: Option<SimilaritySpace>,
    /// VADER-format lexicon (token, mean valence, ...).
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Score review sentences instead of whole reviews.
    #[arg(long)]
    pub per_sentence: bool,
    #[arg(long)]
    pub bins: Option<usize>,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[command(flatten)]
    pub endpoint: EndpointArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EditKind {
    Negate,
    Append,
    Replace,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// Baseline corpus whose clusters define the attractors.
    pub baseline: PathBuf,
    /// Exemplar prefix; repeat for several. Default: one per baseline cluster,
    /// cut from the member nearest its centroid.
    #[arg(long)]
    pub exemplar: Vec<String>,
    /// Prompt the prefixes are appended to [default: the baseline prompt].
    #[arg(long)]
    pub base_prompt: Option<String>,
    #[arg(long, value_enum, default_value = "negate")]
    pub edit: EditKind,
    /// Text for append and replace edits.
    #[arg(long)]
    pub edit_text: Option<String>,
    /// Span replaced by replace edits.
    #[arg(long)]
    pub edit_span: Option<String>,
    #[arg(long)]
    pub n_per_exemplar: Option<usize>,
    #[arg(long)]
    pub radius_quantile: Option<f64>,
    #[arg(long)]
    pub recovery_threshold: Option<f64>,
    /// Fixed baseline cluster count [default: chosen by silhouette].
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[command(flatten)]
    pub endpoint: EndpointArgs,
    #[command(flatten)]
    pub generation: GenerationArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleArg {
    Naive,
    Ppo,
    Kl,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Replay the fixed four-step chatbot-name trajectory.
    #[arg(long)]
    pub table1: bool,
    #[arg(long, value_enum, default_value = "naive")]
    pub rule: RuleArg,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    /// Number of seeds.
    #[arg(long, default_value_t = 50)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed_start: u64,
    #[arg(long, default_value_t = 10.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.2)]
    pub epsilon: f64,
    /// Comma-separated name=reward pairs [default: Jeepiti=1,Chats and Giggles=0.4].
    #[arg(long)]
    pub rewards: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    out: Option<PathBuf>,
    endpoint: FileEndpoint,
    generation: FileGeneration,
    analysis: FileAnalysis,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileEndpoint {
    base_url: Option<String>,
    model_id: Option<String>,
    timeout: Option<f64>,
    max_in_flight: Option<usize>,
    retries: Option<u32>,
    mock_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileGeneration {
    temperature: Option<f64>,
    n_predict: Option<usize>,
    top_logprobs: Option<usize>,
    use_chat_template: Option<bool>,
    stop_sequences: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileAnalysis {
    seed: Option<u64>,
    embedder: Option<EmbedderKind>,
    embed_dim: Option<usize>,
    embedding_model: Option<String>,
    k_min: Option<usize>,
    k_max: Option<usize>,
    restarts: Option<usize>,
    entropy_mode: Option<EntropyModeArg>,
    perplexity: Option<f64>,
    tsne_iterations: Option<usize>,
    similarity_space: Option<SimilaritySpace>,
    lexicon: Option<PathBuf>,
    bins: Option<usize>,
    n_per_exemplar: Option<usize>,
    radius_quantile: Option<f64>,
    recovery_threshold: Option<f64>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

/// Where a failure maps among the documented exit codes.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Network(_) | Error::Protocol(_) => EXIT_NETWORK,
        Error::Capability(_) | Error::Numerical(_) | Error::MalformedLine { .. } | Error::Serialization(_) => EXIT_DATA,
        Error::Io { .. } | Error::InvalidInput(_) | Error::Rejected { .. } => EXIT_USAGE,
    }
}

struct Ctx<'a> {
    file: FileConfig,
    out_dir: PathBuf,
    stdout: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn say(&mut self, line: impl AsRef<str>) -> Result<()> {
        writeln!(self.stdout, "{}", line.as_ref()).map_err(|e| Error::io("<stdout>", e))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let file = load_file_config(cli.config.as_deref())?;
    let out_dir = cli
        .out
        .clone()
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let mut ctx = Ctx { file, out_dir, stdout };
    match cli.command {
        Command::Generate(a) => cmd_generate(&mut ctx, &a),
        Command::Audit(a) => cmd_audit(&mut ctx, &a),
        Command::Perturb(a) => cmd_perturb(&mut ctx, &a),
        Command::Simulate(a) => cmd_simulate(&mut ctx, &a),
    }
}

fn endpoint_config(args: &EndpointArgs, file: &FileEndpoint) -> EndpointConfig {
    let base_url = args
        .base_url
        .clone()
        .or_else(|| file.base_url.clone())
        .unwrap_or_default();
    let model = args.model.clone().or_else(|| file.model_id.clone()).unwrap_or_default();
    let mut cfg = EndpointConfig::new(base_url, model);
    if let Some(t) = args.timeout.or(file.timeout) {
        cfg.timeout = t;
    }
    if let Some(m) = args.max_in_flight.or(file.max_in_flight) {
        cfg.max_in_flight = m;
    }
    if let Some(r) = args.retries.or(file.retries) {
        cfg.retries = r;
    }
    cfg
}

fn build_client(args: &EndpointArgs, file: &FileEndpoint) -> Result<Client> {
    let mut cfg = endpoint_config(args, file);
    if let Some(dir) = args.mock_dir.clone().or_else(|| file.mock_dir.clone()) {
        if cfg.base_url.is_empty() {
            cfg.base_url = "mock".into();
        }
        if cfg.model_id.is_empty() {
            cfg.model_id = "mock".into();
        }
        cfg.validate()?;
        return Ok(Client::mock(dir, cfg));
    }
    if cfg.base_url.is_empty() {
        return Err(Error::invalid("no endpoint configured: pass --base-url or --mock-dir"));
    }
    if cfg.model_id.is_empty() {
        return Err(Error::invalid("no model configured: pass --model"));
    }
    Client::http(cfg)
}

fn generation_config(args: &GenerationArgs, file: &FileGeneration, template_default: bool) -> Result<GenerationConfig> {
    let d = GenerationConfig::default();
    let use_chat_template = if args.chat_template {
        true
    } else if args.no_chat_template {
        false
    } else {
        file.use_chat_template.unwrap_or(template_default)
    };
    let cfg = GenerationConfig {
        temperature: args.temperature.or(file.temperature).unwrap_or(d.temperature),
        n_predict: args.n_predict.or(file.n_predict).unwrap_or(d.n_predict),
        top_logprobs: args.logprobs.or(file.top_logprobs).unwrap_or(d.top_logprobs),
        use_chat_template,
        stop_sequences: if args.stop_sequences.is_empty() {
            file.stop_sequences.clone().unwrap_or_default()
        } else {
            args.stop_sequences.clone()
        },
        ..d
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_generate(ctx: &mut Ctx, a: &GenerateArgs) -> Result<()> {
    let gcfg = generation_config(&a.generation, &ctx.file.generation, false)?;
    let client = build_client(&a.endpoint, &ctx.file.endpoint)?;
    let path = ctx.path(&a.output);
    match client.generate_batch(&a.prompt, a.n, &gcfg) {
        Ok(corpus) => {
            save_corpus(&corpus, &path)?;
            let eos = corpus.records.iter().filter(|r| r.stopped_on_eos).count();
            let rate = if corpus.is_empty() {
                "n/a".to_string()
            } else {
                fmt_float(eos as f64 / corpus.len() as f64)
            };
            ctx.say(format!("wrote {} records to {} (EOS rate {rate})", corpus.len(), path.display()))
        }
        Err(batch) => {
            let partial = ctx.path(&format!("{}.partial", a.output));
            save_corpus(&batch.partial, &partial)?;
            ctx.say(format!(
                "batch aborted after {} of {} records; partial corpus in {}",
                batch.partial.len(),
                a.n,
                partial.display()
            ))?;
            Err(batch.failures.into_iter().next().map(|f| f.1).expect("batch error has a failure"))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct AnalysisConfig {
    seed: u64,
    embedder: EmbedderKind,
    embed_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    embedding_model: Option<String>,
    k_min: usize,
    k_max: usize,
    restarts: usize,
}

fn analysis_config(a: &AnalysisArgs, f: &FileAnalysis) -> AnalysisConfig {
    let embedder = a.embedder.or(f.embedder).unwrap_or(EmbedderKind::Hashed);
    AnalysisConfig {
        seed: a.seed.or(f.seed).unwrap_or(0),
        embedder,
        embed_dim: a.embed_dim.or(f.embed_dim).unwrap_or(crate::semantic::SBERT_DIM),
        embedding_model: a.embedding_model.clone().or_else(|| f.embedding_model.clone()),
        k_min: a.k_min.or(f.k_min).unwrap_or(2),
        k_max: a.k_max.or(f.k_max).unwrap_or(10),
        restarts: a.restarts.or(f.restarts).unwrap_or(10),
    }
}

/// Clients are only built when the endpoint embedder is selected.
fn make_embedder<'a>(cfg: &AnalysisConfig, client: Option<&'a Client>) -> Result<Embedder<'a>> {
    Ok(match cfg.embedder {
        EmbedderKind::Hashed => Embedder::Hashed {
            dim: cfg.embed_dim,
            seed: cfg.seed,
        },
        EmbedderKind::Tfidf => Embedder::Tfidf,
        EmbedderKind::Endpoint => {
            let client = client.ok_or_else(|| Error::invalid("endpoint embedder needs --base-url or --mock-dir"))?;
            Embedder::Endpoint {
                client,
                model: cfg
                    .embedding_model
                    .clone()
                    .unwrap_or_else(|| client.endpoint().model_id.clone()),
            }
        }
    })
}

fn clustering_summary(c: &ClusteringResult) -> ClusteringSummary {
    ClusteringSummary {
        k: c.k,
        silhouette: c.silhouette,
        inertia: c.inertia,
        cluster_sizes: c.cluster_sizes(),
    }
}

fn cluster(points: &[Vec<f64>], cfg: &AnalysisConfig) -> Result<ClusteringResult> {
    let n = points.len();
    if n < 3 {
        return Err(Error::Capability(format!("clustering needs at least 3 texts, found {n}")));
    }
    let k_max = cfg.k_max.min(n - 1);
    let k_min = cfg.k_min.min(k_max);
    Ok(select_k(points, k_min, k_max, cfg.seed, cfg.restarts)?.1)
}

#[derive(Debug, Clone, Serialize)]
struct AuditConfig {
    modes: Vec<AuditMode>,
    corpora: Vec<String>,
    labels: Vec<String>,
    entropy_mode: EntropyModeArg,
    perplexity: f64,
    tsne_iterations: usize,
    similarity_space: SimilaritySpace,
    lexicon: String,
    per_sentence: bool,
    bins: usize,
    analysis: AnalysisConfig,
}

struct Loaded {
    label: String,
    file_name: String,
    corpus: Corpus,
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn labels_for(paths: &[PathBuf], given: &[String]) -> Result<Vec<String>> {
    if !given.is_empty() {
        if given.len() != paths.len() {
            return Err(Error::invalid(format!("{} labels for {} corpora", given.len(), paths.len())));
        }
        if given.len() == 2 && given[0] == given[1] {
            return Err(Error::invalid("labels must differ"));
        }
        return Ok(given.to_vec());
    }
    let mut labels: Vec<String> = paths
        .iter()
        .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "corpus".into()))
        .collect();
    if labels.len() == 2 && labels[0] == labels[1] {
        labels[0].push_str("-1");
        labels[1].push_str("-2");
    }
    Ok(labels)
}

fn load_lexicon_with_emoji(path: &Path) -> Result<SentimentLexicon> {
    let lex = load_lexicon(path)?;
    let emoji = path.with_file_name(EMOJI_LEXICON_NAME);
    if emoji.exists() {
        lex.with_emoji_file(emoji)
    } else {
        Ok(lex)
    }
}

fn cmd_audit(ctx: &mut Ctx, a: &AuditArgs) -> Result<()> {
    let f = &ctx.file.analysis;
    let mut modes = a.mode.clone();
    modes.sort();
    modes.dedup();
    let labels = labels_for(&a.corpora, &a.label)?;
    let lexicon_path = a
        .lexicon
        .clone()
        .or_else(|| f.lexicon.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_LEXICON));
    let cfg = AuditConfig {
        modes: modes.clone(),
        corpora: a.corpora.iter().map(|p| file_name(p)).collect(),
        labels: labels.clone(),
        entropy_mode: a.entropy_mode.or(f.entropy_mode).unwrap_or(EntropyModeArg::Raw),
        perplexity: a.perplexity.or(f.perplexity).unwrap_or(30.0),
        tsne_iterations: a.tsne_iterations.or(f.tsne_iterations).unwrap_or(1000),
        similarity_space: a.similarity_space.or(f.similarity_space).unwrap_or(SimilaritySpace::Tfidf),
        lexicon: file_name(&lexicon_path),
        per_sentence: a.per_sentence,
        bins: a.bins.or(f.bins).unwrap_or(crate::sentiment::DEFAULT_BINS),
        analysis: analysis_config(&a.analysis, f),
    };
    let client = match cfg.analysis.embedder {
        EmbedderKind::Endpoint => Some(build_client(&a.endpoint, &ctx.file.endpoint)?),
        _ => None,
    };
    let embedder = make_embedder(&cfg.analysis, client.as_ref())?;
    let lexicon = if modes.contains(&AuditMode::Personas) {
        Some(load_lexicon_with_emoji(&lexicon_path)?)
    } else {
        None
    };

    let mut loaded = Vec::new();
    for (path, label) in a.corpora.iter().zip(&labels) {
        loaded.push(Loaded {
            label: label.clone(),
            file_name: file_name(path),
            corpus: load_corpus(path)?,
        });
    }
    let parsed: Vec<Option<PersonaParseSummary>> = loaded
        .iter()
        .map(|l| modes.contains(&AuditMode::Personas).then(|| parse_corpus_personas(&l.corpus)))
        .collect();
    let mut reference_sizes = BTreeMap::new();
    for attr in Attribute::ALL {
        let mut union = BTreeSet::new();
        for p in parsed.iter().flatten() {
            for persona in &p.personas {
                if let Some(v) = persona.get(attr) {
                    union.insert(v.trim().to_lowercase());
                }
            }
        }
        reference_sizes.insert(attr, union.len());
    }

    let mut reports = Vec::new();
    for (l, p) in loaded.iter().zip(&parsed) {
        let mut r = DiversityReport::new(&l.label, provenance(l), &cfg)?;
        if modes.contains(&AuditMode::Tokens) {
            audit_tokens(ctx, l, &cfg, &mut r)?;
        }
        if modes.contains(&AuditMode::Semantic) {
            audit_semantic(ctx, l, &cfg, &embedder, &mut r)?;
        }
        if let (Some(p), Some(lex)) = (p, &lexicon) {
            audit_personas(ctx, l, p, lex, &reference_sizes, &cfg, &embedder, &mut r)?;
        }
        reports.push(r);
    }
    write_cross_corpus_charts(ctx, &reports)?;

    let mut iter = reports.into_iter();
    let mut main = iter.next().expect("at least one corpus");
    if let Some(other) = iter.next() {
        let rows = main.compare(&other);
        write_comparison_csv(&ctx.path("comparison.csv"), &main.label, &other.label, &rows)?;
        for row in &rows {
            ctx.say(format!(
                "{}: {} = {}, {} = {}",
                row.metric,
                main.label,
                fmt_float(row.this),
                other.label,
                fmt_float(row.other)
            ))?;
        }
        main.comparison = Some(Comparison {
            other_label: other.label.clone(),
            rows,
            other: Box::new(other),
        });
    }
    let path = ctx.path("report.json");
    report::write_report(&main, &path)?;
    ctx.say(format!("wrote {}", path.display()))
}

fn provenance(l: &Loaded) -> BTreeMap<String, String> {
    let mut p = l.corpus.provenance.clone();
    p.insert("corpus_file".into(), l.file_name.clone());
    p.insert("records".into(), l.corpus.len().to_string());
    p
}

fn audit_tokens(ctx: &mut Ctx, l: &Loaded, cfg: &AuditConfig, r: &mut DiversityReport) -> Result<()> {
    let mode: EntropyMode = cfg.entropy_mode.into();
    let mut profile = corpus_entropy_summary(&l.corpus, mode, false)?;
    profile.per_token_series = None;
    let with_steps: Vec<_> = l.corpus.records.iter().filter(|r| r.has_steps()).collect();

    let path = ctx.path(&format!("{}.entropy.csv", l.label));
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::Serialization(e.to_string());
    w.write_record(["record_id", "mean_entropy_bits"]).map_err(csv_err)?;
    for (rec, h) in with_steps.iter().zip(&profile.per_completion_means) {
        w.write_record([rec.id.clone(), fmt_float(*h)]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let hi = profile
        .per_completion_means
        .iter()
        .copied()
        .fold((crate::corpus::DEFAULT_TOP_K as f64).log2(), f64::max);
    let spec = HistogramSpec {
        bins: 40,
        range: Some((0.0, hi)),
        title: format!("{}: mean top-k entropy per completion", l.label),
        x_label: "bits".into(),
    };
    report::render_histogram(
        &profile.per_completion_means,
        &spec,
        &ctx.path(&format!("{}.entropy_hist.svg", l.label)),
    )?;

    let first = with_steps[0];
    let positions: Vec<Vec<(String, f64)>> = first
        .steps
        .iter()
        .take(MAX_STRIP_POSITIONS)
        .map(|s| s.candidates.iter().map(|(t, lp)| (t.clone(), lp.exp())).collect())
        .collect();
    report::render_stacked_bars(
        &positions,
        &format!("{}: top-k candidates, record {}", l.label, first.id),
        &ctx.path(&format!("{}.topk_bars.svg", l.label)),
    )?;
    let tokens: Vec<String> = first.steps.iter().map(|s| s.chosen_token.clone()).collect();
    let probs: Vec<f64> = first.steps.iter().map(|s| s.chosen_logprob.exp()).collect();
    std::fs::write(
        ctx.path(&format!("{}.token_strip.svg", l.label)),
        report::token_strip_svg(&tokens, &probs, &format!("{}: record {}", l.label, first.id))?,
    )
    .map_err(|e| Error::io(ctx.path("token_strip.svg"), e))?;

    ctx.say(format!(
        "{}: mean entropy {} bits (std {}, {} completions)",
        l.label,
        fmt_float(profile.mean),
        fmt_float(profile.std),
        profile.per_completion_means.len()
    ))?;
    r.entropy = Some(Section::new(
        json!({ "entropy_mode": cfg.entropy_mode, "top_k": first.top_k }),
        profile,
    )?);
    Ok(())
}

fn audit_semantic(ctx: &mut Ctx, l: &Loaded, cfg: &AuditConfig, embedder: &Embedder, r: &mut DiversityReport) -> Result<()> {
    let texts = l.corpus.completions();
    let ids: Vec<String> = l.corpus.records.iter().map(|r| r.id.clone()).collect();
    if texts.len() < 3 {
        return Err(Error::Capability(format!("semantic audit needs at least 3 completions, found {}", texts.len())));
    }
    let emb = embed_texts(&texts, embedder)?.with_ids(ids.clone())?;
    let sim_matrix = match cfg.similarity_space {
        SimilaritySpace::Tfidf => tfidf_vectorize(&texts)?.with_ids(ids.clone())?,
        SimilaritySpace::Embeddings => emb.clone(),
    };
    let sim = similarity_report(&sim_matrix)?;
    sim.write_csv(&ctx.path(&format!("{}.similarity.csv", l.label)))?;

    let clustering = cluster(&emb.vectors, &cfg.analysis)?;
    let tcfg = TsneConfig {
        perplexity: cfg.perplexity,
        iterations: cfg.tsne_iterations,
        seed: cfg.analysis.seed,
        ..TsneConfig::default()
    };
    let projection = tsne(&emb, &tcfg)?;
    report::render_scatter(
        &projection,
        &clustering.assignments,
        &format!("{}: t-SNE, perplexity {}", l.label, fmt_float(cfg.perplexity)),
        &ctx.path(&format!("{}.tsne.svg", l.label)),
    )?;
    write_clusters_csv(&ctx.path(&format!("{}.clusters.csv", l.label)), &ids, &clustering, Some(&projection.points))?;

    ctx.say(format!(
        "{}: mean off-diagonal cosine {}, k = {}",
        l.label,
        fmt_float(sim.mean_offdiag),
        clustering.k
    ))?;
    r.similarity = Some(Section::new(
        json!({ "space": cfg.similarity_space }),
        SimilaritySummary {
            n_docs: sim.doc_ids.len(),
            mean_offdiag: sim.mean_offdiag,
            std_offdiag: sim.std_offdiag,
        },
    )?);
    r.clustering = Some(Section::new(
        json!({
            "embedder": embedder.describe(),
            "k_min": cfg.analysis.k_min,
            "k_max": cfg.analysis.k_max,
            "restarts": cfg.analysis.restarts,
            "seed": cfg.analysis.seed,
        }),
        clustering_summary(&clustering),
    )?);
    r.projection = Some(Section::new(&projection.config, ProjectionSummary::from(&projection))?);
    Ok(())
}

fn write_clusters_csv(path: &Path, ids: &[String], c: &ClusteringResult, points: Option<&[[f64; 2]]>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::Serialization(e.to_string());
    let mut header = vec!["id", "cluster"];
    if points.is_some() {
        header.extend(["x", "y"]);
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, (id, a)) in ids.iter().zip(&c.assignments).enumerate() {
        let mut row = vec![id.clone(), a.to_string()];
        if let Some(p) = points {
            row.extend([fmt_float(p[i][0]), fmt_float(p[i][1])]);
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[allow(clippy::too_many_arguments)]
fn audit_personas(
    ctx: &mut Ctx,
    l: &Loaded,
    parsed: &PersonaParseSummary,
    lex: &SentimentLexicon,
    reference_sizes: &BTreeMap<Attribute, usize>,
    cfg: &AuditConfig,
    embedder: &Embedder,
    r: &mut DiversityReport,
) -> Result<()> {
    let personas = &parsed.personas;
    if personas.len() < 2 {
        return Err(Error::Capability(format!(
            "{}: persona audit needs at least 2 parseable personas, found {}",
            l.label,
            personas.len()
        )));
    }
    let scorecard = diversity_scorecard(personas, reference_sizes)?;
    let mut distributions = BTreeMap::new();
    for attr in Attribute::ALL {
        let d = distribution_of(personas, attr)?;
        if attr != Attribute::Age && attr != Attribute::FirstName && attr != Attribute::LastName && !d.counts.is_empty() {
            let mut cats: Vec<(String, usize)> = d.counts.iter().map(|(k, v)| (k.clone(), *v)).collect();
            cats.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            report::render_bar_chart(
                &cats,
                &format!("{}: {}", l.label, attr.label()),
                &ctx.path(&format!("{}.{}.svg", l.label, attr.column())),
            )?;
        }
        distributions.insert(attr.column().to_string(), d.counts);
    }
    for attr in [Attribute::FirstName, Attribute::LastName] {
        let ranked = name_frequency(personas, attr)?;
        let path = ctx.path(&format!("{}.{}s.csv", l.label, attr.column()));
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let csv_err = |e: csv::Error| Error::Serialization(e.to_string());
        w.write_record(["rank", "name", "count"]).map_err(csv_err)?;
        for (i, (name, count)) in ranked.iter().enumerate() {
            w.write_record([(i + 1).to_string(), name.clone(), count.to_string()]).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    write_personas_csv(&ctx.path(&format!("{}.personas.csv", l.label)), personas, Some(lex))?;
    let ages: Vec<f64> = personas.iter().filter_map(|p| p.age).map(f64::from).collect();
    if !ages.is_empty() {
        let spec = HistogramSpec {
            bins: 12,
            range: Some((0.0, 120.0)),
            title: format!("{}: age", l.label),
            x_label: "years".into(),
        };
        report::render_histogram(&ages, &spec, &ctx.path(&format!("{}.age_hist.svg", l.label)))?;
    }

    let sopts = SentimentOptions {
        selector: TextSelector::Review,
        bins: cfg.bins,
        per_sentence: cfg.per_sentence,
    };
    let sentiment = corpus_sentiment_distribution(&l.corpus, lex, &sopts)?;
    let compounds = sentiment.compounds();
    let hspec = HistogramSpec {
        bins: cfg.bins,
        range: Some((-1.0, 1.0)),
        title: format!("{}: review sentiment", l.label),
        x_label: "compound".into(),
    };
    std::fs::write(
        ctx.path(&format!("{}.sentiment_hist.svg", l.label)),
        report::histogram_svg_from(&sentiment.histogram, &hspec)?,
    )
    .map_err(|e| Error::io(ctx.path("sentiment_hist.svg"), e))?;

    let mut sentences = Vec::new();
    let mut sentence_ids = Vec::new();
    for p in personas {
        for (j, s) in split_sentences(&p.review, SENTENCE_MIN_TOKENS).into_iter().enumerate() {
            sentence_ids.push(format!("{}#{j}", p.source_record_id));
            sentences.push(s);
        }
    }
    let sentence_clustering = if sentences.len() >= 3 {
        let refs: Vec<&str> = sentences.iter().map(String::as_str).collect();
        let emb = embed_texts(&refs, embedder)?;
        match cluster(&emb.vectors, &cfg.analysis) {
            Ok(c) => {
                write_clusters_csv(&ctx.path(&format!("{}.sentence_clusters.csv", l.label)), &sentence_ids, &c, None)?;
                Some(clustering_summary(&c))
            }
            Err(Error::Numerical(m)) => {
                log::warn!("{}: review sentences not clustered: {m}", l.label);
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        log::warn!("{}: fewer than 3 review sentences; skipping sentence clustering", l.label);
        None
    };

    let n_partial = parsed.issues.len();
    let mean_review_length =
        personas.iter().map(|p| p.review_length() as f64).sum::<f64>() / personas.len() as f64;
    ctx.say(format!(
        "{}: {} personas ({} partial, {} unparseable), mean review sentiment {}",
        l.label,
        personas.len(),
        n_partial,
        parsed.unparseable.len(),
        fmt_float(compounds.iter().sum::<f64>() / compounds.len() as f64)
    ))?;
    r.personas = Some(Section::new(
        json!({
            "reference_sizes": reference_sizes.iter().map(|(a, n)| (a.column().to_string(), *n)).collect::<BTreeMap<_, _>>(),
            "sentence_embedder": embedder.describe(),
            "sentence_min_tokens": SENTENCE_MIN_TOKENS,
        }),
        PersonaSummary {
            n_records: l.corpus.len(),
            n_parsed: personas.len() - n_partial,
            n_partial,
            n_unparseable: parsed.unparseable.len(),
            mean_review_length,
            distributions,
            scorecard,
            sentence_clustering,
        },
    )?);
    r.sentiment = Some(Section::new(
        json!({ "selector": "review", "per_sentence": cfg.per_sentence, "bins": cfg.bins, "lexicon": cfg.lexicon }),
        SentimentSummary {
            n_scored: compounds.len(),
            mean_compound: compounds.iter().sum::<f64>() / compounds.len() as f64,
            histogram: sentiment.histogram,
        },
    )?);
    Ok(())
}

fn write_cross_corpus_charts(ctx: &mut Ctx, reports: &[DiversityReport]) -> Result<()> {
    let entropy: Vec<(String, Vec<f64>)> = reports
        .iter()
        .filter_map(|r| r.entropy.as_ref().map(|e| (r.label.clone(), e.result.per_completion_means.clone())))
        .collect();
    if !entropy.is_empty() {
        report::render_boxplot(&entropy, "Mean top-k entropy per completion", "bits", &ctx.path("entropy_box.svg"))?;
    }
    Ok(())
}

fn write_comparison_csv(path: &Path, a: &str, b: &str, rows: &[report::ComparisonRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::Serialization(e.to_string());
    w.write_record(["metric", a, b]).map_err(csv_err)?;
    for row in rows {
        w.write_record([row.metric.clone(), fmt_float(row.this), fmt_float(row.other)])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const COPULAS: [&str; 4] = ["was", "is", "were", "are"];

/// A prefix of `completion` suited to `edit`: for negation, the text up to
/// the first copula after the first sentence end (or anywhere, failing
/// that); otherwise the first sentence.
pub fn exemplar_prefix(completion: &str, edit: &Edit) -> Option<String> {
    let text = completion.trim_start();
    let first_end = text.find(['.', '!', '?']).map(|i| i + 1);
    match edit {
        Edit::NegateTerminalVerb => {
            let copula_end = |from: usize| {
                let mut pos = from;
                for word in text[from..].split_inclusive(char::is_whitespace) {
                    let bare = word.trim();
                    let start = pos;
                    pos += word.len();
                    if COPULAS.contains(&bare.to_lowercase().as_str()) {
                        return Some(start + word.trim_end().len());
                    }
                }
                None
            };
            let end = first_end.and_then(copula_end).or_else(|| copula_end(0))?;
            Some(text[..end].to_string())
        }
        _ => {
            let s = &text[..first_end.unwrap_or(text.len())];
            (!s.trim().is_empty()).then(|| s.to_string())
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct PerturbConfig {
    baseline: String,
    base_prompt: String,
    attractor: AttractorConfig,
    generation: GenerationConfig,
    analysis: AnalysisConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
}

fn cmd_perturb(ctx: &mut Ctx, a: &PerturbArgs) -> Result<()> {
    let f = &ctx.file.analysis;
    let baseline = load_corpus(&a.baseline)?;
    if baseline.is_empty() {
        return Err(Error::Capability("baseline corpus is empty".into()));
    }
    let base_prompt = a
        .base_prompt
        .clone()
        .unwrap_or_else(|| baseline.records[0].prompt.clone());
    let template_default = baseline.provenance.get("chat_template").is_some_and(|t| t != "none");
    let gcfg = generation_config(&a.generation, &ctx.file.generation, template_default)?;
    let edit = match a.edit {
        EditKind::Negate => Edit::NegateTerminalVerb,
        EditKind::Append => Edit::AppendText {
            text: a.edit_text.clone().ok_or_else(|| Error::invalid("append edit needs --edit-text"))?,
        },
        EditKind::Replace => Edit::Replace {
            span: a.edit_span.clone().ok_or_else(|| Error::invalid("replace edit needs --edit-span"))?,
            text: a.edit_text.clone().ok_or_else(|| Error::invalid("replace edit needs --edit-text"))?,
        },
    };
    let d = AttractorConfig::default();
    let acfg = AttractorConfig {
        edit,
        n_per_exemplar: a.n_per_exemplar.or(f.n_per_exemplar).unwrap_or(d.n_per_exemplar),
        radius_quantile: a.radius_quantile.or(f.radius_quantile).unwrap_or(d.radius_quantile),
        recovery_threshold: a.recovery_threshold.or(f.recovery_threshold).unwrap_or(d.recovery_threshold),
    };
    let analysis = analysis_config(&a.analysis, f);
    let client = build_client(&a.endpoint, &ctx.file.endpoint)?;
    let embedder = make_embedder(&analysis, Some(&client))?;
    if matches!(embedder, Embedder::Tfidf) {
        return Err(Error::invalid(
            "tf-idf vectors are fitted per corpus; use the hashed or endpoint embedder for attractor probes",
        ));
    }

    let texts = baseline.completions();
    let ids: Vec<String> = baseline.records.iter().map(|r| r.id.clone()).collect();
    let baseline_emb: EmbeddingMatrix = embed_texts(&texts, &embedder)?.with_ids(ids.clone())?;
    let clustering = match a.k {
        Some(k) => kmeans(
            &baseline_emb.vectors,
            &KmeansConfig::new(k, analysis.seed).restarts(analysis.restarts),
        )?,
        None => cluster(&baseline_emb.vectors, &analysis)?,
    };
    write_clusters_csv(&ctx.path("baseline_clusters.csv"), &ids, &clustering, None)?;

    let exemplars: Vec<String> = if a.exemplar.is_empty() {
        let mut out = Vec::new();
        for (c, centroid) in clustering.centroids.iter().enumerate() {
            let nearest = clustering
                .assignments
                .iter()
                .enumerate()
                .filter(|(_, a)| **a == c)
                .map(|(i, _)| (i, crate::semantic::squared_distance(&baseline_emb.vectors[i], centroid)))
                .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
            let Some((i, _)) = nearest else { continue };
            match exemplar_prefix(texts[i], &acfg.edit) {
                Some(p) => out.push(p),
                None => log::warn!("cluster {c}: exemplar {} has no usable prefix for this edit", ids[i]),
            }
        }
        out
    } else {
        a.exemplar.clone()
    };
    let mut seen = std::collections::BTreeSet::new();
    let exemplars: Vec<String> = exemplars.into_iter().filter(|p| seen.insert(p.clone())).collect();
    if exemplars.is_empty() {
        return Err(Error::Capability("no cluster exemplar has a prefix the edit applies to".into()));
    }

    let cfg = PerturbConfig {
        baseline: file_name(&a.baseline),
        base_prompt: base_prompt.clone(),
        attractor: acfg.clone(),
        generation: gcfg.clone(),
        analysis: analysis.clone(),
        k: a.k,
    };
    let result = run_attractor_experiment(
        &client,
        &base_prompt,
        &exemplars,
        &gcfg,
        &clustering,
        &baseline_emb,
        &embedder,
        &acfg,
    )?;
    save_corpus(&result.perturbed_corpus, ctx.path("perturbed.jsonl"))?;

    let path = ctx.path("recovery.csv");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::Serialization(e.to_string());
    w.write_record(["record_id", "tokens", "recovery_index", "mean_chosen_prob"])
        .map_err(csv_err)?;
    for (i, (id, profile)) in result.recovery.iter().enumerate() {
        let p = &profile.per_token_chosen_prob;
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        w.write_record([
            id.clone(),
            p.len().to_string(),
            profile.recovery_index.map_or(String::new(), |r| r.to_string()),
            fmt_float(mean),
        ])
        .map_err(csv_err)?;
        let rec = &result.perturbed_corpus.records[i];
        let tokens: Vec<String> = rec.steps.iter().map(|s| s.chosen_token.clone()).collect();
        report::render_token_strip(&tokens, profile, id, &ctx.path(&format!("strip-{i:03}.svg")))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let total: usize = result.exemplars.iter().map(|e| e.returned.len()).sum();
    let returned: usize = result
        .exemplars
        .iter()
        .map(|e| e.returned.iter().filter(|r| **r).count())
        .sum();
    for e in &result.exemplars {
        ctx.say(format!("exemplar {:?}: return rate {}", e.exemplar_prefix, fmt_float(e.return_rate)))?;
    }
    ctx.say(format!(
        "return rate: {} ({returned} of {total} perturbed completions within baseline cluster radii)",
        fmt_float(result.return_rate)
    ))?;

    let mut prov = baseline.provenance.clone();
    prov.insert("corpus_file".into(), file_name(&a.baseline));
    prov.insert("records".into(), baseline.len().to_string());
    let mut r = DiversityReport::new("perturb", prov, &cfg)?;
    r.clustering = Some(Section::new(
        json!({ "embedder": embedder.describe(), "seed": analysis.seed, "k_selection": a.k.map_or("silhouette".to_string(), |k| format!("fixed {k}")) }),
        clustering_summary(&clustering),
    )?);
    r.attractor = Some(Section::new(&acfg, result)?);
    let path = ctx.path("report.json");
    report::write_report(&r, &path)?;
    ctx.say(format!("wrote {}", path.display()))
}

fn parse_rewards(spec: &str) -> Result<Vec<(String, f64)>> {
    spec.split(',')
        .map(|pair| {
            let (name, value) = pair
                .rsplit_once('=')
                .ok_or_else(|| Error::invalid(format!("reward {pair:?} is not name=value")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("reward {value:?} is not a number")))?;
            Ok((name.trim().to_string(), v))
        })
        .collect()
}

fn cmd_simulate(ctx: &mut Ctx, a: &SimulateArgs) -> Result<()> {
    if a.table1 {
        return simulate_table1(ctx);
    }
    let task = match &a.rewards {
        Some(spec) => {
            let pairs = parse_rewards(spec)?;
            let refs: Vec<(&str, f64)> = pairs.iter().map(|(n, v)| (n.as_str(), *v)).collect();
            BanditTask::new(&refs, a.gamma)?
        }
        None => {
            let mut t = BanditTask::chatbot_names();
            t.gamma = a.gamma;
            t
        }
    };
    let rule = match a.rule {
        RuleArg::Naive => UpdateRule::Naive,
        RuleArg::Ppo => UpdateRule::ppo(a.epsilon),
        RuleArg::Kl => UpdateRule::kl(a.beta),
    };
    if a.seeds == 0 {
        return Err(Error::invalid("--seeds must be at least 1"));
    }
    let seeds: Vec<u64> = (a.seed_start..a.seed_start + a.seeds).collect();
    let (summary, logs) = sweep(&task, &rule, a.steps, &seeds)?;

    logs[0].write_csv(&ctx.path("trajectory.csv"))?;
    let series: Vec<(String, Vec<f64>)> = logs
        .iter()
        .take(10)
        .map(|l| (format!("seed {}", l.seed.unwrap_or_default()), l.entropy_series()))
        .collect();
    report::render_line_chart(
        &series,
        &format!("Policy entropy, {} rule", rule.name()),
        "step",
        "entropy (bits)",
        &ctx.path("entropy.svg"),
    )?;

    let collapsed = summary
        .final_best_prob
        .iter()
        .zip(&summary.final_entropy_bits)
        .filter(|(p, h)| **p > COLLAPSE_BEST_PROB && **h < COLLAPSE_ENTROPY_BITS)
        .count();
    let collapse_rate = collapsed as f64 / seeds.len() as f64;
    let max_kl = summary.final_kl_to_reference.iter().copied().fold(0.0, f64::max);
    let mean_kl = summary.final_kl_to_reference.iter().sum::<f64>() / seeds.len() as f64;
    ctx.say(format!("rule: {}, steps: {}, seeds: {}", rule.name(), a.steps, seeds.len()))?;
    ctx.say(format!(
        "collapse rate: {} ({collapsed} of {} seeds end with P(best) > {COLLAPSE_BEST_PROB} and entropy < {COLLAPSE_ENTROPY_BITS} bits)",
        fmt_float(collapse_rate),
        seeds.len()
    ))?;
    ctx.say(format!(
        "final KL to reference: mean {} nats, max {} nats ({} {KL_TOLERANCE_NATS} nats)",
        fmt_float(mean_kl),
        fmt_float(max_kl),
        if max_kl <= KL_TOLERANCE_NATS { "<=" } else { ">" }
    ))?;

    let out = json!({
        "schema_version": report::SCHEMA_VERSION,
        "tool_version": report::TOOL_VERSION,
        "config": {
            "rule": rule,
            "steps": a.steps,
            "seeds": seeds,
            "actions": task.actions,
            "rewards": task.rewards,
            "gamma": task.gamma,
        },
        "collapse_rate": collapse_rate,
        "collapse_thresholds": { "best_prob": COLLAPSE_BEST_PROB, "entropy_bits": COLLAPSE_ENTROPY_BITS },
        "summary": summary,
    });
    let path = ctx.path("simulate.json");
    report::write_json(&out, &path)?;
    ctx.say(format!("wrote {}", path.display()))
}

fn simulate_table1(ctx: &mut Ctx) -> Result<()> {
    let log = run_table1();
    let p = log.prob_series(JEEPITI)?;
    ctx.say(format!("{:>2}  {:<18} {:>6} {:>9} {:>12}", "t", "action", "reward", "advantage", "P(Jeepiti)"))?;
    ctx.say(format!("{:>2}  {:<18} {:>6} {:>9} {:>12.4}", 0, "-", "-", "-", p[0]))?;
    for (e, p) in log.entries.iter().zip(&p[1..]) {
        ctx.say(format!(
            "{:>2}  {:<18} {:>6} {:>9} {:>12.4}",
            e.t,
            e.action,
            fmt_float(e.reward),
            fmt_float(e.advantage),
            p
        ))?;
    }
    for note in &log.notes {
        ctx.say(format!("note: {note}"))?;
    }
    log.write_csv(&ctx.path("table1.csv"))?;
    report::write_json(&log, &ctx.path("table1.json"))?;
    Ok(())
}
