//! Client for OpenAI-compatible `/v1/completions` endpoints that expose
//! top-k logprobs, plus the offline mock backend used by tests and demos.

use std::fmt;
use std::hash::Hasher;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use fnv::FnvHasher;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::{Corpus, GenerationRecord, TokenStep, MAX_TOP_K};
use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "MODESCOPE_API_KEY";

const COMPLETIONS_PATH: &str = "/v1/completions";
const EMBEDDINGS_PATH: &str = "/v1/embeddings";
const EMBED_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    pub model_id: String,
    /// Per-request timeout in seconds.
    pub timeout: f64,
    pub max_in_flight: usize,
    pub retries: u32,
    /// First retry waits roughly this long; later ones double it.
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
}

fn default_backoff_ms() -> u64 {
    250
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            api_key: None,
            model_id: model_id.into(),
            timeout: 60.0,
            max_in_flight: 4,
            retries: 3,
            backoff_base_ms: default_backoff_ms(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_in_flight < 1 {
            return Err(Error::invalid("max_in_flight must be at least 1"));
        }
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(Error::invalid("timeout must be positive"));
        }
        Ok(())
    }

    /// The configured key, else `MODESCOPE_API_KEY` from the environment.
    pub fn resolved_api_key(&self) -> Option<String> {
        self.api_key
            .clone()
            .or_else(|| std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub n_predict: usize,
    pub top_logprobs: usize,
    pub use_chat_template: bool,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
    /// Refuse prompts that already contain chat-template control markers.
    #[serde(default = "default_true")]
    pub strict_template: bool,
}

fn default_true() -> bool {
    true
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            temperature: 1.0,
            n_predict: 128,
            top_logprobs: 5,
            use_chat_template: false,
            stop_sequences: Vec::new(),
            strict_template: true,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature <= 1.0) {
            return Err(Error::invalid(format!("temperature {} outside (0,1]", self.temperature)));
        }
        if self.n_predict == 0 {
            return Err(Error::invalid("n_predict must be positive"));
        }
        if self.top_logprobs == 0 || self.top_logprobs > MAX_TOP_K {
            return Err(Error::invalid(format!(
                "top_logprobs {} outside [1,{MAX_TOP_K}]",
                self.top_logprobs
            )));
        }
        if self.top_logprobs < 5 {
            log::warn!("top_logprobs < 5: top-5 entropy auditing will not be possible");
        }
        Ok(())
    }
}

const TEMPLATE_MARKERS: [&str; 4] = ["[INST]", "[/INST]", "<s>", "</s>"];

/// Llama-2 chat wrapping: `<s>[INST] {prompt} [/INST]`.
pub fn apply_chat_template(user_prompt: &str, strict: bool) -> Result<String> {
    if user_prompt.is_empty() {
        return Err(Error::invalid("empty prompt"));
    }
    if strict {
        if let Some(m) = TEMPLATE_MARKERS.iter().find(|m| user_prompt.contains(*m)) {
            return Err(Error::invalid(format!("prompt contains reserved template marker {m}")));
        }
    }
    Ok(format!("<s>[INST] {user_prompt} [/INST]"))
}

/// Transport underneath [`Client`]. `request_index` identifies the request
/// within the client's lifetime so replaying backends stay deterministic
/// under concurrency.
pub trait Backend: Send + Sync {
    fn post(&self, request_index: usize, path: &str, body: &Value) -> Result<Value>;
}

pub struct HttpBackend {
    agent: ureq::Agent,
    base_url: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(cfg: &EndpointConfig) -> Result<Self> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpBackend {
            agent,
            base_url: cfg.base_url.trim_end_matches('/').to_string(),
            api_key: cfg.resolved_api_key(),
        })
    }
}

impl Backend for HttpBackend {
    fn post(&self, _request_index: usize, path: &str, body: &Value) -> Result<Value> {
        let url = format!("{}{}", self.base_url, path);
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| Error::Network(format!("{url}: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Network(format!("{url}: reading body: {e}")))?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("{url}: {e}"))),
            429 | 500..=599 => Err(Error::Network(format!("{url}: HTTP {status}: {text}"))),
            _ => Err(Error::Rejected { status, body: text }),
        }
    }
}

/// Replays canned responses from a directory: completion request `i` reads
/// `<dir>/<i>.json`, embedding request `i` reads `<dir>/embeddings/<i>.json`.
pub struct MockBackend {
    dir: PathBuf,
}

impl MockBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        MockBackend { dir: dir.into() }
    }
}

impl Backend for MockBackend {
    fn post(&self, request_index: usize, path: &str, _body: &Value) -> Result<Value> {
        let file = match path {
            EMBEDDINGS_PATH => self.dir.join("embeddings").join(format!("{request_index}.json")),
            _ => self.dir.join(format!("{request_index}.json")),
        };
        let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("{}: {e}", file.display())))
    }
}

/// In-memory responses, indexed by request number (wrapping around).
pub struct ScriptedBackend {
    completions: Vec<Value>,
    embeddings: Vec<Value>,
}

impl ScriptedBackend {
    pub fn new(completions: Vec<Value>) -> Self {
        ScriptedBackend {
            completions,
            embeddings: Vec::new(),
        }
    }

    pub fn with_embeddings(mut self, embeddings: Vec<Value>) -> Self {
        self.embeddings = embeddings;
        self
    }
}

impl Backend for ScriptedBackend {
    fn post(&self, request_index: usize, path: &str, _body: &Value) -> Result<Value> {
        let pool = if path == EMBEDDINGS_PATH { &self.embeddings } else { &self.completions };
        if pool.is_empty() {
            return Err(Error::Protocol(format!("no scripted response for {path}")));
        }
        Ok(pool[request_index % pool.len()].clone())
    }
}

/// Builds a completion response body in the legacy completions format.
/// Each step is `(chosen token, [(candidate, logprob), ...])`; the chosen
/// token's logprob is looked up among the candidates (or -10 if absent).
pub fn completion_response(steps: &[(&str, Vec<(&str, f64)>)], finish_reason: &str, created: i64) -> Value {
    let tokens: Vec<&str> = steps.iter().map(|s| s.0).collect();
    let token_logprobs: Vec<f64> = steps
        .iter()
        .map(|(tok, cands)| cands.iter().find(|c| c.0 == *tok).map_or(-10.0, |c| c.1))
        .collect();
    let top: Vec<Value> = steps
        .iter()
        .map(|(_, cands)| {
            let m: serde_json::Map<String, Value> =
                cands.iter().map(|(t, lp)| (t.to_string(), json!(lp))).collect();
            Value::Object(m)
        })
        .collect();
    json!({
        "id": "cmpl-scripted",
        "object": "text_completion",
        "created": created,
        "choices": [{
            "index": 0,
            "text": tokens.concat(),
            "finish_reason": finish_reason,
            "logprobs": {
                "tokens": tokens,
                "token_logprobs": token_logprobs,
                "top_logprobs": top,
            }
        }]
    })
}

/// Partial results of an aborted batch.
#[derive(Debug)]
pub struct BatchError {
    pub partial: Corpus,
    /// `(request index within the batch, error)` for every failed request.
    pub failures: Vec<(usize, Error)>,
}

impl BatchError {
    pub fn first_error(&self) -> &Error {
        &self.failures[0].1
    }
}

impl fmt::Display for BatchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "batch aborted after {} record(s); {} request(s) failed, first: {}",
            self.partial.len(),
            self.failures.len(),
            self.first_error()
        )
    }
}

impl std::error::Error for BatchError {}

pub struct Client {
    backend: Arc<dyn Backend>,
    endpoint: EndpointConfig,
    next_completion: AtomicUsize,
    next_embedding: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl Client {
    pub fn http(endpoint: EndpointConfig) -> Result<Self> {
        let backend = HttpBackend::new(&endpoint)?;
        Ok(Self::with_backend(Arc::new(backend), endpoint))
    }

    pub fn mock(dir: impl Into<PathBuf>, endpoint: EndpointConfig) -> Self {
        Self::with_backend(Arc::new(MockBackend::new(dir)), endpoint)
    }

    pub fn with_backend(backend: Arc<dyn Backend>, endpoint: EndpointConfig) -> Self {
        Client {
            backend,
            endpoint,
            next_completion: AtomicUsize::new(0),
            next_embedding: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
        }
    }

    pub fn endpoint(&self) -> &EndpointConfig {
        &self.endpoint
    }

    /// Highest number of simultaneously outstanding requests seen so far.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    /// One completion with per-token top-k logprobs.
    pub fn complete(&self, prompt: &str, gcfg: &GenerationConfig) -> Result<GenerationRecord> {
        gcfg.validate()?;
        let index = self.next_completion.fetch_add(1, Ordering::SeqCst);
        let tag = batch_tag(&self.endpoint.model_id, prompt, gcfg);
        self.complete_at(index, &format!("{tag}-{index:05}"), prompt, gcfg)
    }

    /// `n` independent completions of the same prompt, at most
    /// `max_in_flight` outstanding at once, returned in request order.
    pub fn generate_batch(&self, prompt: &str, n: usize, gcfg: &GenerationConfig) -> Result<Corpus, BatchError> {
        let fail = |e: Error| BatchError {
            partial: Corpus::default(),
            failures: vec![(0, e)],
        };
        gcfg.validate().map_err(fail)?;
        self.endpoint.validate().map_err(fail)?;
        if gcfg.use_chat_template {
            apply_chat_template(prompt, gcfg.strict_template).map_err(fail)?;
        }
        if n == 0 {
            return Ok(Corpus::default());
        }

        let base = self.next_completion.fetch_add(n, Ordering::SeqCst);
        let tag = batch_tag(&self.endpoint.model_id, prompt, gcfg);
        let next = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        let slots: Mutex<Vec<Option<Result<GenerationRecord>>>> = Mutex::new((0..n).map(|_| None).collect());
        let workers = self.endpoint.max_in_flight.min(n);

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if abort.load(Ordering::SeqCst) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= n {
                        break;
                    }
                    let res = self.complete_at(base + i, &format!("{tag}-{i:05}"), prompt, gcfg);
                    if res.is_err() {
                        abort.store(true, Ordering::SeqCst);
                    }
                    slots.lock().expect("slot lock")[i] = Some(res);
                });
            }
        });

        let mut records = Vec::with_capacity(n);
        let mut failures = Vec::new();
        for (i, slot) in slots.into_inner().expect("slot lock").into_iter().enumerate() {
            match slot {
                Some(Ok(rec)) => records.push(rec),
                Some(Err(e)) => failures.push((i, e)),
                None => {}
            }
        }
        let mut corpus = Corpus {
            records,
            ..Default::default()
        };
        corpus.provenance.insert("endpoint".into(), self.endpoint.base_url.clone());
        corpus.provenance.insert("model_id".into(), self.endpoint.model_id.clone());
        corpus.provenance.insert("prompt".into(), prompt.to_string());
        corpus
            .provenance
            .insert("chat_template".into(), if gcfg.use_chat_template { "llama2" } else { "none" }.into());
        if failures.is_empty() {
            Ok(corpus)
        } else {
            Err(BatchError {
                partial: corpus,
                failures,
            })
        }
    }

    fn complete_at(&self, index: usize, id: &str, prompt: &str, gcfg: &GenerationConfig) -> Result<GenerationRecord> {
        let sent = if gcfg.use_chat_template {
            apply_chat_template(prompt, gcfg.strict_template)?
        } else {
            prompt.to_string()
        };
        let mut body = json!({
            "model": self.endpoint.model_id,
            "prompt": sent,
            "max_tokens": gcfg.n_predict,
            "temperature": gcfg.temperature,
            "logprobs": gcfg.top_logprobs,
        });
        if !gcfg.stop_sequences.is_empty() {
            body["stop"] = json!(gcfg.stop_sequences);
        }
        let resp = self.post_with_retries(index, COMPLETIONS_PATH, &body)?;
        parse_completion(&resp, id, prompt, &self.endpoint.model_id, gcfg)
    }

    /// Sentence embeddings from `/v1/embeddings`, in input order.
    pub fn embed(&self, texts: &[&str], model: &str) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(EMBED_CHUNK) {
            let index = self.next_embedding.fetch_add(1, Ordering::SeqCst);
            let body = json!({ "model": model, "input": chunk });
            let resp = self.post_with_retries(index, EMBEDDINGS_PATH, &body)?;
            out.extend(parse_embeddings(&resp, chunk.len())?);
        }
        if let Some(first) = out.first() {
            let d = first.len();
            if out.iter().any(|v| v.len() != d) {
                return Err(Error::Protocol("embedding dimension differs across the batch".into()));
            }
        }
        Ok(out)
    }

    fn post_with_retries(&self, index: usize, path: &str, body: &Value) -> Result<Value> {
        let mut attempt = 0;
        loop {
            let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
            let res = self.backend.post(index, path, body);
            self.in_flight.fetch_sub(1, Ordering::SeqCst);
            match res {
                Err(e) if e.is_retryable() && attempt < self.endpoint.retries => {
                    let base = self.endpoint.backoff_base_ms as f64 * 2f64.powi(attempt as i32);
                    let jitter = rand::rng().random_range(0.5..1.0);
                    log::warn!("request {index} failed ({e}); retry {} in {:.0} ms", attempt + 1, base * jitter);
                    std::thread::sleep(Duration::from_secs_f64(base * jitter / 1000.0));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

fn batch_tag(model: &str, prompt: &str, gcfg: &GenerationConfig) -> String {
    let mut h = FnvHasher::default();
    h.write(model.as_bytes());
    h.write_u8(0);
    h.write(prompt.as_bytes());
    h.write_u64(gcfg.temperature.to_bits());
    h.write_usize(gcfg.n_predict);
    h.write_u8(gcfg.use_chat_template as u8);
    format!("gen-{:08x}", h.finish() as u32)
}

fn parse_completion(
    resp: &Value,
    id: &str,
    prompt: &str,
    model_id: &str,
    gcfg: &GenerationConfig,
) -> Result<GenerationRecord> {
    let choice = resp
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| Error::Protocol("response has no choices".into()))?;
    let completion = choice
        .get("text")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Protocol("choice has no text".into()))?
        .to_string();
    let finish = choice.get("finish_reason").and_then(Value::as_str).unwrap_or("");

    let no_logprobs = || Error::Capability("endpoint does not expose logprobs".into());
    let lp = choice.get("logprobs").filter(|v| !v.is_null()).ok_or_else(no_logprobs)?;
    let tokens = lp.get("tokens").and_then(Value::as_array).ok_or_else(no_logprobs)?;
    let token_lps = lp.get("token_logprobs").and_then(Value::as_array).ok_or_else(no_logprobs)?;
    let top = lp.get("top_logprobs").and_then(Value::as_array).ok_or_else(no_logprobs)?;
    if tokens.len() != token_lps.len() || tokens.len() != top.len() {
        return Err(Error::Protocol("logprob arrays differ in length".into()));
    }
    if tokens.len() > gcfg.n_predict {
        return Err(Error::Protocol(format!(
            "endpoint returned {} tokens for max_tokens {}",
            tokens.len(),
            gcfg.n_predict
        )));
    }

    let mut steps = Vec::with_capacity(tokens.len());
    for ((tok, tlp), cands) in tokens.iter().zip(token_lps).zip(top) {
        let chosen_token = tok
            .as_str()
            .ok_or_else(|| Error::Protocol("non-string token".into()))?
            .to_string();
        let chosen_logprob = tlp
            .as_f64()
            .ok_or_else(|| Error::Protocol("missing token logprob".into()))?;
        let obj = cands.as_object().ok_or_else(no_logprobs)?;
        let mut candidates: Vec<(String, f64)> = obj
            .iter()
            .map(|(t, v)| {
                v.as_f64()
                    .map(|f| (t.clone(), f))
                    .ok_or_else(|| Error::Protocol("non-numeric candidate logprob".into()))
            })
            .collect::<Result<_>>()?;
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        candidates.truncate(gcfg.top_logprobs);
        steps.push(TokenStep {
            chosen_token,
            chosen_logprob,
            candidates,
        });
    }

    let created_at = resp
        .get("created")
        .and_then(Value::as_i64)
        .and_then(|s| Utc.timestamp_opt(s, 0).single())
        .unwrap_or_else(now);
    let joined: String = steps.iter().map(|s| s.chosen_token.as_str()).collect();
    let chosen_outside_topk = steps.iter().any(|s| !s.chosen_in_candidates());
    Ok(GenerationRecord {
        id: id.to_string(),
        prompt: prompt.to_string(),
        tokens_exact: !steps.is_empty() && joined == completion,
        completion,
        steps,
        model_id: resp
            .get("model")
            .and_then(Value::as_str)
            .unwrap_or(model_id)
            .to_string(),
        temperature: gcfg.temperature,
        n_predict: gcfg.n_predict,
        stopped_on_eos: finish == "stop",
        created_at,
        top_k: gcfg.top_logprobs,
        chosen_outside_topk,
    })
}

fn now() -> DateTime<Utc> {
    // whole seconds keep saved corpora compact
    Utc.timestamp_opt(Utc::now().timestamp(), 0).single().unwrap_or_default()
}

fn parse_embeddings(resp: &Value, expected: usize) -> Result<Vec<Vec<f64>>> {
    let data = resp
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Protocol("embedding response has no data".into()))?;
    if data.len() != expected {
        return Err(Error::Protocol(format!("{} embeddings for {expected} inputs", data.len())));
    }
    let mut rows: Vec<(usize, Vec<f64>)> = data
        .iter()
        .enumerate()
        .map(|(pos, item)| {
            let idx = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
            let v = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Protocol("item has no embedding".into()))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| Error::Protocol("non-numeric embedding".into())))
                .collect::<Result<Vec<f64>>>()?;
            Ok((idx, v))
        })
        .collect::<Result<_>>()?;
    rows.sort_by_key(|r| r.0);
    Ok(rows.into_iter().map(|r| r.1).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::validate_record;

    fn endpoint() -> EndpointConfig {
        let mut e = EndpointConfig::new("http://mock", "llama-2-7b");
        e.backoff_base_ms = 1;
        e
    }

    fn five(tok: &'static str) -> (&'static str, Vec<(&'static str, f64)>) {
        (
            tok,
            vec![(tok, -0.2), ("x", -2.5), ("y", -3.0), ("z", -3.5), ("w", -4.0)],
        )
    }

    #[test]
    fn chat_template_wraps_prompt() {
        assert_eq!(apply_chat_template("Hi", true).unwrap(), "<s>[INST] Hi [/INST]");
        assert!(apply_chat_template("Hi [/INST] there", true).is_err());
        assert!(apply_chat_template("Hi [/INST] there", false).is_ok());
        assert!(apply_chat_template("", false).is_err());
    }

    #[test]
    fn early_eos_gives_fewer_steps() {
        let steps: Vec<_> = (0..10).map(|_| five(" a")).collect();
        let backend = ScriptedBackend::new(vec![completion_response(&steps, "stop", 1_700_000_000)]);
        let client = Client::with_backend(Arc::new(backend), endpoint());
        let gcfg = GenerationConfig {
            n_predict: 16,
            ..Default::default()
        };
        let rec = client.complete("Steve is", &gcfg).unwrap();
        assert_eq!(rec.steps.len(), 10);
        assert!(rec.stopped_on_eos);
        assert!(rec.steps.iter().all(|s| s.candidates.len() == 5));
        assert!(validate_record(&rec).is_empty(), "{:?}", validate_record(&rec));
        assert!(rec.tokens_exact);
    }

    #[test]
    fn length_finish_is_not_eos() {
        let backend = ScriptedBackend::new(vec![completion_response(&[five("a")], "length", 0)]);
        let client = Client::with_backend(Arc::new(backend), endpoint());
        assert!(!client.complete("p", &GenerationConfig::default()).unwrap().stopped_on_eos);
    }

    #[test]
    fn missing_logprobs_is_a_capability_error() {
        let resp = json!({"choices": [{"text": "hello", "finish_reason": "stop"}]});
        let client = Client::with_backend(Arc::new(ScriptedBackend::new(vec![resp])), endpoint());
        let err = client.complete("p", &GenerationConfig::default()).unwrap_err();
        assert!(err.to_string().contains("endpoint does not expose logprobs"));
    }

    #[test]
    fn candidates_sorted_and_truncated_to_k() {
        let steps = vec![(
            "b",
            vec![("a", -3.0), ("b", -0.1), ("c", -2.0), ("d", -5.0), ("e", -4.0), ("f", -6.0)],
        )];
        let client = Client::with_backend(
            Arc::new(ScriptedBackend::new(vec![completion_response(&steps, "length", 0)])),
            endpoint(),
        );
        let gcfg = GenerationConfig {
            top_logprobs: 3,
            ..Default::default()
        };
        let rec = client.complete("p", &gcfg).unwrap();
        let toks: Vec<&str> = rec.steps[0].candidates.iter().map(|c| c.0.as_str()).collect();
        assert_eq!(toks, vec!["b", "c", "a"]);
        assert_eq!(rec.top_k, 3);
    }

    #[test]
    fn chosen_outside_topk_is_flagged() {
        let steps = vec![("q", vec![("a", -0.5), ("b", -1.0)])];
        let client = Client::with_backend(
            Arc::new(ScriptedBackend::new(vec![completion_response(&steps, "length", 0)])),
            endpoint(),
        );
        let rec = client.complete("p", &GenerationConfig::default()).unwrap();
        assert!(rec.chosen_outside_topk);
        assert!(validate_record(&rec).is_empty());
    }

    #[test]
    fn zero_batch_makes_no_calls() {
        let client = Client::with_backend(Arc::new(ScriptedBackend::new(vec![])), endpoint());
        let c = client.generate_batch("p", 0, &GenerationConfig::default()).unwrap();
        assert!(c.is_empty());
        assert_eq!(client.peak_in_flight(), 0);
    }

    struct Flaky {
        fails_left: Mutex<u32>,
        inner: ScriptedBackend,
    }

    impl Backend for Flaky {
        fn post(&self, i: usize, path: &str, body: &Value) -> Result<Value> {
            let mut left = self.fails_left.lock().unwrap();
            if *left > 0 {
                *left -= 1;
                return Err(Error::Network("connection reset".into()));
            }
            self.inner.post(i, path, body)
        }
    }

    #[test]
    fn transient_failures_are_retried() {
        let backend = Flaky {
            fails_left: Mutex::new(2),
            inner: ScriptedBackend::new(vec![completion_response(&[five("a")], "stop", 0)]),
        };
        let client = Client::with_backend(Arc::new(backend), endpoint());
        assert!(client.complete("p", &GenerationConfig::default()).is_ok());
    }

    #[test]
    fn exhausted_retries_abort_batch_with_partial_corpus() {
        let backend = Flaky {
            fails_left: Mutex::new(100),
            inner: ScriptedBackend::new(vec![]),
        };
        let mut e = endpoint();
        e.retries = 1;
        e.max_in_flight = 1;
        let client = Client::with_backend(Arc::new(backend), e);
        let err = client.generate_batch("p", 5, &GenerationConfig::default()).unwrap_err();
        assert!(err.first_error().is_retryable());
        assert!(err.partial.is_empty());
    }

    struct Rejecting;
    impl Backend for Rejecting {
        fn post(&self, _: usize, _: &str, _: &Value) -> Result<Value> {
            Err(Error::Rejected {
                status: 401,
                body: "bad key".into(),
            })
        }
    }

    #[test]
    fn client_errors_are_not_retried() {
        let client = Client::with_backend(Arc::new(Rejecting), endpoint());
        let err = client.complete("p", &GenerationConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Rejected { status: 401, .. }));
    }

    #[test]
    fn embeddings_parsed_in_index_order() {
        let resp = json!({"data": [
            {"index": 1, "embedding": [0.0, 1.0]},
            {"index": 0, "embedding": [1.0, 0.0]},
        ]});
        let backend = ScriptedBackend::new(vec![]).with_embeddings(vec![resp]);
        let client = Client::with_backend(Arc::new(backend), endpoint());
        let v = client.embed(&["a", "b"], "all-MiniLM-L6-v2").unwrap();
        assert_eq!(v, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn embedding_dimension_mismatch_errors() {
        let resp = json!({"data": [{"embedding": [0.0, 1.0]}, {"embedding": [1.0]}]});
        let backend = ScriptedBackend::new(vec![]).with_embeddings(vec![resp]);
        let client = Client::with_backend(Arc::new(backend), endpoint());
        assert!(client.embed(&["a", "b"], "m").is_err());
    }

    #[test]
    fn config_validation() {
        let mut e = endpoint();
        e.max_in_flight = 0;
        assert!(e.validate().is_err());
        let g = GenerationConfig {
            top_logprobs: 21,
            ..Default::default()
        };
        assert!(g.validate().is_err());
        let g = GenerationConfig {
            temperature: 1.2,
            ..Default::default()
        };
        assert!(g.validate().is_err());
    }
}
