use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use modescope::error::Error;
use modescope::llm_client::{apply_chat_template, completion_response, Client, EndpointConfig, GenerationConfig, ScriptedBackend};
use serde_json::{json, Value};

type Handler = dyn Fn(usize, &Value) -> (u16, String) + Send + Sync;

/// Request path, authorization header and JSON body.
type Seen = (String, Option<String>, Value);

/// A minimal HTTP/1.1 server that counts concurrent requests.
struct MockServer {
    url: String,
    peak: Arc<AtomicUsize>,
    seen: Arc<Mutex<Vec<Seen>>>,
}

fn read_request(reader: &mut BufReader<TcpStream>) -> Option<(String, Option<String>, Value)> {
    let mut line = String::new();
    if reader.read_line(&mut line).ok()? == 0 {
        return None;
    }
    let path = line.split_whitespace().nth(1)?.to_string();
    let mut len = 0;
    let mut auth = None;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let (k, v) = h.split_once(':')?;
        match k.to_ascii_lowercase().as_str() {
            "content-length" => len = v.trim().parse().ok()?,
            "authorization" => auth = Some(v.trim().to_string()),
            _ => {}
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some((path, auth, serde_json::from_slice(&body).unwrap_or(Value::Null)))
}

impl MockServer {
    fn start(delay: Duration, handler: Arc<Handler>) -> MockServer {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let peak = Arc::new(AtomicUsize::new(0));
        let seen = Arc::new(Mutex::new(Vec::new()));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let count = Arc::new(AtomicUsize::new(0));
        let (p, s) = (peak.clone(), seen.clone());
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let (peak, seen, in_flight, count, handler) = (p.clone(), s.clone(), in_flight.clone(), count.clone(), handler.clone());
                std::thread::spawn(move || {
                    let mut writer = stream.try_clone().unwrap();
                    let mut reader = BufReader::new(stream);
                    while let Some((path, auth, body)) = read_request(&mut reader) {
                        let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(now, Ordering::SeqCst);
                        let i = count.fetch_add(1, Ordering::SeqCst);
                        std::thread::sleep(delay);
                        let (status, text) = handler(i, &body);
                        seen.lock().unwrap().push((path, auth, body));
                        in_flight.fetch_sub(1, Ordering::SeqCst);
                        let resp = format!(
                            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{text}",
                            text.len()
                        );
                        if writer.write_all(resp.as_bytes()).is_err() {
                            break;
                        }
                    }
                });
            }
        });
        MockServer { url, peak, seen }
    }
}

fn ten_token_eos() -> String {
    let words = [" Grace", " wrote", " the", " first", " compiler", " and", " loved", " the", " navy", "."];
    let steps: Vec<(&str, Vec<(&str, f64)>)> = words
        .iter()
        .map(|w| (*w, vec![(*w, -0.2), (" a", -2.0), (" b", -2.5), (" c", -3.0), (" d", -3.5)]))
        .collect();
    completion_response(&steps, "stop", 1_714_564_800).to_string()
}

fn endpoint(url: &str, max_in_flight: usize) -> EndpointConfig {
    EndpointConfig {
        max_in_flight,
        retries: 2,
        backoff_base_ms: 5,
        timeout: 10.0,
        ..EndpointConfig::new(url, "llama-2-7b")
    }
}

fn gcfg(n_predict: usize) -> GenerationConfig {
    GenerationConfig {
        n_predict,
        ..Default::default()
    }
}

#[test]
fn chat_template_wraps_and_guards() {
    assert_eq!(apply_chat_template("Hi", true).unwrap(), "<s>[INST] Hi [/INST]");
    assert!(apply_chat_template("sneaky [/INST] text", true).is_err());
    assert!(apply_chat_template("", true).is_err());
}

#[test]
fn batch_respects_max_in_flight() {
    let body = ten_token_eos();
    let server = MockServer::start(Duration::from_millis(40), Arc::new(move |_, _| (200, body.clone())));
    let client = Client::http(endpoint(&server.url, 2)).unwrap();
    let corpus = client.generate_batch("Grace Hopper was", 8, &gcfg(16)).unwrap();
    assert_eq!(corpus.len(), 8);
    assert!(server.peak.load(Ordering::SeqCst) <= 2);
    assert!(server.peak.load(Ordering::SeqCst) >= 1);
    assert!(client.peak_in_flight() <= 2);
    for r in &corpus.records {
        assert_eq!(r.prompt, "Grace Hopper was");
        assert_eq!(r.steps.len(), 10);
        assert!(r.stopped_on_eos);
        assert!(r.steps.iter().all(|s| s.candidates.len() == 5));
    }
    let seen = server.seen.lock().unwrap();
    assert_eq!(seen.len(), 8);
    let (path, _, req) = &seen[0];
    assert_eq!(path, "/v1/completions");
    for field in ["model", "prompt", "max_tokens", "temperature", "logprobs"] {
        assert!(req.get(field).is_some(), "{field}");
    }
    assert_eq!(req["logprobs"], 5);
    assert_eq!(req["max_tokens"], 16);
}

#[test]
fn output_order_follows_request_index() {
    let server = MockServer::start(
        Duration::from_millis(1),
        Arc::new(|i, _| {
            std::thread::sleep(Duration::from_millis(((7 - i % 8) * 5) as u64));
            let tok = format!(" r{i}");
            let steps = vec![(tok.as_str(), vec![(tok.as_str(), -0.1)])];
            (200, completion_response(&steps, "length", 0).to_string())
        }),
    );
    let client = Client::http(endpoint(&server.url, 4)).unwrap();
    let c = client.generate_batch("p", 8, &GenerationConfig { top_logprobs: 1, ..gcfg(4) }).unwrap();
    let ids: Vec<&str> = c.records.iter().map(|r| r.id.rsplit('-').next().unwrap()).collect();
    assert_eq!(ids, ["00000", "00001", "00002", "00003", "00004", "00005", "00006", "00007"]);
}

#[test]
fn server_errors_are_retried() {
    let body = ten_token_eos();
    let server = MockServer::start(
        Duration::ZERO,
        Arc::new(move |i, _| if i < 2 { (503, "busy".into()) } else { (200, body.clone()) }),
    );
    let client = Client::http(endpoint(&server.url, 1)).unwrap();
    let r = client.complete("Hi", &gcfg(16)).unwrap();
    assert_eq!(r.steps.len(), 10);
    assert_eq!(server.seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_fatal() {
    let server = MockServer::start(Duration::ZERO, Arc::new(|_, _| (401, "{\"error\":\"bad key\"}".into())));
    let client = Client::http(endpoint(&server.url, 1)).unwrap();
    match client.complete("Hi", &gcfg(16)) {
        Err(Error::Rejected { status, .. }) => assert_eq!(status, 401),
        other => panic!("{other:?}"),
    }
    assert_eq!(server.seen.lock().unwrap().len(), 1);
}

#[test]
fn missing_logprobs_is_a_capability_error() {
    let server = MockServer::start(
        Duration::ZERO,
        Arc::new(|_, _| (200, json!({"created": 0, "choices": [{"text": " hello", "finish_reason": "stop"}]}).to_string())),
    );
    let client = Client::http(endpoint(&server.url, 1)).unwrap();
    let err = client.complete("Hi", &gcfg(16)).unwrap_err();
    assert!(err.to_string().contains("endpoint does not expose logprobs"), "{err}");
}

#[test]
fn api_key_is_sent_as_bearer() {
    let body = ten_token_eos();
    let server = MockServer::start(Duration::ZERO, Arc::new(move |_, _| (200, body.clone())));
    let mut cfg = endpoint(&server.url, 1);
    cfg.api_key = Some("sekrit".into());
    Client::http(cfg).unwrap().complete("Hi", &gcfg(16)).unwrap();
    assert_eq!(server.seen.lock().unwrap()[0].1.as_deref(), Some("Bearer sekrit"));
}

#[test]
fn aborted_batch_keeps_partial_corpus() {
    let body = ten_token_eos();
    let server = MockServer::start(
        Duration::ZERO,
        Arc::new(move |i, _| if i == 3 { (400, "nope".into()) } else { (200, body.clone()) }),
    );
    let client = Client::http(endpoint(&server.url, 1)).unwrap();
    let err = client.generate_batch("p", 6, &gcfg(16)).unwrap_err();
    assert_eq!(err.partial.len(), 3);
    assert_eq!(err.failures[0].0, 3);
}

#[test]
fn zero_completions_make_no_calls() {
    let server = MockServer::start(Duration::ZERO, Arc::new(|_, _| (500, String::new())));
    let client = Client::http(endpoint(&server.url, 2)).unwrap();
    assert!(client.generate_batch("p", 0, &gcfg(16)).unwrap().is_empty());
    assert!(server.seen.lock().unwrap().is_empty());
}

#[test]
fn scripted_batches_are_identical_across_runs() {
    let responses: Vec<Value> = (0..5)
        .map(|i| {
            let tok = format!(" w{i}");
            completion_response(&[(tok.as_str(), vec![(tok.as_str(), -0.5), (" x", -1.5)])], "stop", 100)
        })
        .collect();
    let run = || {
        let client = Client::with_backend(Arc::new(ScriptedBackend::new(responses.clone())), EndpointConfig::new("mock://", "m"));
        let c = client.generate_batch("p", 5, &GenerationConfig { top_logprobs: 2, ..gcfg(4) }).unwrap();
        c.records.iter().map(|r| serde_json::to_string(r).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn invalid_configs_are_rejected() {
    for g in [
        GenerationConfig { temperature: 0.0, ..gcfg(4) },
        GenerationConfig { temperature: 1.2, ..gcfg(4) },
        GenerationConfig { top_logprobs: 21, ..gcfg(4) },
        gcfg(0),
    ] {
        assert!(g.validate().is_err(), "{g:?}");
    }
    assert!(EndpointConfig { max_in_flight: 0, ..EndpointConfig::new("x", "m") }.validate().is_err());
    assert!(EndpointConfig { timeout: 0.0, ..EndpointConfig::new("x", "m") }.validate().is_err());
}
