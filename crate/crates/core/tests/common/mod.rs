#![allow(dead_code)]

use std::sync::Arc;

use modescope::llm_client::{completion_response, Client, EndpointConfig, GenerationConfig, ScriptedBackend};
use modescope::perturb::{run_attractor_experiment, AttractorConfig, AttractorReport, Edit};
use modescope::semantic::{kmeans, ClusteringResult, Embedder, EmbeddingMatrix, EmbeddingSource, KmeansConfig};
use serde_json::{json, Value};

/// Ten unit vectors in two tight groups around the first two axes.
pub fn baseline() -> (EmbeddingMatrix, ClusteringResult) {
    let tilts = [(0.0, 0.0), (0.1, 0.0), (-0.1, 0.0), (0.0, 0.1), (0.0, -0.1)];
    let mut rows = Vec::new();
    for axis in 0..2 {
        for (a, b) in tilts {
            let mut v = vec![a, b, 0.0];
            v[axis] = 1.0;
            v[1 - axis] = a;
            v[2] = b;
            rows.push(v);
        }
    }
    let mut emb = EmbeddingMatrix::new(rows, EmbeddingSource::ExternalEndpoint).unwrap();
    emb.normalize_rows();
    let clusters = kmeans(&emb.vectors, &KmeansConfig::new(2, 0)).unwrap();
    (emb, clusters)
}

/// Runs the probe against a scripted endpoint: completion `i` embeds onto
/// a baseline centroid direction when `returns[i]`, else onto the third axis.
pub fn attractor_fixture(returns: &[bool]) -> AttractorReport {
    let (emb, clusters) = baseline();
    let completions: Vec<Value> = (0..returns.len())
        .map(|i| {
            let tok = if returns[i] { " a computer scientist." } else { " a pastry chef." };
            completion_response(&[(tok, vec![(tok, -0.05 * (i + 1) as f64), (" an", -3.2)])], "stop", 1_714_564_800)
        })
        .collect();
    let data: Vec<Value> = returns
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let v = if *r { if i % 2 == 0 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] } } else { [0.0, 0.0, 1.0] };
            json!({"index": i, "embedding": v})
        })
        .collect();
    let backend = ScriptedBackend::new(completions).with_embeddings(vec![json!({ "data": data })]);
    let client = Client::with_backend(Arc::new(backend), EndpointConfig::new("mock://scripted", "aligned"));
    let embedder = Embedder::Endpoint {
        client: &client,
        model: "sentence-encoder".into(),
    };
    let cfg = AttractorConfig {
        edit: Edit::NegateTerminalVerb,
        n_per_exemplar: returns.len(),
        ..Default::default()
    };
    let gcfg = GenerationConfig {
        n_predict: 8,
        top_logprobs: 2,
        ..Default::default()
    };
    run_attractor_experiment(
        &client,
        "Grace Hopper was",
        &["born in New York City. She was".to_string()],
        &gcfg,
        &clusters,
        &emb,
        &embedder,
        &cfg,
    )
    .unwrap()
}
