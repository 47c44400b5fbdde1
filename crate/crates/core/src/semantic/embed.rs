use super::{hashed_embed, tfidf_vectorize, EmbeddingMatrix, EmbeddingSource, SBERT_DIM};
use crate::error::{Error, Result};
use crate::llm_client::Client;

/// Where sentence vectors come from.
pub enum Embedder<'a> {
    /// An OpenAI-compatible `/v1/embeddings` endpoint serving a
    /// sentence-transformer model.
    Endpoint { client: &'a Client, model: String },
    Tfidf,
    /// Offline feature hashing; deterministic but not semantic.
    Hashed { dim: usize, seed: u64 },
}

impl Embedder<'_> {
    pub fn source(&self) -> EmbeddingSource {
        match self {
            Embedder::Endpoint { .. } => EmbeddingSource::ExternalEndpoint,
            Embedder::Tfidf => EmbeddingSource::Tfidf,
            Embedder::Hashed { .. } => EmbeddingSource::HashedFallback,
        }
    }

    /// Identifier recorded alongside results so reports say what produced the vectors.
    pub fn describe(&self) -> String {
        match self {
            Embedder::Endpoint { model, .. } => format!("endpoint:{model}"),
            Embedder::Tfidf => "tfidf".into(),
            Embedder::Hashed { dim, seed } => format!("hashed:{dim}:{seed}"),
        }
    }
}

/// Embeds `texts` with unit-norm rows.
pub fn embed_texts(texts: &[&str], embedder: &Embedder) -> Result<EmbeddingMatrix> {
    if texts.is_empty() {
        return Err(Error::invalid("nothing to embed"));
    }
    match embedder {
        Embedder::Tfidf => tfidf_vectorize(texts),
        Embedder::Hashed { dim, seed } => hashed_embed(texts, *dim, *seed),
        Embedder::Endpoint { client, model } => {
            let vectors = client.embed(texts, model)?;
            let mut m = EmbeddingMatrix::new(vectors, EmbeddingSource::ExternalEndpoint)?;
            if m.dim() != SBERT_DIM {
                log::warn!("endpoint returned {}-dimensional embeddings (expected {SBERT_DIM})", m.dim());
            }
            m.normalize_rows();
            Ok(m)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_client::{EndpointConfig, ScriptedBackend};
    use serde_json::json;
    use std::sync::Arc;

    #[test]
    fn endpoint_rows_are_normalized() {
        let resp = json!({"data": [{"embedding": [3.0, 4.0]}, {"embedding": [0.0, 2.0]}]});
        let client = Client::with_backend(
            Arc::new(ScriptedBackend::new(vec![]).with_embeddings(vec![resp])),
            EndpointConfig::new("http://mock", "m"),
        );
        let emb = Embedder::Endpoint {
            client: &client,
            model: "all-MiniLM-L6-v2".into(),
        };
        let m = embed_texts(&["a", "b"], &emb).unwrap();
        assert_eq!(m.source, EmbeddingSource::ExternalEndpoint);
        assert!(m.normalized);
        assert_eq!(m.vectors[0], vec![0.6, 0.8]);
        assert_eq!(m.vectors[1], vec![0.0, 1.0]);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(embed_texts(&[], &Embedder::Tfidf).is_err());
    }
}
