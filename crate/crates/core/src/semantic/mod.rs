//! Embedding-space diversity: vectorization, pairwise similarity,
//! k-means clustering with silhouette-based k selection, and exact t-SNE.

mod embed;
mod kmeans;
mod text;
mod tsne;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::syntactic::mean_and_sample_std;

pub use embed::{embed_texts, Embedder};
pub use kmeans::{kmeans, select_k, silhouette_score, squared_distance, ClusteringResult, KmeansConfig};
pub use text::{hashed_embed, is_emoji, split_sentences, tfidf_vectorize, tokenize};
pub use tsne::{tsne, Projection2D, TsneConfig};

/// Row dimension produced by the sentence-embedding models this tool
/// expects behind an external endpoint.
pub const SBERT_DIM: usize = 384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    ExternalEndpoint,
    Tfidf,
    HashedFallback,
    /// Caller-supplied coordinates (synthetic data, imported matrices).
    Raw,
}

/// `N` documents by `D` dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub vectors: Vec<Vec<f64>>,
    pub doc_ids: Vec<String>,
    pub source: EmbeddingSource,
    pub normalized: bool,
    /// Column labels for TF-IDF matrices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vec<String>>,
}

impl EmbeddingMatrix {
    /// Row ids default to the row index.
    pub fn new(vectors: Vec<Vec<f64>>, source: EmbeddingSource) -> Result<Self> {
        if let Some(first) = vectors.first() {
            let d = first.len();
            if let Some((i, row)) = vectors.iter().enumerate().find(|(_, r)| r.len() != d) {
                return Err(Error::invalid(format!(
                    "row {i} has {} dimensions, expected {d}",
                    row.len()
                )));
            }
        }
        if vectors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::invalid("embedding contains non-finite values"));
        }
        let doc_ids = (0..vectors.len()).map(|i| i.to_string()).collect();
        Ok(EmbeddingMatrix {
            vectors,
            doc_ids,
            source,
            normalized: false,
            vocabulary: None,
        })
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.vectors.len() {
            return Err(Error::invalid(format!(
                "{} ids for {} rows",
                ids.len(),
                self.vectors.len()
            )));
        }
        self.doc_ids = ids;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    /// Normalizes rows to unit L2 norm; zero rows stay zero.
    pub fn normalize_rows(&mut self) {
        for row in &mut self.vectors {
            text::l2_normalize(row);
        }
        self.normalized = true;
    }
}

/// `dot(u,v) / (|u| |v|)`. A zero vector yields 0 with a warning.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        log::warn!("cosine similarity with a zero vector; returning 0");
        return Ok(0.0);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub matrix: Vec<Vec<f64>>,
    pub doc_ids: Vec<String>,
    pub mean_offdiag: f64,
    /// Sample standard deviation over the strictly off-diagonal entries.
    pub std_offdiag: f64,
}

#[allow(clippy::needless_range_loop)]
pub fn similarity_report(emb: &EmbeddingMatrix) -> Result<SimilarityReport> {
    let n = emb.len();
    if n < 2 {
        return Err(Error::invalid("similarity report needs at least 2 rows"));
    }
    let mut matrix = vec![vec![0.0; n]; n];
    let mut off = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        let nonzero = emb.vectors[i].iter().any(|x| *x != 0.0);
        matrix[i][i] = if nonzero { 1.0 } else { 0.0 };
        for j in (i + 1)..n {
            let s = cosine_similarity(&emb.vectors[i], &emb.vectors[j])?;
            matrix[i][j] = s;
            matrix[j][i] = s;
        }
    }
    for (i, row) in matrix.iter().enumerate() {
        off.extend(row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, s)| *s));
    }
    let (mean_offdiag, std_offdiag) = mean_and_sample_std(&off);
    Ok(SimilarityReport {
        matrix,
        doc_ids: emb.doc_ids.clone(),
        mean_offdiag,
        std_offdiag,
    })
}

impl SimilarityReport {
    /// CSV with `doc_ids` as both the header row and the first column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let csv_err = |e: csv::Error| Error::Serialization(e.to_string());
        let mut header = vec![String::new()];
        header.extend(self.doc_ids.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (id, row) in self.doc_ids.iter().zip(&self.matrix) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|s| crate::report::fmt_float(*s)));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        w.into_inner()
            .map_err(|e| Error::Serialization(e.to_string()))?
            .flush()
            .map_err(|e| Error::io(path, e))
    }
}
