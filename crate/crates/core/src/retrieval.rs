//! Embedding client and exact kNN index for demonstration selection.
//!
//! Search is a brute-force cosine scan: corpora are at most a few thousand
//! queries, so determinism wins over speed. Ties break by insertion order.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// A unit-normalized embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Build from raw model output, normalizing to unit L2 norm.
    pub fn from_raw(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidArgument(
                "embedding has zero or non-finite norm".into(),
            ));
        }
        Ok(EmbeddingVector {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    /// Rehydrate an already-normalized vector (cache reads) without
    /// renormalizing, so replayed values are bit-identical.
    fn from_unit(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "cached embedding has norm {norm}, expected 1"
            )));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Immutable list of (id, vector) entries sharing one dimension.
#[derive(Debug, Clone, Default)]
pub struct Index {
    entries: Vec<(String, EmbeddingVector)>,
    pub task_prompt: String,
}

impl Index {
    pub fn new(task_prompt: impl Into<String>) -> Self {
        Index {
            entries: Vec::new(),
            task_prompt: task_prompt.into(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: EmbeddingVector) -> Result<()> {
        let id = id.into();
        if let Some((_, first)) = self.entries.first() {
            if first.dim() != vector.dim() {
                return Err(Error::DimensionMismatch {
                    expected: first.dim(),
                    actual: vector.dim(),
                });
            }
        }
        if self.entries.iter().any(|(existing, _)| *existing == id) {
            return Err(Error::InvalidArgument(format!(
                "duplicate index id {id:?}"
            )));
        }
        self.entries.push((id, vector));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.entries
            .iter()
            .find(|(entry_id, _)| entry_id == id)
            .map(|(_, v)| v)
    }
}

/// Ids of the k entries with highest cosine similarity to the probe,
/// descending, after removing `exclude_id`.
pub fn knn(
    index: &Index,
    probe: &EmbeddingVector,
    k: usize,
    exclude_id: Option<&str>,
) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::InvalidArgument("knn needs k >= 1".into()));
    }
    let mut scored: Vec<(usize, f64, &str)> = index
        .entries
        .iter()
        .enumerate()
        .filter(|(_, (id, _))| exclude_id != Some(id.as_str()))
        .map(|(pos, (id, vector))| (pos, probe.dot(vector), id.as_str()))
        .collect();
    if scored.len() < k {
        return Err(Error::InsufficientEntries {
            needed: k,
            available: scored.len(),
        });
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored[..k].iter().map(|(_, _, id)| id.to_string()).collect())
}

#[derive(Serialize, Deserialize)]
struct CachedEmbedding {
    model: String,
    task_prompt: String,
    text_sha256: String,
    vector: Vec<f64>,
}

/// Remote embedding endpoint with a content-addressed disk cache keyed by
/// (model id, task prompt, text digest).
pub struct EmbeddingClient {
    pub model: String,
    endpoint: String,
    api_key: Option<String>,
    cache_dir: PathBuf,
    http: reqwest::blocking::Client,
}

impl EmbeddingClient {
    pub fn new(
        model: impl Into<String>,
        endpoint: impl Into<String>,
        api_key: Option<String>,
        cache_dir: impl AsRef<Path>,
    ) -> Self {
        EmbeddingClient {
            model: model.into(),
            endpoint: endpoint.into(),
            api_key,
            cache_dir: cache_dir.as_ref().to_path_buf(),
            http: crate::modelio::default_http_client(),
        }
    }

    /// Instruction-prefixed input, following the embedding model's
    /// query-side convention.
    fn prefixed(task_prompt: &str, text: &str) -> String {
        format!("Instruct: {task_prompt}\nQuery: {text}")
    }

    fn cache_path(&self, task_prompt: &str, text: &str) -> PathBuf {
        let mut hasher = Sha256::new();
        hasher.update(self.model.as_bytes());
        hasher.update([0]);
        hasher.update(task_prompt.as_bytes());
        hasher.update([0]);
        hasher.update(text.as_bytes());
        let digest = hex::encode(hasher.finalize());
        self.cache_dir
            .join("embeddings")
            .join(&self.model)
            .join(digest)
    }

    /// Embed an instruction-prefixed text, unit-normalized locally.
    /// Served from the cache when possible.
    pub fn embed(&self, text: &str, task_prompt: &str) -> Result<EmbeddingVector> {
        let path = self.cache_path(task_prompt, text);
        if let Ok(raw) = std::fs::read_to_string(&path) {
            let cached: CachedEmbedding = serde_json::from_str(&raw)?;
            return EmbeddingVector::from_unit(cached.vector);
        }

        let url = format!("{}/embeddings", self.endpoint.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": self.model,
            "input": Self::prefixed(task_prompt, text),
        });
        let response = crate::modelio::post_json_with_retry(
            &self.http,
            &url,
            self.api_key.as_deref(),
            &body,
        )?;
        let raw_values: Vec<f64> = response
            .pointer("/data/0/embedding")
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::Transport {
                url: url.clone(),
                message: "embedding response missing data[0].embedding".into(),
            })?
            .iter()
            .filter_map(|v| v.as_f64())
            .collect();
        let vector = EmbeddingVector::from_raw(raw_values)?;

        let record = CachedEmbedding {
            model: self.model.clone(),
            task_prompt: task_prompt.to_string(),
            text_sha256: hex::encode(Sha256::digest(text.as_bytes())),
            vector: vector.values.clone(),
        };
        crate::runstore::write_atomic(&path, serde_json::to_string(&record)?.as_bytes())?;
        Ok(vector)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec2(x: f64, y: f64) -> EmbeddingVector {
        EmbeddingVector::from_raw(vec![x, y]).unwrap()
    }

    #[test]
    fn from_raw_normalizes() {
        let v = vec2(3.0, 4.0);
        assert!((v.values()[0] - 0.6).abs() < 1e-12);
        assert!((v.values()[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_rejected() {
        assert!(EmbeddingVector::from_raw(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut index = Index::new("task");
        index.insert("a", vec2(1.0, 0.0)).unwrap();
        let err = index
            .insert("b", EmbeddingVector::from_raw(vec![1.0, 0.0, 0.0]).unwrap())
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn self_match_ranks_first() {
        let mut index = Index::new("task");
        index.insert("a", vec2(1.0, 0.0)).unwrap();
        index.insert("b", vec2(0.0, 1.0)).unwrap();
        let got = knn(&index, &vec2(1.0, 0.0), 1, None).unwrap();
        assert_eq!(got, vec!["a"]);
    }

    #[test]
    fn cosine_order_with_self_excluded() {
        let mut index = Index::new("task");
        index.insert("self", vec2(1.0, 0.0)).unwrap();
        index.insert("near", vec2(0.6, 0.8)).unwrap();
        index.insert("far", vec2(0.0, 1.0)).unwrap();
        let got = knn(&index, &vec2(1.0, 0.0), 2, Some("self")).unwrap();
        assert_eq!(got, vec!["near", "far"]);
    }

    #[test]
    fn insufficient_entries_error() {
        let mut index = Index::new("task");
        index.insert("only", vec2(1.0, 0.0)).unwrap();
        let err = knn(&index, &vec2(1.0, 0.0), 1, Some("only")).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientEntries {
                needed: 1,
                available: 0
            }
        ));
    }

    #[test]
    fn ties_break_by_insertion_order() {
        let mut index = Index::new("task");
        index.insert("second", vec2(1.0, 0.0)).unwrap();
        index.insert("first", vec2(1.0, 0.0)).unwrap();
        let got = knn(&index, &vec2(1.0, 0.0), 2, None).unwrap();
        assert_eq!(got, vec!["second", "first"]);
    }

    #[test]
    fn ranking_invariant_under_probe_rescaling() {
        let mut index = Index::new("task");
        index.insert("a", vec2(0.9, 0.1)).unwrap();
        index.insert("b", vec2(0.2, 0.8)).unwrap();
        index.insert("c", vec2(-0.5, 0.5)).unwrap();
        let probe = EmbeddingVector::from_raw(vec![0.3, 0.4]).unwrap();
        let scaled = EmbeddingVector::from_raw(vec![30.0, 40.0]).unwrap();
        assert_eq!(
            knn(&index, &probe, 3, None).unwrap(),
            knn(&index, &scaled, 3, None).unwrap()
        );
    }

    #[test]
    fn embed_caches_and_normalizes() {
        let server = crate::mockserver::spawn(crate::mockserver::MockOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let client = EmbeddingClient::new("mock-embed", server.base_url(), None, dir.path());

        let first = client.embed("some text", "task prompt").unwrap();
        let calls = server.request_count();
        assert_eq!(calls, 1);
        let norm: f64 = first.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);

        // Identical call is served from the cache.
        let second = client.embed("some text", "task prompt").unwrap();
        assert_eq!(first, second);
        assert_eq!(server.request_count(), calls);

        // Different task prompt is a different cache entry.
        client.embed("some text", "other task").unwrap();
        assert_eq!(server.request_count(), calls + 1);
    }

    #[test]
    fn full_k_is_permutation_of_all_other_ids() {
        let mut index = Index::new("task");
        index.insert("a", vec2(1.0, 0.0)).unwrap();
        index.insert("b", vec2(0.6, 0.8)).unwrap();
        index.insert("c", vec2(0.0, 1.0)).unwrap();
        index.insert("d", vec2(-1.0, 0.0)).unwrap();
        let got = knn(&index, &vec2(0.3, 0.7), 3, Some("b")).unwrap();
        let mut sorted = got.clone();
        sorted.sort();
        assert_eq!(sorted, vec!["a", "c", "d"]);
        assert!(!got.contains(&"b".to_string()));
    }
}
