//! Question dataset loading and summary statistics.
//!
//! Datasets are UTF-8 line-delimited JSON records with a required
//! `question` field and optional `id` / `meta` fields. File order is
//! preserved and defines tie-breaking downstream.

use crate::error::{Error, Result};
use crate::textnorm::word_count;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// The two question datasets plus the fixed few-shot example corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Conflictingqa,
    LimaOe,
}

impl DatasetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetKind::Conflictingqa => "conflictingqa",
            DatasetKind::LimaOe => "lima_oe",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conflictingqa" => Ok(DatasetKind::Conflictingqa),
            "lima_oe" => Ok(DatasetKind::LimaOe),
            other => Err(Error::InvalidArgument(format!(
                "unknown dataset format {other:?} (expected conflictingqa or lima_oe)"
            ))),
        }
    }
}

/// One dataset question with a stable id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub dataset: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

/// An ordered list of queries. Order is stable across loads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub queries: Vec<Query>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Query> {
        self.queries.iter().find(|q| q.id == id)
    }
}

#[derive(Deserialize)]
struct RawRecord {
    question: String,
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

/// Load a line-delimited dataset file. Ids default to `<dataset>-<line index>`
/// when absent in the file.
pub fn load_dataset(path: impl AsRef<Path>, format: DatasetKind) -> Result<Dataset> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut queries = Vec::new();
    let mut seen = HashSet::new();
    for (index, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: RawRecord =
            serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: index + 1,
                message: e.to_string(),
            })?;
        if record.question.trim().is_empty() {
            return Err(Error::MalformedRecord {
                path: path.to_path_buf(),
                line: index + 1,
                message: "question text is empty".into(),
            });
        }
        let id = record
            .id
            .unwrap_or_else(|| format!("{}-{}", format.as_str(), index));
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                id,
            });
        }
        queries.push(Query {
            id,
            dataset: format.as_str().to_string(),
            text: record.question,
            meta: record.meta,
        });
    }
    if queries.is_empty() {
        return Err(Error::EmptyDataset {
            path: path.to_path_buf(),
        });
    }
    Ok(Dataset {
        name: format.as_str().to_string(),
        queries,
    })
}

/// Question count and mean whitespace-word count per question.
pub fn dataset_stats(d: &Dataset) -> Result<(usize, f64)> {
    if d.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "dataset {} is empty",
            d.name
        )));
    }
    let total: usize = d.queries.iter().map(|q| word_count(&q.text)).sum();
    Ok((d.len(), total as f64 / d.len() as f64))
}
