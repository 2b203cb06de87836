//! Prompt construction: the seven few-shot strategies and their rendering.
//!
//! Five of the strategies differ only in how demonstrations are selected;
//! rendering is shared. Demonstration order is significant: kNN-selected
//! demos are placed most-similar first (configurable).

pub mod templates;

use crate::corpus::{Dataset, Query};
use crate::error::{Error, Result};
use crate::retrieval::{knn, Index};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// One in-context demonstration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demo {
    pub id: String,
    pub query_text: String,
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_text: Option<String>,
}

/// The prompt-construction functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    ZeroShot,
    UrialHuman,
    UrialTeacher,
    RandomTeacher,
    KnnTeacher,
    OracleKnnTeacher,
    UrialSummary,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [
        StrategyKind::ZeroShot,
        StrategyKind::UrialHuman,
        StrategyKind::UrialTeacher,
        StrategyKind::RandomTeacher,
        StrategyKind::KnnTeacher,
        StrategyKind::OracleKnnTeacher,
        StrategyKind::UrialSummary,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::ZeroShot => "zero_shot",
            StrategyKind::UrialHuman => "urial_human",
            StrategyKind::UrialTeacher => "urial_teacher",
            StrategyKind::RandomTeacher => "random_teacher",
            StrategyKind::KnnTeacher => "knn_teacher",
            StrategyKind::OracleKnnTeacher => "oracle_knn_teacher",
            StrategyKind::UrialSummary => "urial_summary",
        }
    }

    /// Whether demonstrations pair queries with teacher-model responses.
    pub fn uses_teacher(&self) -> bool {
        !matches!(self, StrategyKind::ZeroShot | StrategyKind::UrialHuman)
    }

    /// Whether the strategy peeks at the teacher's answer to the test query.
    pub fn is_oracle(&self) -> bool {
        matches!(
            self,
            StrategyKind::OracleKnnTeacher | StrategyKind::UrialSummary
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .iter()
            .find(|k| k.as_str() == s)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy {s:?}")))
    }
}

/// Where kNN-selected demos go in the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoOrder {
    #[default]
    MostSimilarFirst,
    MostSimilarLast,
}

/// A strategy plus its parameters. `k = 3` matches the reference setups;
/// other values are allowed but off-recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptStrategy {
    pub kind: StrategyKind,
    pub k: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_model: Option<String>,
    #[serde(default)]
    pub knn_order: DemoOrder,
}

impl PromptStrategy {
    pub fn new(kind: StrategyKind) -> Self {
        PromptStrategy {
            kind,
            k: 3,
            seed: 0,
            teacher_model: None,
            knn_order: DemoOrder::MostSimilarFirst,
        }
    }
}

/// A fully rendered prompt. The text always ends with an open answer fence.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub text: String,
    pub kind: StrategyKind,
    pub demo_ids: Vec<String>,
}

/// Suffix every rendered prompt must end with: an unanswered answer block.
pub const OPEN_ANSWER_SUFFIX: &str = "# Answer:\n```";

fn finish(text: String, kind: StrategyKind, demo_ids: Vec<String>) -> RenderedPrompt {
    debug_assert!(text.ends_with(OPEN_ANSWER_SUFFIX));
    RenderedPrompt {
        text,
        kind,
        demo_ids,
    }
}

/// Substitute the query into the zero-shot template.
pub fn render_zero_shot(query: &Query) -> RenderedPrompt {
    let text = templates::fill(templates::ZERO_SHOT, &[("query", &query.text)]);
    finish(text, StrategyKind::ZeroShot, Vec::new())
}

/// Render the few-shot prompt: system preamble, one fenced Query/Answer
/// block per demo, then the test query and an open answer fence.
pub fn render_fewshot(
    demos: &[Demo],
    query: &Query,
    kind: StrategyKind,
) -> Result<RenderedPrompt> {
    if demos.is_empty() {
        return Err(Error::Prompt("few-shot prompt needs at least one demo".into()));
    }
    let blocks: String = demos
        .iter()
        .map(|demo| {
            templates::fill(
                templates::FEWSHOT_DEMO,
                &[("query", &demo.query_text), ("response", &demo.response_text)],
            )
        })
        .collect();
    let text = templates::fill(
        templates::URIAL_FEWSHOT,
        &[("demos", &blocks), ("query", &query.text)],
    );
    let demo_ids = demos.iter().map(|d| d.id.clone()).collect();
    Ok(finish(text, kind, demo_ids))
}

/// Render the summary-hint prompt: each demo carries a Summary block, and
/// the test query is followed by its own summary before the open fence.
pub fn render_summary_prompt(
    demos: &[Demo],
    query: &Query,
    test_summary: &str,
) -> Result<RenderedPrompt> {
    if demos.is_empty() {
        return Err(Error::Prompt("summary prompt needs at least one demo".into()));
    }
    if test_summary.trim().is_empty() {
        return Err(Error::Prompt("summary prompt needs a non-empty test summary".into()));
    }
    let blocks: Result<String> = demos
        .iter()
        .map(|demo| {
            let summary = demo.summary_text.as_deref().ok_or_else(|| {
                Error::Prompt(format!("demo {} is missing its summary", demo.id))
            })?;
            Ok(templates::fill(
                templates::SUMMARY_DEMO,
                &[
                    ("query", demo.query_text.as_str()),
                    ("summary", summary),
                    ("response", demo.response_text.as_str()),
                ],
            ))
        })
        .collect();
    let text = templates::fill(
        templates::URIAL_SUMMARY,
        &[
            ("demos", &blocks?),
            ("query", &query.text),
            ("summary", test_summary),
        ],
    );
    let demo_ids = demos.iter().map(|d| d.id.clone()).collect();
    Ok(finish(text, StrategyKind::UrialSummary, demo_ids))
}

/// Pools a strategy may draw demonstrations from.
pub struct DemoPools<'a> {
    /// The evaluation query set X (same dataset as the test query).
    pub queries: &'a Dataset,
    /// Embeddings of the queries in X, keyed by query id.
    pub query_index: Option<&'a Index>,
    /// Embeddings of the teacher's answers on X, keyed by query id.
    pub answer_index: Option<&'a Index>,
    /// Teacher answer text per query id (the first cached sample).
    pub teacher_answers: &'a BTreeMap<String, String>,
    /// The fixed example demos (human-written or teacher+summary variants).
    pub urial_demos: &'a [Demo],
}

fn demo_rng(seed: u64, query_id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"random-demos-v1");
    hasher.update(seed.to_le_bytes());
    hasher.update(query_id.as_bytes());
    let digest = hasher.finalize();
    let mut seed_bytes = [0u8; 32];
    seed_bytes.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed_bytes)
}

fn teacher_demo(pools: &DemoPools, query_id: &str) -> Result<Demo> {
    let query = pools
        .queries
        .get(query_id)
        .ok_or_else(|| Error::MissingData(format!("query {query_id} not in pool")))?;
    let answer = pools
        .teacher_answers
        .get(query_id)
        .ok_or_else(|| Error::MissingData(format!("no teacher answer for {query_id}")))?;
    Ok(Demo {
        id: query_id.to_string(),
        query_text: query.text.clone(),
        response_text: answer.clone(),
        summary_text: None,
    })
}

/// Select the k demonstrations for one test query. The test query is never
/// among its own demos.
pub fn select_demos(
    strategy: &PromptStrategy,
    query: &Query,
    pools: &DemoPools,
    teacher_response_for_query: Option<&str>,
) -> Result<Vec<Demo>> {
    match strategy.kind {
        StrategyKind::ZeroShot => Ok(Vec::new()),
        StrategyKind::UrialHuman | StrategyKind::UrialTeacher | StrategyKind::UrialSummary => {
            if pools.urial_demos.is_empty() {
                return Err(Error::MissingData("fixed example demos not loaded".into()));
            }
            if strategy.kind == StrategyKind::UrialSummary {
                for demo in pools.urial_demos {
                    if demo.summary_text.is_none() {
                        return Err(Error::Prompt(format!(
                            "demo {} is missing its summary",
                            demo.id
                        )));
                    }
                }
            }
            Ok(pools.urial_demos.to_vec())
        }
        StrategyKind::RandomTeacher => {
            let mut candidates: Vec<&str> = pools
                .queries
                .queries
                .iter()
                .filter(|q| q.id != query.id)
                .map(|q| q.id.as_str())
                .collect();
            if candidates.len() < strategy.k {
                return Err(Error::InsufficientEntries {
                    needed: strategy.k,
                    available: candidates.len(),
                });
            }
            let mut rng = demo_rng(strategy.seed, &query.id);
            let (picked, _) = candidates.partial_shuffle(&mut rng, strategy.k);
            picked
                .iter()
                .map(|id| teacher_demo(pools, id))
                .collect()
        }
        StrategyKind::KnnTeacher => {
            let index = pools
                .query_index
                .ok_or_else(|| Error::MissingData("query embedding index not built".into()))?;
            let probe = index
                .get(&query.id)
                .ok_or_else(|| Error::MissingData(format!("query {} not embedded", query.id)))?;
            let mut ids = knn(index, probe, strategy.k, Some(&query.id))?;
            if strategy.knn_order == DemoOrder::MostSimilarLast {
                ids.reverse();
            }
            ids.iter().map(|id| teacher_demo(pools, id)).collect()
        }
        StrategyKind::OracleKnnTeacher => {
            if teacher_response_for_query.is_none_or(|t| t.trim().is_empty()) {
                return Err(Error::MissingData(format!(
                    "oracle strategy needs the teacher's answer for {}",
                    query.id
                )));
            }
            let index = pools
                .answer_index
                .ok_or_else(|| Error::MissingData("answer embedding index not built".into()))?;
            let probe = index.get(&query.id).ok_or_else(|| {
                Error::MissingData(format!("teacher answer for {} not embedded", query.id))
            })?;
            let mut ids = knn(index, probe, strategy.k, Some(&query.id))?;
            if strategy.knn_order == DemoOrder::MostSimilarLast {
                ids.reverse();
            }
            ids.iter().map(|id| teacher_demo(pools, id)).collect()
        }
    }
}

#[derive(Deserialize)]
struct RawDemo {
    id: String,
    query: String,
    response: String,
    #[serde(default)]
    summary: Option<String>,
}

fn parse_demos(raw: &str) -> Vec<Demo> {
    raw.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let record: RawDemo = serde_json::from_str(line).expect("bundled demo fixture");
            Demo {
                id: record.id,
                query_text: record.query,
                response_text: record.response,
                summary_text: record.summary,
            }
        })
        .collect()
}

/// The three canonical human-written demonstrations.
pub fn urial_human_demos() -> Vec<Demo> {
    parse_demos(include_str!("../../data/urial_human_demos.jsonl"))
}

/// The three canonical demonstrations with teacher answers and summaries.
pub fn urial_summary_demos() -> Vec<Demo> {
    parse_demos(include_str!("../../data/urial_summary_demos.jsonl"))
}
