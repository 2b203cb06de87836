//! Judge protocols: quality, missingness, stance, summarization, and
//! structural similarity, with structured verdict parsing.
//!
//! The judge is called at temperature 0 and every verdict is cached in the
//! run store under a content digest of the rendered prompt, so re-judging
//! identical inputs costs nothing. Unparseable output gets one re-ask with
//! a short nudge; after that the pair is recorded as a parse failure and
//! excluded from aggregates with an explicit tally.

use crate::error::{Error, Result};
use crate::metrics::StanceLabel;
use crate::modelio::{post_json_with_policy, RetryPolicy};
use crate::promptkit::templates;
use crate::runstore::{write_atomic, RunStore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

pub const ASPECTS: [&str; 5] = ["helpfulness", "clarity", "factuality", "depth", "engagement"];

/// Five 1-5 aspect scores with per-aspect rationales.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityVerdict {
    pub helpfulness: u8,
    pub clarity: u8,
    pub factuality: u8,
    pub depth: u8,
    pub engagement: u8,
    pub rationales: BTreeMap<String, String>,
}

impl QualityVerdict {
    pub fn score(&self, aspect: &str) -> Option<u8> {
        match aspect {
            "helpfulness" => Some(self.helpfulness),
            "clarity" => Some(self.clarity),
            "factuality" => Some(self.factuality),
            "depth" => Some(self.depth),
            "engagement" => Some(self.engagement),
            _ => None,
        }
    }
}

/// Raw missingness score plus the inverted semantic-coverage reading.
///
/// The raw scale anchors 1 at "redundant given the reference" while the
/// coverage scale anchors 5 there, so `cover_sem = 6 - raw_score`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingnessVerdict {
    pub raw_score: u8,
    pub cover_sem: u8,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StanceVerdict {
    pub label: StanceLabel,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralVerdict {
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryText {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerdictPayload {
    Quality(QualityVerdict),
    Missingness(MissingnessVerdict),
    Stance(StanceVerdict),
    Summary(SummaryText),
    Structural(StructuralVerdict),
}

impl VerdictPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            VerdictPayload::Quality(_) => "quality",
            VerdictPayload::Missingness(_) => "missingness",
            VerdictPayload::Stance(_) => "stance",
            VerdictPayload::Summary(_) => "summary",
            VerdictPayload::Structural(_) => "structural",
        }
    }
}

/// Which generated sample (or sample pair) a verdict belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictIdentity {
    pub dataset: String,
    pub query_id: String,
    pub model_id: String,
    pub strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_model: Option<String>,
    pub sample_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_model: Option<String>,
}

/// One judged result. `verdict` is `None` when parsing failed twice; the
/// raw judge text is always retained for audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub protocol: String,
    pub judge_model: String,
    #[serde(flatten)]
    pub identity: VerdictIdentity,
    pub verdict: Option<VerdictPayload>,
    pub raw: String,
    pub created_at: String,
}

impl VerdictRecord {
    pub fn is_parse_failure(&self) -> bool {
        self.verdict.is_none()
    }
}

// ---------------------------------------------------------------------------
// Verdict parsing
// ---------------------------------------------------------------------------

/// Pull the first top-level JSON object out of judge output, stripping one
/// leading/trailing code fence if present.
pub fn extract_json_object(raw: &str) -> Result<serde_json::Value> {
    let mut text = raw.trim();
    if let Some(stripped) = text.strip_prefix("```") {
        // drop a possible language tag up to end of line
        let after_tag = match stripped.find('\n') {
            Some(pos) => &stripped[pos + 1..],
            None => stripped,
        };
        text = after_tag.strip_suffix("```").unwrap_or(after_tag).trim();
    }
    let start = text.find('{').ok_or_else(|| Error::JudgeParse {
        kind: "json".into(),
        message: "no JSON object found".into(),
    })?;
    serde_json::Deserializer::from_str(&text[start..])
        .into_iter::<serde_json::Value>()
        .next()
        .ok_or_else(|| Error::JudgeParse {
            kind: "json".into(),
            message: "no JSON object found".into(),
        })?
        .map_err(|e| Error::JudgeParse {
            kind: "json".into(),
            message: e.to_string(),
        })
}

/// Scores arrive as strings per the template placeholders, but numbers are
/// accepted too. Range-checked, never clamped.
fn parse_score(value: &serde_json::Value, lo: i64, hi: i64, field: &str) -> Result<u8> {
    let n = match value {
        serde_json::Value::String(s) => {
            s.trim().parse::<i64>().map_err(|_| Error::JudgeParse {
                kind: field.into(),
                message: format!("score {s:?} is not an integer"),
            })?
        }
        serde_json::Value::Number(n) => {
            let f = n.as_f64().unwrap_or(f64::NAN);
            if f.fract() != 0.0 {
                return Err(Error::JudgeParse {
                    kind: field.into(),
                    message: format!("score {f} is not an integer"),
                });
            }
            f as i64
        }
        other => {
            return Err(Error::JudgeParse {
                kind: field.into(),
                message: format!("score has unexpected type: {other}"),
            })
        }
    };
    if n < lo || n > hi {
        return Err(Error::JudgeParse {
            kind: field.into(),
            message: format!("score {n} outside {lo}..{hi}"),
        });
    }
    Ok(n as u8)
}

pub fn parse_quality(raw: &str) -> Result<QualityVerdict> {
    let value = extract_json_object(raw)?;
    let object = value.as_object().ok_or_else(|| Error::JudgeParse {
        kind: "quality".into(),
        message: "top level is not an object".into(),
    })?;
    let mut scores = BTreeMap::new();
    let mut rationales = BTreeMap::new();
    for aspect in ASPECTS {
        let entry = object.get(aspect).ok_or_else(|| Error::JudgeParse {
            kind: "quality".into(),
            message: format!("missing aspect {aspect:?}"),
        })?;
        let score_value = entry.get("score").ok_or_else(|| Error::JudgeParse {
            kind: "quality".into(),
            message: format!("aspect {aspect:?} has no score"),
        })?;
        scores.insert(aspect, parse_score(score_value, 1, 5, aspect)?);
        if let Some(reason) = entry.get("reason").and_then(|r| r.as_str()) {
            rationales.insert(aspect.to_string(), reason.to_string());
        }
    }
    Ok(QualityVerdict {
        helpfulness: scores["helpfulness"],
        clarity: scores["clarity"],
        factuality: scores["factuality"],
        depth: scores["depth"],
        engagement: scores["engagement"],
        rationales,
    })
}

pub fn parse_missingness(raw: &str) -> Result<MissingnessVerdict> {
    let value = extract_json_object(raw)?;
    let score_value = value.get("score").ok_or_else(|| Error::JudgeParse {
        kind: "missingness".into(),
        message: "missing score field".into(),
    })?;
    let raw_score = parse_score(score_value, 1, 5, "missingness")?;
    Ok(MissingnessVerdict {
        raw_score,
        cover_sem: 6 - raw_score,
        rationale: value
            .get("reason")
            .and_then(|r| r.as_str())
            .unwrap_or_default()
            .to_string(),
    })
}

pub fn parse_stance(raw: &str) -> Result<StanceVerdict> {
    let value = extract_json_object(raw)?;
    // The template reuses the key "score" for the stance string; accept
    // "stance" as well.
    let label_value = value
        .get("score")
        .or_else(|| value.get("stance"))
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::JudgeParse {
            kind: "stance".into(),
            message: "missing stance string".into(),
        })?;
    let label = StanceLabel::parse(label_value).ok_or_else(|| Error::JudgeParse {
        kind: "stance".into(),
        message: format!("label {label_value:?} outside {{yes,no,both,other}}"),
    })?;
    Ok(StanceVerdict {
        label,
        rationale: value
            .get("reason")
            .and_then(|r| r.as_str())
            .unwrap_or_default()
            .to_string(),
    })
}

/// A bare digit 0/1/2, tolerating surrounding whitespace only.
pub fn parse_structural(raw: &str) -> Result<StructuralVerdict> {
    match raw.trim() {
        "0" => Ok(StructuralVerdict { score: 0 }),
        "1" => Ok(StructuralVerdict { score: 1 }),
        "2" => Ok(StructuralVerdict { score: 2 }),
        other => Err(Error::JudgeParse {
            kind: "structural".into(),
            message: format!("expected 0, 1, or 2, got {other:?}"),
        }),
    }
}

pub fn parse_summary(raw: &str) -> Result<SummaryText> {
    let text = raw.trim();
    if text.is_empty() {
        return Err(Error::JudgeParse {
            kind: "summary".into(),
            message: "empty summary".into(),
        });
    }
    Ok(SummaryText {
        text: text.to_string(),
    })
}

// ---------------------------------------------------------------------------
// Judge client
// ---------------------------------------------------------------------------

pub struct JudgeClient {
    pub model_id: String,
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    max_tokens: u32,
    http: reqwest::blocking::Client,
}

impl JudgeClient {
    pub fn new(model_id: impl Into<String>, endpoint: impl Into<String>) -> Self {
        JudgeClient {
            model_id: model_id.into(),
            endpoint: endpoint.into(),
            api_key: None,
            retry: RetryPolicy::default(),
            max_tokens: 1024,
            http: crate::modelio::default_http_client(),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// One judge call at temperature 0.
    fn ask(&self, prompt: &str) -> Result<String> {
        let url = format!(
            "{}/chat/completions",
            self.endpoint.trim_end_matches('/')
        );
        let body = serde_json::json!({
            "model": self.model_id,
            "temperature": 0,
            "max_tokens": self.max_tokens,
            "messages": [{"role": "user", "content": prompt}],
        });
        let response =
            post_json_with_policy(&self.http, &url, self.api_key.as_deref(), &body, &self.retry)?;
        response
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| Error::Transport {
                url,
                message: "judge response missing choices[0].message.content".into(),
            })
    }

    fn digest(&self, protocol: &str, prompt: &str) -> String {
        let mut hasher = Sha256::new();
        for part in ["verdict-v1", &self.model_id, protocol, prompt] {
            hasher.update(part.as_bytes());
            hasher.update([0]);
        }
        hex::encode(hasher.finalize())
    }

    /// Render, call, parse with one nudged retry, and cache the outcome.
    fn run_protocol<T, F>(
        &self,
        store: &RunStore,
        identity: &VerdictIdentity,
        protocol: &str,
        prompt: String,
        nudge: &str,
        parse: F,
        wrap: fn(T) -> VerdictPayload,
    ) -> Result<VerdictRecord>
    where
        F: Fn(&str) -> Result<T>,
    {
        let digest = self.digest(protocol, &prompt);
        let path = store.verdict_path(protocol, &digest);
        if let Ok(raw) = std::fs::read_to_string(&path) {
            return Ok(serde_json::from_str(&raw)?);
        }

        let first = self.ask(&prompt)?;
        let (raw, verdict) = match parse(&first) {
            Ok(v) => (first, Some(wrap(v))),
            Err(first_err) => {
                log::warn!("judge parse failure on {protocol}, re-asking: {first_err}");
                let retry_prompt = format!("{prompt}\n\n{nudge}");
                let second = self.ask(&retry_prompt)?;
                match parse(&second) {
                    Ok(v) => (second, Some(wrap(v))),
                    Err(_) => (second, None),
                }
            }
        };

        let record = VerdictRecord {
            protocol: protocol.to_string(),
            judge_model: self.model_id.clone(),
            identity: identity.clone(),
            verdict,
            raw,
            created_at: chrono::Utc::now().to_rfc3339(),
        };
        // One line-delimited record per file.
        write_atomic(&path, format!("{}\n", serde_json::to_string(&record)?).as_bytes())?;
        Ok(record)
    }

    pub fn judge_quality(
        &self,
        store: &RunStore,
        identity: &VerdictIdentity,
        query: &str,
        response: &str,
    ) -> Result<VerdictRecord> {
        let prompt = templates::fill(
            templates::JUDGE_QUALITY,
            &[("query", query), ("response", response)],
        );
        self.run_protocol(
            store,
            identity,
            "quality",
            prompt,
            "Output only the JSON object.",
            parse_quality,
            VerdictPayload::Quality,
        )
    }

    pub fn judge_missingness(
        &self,
        store: &RunStore,
        identity: &VerdictIdentity,
        query: &str,
        reference: &str,
        alternative: &str,
    ) -> Result<VerdictRecord> {
        let prompt = templates::fill(
            templates::JUDGE_MISSINGNESS,
            &[
                ("query", query),
                ("reference response", reference),
                ("alternative response", alternative),
            ],
        );
        self.run_protocol(
            store,
            identity,
            "missingness",
            prompt,
            "Output only the JSON object.",
            parse_missingness,
            VerdictPayload::Missingness,
        )
    }

    pub fn judge_stance(
        &self,
        store: &RunStore,
        identity: &VerdictIdentity,
        query: &str,
        response: &str,
    ) -> Result<VerdictRecord> {
        let prompt = templates::fill(
            templates::JUDGE_STANCE,
            &[("query", query), ("response", response)],
        );
        self.run_protocol(
            store,
            identity,
            "stance",
            prompt,
            "Output only the JSON object.",
            parse_stance,
            VerdictPayload::Stance,
        )
    }

    /// Plain-text summary of a response, used both for demo summaries and
    /// the oracle test summary.
    pub fn summarize(
        &self,
        store: &RunStore,
        identity: &VerdictIdentity,
        query: &str,
        response: &str,
    ) -> Result<VerdictRecord> {
        let prompt = templates::fill(
            templates::JUDGE_SUMMARIZE,
            &[("query", query), ("response", response)],
        );
        self.run_protocol(
            store,
            identity,
            "summary",
            prompt,
            "Write the 2-3 sentence summary now.",
            parse_summary,
            VerdictPayload::Summary,
        )
    }

    pub fn judge_structural(
        &self,
        store: &RunStore,
        identity: &VerdictIdentity,
        response_a: &str,
        response_b: &str,
    ) -> Result<VerdictRecord> {
        let prompt = templates::fill(
            templates::JUDGE_STRUCTURAL,
            &[("responseA", response_a), ("responseB", response_b)],
        );
        self.run_protocol(
            store,
            identity,
            "structural",
            prompt,
            "Output 0, 1, or 2 only.",
            parse_structural,
            VerdictPayload::Structural,
        )
    }
}

/// Load every verdict record of one protocol from a run store, sorted by
/// record file name.
pub fn load_verdicts(store: &RunStore, protocol: &str) -> Result<Vec<VerdictRecord>> {
    let mut records = Vec::new();
    for path in RunStore::list_records(&store.verdicts_dir(protocol))? {
        let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        records.push(serde_json::from_str(&raw)?);
    }
    Ok(records)
}
