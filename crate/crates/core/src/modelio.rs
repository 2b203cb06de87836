//! Sampling from base and aligned models over HTTP with deterministic
//! caching.
//!
//! Base models use the plain-completion route with a rendered prompt; chat
//! models use the chat route with the query as a single user message. Every
//! sample is one request, cached under a content digest so interrupted runs
//! resume without re-spending.

use crate::error::{Error, Result};
use crate::runstore::{write_atomic, RunStore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

/// The generation hyperparameters used when sampling for analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub repetition_penalty: f64,
    pub max_tokens: u32,
    pub num_samples: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            temperature: 0.5,
            repetition_penalty: 1.1,
            max_tokens: 768,
            num_samples: 5,
            seed: None,
        }
    }
}

/// How a model is reached on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteKind {
    /// POST `<endpoint>/completions` with a raw prompt string.
    Completion,
    /// POST `<endpoint>/chat/completions` with a single user message.
    Chat,
}

/// What the prompt looked like on the wire.
#[derive(Debug, Clone, PartialEq)]
pub enum PromptInput {
    /// Rendered few-shot or zero-shot prompt for a base model.
    Completion(String),
    /// Raw query for a chat model's user turn.
    Chat(String),
}

impl PromptInput {
    pub fn text(&self) -> &str {
        match self {
            PromptInput::Completion(t) | PromptInput::Chat(t) => t,
        }
    }
}

/// Provenance stamped onto every generation record.
#[derive(Debug, Clone)]
pub struct RecordContext {
    pub query_id: String,
    pub dataset: String,
    pub strategy: String,
    pub teacher_model: Option<String>,
    pub demo_ids: Vec<String>,
}

/// One sampled model response with full provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub query_id: String,
    pub dataset: String,
    pub model_id: String,
    pub strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_model: Option<String>,
    pub sample_index: u32,
    pub prompt_digest: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub demo_ids: Vec<String>,
    pub response_text: String,
    pub finish_reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider_seed: Option<i64>,
    pub repetition_penalty_applied: bool,
    pub created_at: String,
}

/// Stable content digest over everything that affects a sample. Changing
/// any field changes the key.
pub fn cache_key(
    model: &str,
    prompt_text: &str,
    cfg: &SamplingConfig,
    sample_index: u32,
) -> String {
    let mut hasher = Sha256::new();
    for part in [
        "generation-v1",
        model,
        prompt_text,
        &cfg.temperature.to_string(),
        &cfg.repetition_penalty.to_string(),
        &cfg.max_tokens.to_string(),
        &cfg.num_samples.to_string(),
        &cfg.seed.map(|s| s.to_string()).unwrap_or_default(),
        &sample_index.to_string(),
    ] {
        hasher.update(part.as_bytes());
        hasher.update([0]);
    }
    hex::encode(hasher.finalize())
}

/// Answer fence the base-model templates close with; generations are cut
/// here and the marker is never stored.
pub const STOP_SEQUENCE: &str = "\n```";

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_delay: Duration::from_millis(250),
        }
    }
}

pub(crate) fn default_http_client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(120))
        .build()
        .expect("http client")
}

/// POST a JSON body, retrying transport failures and retryable statuses
/// with exponential backoff.
pub(crate) fn post_json_with_retry(
    http: &reqwest::blocking::Client,
    url: &str,
    api_key: Option<&str>,
    body: &serde_json::Value,
) -> Result<serde_json::Value> {
    post_json_with_policy(http, url, api_key, body, &RetryPolicy::default())
}

pub(crate) fn post_json_with_policy(
    http: &reqwest::blocking::Client,
    url: &str,
    api_key: Option<&str>,
    body: &serde_json::Value,
    policy: &RetryPolicy,
) -> Result<serde_json::Value> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        let result = send_once(http, url, api_key, body);
        match result {
            Ok(value) => return Ok(value),
            Err(err) if err.is_retryable() && attempt < policy.max_attempts => {
                let delay = policy.base_delay * 2u32.saturating_pow(attempt - 1);
                log::warn!("retrying {url} after {err} (attempt {attempt})");
                std::thread::sleep(delay);
            }
            Err(err) => return Err(err),
        }
    }
}

fn send_once(
    http: &reqwest::blocking::Client,
    url: &str,
    api_key: Option<&str>,
    body: &serde_json::Value,
) -> Result<serde_json::Value> {
    let mut request = http.post(url).json(body);
    if let Some(key) = api_key {
        request = request.bearer_auth(key);
    }
    let response = request.send().map_err(|e| Error::Transport {
        url: url.to_string(),
        message: e.to_string(),
    })?;
    let status = response.status();
    let text = response.text().map_err(|e| Error::Transport {
        url: url.to_string(),
        message: e.to_string(),
    })?;
    if !status.is_success() {
        return Err(Error::HttpStatus {
            url: url.to_string(),
            status: status.as_u16(),
            body: text.chars().take(400).collect(),
        });
    }
    serde_json::from_str(&text).map_err(|e| Error::Transport {
        url: url.to_string(),
        message: format!("invalid json response: {e}"),
    })
}

/// One configured model endpoint.
#[derive(Debug, Clone)]
pub struct ModelClient {
    pub model_id: String,
    pub endpoint: String,
    pub route: RouteKind,
    pub api_key: Option<String>,
    pub supports_repetition_penalty: bool,
    pub retry: RetryPolicy,
    http: reqwest::blocking::Client,
}

impl ModelClient {
    pub fn new(model_id: impl Into<String>, endpoint: impl Into<String>, route: RouteKind) -> Self {
        ModelClient {
            model_id: model_id.into(),
            endpoint: endpoint.into(),
            route,
            api_key: None,
            supports_repetition_penalty: true,
            retry: RetryPolicy::default(),
            http: default_http_client(),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_repetition_penalty_support(mut self, supported: bool) -> Self {
        self.supports_repetition_penalty = supported;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Sample `cfg.num_samples` completions, consulting the run store's
    /// generation cache first. Returns records ordered by sample index.
    pub fn complete(
        &self,
        ctx: &RecordContext,
        prompt: &PromptInput,
        cfg: &SamplingConfig,
        store: &RunStore,
    ) -> Result<Vec<GenerationRecord>> {
        let mut records = Vec::with_capacity(cfg.num_samples as usize);
        for sample_index in 0..cfg.num_samples {
            records.push(self.complete_one(ctx, prompt, cfg, sample_index, store)?);
        }
        Ok(records)
    }

    fn complete_one(
        &self,
        ctx: &RecordContext,
        prompt: &PromptInput,
        cfg: &SamplingConfig,
        sample_index: u32,
        store: &RunStore,
    ) -> Result<GenerationRecord> {
        let digest = cache_key(&self.model_id, prompt.text(), cfg, sample_index);
        let path = store.generation_path(&digest);
        if let Ok(raw) = std::fs::read_to_string(&path) {
            return Ok(serde_json::from_str(&raw)?);
        }

        let (url, body) = self.request_parts(prompt, cfg, sample_index);
        let response =
            post_json_with_policy(&self.http, &url, self.api_key.as_deref(), &body, &self.retry)?;
        let (text, finish_reason, provider_seed) = parse_choice(&url, self.route, &response)?;
        let response_text = match self.route {
            RouteKind::Completion => trim_completion(&text),
            RouteKind::Chat => text,
        };

        let record = GenerationRecord {
            query_id: ctx.query_id.clone(),
            dataset: ctx.dataset.clone(),
            model_id: self.model_id.clone(),
            strategy: ctx.strategy.clone(),
            teacher_model: ctx.teacher_model.clone(),
            sample_index,
            prompt_digest: digest.clone(),
            demo_ids: ctx.demo_ids.clone(),
            response_text,
            finish_reason,
            provider_seed,
            repetition_penalty_applied: self.supports_repetition_penalty,
            created_at: chrono::Utc::now().to_rfc3339(),
        };
        write_atomic(&path, format!("{}\n", serde_json::to_string(&record)?).as_bytes())?;
        Ok(record)
    }

    fn request_parts(
        &self,
        prompt: &PromptInput,
        cfg: &SamplingConfig,
        sample_index: u32,
    ) -> (String, serde_json::Value) {
        let base = self.endpoint.trim_end_matches('/');
        let mut body = serde_json::json!({
            "model": self.model_id,
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
        });
        if self.supports_repetition_penalty {
            body["repetition_penalty"] = cfg.repetition_penalty.into();
        } else {
            log::warn!(
                "endpoint for {} does not support repetition_penalty; omitted",
                self.model_id
            );
        }
        if let Some(seed) = cfg.seed {
            body["seed"] = (seed + sample_index as u64).into();
        }
        match self.route {
            RouteKind::Completion => {
                body["prompt"] = prompt.text().into();
                body["stop"] = serde_json::json!([STOP_SEQUENCE]);
                (format!("{base}/completions"), body)
            }
            RouteKind::Chat => {
                body["messages"] = serde_json::json!([
                    {"role": "user", "content": prompt.text()}
                ]);
                (format!("{base}/chat/completions"), body)
            }
        }
    }
}

fn parse_choice(
    url: &str,
    route: RouteKind,
    response: &serde_json::Value,
) -> Result<(String, String, Option<i64>)> {
    let pointer = match route {
        RouteKind::Completion => "/choices/0/text",
        RouteKind::Chat => "/choices/0/message/content",
    };
    let text = response
        .pointer(pointer)
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Transport {
            url: url.to_string(),
            message: format!("response missing {pointer}"),
        })?
        .to_string();
    let finish_reason = response
        .pointer("/choices/0/finish_reason")
        .and_then(|v| v.as_str())
        .unwrap_or("stop")
        .to_string();
    let provider_seed = response.pointer("/seed").and_then(|v| v.as_i64());
    Ok((text, finish_reason, provider_seed))
}

/// Drop the leading newline the fenced templates induce and cut at the
/// closing fence if the model emitted one.
fn trim_completion(text: &str) -> String {
    let text = text.strip_prefix('\n').unwrap_or(text);
    match text.find(STOP_SEQUENCE) {
        Some(pos) => text[..pos].to_string(),
        None => text.to_string(),
    }
}

/// Run jobs on a bounded worker pool, preserving input order of results.
pub fn run_parallel<T, R, F>(items: Vec<T>, workers: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let workers = workers.max(1);
    let queue: Mutex<VecDeque<(usize, T)>> = Mutex::new(items.into_iter().enumerate().collect());
    let results: Mutex<Vec<Option<R>>> = {
        let n = queue.lock().unwrap().len();
        Mutex::new((0..n).map(|_| None).collect())
    };
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = queue.lock().unwrap().pop_front();
                match job {
                    Some((index, item)) => {
                        let result = f(item);
                        results.lock().unwrap()[index] = Some(result);
                    }
                    None => break,
                }
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("worker completed"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_key_sensitivity() {
        let cfg = SamplingConfig::default();
        let base = cache_key("m", "p", &cfg, 0);
        assert_eq!(base, cache_key("m", "p", &cfg, 0));
        assert_ne!(base, cache_key("m", "p", &cfg, 1));
        let cold = SamplingConfig {
            temperature: 0.0,
            ..cfg.clone()
        };
        assert_ne!(base, cache_key("m", "p", &cold, 0));
        assert_ne!(base, cache_key("m2", "p", &cfg, 0));
        assert_ne!(base, cache_key("m", "p2", &cfg, 0));
    }

    #[test]
    fn sampling_defaults_match_generation_setup() {
        let cfg = SamplingConfig::default();
        assert_eq!(cfg.temperature, 0.5);
        assert_eq!(cfg.repetition_penalty, 1.1);
        assert_eq!(cfg.max_tokens, 768);
        assert_eq!(cfg.num_samples, 5);
    }

    #[test]
    fn completion_trimming() {
        assert_eq!(trim_completion("\nanswer text\n```\njunk"), "answer text");
        assert_eq!(trim_completion("no fence here"), "no fence here");
        assert_eq!(trim_completion("\nonly leading newline"), "only leading newline");
    }

    #[test]
    fn run_parallel_preserves_order() {
        let items: Vec<u32> = (0..50).collect();
        let doubled = run_parallel(items, 4, |x| x * 2);
        assert_eq!(doubled, (0..50).map(|x| x * 2).collect::<Vec<_>>());
    }
}
