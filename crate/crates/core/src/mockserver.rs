//! Deterministic mock model/judge/embedding server for offline runs and
//! tests.
//!
//! Speaks just enough HTTP/1.1 for the blocking client: completions, chat
//! completions (including the judge protocols, recognized by their prompt
//! preambles), and embeddings. Every response is a pure function of the
//! request body, so warm-cache reruns are byte-identical. `GET /__stats`
//! reports the request count without incrementing it.

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, Default)]
pub struct MockOptions {
    /// Echo the prompt back as the completion text instead of synthesizing.
    pub echo: bool,
}

pub struct MockServerHandle {
    addr: SocketAddr,
    requests: Arc<AtomicUsize>,
    shutdown: Arc<AtomicBool>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl MockServerHandle {
    /// Base URL including the /v1 prefix.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Requests served so far, excluding /__stats probes.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn shutdown(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

impl Drop for MockServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Bind an ephemeral local port and serve until shut down.
pub fn spawn(options: MockOptions) -> std::io::Result<MockServerHandle> {
    spawn_on(0, options)
}

/// Bind a specific local port (0 for ephemeral) and serve until shut down.
pub fn spawn_on(port: u16, options: MockOptions) -> std::io::Result<MockServerHandle> {
    let listener = TcpListener::bind(("127.0.0.1", port))?;
    let addr = listener.local_addr()?;
    let requests = Arc::new(AtomicUsize::new(0));
    let shutdown = Arc::new(AtomicBool::new(false));
    let thread = {
        let requests = Arc::clone(&requests);
        let shutdown = Arc::clone(&shutdown);
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                if shutdown.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let requests = Arc::clone(&requests);
                std::thread::spawn(move || {
                    let _ = handle_connection(stream, &requests, options);
                });
            }
        })
    };
    Ok(MockServerHandle {
        addr,
        requests,
        shutdown,
        thread: Some(thread),
    })
}

fn handle_connection(
    stream: TcpStream,
    requests: &AtomicUsize,
    options: MockOptions,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();

    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim();
        if line.is_empty() {
            break;
        }
        if let Some(value) = line
            .to_ascii_lowercase()
            .strip_prefix("content-length:")
            .map(str::trim)
            .and_then(|v| v.parse::<usize>().ok())
        {
            content_length = value;
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let (status, response_body) = route(&method, &path, &body, requests, options);
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        response_body.len()
    )?;
    stream.write_all(response_body.as_bytes())?;
    Ok(())
}

fn route(
    method: &str,
    path: &str,
    body: &[u8],
    requests: &AtomicUsize,
    options: MockOptions,
) -> (&'static str, String) {
    if method == "GET" && path == "/__stats" {
        let count = requests.load(Ordering::SeqCst);
        return ("200 OK", json!({ "requests": count }).to_string());
    }
    requests.fetch_add(1, Ordering::SeqCst);
    let Ok(request) = serde_json::from_slice::<Value>(body) else {
        return ("400 Bad Request", json!({"error": "invalid json"}).to_string());
    };
    match path {
        "/v1/completions" => ("200 OK", completions(&request, options).to_string()),
        "/v1/chat/completions" => ("200 OK", chat(&request, options).to_string()),
        "/v1/embeddings" => ("200 OK", embeddings(&request).to_string()),
        _ => ("404 Not Found", json!({"error": "unknown route"}).to_string()),
    }
}

fn hash64(parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part.as_bytes());
        hasher.update([0]);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

const OPENERS: [&str; 4] = [
    "Yes,",
    "No,",
    "Both sides have merit:",
    "That question is hard to settle;",
];

const WORDS: [&str; 24] = [
    "evidence",
    "research",
    "experts",
    "history",
    "context",
    "tradeoffs",
    "benefits",
    "risks",
    "studies",
    "data",
    "opinions",
    "sources",
    "factors",
    "details",
    "examples",
    "arguments",
    "claims",
    "debate",
    "practice",
    "theory",
    "nuance",
    "caveats",
    "support",
    "criticism",
];

/// Deterministic pseudo-response: an opener plus a hash-selected word run.
fn synthesize(prompt: &str, seed: u64) -> String {
    let h = hash64(&[prompt, &seed.to_string()]);
    let opener = OPENERS[(h % OPENERS.len() as u64) as usize];
    let count = 8 + (h >> 8) % 9;
    let mut words = Vec::with_capacity(count as usize);
    for i in 0..count {
        let pick = hash64(&[prompt, &seed.to_string(), &i.to_string()]);
        words.push(WORDS[(pick % WORDS.len() as u64) as usize]);
    }
    format!("{opener} the answer rests on {}.", words.join(" "))
}

fn completions(request: &Value, options: MockOptions) -> Value {
    let prompt = request["prompt"].as_str().unwrap_or_default();
    let seed = request["seed"].as_u64().unwrap_or(0);
    let raw = if options.echo {
        prompt.to_string()
    } else {
        // Emit a closing fence and trailing junk so stop handling is
        // exercised end to end.
        format!("\n{}\n```\n# Query:\nleaked", synthesize(prompt, seed))
    };
    let stops: Vec<String> = request["stop"]
        .as_array()
        .map(|s| {
            s.iter()
                .filter_map(|v| v.as_str().map(str::to_string))
                .collect()
        })
        .unwrap_or_default();
    let mut text = raw.clone();
    let mut finish_reason = "length";
    for stop in &stops {
        if let Some(pos) = text.find(stop.as_str()) {
            text.truncate(pos);
            finish_reason = "stop";
        }
    }
    json!({
        "choices": [{"text": text, "finish_reason": finish_reason}],
        "seed": seed,
    })
}

fn user_message(request: &Value) -> String {
    request["messages"]
        .as_array()
        .and_then(|m| m.last())
        .and_then(|m| m["content"].as_str())
        .unwrap_or_default()
        .to_string()
}

fn chat(request: &Value, options: MockOptions) -> Value {
    let message = user_message(request);
    let seed = request["seed"].as_u64().unwrap_or(0);
    let content = if let Some(verdict) = judge_response(&message) {
        verdict
    } else if options.echo {
        message.clone()
    } else {
        synthesize(&message, seed)
    };
    json!({
        "choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
        "seed": seed,
    })
}

/// Recognize the judge protocols by their fixed preambles and answer with
/// deterministic, schema-valid verdicts.
fn judge_response(message: &str) -> Option<String> {
    if message.starts_with("Please act as an impartial judge and evaluate the quality") {
        let mut parts = Vec::new();
        for aspect in crate::judge::ASPECTS {
            let score = 1 + hash64(&[message, aspect]) % 5;
            parts.push(format!(
                "    \"{aspect}\": {{\n        \"reason\": \"deterministic mock rating\",\n        \"score\": \"{score}\"\n    }}"
            ));
        }
        return Some(format!("```\n{{\n{}\n}}\n```", parts.join(",\n")));
    }
    if message.starts_with(
        "Please act as an impartial judge and evaluate the responses provided. You will determine how much information",
    ) {
        let score = 1 + hash64(&[message, "missing"]) % 5;
        return Some(format!(
            "{{\n    \"reason\": \"deterministic mock rating\",\n    \"score\": \"{score}\"\n}}"
        ));
    }
    if message.starts_with(
        "Please act as an impartial judge and evaluate the responses provided. You will determine the stance",
    ) {
        // Weight toward yes/no so per-query entropies spread across levels.
        let labels = ["yes", "yes", "no", "no", "both", "other"];
        let label = labels[(hash64(&[message, "stance"]) % labels.len() as u64) as usize];
        return Some(format!(
            "{{\n    \"reason\": \"deterministic mock rating\",\n    \"score\": \"{label}\"\n}}"
        ));
    }
    if message.starts_with("You will be provided a question and answer. Your task is to summarize") {
        let h = hash64(&[message, "summary"]);
        let a = WORDS[(h % WORDS.len() as u64) as usize];
        let b = WORDS[((h >> 16) % WORDS.len() as u64) as usize];
        return Some(format!(
            "The answer weighs {a} against {b}. It concludes with a short recommendation grounded in {a}."
        ));
    }
    if message.starts_with("Consider the following two responses") {
        let score = hash64(&[message, "structural"]) % 3;
        return Some(score.to_string());
    }
    None
}

fn embeddings(request: &Value) -> Value {
    let input = match &request["input"] {
        Value::String(s) => s.clone(),
        Value::Array(items) => items
            .first()
            .and_then(|v| v.as_str())
            .unwrap_or_default()
            .to_string(),
        _ => String::new(),
    };
    // 8-dim pseudo-embedding; the client normalizes.
    let vector: Vec<f64> = (0..8)
        .map(|i| {
            let h = hash64(&[&input, &i.to_string()]);
            (h % 2000) as f64 / 1000.0 - 1.0
        })
        .collect();
    json!({ "data": [{"embedding": vector, "index": 0}] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthesize_is_deterministic() {
        assert_eq!(synthesize("prompt", 3), synthesize("prompt", 3));
        assert_ne!(synthesize("prompt", 3), synthesize("prompt", 4));
    }

    #[test]
    fn judge_responses_parse_with_the_real_parsers() {
        let quality = judge_response(
            "Please act as an impartial judge and evaluate the quality of the responses provided...",
        )
        .unwrap();
        assert!(crate::judge::parse_quality(&quality).is_ok());

        let missing = judge_response(
            "Please act as an impartial judge and evaluate the responses provided. You will determine how much information is included...",
        )
        .unwrap();
        assert!(crate::judge::parse_missingness(&missing).is_ok());

        let stance = judge_response(
            "Please act as an impartial judge and evaluate the responses provided. You will determine the stance taken by the response...",
        )
        .unwrap();
        assert!(crate::judge::parse_stance(&stance).is_ok());

        let structural =
            judge_response("Consider the following two responses. Your job is...").unwrap();
        assert!(crate::judge::parse_structural(&structural).is_ok());

        let summary = judge_response(
            "You will be provided a question and answer. Your task is to summarize the answer....",
        )
        .unwrap();
        assert!(crate::judge::parse_summary(&summary).is_ok());
    }

    #[test]
    fn completion_respects_stop_sequences() {
        let request = json!({
            "prompt": "## Query:\n```\nq\n```\n\n## Answer:\n```",
            "seed": 1,
            "stop": ["\n```"],
        });
        let response = completions(&request, MockOptions::default());
        let text = response["choices"][0]["text"].as_str().unwrap();
        assert!(!text.contains("```"));
        assert!(!text.contains("leaked"));
        assert_eq!(response["choices"][0]["finish_reason"], "stop");
    }

    #[test]
    fn stats_probe_not_counted() {
        let requests = AtomicUsize::new(0);
        let (status, body) = route("GET", "/__stats", b"", &requests, MockOptions::default());
        assert_eq!(status, "200 OK");
        assert!(body.contains("\"requests\":0"));
        assert_eq!(requests.load(Ordering::SeqCst), 0);
    }
}
