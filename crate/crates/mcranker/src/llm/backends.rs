//! Chat-completion backends: an OpenAI-compatible HTTP client, a seeded
//! deterministic mock, and a replay backend that answers only from a
//! recorded transcript.

use std::path::PathBuf;
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::llm::cache::DiskCache;
use crate::llm::LlmRequest;

/// A backend capable of answering one request.
#[derive(Debug)]
pub enum Backend {
    Http(HttpBackend),
    Mock(MockBackend),
    Replay(ReplayBackend),
}

impl Backend {
    pub fn call(&self, request: &LlmRequest) -> Result<String> {
        match self {
            Backend::Http(b) => b.call(request),
            Backend::Mock(b) => Ok(b.respond(&request.prompt)),
            Backend::Replay(b) => b.call(request),
        }
    }
}

// ---------------------------------------------------------------------------
// Mock
// ---------------------------------------------------------------------------

/// Deterministic mock: the response is a pure function of (seed, prompt).
///
/// The stage is recognized from marker phrases in the prompt itself, and
/// numeric answers are derived from a hash of the seed and prompt so that
/// different passages and annotators get varied but reproducible scores.
#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
}

const MOCK_IDENTITY_POOL: [&str; 8] = [
    "health professional",
    "concerned citizen",
    "data analyst",
    "investigative journalist",
    "policy researcher",
    "teacher",
    "software engineer",
    "historian",
];

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn hash(&self, prompt: &str) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(prompt.as_bytes());
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    pub fn respond(&self, prompt: &str) -> String {
        let h = self.hash(prompt);
        if prompt.contains("guess the most probable user identities") {
            self.recruit_response(prompt, h)
        } else if prompt.contains("As an NLP Scientist") {
            self.criteria_response(h, "linguistic")
        } else if prompt.contains("list the criteria for judging relevance") {
            self.criteria_response(h, "domain")
        } else if prompt.contains("I will give you the criteria") {
            let k = number_after(prompt, "an integer score from 0 to ").unwrap_or(10);
            serde_json::json!({ "Score": h % (k as u64 + 1) }).to_string()
        } else if prompt.contains("synthesizing diverse viewpoints") {
            let scores = assessor_scores(prompt);
            let median = lower_median(&scores).unwrap_or(0);
            serde_json::json!({ "Final score": median }).to_string()
        } else if prompt.contains("You are an expert in judging relevance") {
            let k = number_after(prompt, "From a scale of 0 to ").unwrap_or(10);
            serde_json::json!({ "Score": h % (k as u64 + 1) }).to_string()
        } else {
            serde_json::json!({ "Echo": format!("{h:016x}") }).to_string()
        }
    }

    fn recruit_response(&self, prompt: &str, h: u64) -> String {
        let n = number_after(prompt, "You can name up to ").unwrap_or(2) as usize;
        let start = (h % MOCK_IDENTITY_POOL.len() as u64) as usize;
        let identities: Vec<&str> = (0..n.min(MOCK_IDENTITY_POOL.len()))
            .map(|i| MOCK_IDENTITY_POOL[(start + i) % MOCK_IDENTITY_POOL.len()])
            .collect();
        serde_json::json!({
            "Identities": identities,
            "Reason": "These identities cover distinct backgrounds likely to search for this topic.",
        })
        .to_string()
    }

    fn criteria_response(&self, h: u64, flavor: &str) -> String {
        let w1 = 3 + (h % 5); // 3..7
        let w2 = 10 - w1;
        let criteria = format!(
            "1. Topic relevance: the passage should address the subject of the query. \
The weight to this criterion is: 0.{w1}. \
2. Coverage of {flavor} detail: the passage should contain specific, verifiable information. \
The weight to this criterion is: 0.{w2}."
        );
        serde_json::json!({
            "Criteria": criteria,
            "Reason": "Weighted criteria keep scoring consistent across passages.",
        })
        .to_string()
    }
}

/// Parse the unsigned integer immediately following `prefix`.
fn number_after(text: &str, prefix: &str) -> Option<u32> {
    let at = text.find(prefix)? + prefix.len();
    let digits: String = text[at..].chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

/// Collect the per-expert scores rendered into an assessor prompt.
fn assessor_scores(prompt: &str) -> Vec<i64> {
    let mut scores = Vec::new();
    let mut rest = prompt;
    while let Some(at) = rest.find("): <<<") {
        let after = &rest[at + 6..];
        if let Some(end) = after.find(">>>") {
            if let Ok(v) = after[..end].trim().parse::<i64>() {
                scores.push(v);
            }
            rest = &after[end..];
        } else {
            break;
        }
    }
    scores
}

fn lower_median(values: &[i64]) -> Option<i64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    Some(sorted[(sorted.len() - 1) / 2])
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

/// Answers exclusively from a directory of recorded exchanges (the same
/// one-file-per-key layout the disk cache uses).
#[derive(Debug)]
pub struct ReplayBackend {
    transcript: DiskCache,
}

impl ReplayBackend {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        Ok(Self {
            transcript: DiskCache::open(dir)?,
        })
    }

    fn call(&self, request: &LlmRequest) -> Result<String> {
        let key = request.cache_key();
        match self.transcript.get(&key) {
            Some(exchange) => Ok(exchange.response_text),
            None => Err(Error::ReplayMiss { cache_key: key }),
        }
    }
}

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

/// OpenAI-compatible chat-completions client with bounded retry on
/// transient failures.
#[derive(Debug)]
pub struct HttpBackend {
    endpoint: String,
    api_key: String,
    retries: u32,
    backoff_base: Duration,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            retries: 3,
            backoff_base: Duration::from_secs(1),
            client: reqwest::blocking::Client::new(),
        }
    }

    /// Override the retry count and backoff base (mainly for tests).
    pub fn with_retry(mut self, retries: u32, backoff_base: Duration) -> Self {
        self.retries = retries;
        self.backoff_base = backoff_base;
        self
    }

    fn call(&self, request: &LlmRequest) -> Result<String> {
        let url = format!(
            "{}/chat/completions",
            self.endpoint.trim_end_matches('/')
        );
        let body = serde_json::json!({
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
        });

        let mut last_failure = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff_base * 2u32.pow(attempt - 1));
            }
            let sent = self
                .client
                .post(&url)
                .bearer_auth(&self.api_key)
                .json(&body)
                .send();
            match sent {
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    if status.is_success() {
                        return extract_content(&text);
                    }
                    let transient = status.as_u16() == 429 || status.is_server_error();
                    if !transient {
                        return Err(Error::Http {
                            status: status.as_u16(),
                            body: text,
                        });
                    }
                    last_failure = format!("status {status}");
                }
                Err(e) => {
                    last_failure = e.to_string();
                }
            }
        }
        Err(Error::RetriesExhausted {
            attempts: self.retries + 1,
            last: last_failure,
        })
    }
}

fn extract_content(body: &str) -> Result<String> {
    let v: serde_json::Value =
        serde_json::from_str(body).map_err(|e| Error::HttpTransport {
            msg: format!("invalid completion body: {e}"),
        })?;
    v["choices"][0]["message"]["content"]
        .as_str()
        .map(|s| s.to_string())
        .ok_or_else(|| Error::HttpTransport {
            msg: "completion body has no choices[0].message.content".into(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Stage;

    #[test]
    fn mock_is_pure_in_seed_and_prompt() {
        let mock = MockBackend::new(7);
        let a = mock.respond("I will give you the criteria ... an integer score from 0 to 10 to represent x");
        let b = mock.respond("I will give you the criteria ... an integer score from 0 to 10 to represent x");
        assert_eq!(a, b);
        let other_seed = MockBackend::new(8)
            .respond("I will give you the criteria ... an integer score from 0 to 10 to represent x");
        assert_ne!(a, other_seed);
    }

    #[test]
    fn mock_evaluate_score_respects_scale() {
        let mock = MockBackend::new(1);
        for k in [3u32, 5, 10, 20] {
            let prompt = format!(
                "I will give you the criteria ... an integer score from 0 to {k} to represent the view"
            );
            let v: serde_json::Value = serde_json::from_str(&mock.respond(&prompt)).unwrap();
            let score = v["Score"].as_u64().unwrap();
            assert!(score <= k as u64);
        }
    }

    #[test]
    fn mock_recruit_honors_requested_count() {
        let mock = MockBackend::new(42);
        let prompt = "The task is ... guess the most probable user identities. You can name up to 3 identities.";
        let v: serde_json::Value = serde_json::from_str(&mock.respond(prompt)).unwrap();
        assert_eq!(v["Identities"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn mock_assessor_returns_lower_median() {
        let mock = MockBackend::new(0);
        let prompt = "Role: You are adept at synthesizing diverse viewpoints ...\n\
            Relevance Score 1 (From 0 to 10): <<<2>>>\n\
            Relevance Score 2 (From 0 to 10): <<<4>>>\n\
            Relevance Score 3 (From 0 to 10): <<<10>>>\nOutput:";
        let v: serde_json::Value = serde_json::from_str(&mock.respond(prompt)).unwrap();
        assert_eq!(v["Final score"].as_i64(), Some(4));
    }

    #[test]
    fn replay_miss_names_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let backend = ReplayBackend::open(dir.path()).unwrap();
        let req = LlmRequest::new("m", 0.0, "never recorded", Stage::Direct);
        let err = backend.call(&req).unwrap_err();
        match err {
            Error::ReplayMiss { cache_key } => assert_eq!(cache_key, req.cache_key()),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn number_after_finds_trailing_integers() {
        assert_eq!(number_after("up to 12 identities", "up to "), Some(12));
        assert_eq!(number_after("none here", "up to "), None);
    }
}
