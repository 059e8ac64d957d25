//! Uniform access to chat-completion LLMs with disk caching, retry, and
//! deterministic mock / transcript-replay backends.

pub mod backends;
pub mod cache;
pub mod json;

use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
pub use backends::{Backend, HttpBackend, MockBackend, ReplayBackend};
pub use cache::DiskCache;

/// Which pipeline step a request belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Recruit,
    Criteria,
    Evaluate,
    Assess,
    Direct,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Recruit => "recruit",
            Stage::Criteria => "criteria",
            Stage::Evaluate => "evaluate",
            Stage::Assess => "assess",
            Stage::Direct => "direct",
        };
        f.write_str(name)
    }
}

/// One chat-completion request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model: String,
    pub temperature: f64,
    pub prompt: String,
    pub stage: Stage,
}

impl LlmRequest {
    pub fn new(
        model: impl Into<String>,
        temperature: f64,
        prompt: impl Into<String>,
        stage: Stage,
    ) -> Self {
        Self {
            model: model.into(),
            temperature,
            prompt: prompt.into(),
            stage,
        }
    }

    /// Cache key: a hash over exactly (model, temperature, prompt), so
    /// any prompt-template edit invalidates stale cache entries.
    pub fn cache_key(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.model.as_bytes());
        hasher.update([0]);
        hasher.update(format!("{}", self.temperature).as_bytes());
        hasher.update([0]);
        hasher.update(self.prompt.as_bytes());
        hex::encode(hasher.finalize())
    }
}

/// One cached request/response pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmExchange {
    pub model: String,
    pub temperature: f64,
    pub stage: Stage,
    pub prompt: String,
    pub response_text: String,
    pub cache_key: String,
    pub unix_ms: u64,
}

impl LlmExchange {
    pub fn new(request: &LlmRequest, response_text: String) -> Self {
        let unix_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Self {
            model: request.model.clone(),
            temperature: request.temperature,
            stage: request.stage,
            prompt: request.prompt.clone(),
            response_text,
            cache_key: request.cache_key(),
            unix_ms,
        }
    }
}

/// Global request pacing: at most `rpm` backend calls per minute.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(rpm: u32) -> Self {
        Self {
            interval: Duration::from_secs_f64(60.0 / rpm.max(1) as f64),
            next_slot: Mutex::new(Instant::now()),
        }
    }

    fn acquire(&self) {
        let wait = {
            let mut next = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let at = (*next).max(now);
            *next = at + self.interval;
            at.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// Backend plus cache plus pacing, shared by all pipeline stages.
#[derive(Debug)]
pub struct Gateway {
    backend: Backend,
    cache: Option<DiskCache>,
    limiter: Option<RateLimiter>,
    budget: Option<AtomicI64>,
    backend_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl Gateway {
    pub fn new(backend: Backend) -> Self {
        Self {
            backend,
            cache: None,
            limiter: None,
            budget: None,
            backend_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    pub fn with_cache(mut self, cache: DiskCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_rpm(mut self, rpm: u32) -> Self {
        if rpm > 0 {
            self.limiter = Some(RateLimiter::new(rpm));
        }
        self
    }

    /// Abort with [`Error::BudgetExhausted`] once this many backend calls
    /// have been made; cached answers stay available.
    pub fn with_call_budget(mut self, budget: u64) -> Self {
        self.budget = Some(AtomicI64::new(budget as i64));
        self
    }

    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::Relaxed)
    }

    /// Complete a request: cache first, then the backend; fresh exchanges
    /// are persisted before the text is returned.
    pub fn complete(&self, request: &LlmRequest) -> Result<String> {
        if request.prompt.is_empty() {
            return Err(Error::Config {
                msg: "request prompt is empty".into(),
            });
        }
        if request.temperature < 0.0 {
            return Err(Error::Config {
                msg: format!("negative temperature {}", request.temperature),
            });
        }
        let key = request.cache_key();
        if let Some(cache) = &self.cache {
            if let Some(exchange) = cache.get(&key) {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(exchange.response_text);
            }
        }
        if let Some(budget) = &self.budget {
            if budget.fetch_sub(1, Ordering::SeqCst) <= 0 {
                return Err(Error::BudgetExhausted);
            }
        }
        if let Some(limiter) = &self.limiter {
            limiter.acquire();
        }
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        let text = self.backend.call(request)?;
        if let Some(cache) = &self.cache {
            cache.put(&LlmExchange::new(request, text.clone()))?;
        }
        Ok(text)
    }
}
