//! Disk cache of LLM exchanges, one JSON file per exchange named by its
//! cache key. Writes are atomic (write-temp-then-rename), so concurrent
//! workers racing on the same key both leave valid content behind.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::llm::LlmExchange;

#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
}

impl DiskCache {
    /// Open (and create if needed) a cache directory.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, cache_key: &str) -> PathBuf {
        self.dir.join(format!("{cache_key}.json"))
    }

    /// Look up a cached exchange by key.
    pub fn get(&self, cache_key: &str) -> Option<LlmExchange> {
        let data = fs::read_to_string(self.path_for(cache_key)).ok()?;
        serde_json::from_str(&data).ok()
    }

    /// Persist an exchange atomically.
    pub fn put(&self, exchange: &LlmExchange) -> Result<()> {
        let final_path = self.path_for(&exchange.cache_key);
        let tmp = tempfile::Builder::new()
            .prefix(".tmp-")
            .tempfile_in(&self.dir)
            .map_err(|e| Error::io(&self.dir, e))?;
        let data = serde_json::to_string_pretty(exchange).expect("exchange serializes");
        fs::write(tmp.path(), data).map_err(|e| Error::io(tmp.path(), e))?;
        tmp.persist(&final_path)
            .map_err(|e| Error::io(&final_path, e.error))?;
        Ok(())
    }

    /// Number of cached exchanges, for diagnostics.
    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|rd| {
                rd.filter_map(|e| e.ok())
                    .filter(|e| {
                        e.path().extension().is_some_and(|x| x == "json")
                    })
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{LlmRequest, Stage};

    #[test]
    fn put_then_get_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        let req = LlmRequest::new("m", 0.0, "hello", Stage::Evaluate);
        let exchange = LlmExchange::new(&req, "world".to_string());
        cache.put(&exchange).unwrap();
        let back = cache.get(&exchange.cache_key).unwrap();
        assert_eq!(back.response_text, "world");
        assert_eq!(back.prompt, "hello");
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn missing_key_is_none() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        assert!(cache.get("deadbeef").is_none());
    }
}
