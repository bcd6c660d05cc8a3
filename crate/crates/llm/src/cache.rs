use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{LlmError, LlmRequest, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheKey(pub [u8; 32]);

impl CacheKey {
    /// SHA-256 over length-prefixed model and prompt, the temperature's bit
    /// pattern, and max tokens. The tag is excluded.
    pub fn for_request(req: &LlmRequest) -> Self {
        let mut h = Sha256::new();
        for field in [req.model.as_bytes(), req.prompt.as_bytes()] {
            h.update((field.len() as u64).to_le_bytes());
            h.update(field);
        }
        // -0.0 and 0.0 are the same request.
        let t = if req.temperature == 0.0 { 0.0f64 } else { req.temperature };
        h.update(t.to_bits().to_le_bytes());
        h.update(req.max_tokens.to_le_bytes());
        CacheKey(h.finalize().into())
    }

    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Unprocessed completion text.
    pub text: String,
    pub usage: Usage,
    pub backend: String,
    /// Raw response body from the remote endpoint, null for mock entries.
    #[serde(default)]
    pub raw: serde_json::Value,
}

impl CacheEntry {
    pub fn new(req: &LlmRequest, text: &str, usage: Usage, raw: serde_json::Value, backend: &str) -> Self {
        CacheEntry {
            model: req.model.clone(),
            prompt: req.prompt.clone(),
            temperature: req.temperature,
            max_tokens: req.max_tokens,
            text: text.to_string(),
            usage,
            backend: backend.to_string(),
            raw,
        }
    }
}

/// One JSON file per key, named `<hex>.json`. Writes go to a temp file in the
/// same directory and are renamed into place, so readers never see a partial entry.
#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|source| LlmError::Cache {
            path: dir.clone(),
            source,
        })?;
        Ok(Cache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.hex()))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<CacheEntry>, LlmError> {
        let path = self.path_for(key);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(LlmError::Cache { path, source }),
        };
        serde_json::from_slice(&bytes).map(Some).map_err(|e| LlmError::Cache {
            path,
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })
    }

    pub fn put(&self, key: &CacheKey, entry: &CacheEntry) -> Result<(), LlmError> {
        let path = self.path_for(key);
        let io = |source| LlmError::Cache {
            path: path.clone(),
            source,
        };
        let body = serde_json::to_vec_pretty(entry).expect("cache entry serializes");
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
        tmp.write_all(&body).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(&path).map_err(|e| io(e.error))?;
        Ok(())
    }

    pub fn len(&self) -> Result<usize, LlmError> {
        let rd = std::fs::read_dir(&self.dir).map_err(|source| LlmError::Cache {
            path: self.dir.clone(),
            source,
        })?;
        Ok(rd
            .filter_map(Result::ok)
            .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
            .count())
    }

    pub fn is_empty(&self) -> Result<bool, LlmError> {
        self.len().map(|n| n == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_depends_on_every_field_but_tag() {
        let base = LlmRequest::new("prompt");
        let k = CacheKey::for_request(&base);
        assert_eq!(k, CacheKey::for_request(&base.clone().with_tag("other")));
        let mut r = base.clone();
        r.model = "m2".into();
        assert_ne!(k, CacheKey::for_request(&r));
        let mut r = base.clone();
        r.temperature = 0.5;
        assert_ne!(k, CacheKey::for_request(&r));
        let mut r = base.clone();
        r.max_tokens += 1;
        assert_ne!(k, CacheKey::for_request(&r));
        let mut r = base.clone();
        r.temperature = -0.0;
        assert_eq!(k, CacheKey::for_request(&r));
    }

    #[test]
    fn length_prefix_prevents_field_bleed() {
        let mut a = LlmRequest::new("bc");
        a.model = "a".into();
        let mut b = LlmRequest::new("c");
        b.model = "ab".into();
        assert_ne!(CacheKey::for_request(&a), CacheKey::for_request(&b));
    }

    #[test]
    fn hex_is_lowercase_64() {
        let h = CacheKey::for_request(&LlmRequest::new("x")).hex();
        assert_eq!(h.len(), 64);
        assert!(h.chars().all(|c| c.is_ascii_digit() || ('a'..='f').contains(&c)));
    }
}
