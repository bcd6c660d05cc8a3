//! Embedding providers: a deterministic feature-hashing embedder for offline
//! runs, and a client for the HTTP embedding service (`POST /embed`,
//! `GET /health`).

use std::io::BufRead;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use scc_core::corpus::{tokenize_identifiers, CodeCommentPair};
use scc_core::semantic::{load_embeddings, EmbeddingMatrix};

use crate::error::{CliError, CliResult};

pub const MAX_BATCH: usize = 64;
pub const MAX_LENGTH_LIMIT: usize = 512;

/// Text the encoder sees: the subtoken-split sequence, or the code verbatim.
pub fn encoder_input(code: &str, raw_text: bool) -> String {
    if raw_text {
        code.to_string()
    } else {
        tokenize_identifiers(code).join(" ")
    }
}

/// Signed feature hashing of subtoken unigrams and bigrams, L2-normalised.
/// Stands in for a neural encoder when no service is available.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HashingEmbedder {
    pub dim: usize,
    pub max_input_length: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize, max_input_length: usize) -> CliResult<Self> {
        if dim == 0 {
            return Err(CliError::usage("embedding dimension must be positive"));
        }
        Ok(HashingEmbedder { dim, max_input_length })
    }

    pub fn embed(&self, code: &str) -> Vec<f32> {
        let seq = tokenize_identifiers(code);
        let toks = &seq.tokens()[..seq.len().min(self.max_input_length)];
        let mut v = vec![0f64; self.dim];
        let mut add = |feature: &str, weight: f64| {
            let h = Sha256::digest(feature.as_bytes());
            let bucket = u64::from_le_bytes(h[..8].try_into().unwrap()) % self.dim as u64;
            let sign = if h[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket as usize] += sign * weight;
        };
        for t in toks {
            add(&format!("u:{t}"), 1.0);
        }
        for w in toks.windows(2) {
            add(&format!("b:{} {}", w[0], w[1]), 0.5);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v.into_iter().map(|x| x as f32).collect()
    }

    pub fn embed_pairs<'a>(&self, pairs: impl IntoIterator<Item = &'a CodeCommentPair>) -> CliResult<EmbeddingMatrix> {
        let rows = pairs.into_iter().map(|p| (p.id.clone(), self.embed(&p.code))).collect();
        Ok(EmbeddingMatrix::from_rows(rows)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
    pub pooling: String,
    pub max_length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f32>>,
    pub model: String,
    pub pooling: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model: String,
    pub dim: usize,
}

pub struct EmbedClient {
    base: String,
    http: reqwest::blocking::Client,
    pub pooling: String,
    pub max_length: usize,
    pub batch_size: usize,
}

impl EmbedClient {
    pub fn new(base_url: &str, pooling: &str, max_length: usize, batch_size: usize) -> CliResult<Self> {
        if !["cls", "mean", "first_last_avg"].contains(&pooling) {
            return Err(CliError::usage(format!(
                "unknown pooling {pooling:?} (expected cls, mean or first_last_avg)"
            )));
        }
        if max_length == 0 || max_length > MAX_LENGTH_LIMIT {
            return Err(CliError::usage(format!("max_length must lie in 1..={MAX_LENGTH_LIMIT}")));
        }
        if batch_size == 0 || batch_size > MAX_BATCH {
            return Err(CliError::usage(format!("batch size must lie in 1..={MAX_BATCH}")));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| CliError::remote(e.to_string()))?;
        Ok(EmbedClient {
            base: base_url.trim_end_matches('/').to_string(),
            http,
            pooling: pooling.to_string(),
            max_length,
            batch_size,
        })
    }

    pub fn health(&self) -> CliResult<Health> {
        let resp = self
            .http
            .get(format!("{}/health", self.base))
            .send()
            .map_err(|e| CliError::remote(format!("embedding service unreachable: {e}")))?;
        let status = resp.status().as_u16();
        if status == 503 {
            return Err(CliError::remote("embedding service is still loading (503)"));
        }
        if status != 200 {
            return Err(CliError::remote(format!("health check returned HTTP {status}")));
        }
        resp.json()
            .map_err(|e| CliError::remote(format!("bad health payload: {e}")))
    }

    /// One `POST /embed` call; the batch must hold 1..=64 texts.
    pub fn embed(&self, texts: &[String]) -> CliResult<EmbedResponse> {
        if texts.is_empty() || texts.len() > MAX_BATCH {
            return Err(CliError::usage(format!("batch of {} texts, expected 1..={MAX_BATCH}", texts.len())));
        }
        let req = EmbedRequest {
            texts: texts.to_vec(),
            pooling: self.pooling.clone(),
            max_length: self.max_length,
        };
        let resp = self
            .http
            .post(format!("{}/embed", self.base))
            .json(&req)
            .send()
            .map_err(|e| CliError::remote(format!("embedding service unreachable: {e}")))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let body = resp.text().unwrap_or_default();
            let detail: String = body.chars().take(200).collect();
            return Err(CliError::remote(format!("/embed returned HTTP {status}: {detail}")));
        }
        let out: EmbedResponse = resp
            .json()
            .map_err(|e| CliError::remote(format!("bad /embed payload: {e}")))?;
        if out.vectors.len() != texts.len() {
            return Err(CliError::remote(format!(
                "/embed returned {} rows for {} texts",
                out.vectors.len(),
                texts.len()
            )));
        }
        Ok(out)
    }

    /// Embeds every pair in order, batching requests. Checks that the service
    /// reports `expected_dim` and that every row matches it.
    pub fn embed_pairs(
        &self,
        pairs: &[&CodeCommentPair],
        raw_text: bool,
        expected_dim: usize,
    ) -> CliResult<EmbeddingMatrix> {
        let health = self.health()?;
        if health.dim != expected_dim {
            return Err(CliError::data(format!(
                "service dim {} differs from configured D={expected_dim}",
                health.dim
            )));
        }
        let mut rows = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(self.batch_size) {
            let texts: Vec<String> = chunk.iter().map(|p| encoder_input(&p.code, raw_text)).collect();
            let resp = self.embed(&texts)?;
            for (p, v) in chunk.iter().zip(resp.vectors) {
                if v.len() != expected_dim {
                    return Err(CliError::data(format!(
                        "row for {:?} has {} values, expected {expected_dim}",
                        p.id,
                        v.len()
                    )));
                }
                rows.push((p.id.clone(), v));
            }
        }
        Ok(EmbeddingMatrix::from_rows(rows)?)
    }
}

#[derive(Deserialize)]
struct VectorLine {
    id: String,
    vector: Vec<f32>,
}

/// Loads externally produced embeddings: an SCEB file, or JSON lines of
/// `{"id", "vector"}` when the extension is `.jsonl`. Rows are reordered to
/// follow `pairs`; every pair must be covered.
pub fn import_embeddings(path: &Path, pairs: &[&CodeCommentPair]) -> CliResult<EmbeddingMatrix> {
    let all = if path.extension().is_some_and(|e| e == "jsonl") {
        let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut rows = Vec::new();
        for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| CliError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let v: VectorLine = serde_json::from_str(&line)
                .map_err(|e| CliError::data(format!("{} line {}: {e}", path.display(), i + 1)))?;
            rows.push((v.id, v.vector));
        }
        EmbeddingMatrix::from_rows(rows)?
    } else {
        load_embeddings(path)?
    };
    all.select(pairs.iter().map(|p| p.id.as_str()))
        .map_err(|id| CliError::data(format!("{} has no embedding for {id:?}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashing_is_deterministic_and_normalised() {
        let h = HashingEmbedder::new(64, 256).unwrap();
        let a = h.embed("function balanceOf(address owner) public view returns (uint256) { return balances[owner]; }");
        assert_eq!(a, h.embed("function balanceOf(address owner) public view returns (uint256) { return balances[owner]; }"));
        let norm: f32 = a.iter().map(|x| x * x).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-5);
        assert_ne!(a, h.embed("function owner() public view returns (address) { return _owner; }"));
    }

    #[test]
    fn hashing_respects_max_input_length() {
        let h = HashingEmbedder::new(32, 2).unwrap();
        assert_eq!(h.embed("alpha beta gamma delta"), h.embed("alpha beta zeta eta"));
        assert!(h.embed("").iter().all(|x| *x == 0.0));
    }

    #[test]
    fn encoder_input_splits_subtokens() {
        assert_eq!(encoder_input("transferFrom(a_b)", false), "transfer from a b");
        assert_eq!(encoder_input("transferFrom(a_b)", true), "transferFrom(a_b)");
    }

    #[test]
    fn client_validates_parameters() {
        assert!(EmbedClient::new("http://x", "max", 256, 8).is_err());
        assert!(EmbedClient::new("http://x", "cls", 600, 8).is_err());
        assert!(EmbedClient::new("http://x", "cls", 256, 65).is_err());
        assert!(EmbedClient::new("http://x", "mean", 512, 64).is_ok());
    }
}
