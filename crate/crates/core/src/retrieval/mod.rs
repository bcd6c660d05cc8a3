//! Two-stage demonstration selection.
//!
//! Stage 1 ranks the training pool by squared-L2 distance between whitened
//! embeddings and keeps the `n` closest. Stage 2 rescores those candidates by
//! the mixed lexical/syntactic score and keeps the best `k`. Ties are broken by
//! ascending id at both stages.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codeform::{CodeProfile, LexMode};
use crate::corpus::CodeCommentPair;
use crate::semantic::{EmbeddingMatrix, SemanticError, VectorIndex, WhitenedVector, WhiteningModel};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error("no embedding for training pair {0:?}")]
    MissingEmbedding(String),
    #[error("training pool is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Semantic(#[from] SemanticError),
}

/// Selection strategy. Everything except `Full` is an ablation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Full,
    /// Uniform seeded sample of `k` training pairs.
    Random,
    /// Stage 1 on raw embeddings; stage 2 unchanged.
    NoWhitening,
    /// Stage 1 only: the `k` nearest by whitened distance.
    SemanticOnly,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Full,
        Strategy::Random,
        Strategy::NoWhitening,
        Strategy::SemanticOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Full => "full",
            Strategy::Random => "random",
            Strategy::NoWhitening => "no_whitening",
            Strategy::SemanticOnly => "semantic_only",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown strategy {s:?} (expected full, random, no_whitening or semantic_only)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// Stage-1 candidate count.
    pub n: usize,
    /// Demonstrations kept.
    pub k: usize,
    /// Weight of lexical similarity in the mixed score.
    pub lambda: f64,
    pub strategy: Strategy,
    pub seed: u64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            n: 10,
            k: 5,
            lambda: 0.7,
            strategy: Strategy::Full,
            seed: 0,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.k == 0 || self.k > self.n {
            return Err(RetrievalError::InvalidConfig(format!(
                "need 1 <= k <= n, got k={} n={}",
                self.k, self.n
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(RetrievalError::InvalidConfig(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub id: String,
    pub code: String,
    pub comment: String,
    /// Stage-1 distance in the space the strategy searched.
    pub semantic_distance: f64,
    pub mixed_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemonstrationSet {
    pub query_id: String,
    pub entries: Vec<Demonstration>,
    /// Fewer than `k` candidates were available.
    pub short: bool,
}

#[derive(Serialize)]
struct ExportEntry<'a> {
    id: &'a str,
    semantic_distance: f64,
    mixed_score: f64,
}

#[derive(Serialize)]
struct ExportLine<'a> {
    query_id: &'a str,
    entries: Vec<ExportEntry<'a>>,
    short: bool,
}

impl DemonstrationSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.id.as_str()).collect()
    }

    /// One-line JSON record without code or comment bodies.
    pub fn export_line(&self) -> String {
        let line = ExportLine {
            query_id: &self.query_id,
            entries: self
                .entries
                .iter()
                .map(|e| ExportEntry {
                    id: &e.id,
                    semantic_distance: e.semantic_distance,
                    mixed_score: e.mixed_score,
                })
                .collect(),
            short: self.short,
        };
        serde_json::to_string(&line).expect("plain data serializes")
    }
}

/// Immutable search structure over the training pool: whitened and raw
/// vectors plus a parsed profile of every code body. Shareable across threads.
#[derive(Debug)]
pub struct RetrievalIndex {
    pairs: HashMap<String, (CodeCommentPair, CodeProfile)>,
    /// Ids in ascending order.
    sorted_ids: Vec<String>,
    whitened: VectorIndex,
    raw: VectorIndex,
    model: WhiteningModel,
    lex_mode: LexMode,
}

impl RetrievalIndex {
    /// `embeddings` must contain a row for every pair; extra rows are ignored.
    pub fn build<'a>(
        pairs: impl IntoIterator<Item = &'a CodeCommentPair>,
        embeddings: &EmbeddingMatrix,
        model: WhiteningModel,
        lex_mode: LexMode,
    ) -> Result<Self, RetrievalError> {
        let pairs: Vec<&CodeCommentPair> = pairs.into_iter().collect();
        let selected = embeddings
            .select(pairs.iter().map(|p| p.id.as_str()))
            .map_err(RetrievalError::MissingEmbedding)?;
        let whitened = VectorIndex::whitened(&selected, &model)?;
        let raw = VectorIndex::from_matrix(&selected);
        let mut sorted_ids: Vec<String> = pairs.iter().map(|p| p.id.clone()).collect();
        sorted_ids.sort();
        let pairs = pairs
            .into_iter()
            .map(|p| (p.id.clone(), (p.clone(), CodeProfile::with_mode(&p.code, lex_mode))))
            .collect();
        Ok(Self {
            pairs,
            sorted_ids,
            whitened,
            raw,
            model,
            lex_mode,
        })
    }

    pub fn len(&self) -> usize {
        self.sorted_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_ids.is_empty()
    }

    pub fn model(&self) -> &WhiteningModel {
        &self.model
    }

    pub fn lex_mode(&self) -> LexMode {
        self.lex_mode
    }

    pub fn pair(&self, id: &str) -> Option<&CodeCommentPair> {
        self.pairs.get(id).map(|(p, _)| p)
    }

    /// Selects demonstrations for `query` using `config.strategy`.
    /// `query_embedding` is the raw (unwhitened) vector for the query code.
    pub fn retrieve(
        &self,
        query: &CodeCommentPair,
        query_embedding: &[f32],
        config: &RetrievalConfig,
    ) -> Result<DemonstrationSet, RetrievalError> {
        config.validate()?;
        let whitened = self.model.apply(query_embedding)?;
        let profile = CodeProfile::with_mode(&query.code, self.lex_mode);
        let not_self = |id: &str| id != query.id;

        let entries = match config.strategy {
            Strategy::Full | Strategy::NoWhitening => {
                let neighbors = if config.strategy == Strategy::Full {
                    self.whitened.top_n_filtered(&whitened, config.n, not_self)?
                } else {
                    self.raw
                        .top_n_filtered(&WhitenedVector::from_f32(query_embedding), config.n, not_self)?
                };
                let mut scored: Vec<Demonstration> = neighbors
                    .into_iter()
                    .map(|nb| self.demonstration(&nb.id, nb.distance, &profile, config.lambda))
                    .collect();
                scored.sort_by(|a, b| {
                    b.mixed_score
                        .total_cmp(&a.mixed_score)
                        .then_with(|| a.id.cmp(&b.id))
                });
                scored.truncate(config.k);
                scored
            }
            Strategy::SemanticOnly => self
                .whitened
                .top_n_filtered(&whitened, config.k, not_self)?
                .into_iter()
                .map(|nb| self.demonstration(&nb.id, nb.distance, &profile, config.lambda))
                .collect(),
            Strategy::Random => {
                let pool: Vec<&String> = self.sorted_ids.iter().filter(|id| not_self(id)).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ stable_hash(&query.id));
                let picks = sample(&mut rng, pool.len(), config.k.min(pool.len()));
                let distances: HashMap<String, f64> = self
                    .whitened
                    .top_n_filtered(&whitened, self.len(), not_self)?
                    .into_iter()
                    .map(|nb| (nb.id, nb.distance))
                    .collect();
                picks
                    .into_iter()
                    .map(|i| {
                        let id = pool[i];
                        self.demonstration(id, distances[id], &profile, config.lambda)
                    })
                    .collect()
            }
        };

        Ok(DemonstrationSet {
            query_id: query.id.clone(),
            short: entries.len() < config.k,
            entries,
        })
    }

    /// Same as [`retrieve`](Self::retrieve) with the strategy replaced.
    pub fn retrieve_ablate(
        &self,
        query: &CodeCommentPair,
        query_embedding: &[f32],
        config: &RetrievalConfig,
        strategy: Strategy,
    ) -> Result<DemonstrationSet, RetrievalError> {
        let config = RetrievalConfig {
            strategy,
            ..config.clone()
        };
        self.retrieve(query, query_embedding, &config)
    }

    /// Comment of the best full-strategy demonstration: the retrieval-only
    /// baseline that reuses the nearest neighbour's comment.
    pub fn reuse_top1(
        &self,
        query: &CodeCommentPair,
        query_embedding: &[f32],
        config: &RetrievalConfig,
    ) -> Result<String, RetrievalError> {
        let set = self.retrieve_ablate(query, query_embedding, config, Strategy::Full)?;
        set.entries
            .into_iter()
            .next()
            .map(|e| e.comment)
            .ok_or(RetrievalError::EmptyCorpus)
    }

    fn demonstration(&self, id: &str, distance: f64, query: &CodeProfile, lambda: f64) -> Demonstration {
        let (pair, profile) = &self.pairs[id];
        let mixed_score = query
            .mixed_score(profile, lambda)
            .expect("lambda validated with the config");
        Demonstration {
            id: pair.id.clone(),
            code: pair.code.clone(),
            comment: pair.comment.clone(),
            semantic_distance: distance,
            mixed_score,
        }
    }
}

/// Platform-independent 64-bit hash used to derive per-query seeds.
fn stable_hash(s: &str) -> u64 {
    let digest = Sha256::digest(s.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
        assert!("bogus".parse::<Strategy>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(RetrievalConfig::default().validate().is_ok());
        let bad_k = RetrievalConfig { k: 11, ..Default::default() };
        assert!(bad_k.validate().is_err());
        let zero_k = RetrievalConfig { k: 0, ..Default::default() };
        assert!(zero_k.validate().is_err());
        let bad_lambda = RetrievalConfig { lambda: 1.01, ..Default::default() };
        assert!(bad_lambda.validate().is_err());
    }
}
