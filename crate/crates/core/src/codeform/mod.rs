//! Structural and lexical views of contract code and the similarities built on them.
//!
//! Syntactic similarity is `(la + lb - lev) / (la + lb)` over SBT token
//! sequences, lexical similarity is Jaccard over deduplicated code tokens, and
//! the mixed score blends the two with weight `lambda` on the lexical side.

pub mod lexer;
pub mod parser;
mod sbt;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::tokenize_identifiers;

pub use sbt::{degraded_sbt, to_sbt, SbtSequence};

#[derive(Debug, Error, PartialEq)]
pub enum CodeformError {
    #[error("lambda must lie in [0, 1], got {0}")]
    LambdaOutOfRange(f64),
}

/// Token-level edit distance (unit-cost insert, delete, substitute).
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut cur = vec![0; short.len() + 1];
    for (i, x) in long.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in short.iter().enumerate() {
            let substitute = prev[j] + usize::from(x != y);
            cur[j + 1] = substitute.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// Normalized similarity of two token sequences. Two empty sequences score 1,
/// exactly one empty sequence scores 0.
pub fn sequence_similarity<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    (total - levenshtein(a, b)) as f64 / total as f64
}

pub fn syntactic_similarity(a: &str, b: &str) -> f64 {
    sequence_similarity(&to_sbt(a).tokens, &to_sbt(b).tokens)
}

/// How code is split into tokens for the Jaccard comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexMode {
    /// Lowercased identifier subtokens (`transferFrom` -> `transfer`, `from`).
    #[default]
    Subtoken,
    /// Raw lexer tokens, including keywords and punctuation.
    Raw,
}

/// Deduplicated token set of one snippet.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LexSet(pub BTreeSet<String>);

impl LexSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    /// Jaccard index. Two empty sets score 1.
    pub fn jaccard(&self, other: &LexSet) -> f64 {
        if self.is_empty() && other.is_empty() {
            return 1.0;
        }
        let inter = self.0.intersection(&other.0).count();
        let union = self.len() + other.len() - inter;
        inter as f64 / union as f64
    }
}

pub fn lexical_set(code: &str) -> LexSet {
    lexical_set_with(code, LexMode::Subtoken)
}

pub fn lexical_set_with(code: &str, mode: LexMode) -> LexSet {
    let tokens: BTreeSet<String> = match mode {
        LexMode::Subtoken => tokenize_identifiers(code).0.into_iter().collect(),
        LexMode::Raw => lexer::tokenize_lenient(code).into_iter().map(|t| t.text).collect(),
    };
    LexSet(tokens.into_iter().filter(|t| !t.is_empty()).collect())
}

pub fn lexical_similarity(a: &str, b: &str) -> f64 {
    lexical_set(a).jaccard(&lexical_set(b))
}

/// `lambda * lexical + (1 - lambda) * syntactic`.
pub fn mixed_score_from_parts(lexical: f64, syntactic: f64, lambda: f64) -> Result<f64, CodeformError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(CodeformError::LambdaOutOfRange(lambda));
    }
    Ok(lambda * lexical + (1.0 - lambda) * syntactic)
}

pub fn mixed_score(a: &str, b: &str, lambda: f64) -> Result<f64, CodeformError> {
    CodeProfile::new(a).mixed_score(&CodeProfile::new(b), lambda)
}

/// Precomputed SBT sequence and token set, so that a snippet is parsed once
/// no matter how many comparisons it takes part in.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeProfile {
    pub sbt: SbtSequence,
    pub lex: LexSet,
}

impl CodeProfile {
    pub fn new(code: &str) -> Self {
        Self::with_mode(code, LexMode::Subtoken)
    }

    pub fn with_mode(code: &str, mode: LexMode) -> Self {
        Self {
            sbt: to_sbt(code),
            lex: lexical_set_with(code, mode),
        }
    }

    pub fn syntactic_similarity(&self, other: &CodeProfile) -> f64 {
        sequence_similarity(&self.sbt.tokens, &other.sbt.tokens)
    }

    pub fn lexical_similarity(&self, other: &CodeProfile) -> f64 {
        self.lex.jaccard(&other.lex)
    }

    pub fn mixed_score(&self, other: &CodeProfile, lambda: f64) -> Result<f64, CodeformError> {
        mixed_score_from_parts(
            self.lexical_similarity(other),
            self.syntactic_similarity(other),
            lambda,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levenshtein_basics() {
        let abc = ["a", "b", "c"];
        assert_eq!(levenshtein(&abc, &abc), 0);
        assert_eq!(levenshtein(&[] as &[&str], &abc), 3);
        assert_eq!(levenshtein(&abc, &["a", "b", "d"]), 1);
        assert_eq!(levenshtein(&["k", "i", "t", "t", "e", "n"], &["s", "i", "t", "t", "i", "n", "g"]), 3);
    }

    #[test]
    fn lambda_range() {
        assert_eq!(mixed_score_from_parts(0.5, 0.5, 1.5), Err(CodeformError::LambdaOutOfRange(1.5)));
        assert!(mixed_score_from_parts(0.5, 0.5, -0.1).is_err());
        assert!(mixed_score("a", "b", f64::NAN).is_err());
    }

    #[test]
    fn raw_mode_keeps_punctuation() {
        let set = lexical_set_with("a.b(c);", LexMode::Raw);
        assert!(set.contains("."));
        assert!(set.contains("("));
        let sub = lexical_set("a.b(c);");
        assert_eq!(sub.0.iter().map(String::as_str).collect::<Vec<_>>(), ["a", "b", "c"]);
    }
}
