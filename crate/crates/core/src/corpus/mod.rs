//! The `<method, comment>` corpus: ingestion, cleaning, splitting and statistics.
//!
//! Corpus files are UTF-8 JSON Lines with exactly the fields
//! `{"id", "code", "comment", "split"?}`.

mod clean;
mod split;
mod stats;
mod tokenize;

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use clean::{clean, CleanConfig, CleanReport, Removal, RemovalRule, WordFilterTarget};
pub use split::{split, SplitRatios};
pub use stats::{stats, CorpusStats, SplitStats};
pub use tokenize::{tokenize_identifiers, TokenSequence};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("duplicate id {id:?} on lines {first_line} and {second_line}")]
    DuplicateId {
        id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("corpus has {0} pairs, at least 3 are required to split")]
    TooSmall(usize),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    InvalidRatios([f64; 3]),
    #[error("cleaning threshold {name} must be >= 2, got {value}")]
    InvalidThreshold { name: &'static str, value: usize },
    #[error("failed to serialise record: {0}")]
    Json(#[from] serde_json::Error),
}

/// Dataset partition a pair belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// One smart-contract method (or modifier) with its natural-language comment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeCommentPair {
    pub id: String,
    pub code: String,
    pub comment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl CodeCommentPair {
    pub fn new(id: impl Into<String>, code: impl Into<String>, comment: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            code: code.into(),
            comment: comment.into(),
            split: None,
        }
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = Some(split);
        self
    }
}

/// A record that could not be ingested.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LineError {
    /// 1-based line number in the source.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Result of [`ingest`]: the valid records plus every rejected line.
#[derive(Debug)]
pub struct Ingested {
    pub corpus: Corpus,
    pub errors: Vec<LineError>,
}

/// An ordered collection of pairs with unique ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pairs: Vec<CodeCommentPair>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a corpus, rejecting duplicate ids. Line numbers in the error are
    /// 1-based positions in `pairs`.
    pub fn from_pairs(pairs: Vec<CodeCommentPair>) -> Result<Self, CorpusError> {
        let mut corpus = Corpus::new();
        for (i, pair) in pairs.into_iter().enumerate() {
            if let Some(&first) = corpus.index.get(&pair.id) {
                return Err(CorpusError::DuplicateId {
                    id: pair.id,
                    first_line: first + 1,
                    second_line: i + 1,
                });
            }
            corpus.index.insert(pair.id.clone(), corpus.pairs.len());
            corpus.pairs.push(pair);
        }
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[CodeCommentPair] {
        &self.pairs
    }

    pub fn iter(&self) -> impl Iterator<Item = &CodeCommentPair> {
        self.pairs.iter()
    }

    pub fn get(&self, id: &str) -> Option<&CodeCommentPair> {
        self.index.get(id).map(|&i| &self.pairs[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Pairs tagged with `split`, in corpus order.
    pub fn split_pairs(&self, split: Split) -> impl Iterator<Item = &CodeCommentPair> {
        self.pairs.iter().filter(move |p| p.split == Some(split))
    }

    /// A new corpus holding only the pairs tagged with `split`.
    pub fn subset(&self, split: Split) -> Corpus {
        Corpus::from_pairs(self.split_pairs(split).cloned().collect())
            .expect("subset of a valid corpus has unique ids")
    }

    pub fn into_pairs(self) -> Vec<CodeCommentPair> {
        self.pairs
    }

    /// Writes the corpus as JSON Lines.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), CorpusError> {
        for pair in &self.pairs {
            serde_json::to_writer(&mut out, pair)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a CodeCommentPair;
    type IntoIter = std::slice::Iter<'a, CodeCommentPair>;

    fn into_iter(self) -> Self::IntoIter {
        self.pairs.iter()
    }
}

/// Reads one-object-per-line JSON records.
///
/// Malformed lines (bad JSON, missing or extra fields, empty code or comment)
/// are collected in [`Ingested::errors`]; blank lines are skipped. A duplicate id
/// aborts ingestion.
pub fn ingest<R: BufRead>(reader: R) -> Result<Ingested, CorpusError> {
    let mut pairs = Vec::new();
    let mut lines_of: HashMap<String, usize> = HashMap::new();
    let mut errors = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: CodeCommentPair = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(e) => {
                errors.push(LineError {
                    line: line_no,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if let Some(message) = validate(&pair) {
            errors.push(LineError {
                line: line_no,
                message,
            });
            continue;
        }
        if let Some(&first_line) = lines_of.get(&pair.id) {
            return Err(CorpusError::DuplicateId {
                id: pair.id,
                first_line,
                second_line: line_no,
            });
        }
        lines_of.insert(pair.id.clone(), line_no);
        pairs.push(pair);
    }

    let corpus = Corpus::from_pairs(pairs)?;
    Ok(Ingested { corpus, errors })
}

fn validate(pair: &CodeCommentPair) -> Option<String> {
    if pair.id.is_empty() {
        Some("empty id".to_owned())
    } else if pair.code.trim().is_empty() {
        Some(format!("record {:?} has empty code", pair.id))
    } else if pair.comment.trim().is_empty() {
        Some(format!("record {:?} has empty comment", pair.id))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str) -> String {
        format!(r#"{{"id":"{id}","code":"function f() public {{}}","comment":"does a thing here"}}"#)
    }

    #[test]
    fn ingests_valid_lines() {
        let text = [line("a"), line("b"), line("c")].join("\n");
        let out = ingest(text.as_bytes()).unwrap();
        assert_eq!(out.corpus.len(), 3);
        assert!(out.errors.is_empty());
    }

    #[test]
    fn reports_malformed_line_number() {
        let text = [line("a"), line("b"), "{\"id\": 3".to_owned()].join("\n");
        let out = ingest(text.as_bytes()).unwrap();
        assert_eq!(out.corpus.len(), 2);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].line, 3);
    }

    #[test]
    fn rejects_extra_fields_and_empty_comment() {
        let text = [
            r#"{"id":"a","code":"x","comment":"y","extra":1}"#,
            r#"{"id":"b","code":"x","comment":"  "}"#,
            r#"{"id":"c","code":"x","comment":"y","split":"dev"}"#,
        ]
        .join("\n");
        let out = ingest(text.as_bytes()).unwrap();
        assert!(out.corpus.is_empty());
        let lines: Vec<_> = out.errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![1, 2, 3]);
    }

    #[test]
    fn duplicate_id_is_fatal() {
        let text = [line("a"), line("b"), line("a")].join("\n");
        match ingest(text.as_bytes()) {
            Err(CorpusError::DuplicateId {
                id,
                first_line,
                second_line,
            }) => {
                assert_eq!(id, "a");
                assert_eq!((first_line, second_line), (1, 3));
            }
            other => panic!("expected duplicate id error, got {other:?}"),
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let corpus = Corpus::from_pairs(vec![
            CodeCommentPair::new("a", "function a() {}", "first comment here ok"),
            CodeCommentPair::new("b", "function b() {}", "second comment\nwith newline").with_split(Split::Test),
        ])
        .unwrap();
        let mut buf = Vec::new();
        corpus.write_jsonl(&mut buf).unwrap();
        let back = ingest(buf.as_slice()).unwrap();
        assert!(back.errors.is_empty());
        assert_eq!(back.corpus, corpus);
    }
}
