use std::collections::{HashMap, HashSet};

use serde::Serialize;

use super::{CodeCommentPair, Corpus, CorpusError};

/// Which side of the pair the minimum word-count filter applies to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WordFilterTarget {
    #[default]
    Comment,
    Code,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CleanConfig {
    /// A comment shared by at least this many distinct code bodies is dropped
    /// everywhere it appears.
    pub dup_code_threshold: usize,
    /// A comment occurring at least this many times corpus-wide is a template.
    pub template_freq_threshold: usize,
    /// Pairs with fewer whitespace words than this (on `min_words_target`) are
    /// dropped. Zero disables the filter.
    pub min_words: usize,
    pub min_words_target: WordFilterTarget,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            dup_code_threshold: 2,
            template_freq_threshold: 20,
            min_words: 4,
            min_words_target: WordFilterTarget::Comment,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalRule {
    /// Same comment string attached to semantically different code.
    DupComment,
    /// Boilerplate comment recurring across the corpus.
    Template,
    /// Too few words to be informative.
    ShortComment,
}

/// One removed pair, serialised as the pair's fields plus `rule`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Removal {
    #[serde(flatten)]
    pub pair: CodeCommentPair,
    pub rule: RemovalRule,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CleanReport {
    pub removed: Vec<Removal>,
}

impl CleanReport {
    pub fn count(&self, rule: RemovalRule) -> usize {
        self.removed.iter().filter(|r| r.rule == rule).count()
    }
}

fn normalized_body(code: &str) -> String {
    code.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Removes duplicated-comment pairs, template comments and short pairs.
///
/// All rules are evaluated against the input corpus, so the result is a fixed
/// point: cleaning it again removes nothing. A pair matching several rules is
/// reported under the first of `dup_comment`, `template`, `short_comment`.
pub fn clean(corpus: &Corpus, config: &CleanConfig) -> Result<(Corpus, CleanReport), CorpusError> {
    if config.dup_code_threshold < 2 {
        return Err(CorpusError::InvalidThreshold {
            name: "dup_code_threshold",
            value: config.dup_code_threshold,
        });
    }
    if config.template_freq_threshold < 2 {
        return Err(CorpusError::InvalidThreshold {
            name: "template_freq_threshold",
            value: config.template_freq_threshold,
        });
    }

    let mut bodies: HashMap<&str, HashSet<String>> = HashMap::new();
    let mut frequency: HashMap<&str, usize> = HashMap::new();
    for pair in corpus {
        bodies
            .entry(pair.comment.as_str())
            .or_default()
            .insert(normalized_body(&pair.code));
        *frequency.entry(pair.comment.as_str()).or_default() += 1;
    }

    let mut kept = Vec::with_capacity(corpus.len());
    let mut report = CleanReport::default();
    for pair in corpus {
        let rule = if bodies[pair.comment.as_str()].len() >= config.dup_code_threshold {
            Some(RemovalRule::DupComment)
        } else if frequency[pair.comment.as_str()] >= config.template_freq_threshold {
            Some(RemovalRule::Template)
        } else if too_short(pair, config) {
            Some(RemovalRule::ShortComment)
        } else {
            None
        };
        match rule {
            Some(rule) => report.removed.push(Removal {
                pair: pair.clone(),
                rule,
            }),
            None => kept.push(pair.clone()),
        }
    }

    Ok((Corpus::from_pairs(kept)?, report))
}

fn too_short(pair: &CodeCommentPair, config: &CleanConfig) -> bool {
    let text = match config.min_words_target {
        WordFilterTarget::Comment => &pair.comment,
        WordFilterTarget::Code => &pair.code,
    };
    text.split_whitespace().count() < config.min_words
}
