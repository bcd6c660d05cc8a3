use serde::Serialize;

use super::{Corpus, Split};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SplitStats {
    pub count: usize,
    /// Mean whitespace-token count of the code; 0 for an empty split.
    pub avg_code_tokens: f64,
    pub avg_comment_tokens: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CorpusStats {
    pub train: SplitStats,
    pub validation: SplitStats,
    pub test: SplitStats,
    /// Pairs without a split tag. Zero after [`split`](super::split).
    pub untagged: usize,
}

impl CorpusStats {
    pub fn get(&self, split: Split) -> &SplitStats {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn total(&self) -> usize {
        self.train.count + self.validation.count + self.test.count + self.untagged
    }
}

pub fn stats(corpus: &Corpus) -> CorpusStats {
    let per_split = |split: Split| {
        let (mut count, mut code, mut comment) = (0usize, 0usize, 0usize);
        for pair in corpus.split_pairs(split) {
            count += 1;
            code += pair.code.split_whitespace().count();
            comment += pair.comment.split_whitespace().count();
        }
        let mean = |sum: usize| if count == 0 { 0.0 } else { sum as f64 / count as f64 };
        SplitStats {
            count,
            avg_code_tokens: mean(code),
            avg_comment_tokens: mean(comment),
        }
    };
    CorpusStats {
        train: per_split(Split::Train),
        validation: per_split(Split::Validation),
        test: per_split(Split::Test),
        untagged: corpus.iter().filter(|p| p.split.is_none()).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CodeCommentPair;

    #[test]
    fn single_pair() {
        let c = Corpus::from_pairs(vec![
            CodeCommentPair::new("a", "function f() {}", "two words").with_split(Split::Train)
        ])
        .unwrap();
        let s = stats(&c);
        assert_eq!(s.train.count, 1);
        assert_eq!(s.train.avg_code_tokens, 3.0);
        assert_eq!(s.train.avg_comment_tokens, 2.0);
        assert_eq!(s.test, SplitStats::default());
        assert_eq!(s.total(), 1);
    }

    #[test]
    fn averages_comment_lengths() {
        let c = Corpus::from_pairs(vec![
            CodeCommentPair::new("a", "x", "w ".repeat(10)).with_split(Split::Test),
            CodeCommentPair::new("b", "x", "w ".repeat(14)).with_split(Split::Test),
        ])
        .unwrap();
        assert_eq!(stats(&c).test.avg_comment_tokens, 12.0);
    }
}
