use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EvalError;

const MAX_ORDER: usize = 4;

/// Lowercases, splits on whitespace and detaches every punctuation character
/// as its own token. Underscores count as word characters.
pub fn metric_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.to_lowercase().split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if c.is_alphanumeric() || c == '_' {
                word.push(c);
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(c.to_string());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped overlap and candidate n-gram total.
fn clipped_matches(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let matches = cand
        .iter()
        .map(|(gram, &c)| c.min(refs.get(gram).copied().unwrap_or(0)))
        .sum();
    (matches, candidate.len().saturating_sub(n - 1))
}

fn brevity_penalty(candidate_len: usize, reference_len: usize) -> f64 {
    if candidate_len == 0 {
        0.0
    } else if candidate_len > reference_len {
        1.0
    } else {
        (1.0 - reference_len as f64 / candidate_len as f64).exp()
    }
}

fn check_lengths(candidates: &[String], references: &[String]) -> Result<(), EvalError> {
    if candidates.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// Corpus-level BLEU-4 as a percentage: n-gram matches and totals are summed
/// over all pairs before taking precisions, no smoothing, uniform weights.
/// Any order with zero matches makes the score 0.
pub fn bleu4(candidates: &[String], references: &[String]) -> Result<f64, EvalError> {
    check_lengths(candidates, references)?;
    let mut matches = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let (mut cand_len, mut ref_len) = (0, 0);
    for (c, r) in candidates.iter().zip(references) {
        let (c, r) = (metric_tokens(c), metric_tokens(r));
        cand_len += c.len();
        ref_len += r.len();
        for n in 1..=MAX_ORDER {
            let (m, t) = clipped_matches(&c, &r, n);
            matches[n - 1] += m;
            totals[n - 1] += t;
        }
    }
    if matches.contains(&0) {
        return Ok(0.0);
    }
    let log_precision: f64 = matches
        .iter()
        .zip(&totals)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / MAX_ORDER as f64;
    Ok(100.0 * brevity_penalty(cand_len, ref_len) * log_precision.exp())
}

/// Sentence BLEU-4 for one pair, used for per-sample scores. Orders two and
/// above with no matches are smoothed to `1 / (total + 1)`; no unigram
/// matches gives 0.
pub fn sentence_bleu4(candidate: &str, reference: &str) -> f64 {
    let (c, r) = (metric_tokens(candidate), metric_tokens(reference));
    let (m1, t1) = clipped_matches(&c, &r, 1);
    if m1 == 0 {
        return 0.0;
    }
    let mut log_precision = (m1 as f64 / t1 as f64).ln();
    for n in 2..=MAX_ORDER {
        let (m, t) = clipped_matches(&c, &r, n);
        let p = if m == 0 {
            1.0 / (t as f64 + 1.0)
        } else {
            m as f64 / t as f64
        };
        log_precision += p.ln();
    }
    100.0 * brevity_penalty(c.len(), r.len()) * (log_precision / MAX_ORDER as f64).exp()
}

fn f1(overlap: usize, cand_total: usize, ref_total: usize) -> f64 {
    if overlap == 0 {
        0.0
    } else {
        100.0 * 2.0 * overlap as f64 / (cand_total + ref_total) as f64
    }
}

/// ROUGE-N F1 for one pair as a percentage. Empty sides score 0.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> f64 {
    let (c, r) = (metric_tokens(candidate), metric_tokens(reference));
    let (overlap, cand_total) = clipped_matches(&c, &r, n);
    f1(overlap, cand_total, r.len().saturating_sub(n - 1))
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L (longest common subsequence) F1 for one pair as a percentage.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let (c, r) = (metric_tokens(candidate), metric_tokens(reference));
    f1(lcs_len(&c, &r), c.len(), r.len())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleScores {
    pub id: String,
    pub bleu4: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu4: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub n: usize,
    pub per_sample: Vec<SampleScores>,
}

/// Which per-sample score to pull out of a report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "bleu4")]
    Bleu4,
    #[serde(rename = "rouge1")]
    Rouge1,
    #[serde(rename = "rouge2")]
    Rouge2,
    #[serde(rename = "rougeL")]
    RougeL,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Bleu4, Metric::Rouge1, Metric::Rouge2, Metric::RougeL];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Bleu4 => "bleu4",
            Metric::Rouge1 => "rouge1",
            Metric::Rouge2 => "rouge2",
            Metric::RougeL => "rougeL",
        }
    }

    pub fn of(self, s: &SampleScores) -> f64 {
        match self {
            Metric::Bleu4 => s.bleu4,
            Metric::Rouge1 => s.rouge1,
            Metric::Rouge2 => s.rouge2,
            Metric::RougeL => s.rouge_l,
        }
    }
}

impl MetricReport {
    pub fn samples(&self, metric: Metric) -> Vec<f64> {
        self.per_sample.iter().map(|s| metric.of(s)).collect()
    }

    pub fn score(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Bleu4 => self.bleu4,
            Metric::Rouge1 => self.rouge1,
            Metric::Rouge2 => self.rouge2,
            Metric::RougeL => self.rouge_l,
        }
    }
}

/// Scores aligned `candidates` and `references`, labelled by `ids`.
pub fn evaluate(ids: &[String], candidates: &[String], references: &[String]) -> Result<MetricReport, EvalError> {
    check_lengths(candidates, references)?;
    if ids.len() != candidates.len() {
        return Err(EvalError::LengthMismatch {
            candidates: ids.len(),
            references: candidates.len(),
        });
    }
    let per_sample: Vec<SampleScores> = ids
        .iter()
        .zip(candidates.iter().zip(references))
        .map(|(id, (c, r))| SampleScores {
            id: id.clone(),
            bleu4: sentence_bleu4(c, r),
            rouge1: rouge_n(c, r, 1),
            rouge2: rouge_n(c, r, 2),
            rouge_l: rouge_l(c, r),
        })
        .collect();
    let n = per_sample.len();
    let mean = |f: fn(&SampleScores) -> f64| per_sample.iter().map(f).sum::<f64>() / n as f64;
    Ok(MetricReport {
        bleu4: bleu4(candidates, references)?,
        rouge1: mean(|s| s.rouge1),
        rouge2: mean(|s| s.rouge2),
        rouge_l: mean(|s| s.rouge_l),
        n,
        per_sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn tokenization() {
        assert_eq!(
            metric_tokens("Returns the owner's  balance_of, Token."),
            ["returns", "the", "owner", "'", "s", "balance_of", ",", "token", "."]
        );
    }

    #[test]
    fn identity_is_100() {
        let c = s(&["returns the balance of the owner", "transfers tokens to a new address now"]);
        assert!((bleu4(&c, &c).unwrap() - 100.0).abs() < 1e-9);
        for x in &c {
            assert_eq!(rouge_n(x, x, 1), 100.0);
            assert_eq!(rouge_n(x, x, 2), 100.0);
            assert_eq!(rouge_l(x, x), 100.0);
        }
    }

    #[test]
    fn worked_rouge_values() {
        assert!((rouge_n("the cat", "the cat sat", 1) - 80.0).abs() < 1e-9);
        assert!((rouge_l("a b c d", "a c d") - 600.0 / 7.0).abs() < 1e-9);
        assert_eq!(rouge_n("a b", "c d", 1), 0.0);
        assert_eq!(rouge_l("", ""), 0.0);
        assert_eq!(rouge_n("", "", 1), 0.0);
    }

    #[test]
    fn bleu_errors_and_zero() {
        assert!(matches!(bleu4(&s(&["a"]), &s(&[])), Err(EvalError::LengthMismatch { .. })));
        assert!(matches!(bleu4(&[], &[]), Err(EvalError::Empty)));
        assert_eq!(bleu4(&s(&["x y z w"]), &s(&["a b c d"])).unwrap(), 0.0);
    }

    #[test]
    fn sentence_bleu_is_smoothed() {
        let v = sentence_bleu4("the cat", "the cat sat on the mat");
        assert!(v > 0.0 && v < 100.0);
        assert_eq!(sentence_bleu4("dog", "the cat"), 0.0);
        assert!((sentence_bleu4("a b c d e", "a b c d e") - 100.0).abs() < 1e-9);
    }

    #[test]
    fn lcs_oracle_small() {
        let a = s(&["a", "b", "c", "b", "d", "a", "b"]);
        let b = s(&["b", "d", "c", "a", "b", "a"]);
        assert_eq!(lcs_len(&a, &b), 4);
    }
}
