//! Automatic metrics, significance testing and human-study helpers.

mod human;
mod metrics;
mod wilcoxon;

use thiserror::Error;

pub use human::{
    aggregate_ratings, export_questionnaire, format_ratings, sample_size, unblind, BlindedComment, LabelMap,
    Questionnaire, RatingRecord, RatingSummary, ReviewForm, SampleSizeParams,
};
pub use metrics::{
    bleu4, evaluate, metric_tokens, rouge_l, rouge_n, sentence_bleu4, Metric, MetricReport, SampleScores,
};
pub use wilcoxon::{average_ranks, wilcoxon_signed_rank, WilcoxonMethod, WilcoxonResult, EXACT_LIMIT, MIN_NONZERO};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {candidates} candidates vs {references} references")]
    LengthMismatch { candidates: usize, references: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("no nonzero differences")]
    NoNonzeroDifferences,
    #[error("only {0} nonzero differences, at least 6 are required")]
    TooFewDifferences(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("approach {approach:?} has no output for {id:?}")]
    MissingOutput { approach: String, id: String },
    #[error("cannot sample {requested} items from {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("{field} score {value} for item {item_id:?} is outside 1..5")]
    ScoreOutOfRange {
        item_id: String,
        field: &'static str,
        value: u8,
    },
    #[error("item {item_id:?} has no slot {slot:?}")]
    UnknownSlot { item_id: String, slot: String },
}
