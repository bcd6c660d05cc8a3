//! Demonstration selection, prompt construction and evaluation for
//! smart-contract comment generation.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`corpus`] ingests, cleans, splits and summarises `<method, comment>` pairs.
//! * [`semantic`] stores code embeddings, fits the whitening transform and serves
//!   the first-stage nearest-neighbour scan.
//! * [`codeform`] parses Solidity into structural token sequences and computes the
//!   syntactic, lexical and mixed similarities.
//! * [`retrieval`] combines both stages into demonstration sets, including the
//!   ablation strategies and the reuse-top-1 baseline.
//! * [`promptgen`] renders the in-context-learning prompt under a token budget.
//! * [`eval`] computes BLEU-4 and ROUGE, the Wilcoxon signed-rank test, sample sizes
//!   and the human-study questionnaire helpers.

pub mod codeform;
pub mod corpus;
pub mod eval;
pub mod promptgen;
pub mod retrieval;
pub mod semantic;

pub use corpus::{CodeCommentPair, Corpus, Split};
pub use retrieval::{DemonstrationSet, RetrievalConfig, Strategy};
