//! Faithfulness evaluation toolkit for abstractive dialogue summarization.
//!
//! The crate bundles the pieces needed to study how well automatic metrics
//! track the factual alignment between a summary and its source dialogue:
//!
//! * [`corpus`] — dialogue/summary/judgment data model and JSONL persistence.
//! * [`lexical`] — deterministic tokenizer and the ROUGE overlap family.
//! * [`models`] — backend contracts (scoring, generation, embedding,
//!   infilling, entity tagging) plus deterministic stubs and a trainable
//!   tiny sequence model for CPU-only runs.
//! * [`genprob`] — generation-probability scoring of a summary conditioned
//!   on its source (BARTScore/T0-Score style).
//! * [`similarity`] — embedding-similarity (BERTScore style) and
//!   token-consistency (CTC style) metrics.
//! * [`negatives`] — manufactured negative summaries (entity swaps, masked
//!   entity refills, sampled hallucinations) with token-level labels.
//! * [`fakeref`] — pseudo-reference selection for unlabeled dialogues.
//! * [`training`] — MLE plus weighted unlikelihood objective, mini-batch
//!   training, and a synthetic desk-scale corpus generator.
//! * [`metaeval`] — Spearman rank-correlation meta-evaluation against human
//!   judgments with bootstrap uncertainty and report output.
//! * [`experiment`] — the end-to-end synthetic experiment tying it together.
//!
//! Data-parallel inner loops (batch scoring, corpus-wide generation,
//! bootstrap resampling) run on rayon when the default `parallel` feature is
//! enabled and fall back to sequential iteration without it; results are
//! identical either way.

pub mod corpus;
pub mod experiment;
pub mod fakeref;
pub mod genprob;
pub mod lexical;
pub mod metaeval;
pub mod models;
pub mod negatives;
pub mod par;
pub mod similarity;
pub mod training;

pub use corpus::{Dialogue, HumanJudgment, Label, LabeledSummary, NegType, ScoreRecord, Turn};
pub use lexical::{tokenize, OverlapScore, TokenSeq};
pub use models::{
    ConditionalScorer, EntitySpan, EntityTagger, Generator, Infiller, TokenConsistencyAligner,
    TokenEncoder,
};
