//! Contracts for every neural capability the toolkit consumes, plus
//! deterministic stubs and a small trainable sequence model.
//!
//! Real pretrained backends attach behind these traits through adapter
//! crates; everything in-tree is CPU-only and deterministic so the full
//! pipeline can run in CI.

mod stubs;
mod tiny;
mod validate;

pub use stubs::{
    make_fixed_generator, make_table_scorer, FixedGenerator, GazetteerTagger, HashEmbedEncoder,
    LexicalOverlapAligner, LookupEncoder, StubInfiller, TableScorer, TokenTableAligner,
};
pub use tiny::{make_tiny_model, TinyModel, BOS, EOS};
pub use validate::Validated;

use std::collections::BTreeSet;

use thiserror::Error;

pub use crate::lexical::SpannedToken;

/// Placeholder the infilling interface replaces.
pub const MASK_PLACEHOLDER: &str = "<mask>";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{interface} contract violated: {detail}")]
    Contract {
        interface: &'static str,
        detail: String,
    },
    #[error("unknown token \"{token}\"")]
    UnknownToken { token: String },
    #[error("unknown prompt template \"{id}\"")]
    UnknownTemplate { id: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Typed entity occurrence located by character offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntitySpan {
    pub char_start: usize,
    pub char_end: usize,
    pub surface: String,
    pub entity_type: String,
}

impl EntitySpan {
    pub fn new(
        char_start: usize,
        char_end: usize,
        surface: impl Into<String>,
        entity_type: impl Into<String>,
    ) -> Self {
        Self {
            char_start,
            char_end,
            surface: surface.into(),
            entity_type: entity_type.into(),
        }
    }

    /// Checks bounds and that `surface` equals the text slice.
    pub fn validate_against(&self, text: &str) -> Result<(), String> {
        let chars: Vec<char> = text.chars().collect();
        if self.char_start >= self.char_end || self.char_end > chars.len() {
            return Err(format!(
                "span {}..{} out of bounds for text of {} chars",
                self.char_start,
                self.char_end,
                chars.len()
            ));
        }
        let slice: String = chars[self.char_start..self.char_end].iter().collect();
        if slice != self.surface {
            return Err(format!(
                "surface \"{}\" does not match text slice \"{slice}\"",
                self.surface
            ));
        }
        Ok(())
    }
}

/// Checks a span list for per-span validity, sortedness, and non-overlap.
pub fn validate_spans(text: &str, spans: &[EntitySpan]) -> Result<(), String> {
    for span in spans {
        span.validate_against(text)?;
    }
    for pair in spans.windows(2) {
        if pair[1].char_start < pair[0].char_end {
            return Err(format!(
                "spans {}..{} and {}..{} overlap or are unsorted",
                pair[0].char_start, pair[0].char_end, pair[1].char_start, pair[1].char_end
            ));
        }
    }
    Ok(())
}

/// A named generation prompt; `{source}` marks where the source text goes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    pub template: String,
}

impl PromptTemplate {
    pub fn new(id: impl Into<String>, template: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            template: template.into(),
        }
    }

    /// The template that passes the source through unchanged.
    pub fn identity() -> Self {
        Self::new("identity", "{source}")
    }

    pub fn apply(&self, source: &str) -> String {
        self.template.replacen("{source}", source, 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingStrategy {
    Greedy,
    /// Nucleus sampling; `p = 1.0` is unrestricted ancestral sampling.
    TopP { p: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    pub strategy: SamplingStrategy,
    pub seed: u64,
    pub max_len: usize,
}

impl SamplingConfig {
    pub fn greedy(max_len: usize) -> Self {
        Self {
            strategy: SamplingStrategy::Greedy,
            seed: 0,
            max_len,
        }
    }

    pub fn top_p(p: f64, seed: u64, max_len: usize) -> Self {
        Self {
            strategy: SamplingStrategy::TopP { p },
            seed,
            max_len,
        }
    }
}

/// Teacher-forced log-probability scoring of a target conditioned on a
/// source, under the model's own subword segmentation.
pub trait ConditionalScorer {
    /// The model's segmentation of the target, with character spans.
    fn segment_target(&self, target: &str) -> Result<Vec<SpannedToken>, ModelError>;

    /// One log-probability per segmented target token; each value is <= 0
    /// and the count equals `segment_target(target).len()`.
    fn token_logprobs(&self, source: &str, target: &str) -> Result<Vec<f64>, ModelError>;
}

/// Conditional text generation under a prompt template.
pub trait Generator {
    fn generate(
        &self,
        source: &str,
        template: &PromptTemplate,
        cfg: &SamplingConfig,
    ) -> Result<String, ModelError>;
}

/// A tokenized text with one fixed-dimension vector per token.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub tokens: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

/// Per-token embedding of a text.
pub trait TokenEncoder {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Encoding, ModelError>;
}

/// Replaces every [`MASK_PLACEHOLDER`] in the text with generated content,
/// preserving the unmasked text verbatim.
pub trait Infiller {
    fn infill(&self, masked_text: &str) -> Result<String, ModelError>;
}

/// Typed named-entity recognition over raw text.
pub trait EntityTagger {
    /// Spans are in bounds, non-overlapping, and sorted by start.
    fn tag(&self, text: &str) -> Result<Vec<EntitySpan>, ModelError>;
}

/// Per-hypothesis-token probability of being consistent with the source.
pub trait TokenConsistencyAligner {
    /// The aligner's own tokenization of the hypothesis.
    fn hypothesis_tokens(&self, hypothesis: &str) -> Result<Vec<String>, ModelError>;

    /// One probability in `[0, 1]` per hypothesis token.
    fn align(&self, source: &str, hypothesis: &str) -> Result<Vec<f64>, ModelError>;
}

/// Sequence-level objective a trainable backend can differentiate.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceObjective {
    /// Negative log-likelihood summed over every target token.
    Likelihood,
    /// Weighted unlikelihood over the designated negative positions only:
    /// `-alpha * sum over N of log(1 - p_t)`, with `p_t` clamped to
    /// `1 - prob_ceiling_eps` before the complement log.
    Unlikelihood {
        negative_positions: BTreeSet<usize>,
        alpha: f64,
        prob_ceiling_eps: f64,
    },
}

/// A scorer whose parameters can be read, perturbed, and updated by
/// gradient steps. Update calls must be externally serialized; read-only
/// scoring between updates is reentrant.
pub trait TrainableModel: ConditionalScorer {
    fn param_count(&self) -> usize;
    fn param(&self, i: usize) -> f64;
    fn set_param(&mut self, i: usize, value: f64);

    /// Loss and the full parameter gradient for one (source, target) pair
    /// under the given objective.
    fn loss_and_grad(
        &self,
        source: &str,
        target: &str,
        objective: &SequenceObjective,
    ) -> Result<(f64, Vec<f64>), ModelError>;

    fn gradient_step(&mut self, grad: &[f64], learning_rate: f64) {
        assert_eq!(grad.len(), self.param_count());
        for (i, g) in grad.iter().enumerate() {
            self.set_param(i, self.param(i) - learning_rate * g);
        }
    }
}

/// Whitespace segmentation with character spans; the subword scheme of the
/// table-scorer stub.
pub(crate) fn whitespace_spans(text: &str) -> Vec<SpannedToken> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        out.push(SpannedToken {
            token: chars[start..i].iter().collect(),
            char_start: start,
            char_end: i,
        });
    }
    out
}
