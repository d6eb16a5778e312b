//! Deterministic stub backends for GPU-free tests and CLI smoke runs.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lexical;
use crate::models::{
    whitespace_spans, ConditionalScorer, Encoding, EntitySpan, EntityTagger, Generator, Infiller,
    ModelError, PromptTemplate, SamplingConfig, SpannedToken, TokenConsistencyAligner,
    TokenEncoder, MASK_PLACEHOLDER,
};

/// Scorer backed by a probability lookup table keyed by
/// `(source, space-joined target-token prefix)`, with whitespace subword
/// segmentation. Tokens without a table entry score `default_p`.
#[derive(Debug, Clone)]
pub struct TableScorer {
    table: HashMap<(String, String), f64>,
    default_p: f64,
}

/// Builds a [`TableScorer`]; probabilities (table and default) must lie in
/// `(0, 1]`.
pub fn make_table_scorer(
    table: HashMap<(String, String), f64>,
    default_p: f64,
) -> Result<TableScorer, ModelError> {
    if !(default_p > 0.0 && default_p <= 1.0) {
        return Err(ModelError::InvalidArgument(format!(
            "default_p must be in (0, 1], got {default_p}"
        )));
    }
    for ((source, prefix), p) in &table {
        if !(*p > 0.0 && *p <= 1.0) {
            return Err(ModelError::InvalidArgument(format!(
                "table probability {p} for ({source:?}, {prefix:?}) must be in (0, 1]"
            )));
        }
    }
    Ok(TableScorer { table, default_p })
}

impl ConditionalScorer for TableScorer {
    fn segment_target(&self, target: &str) -> Result<Vec<SpannedToken>, ModelError> {
        Ok(whitespace_spans(target))
    }

    fn token_logprobs(&self, source: &str, target: &str) -> Result<Vec<f64>, ModelError> {
        let tokens = whitespace_spans(target);
        let mut prefix = String::new();
        let mut logprobs = Vec::with_capacity(tokens.len());
        for t in &tokens {
            if !prefix.is_empty() {
                prefix.push(' ');
            }
            prefix.push_str(&t.token);
            let p = self
                .table
                .get(&(source.to_string(), prefix.clone()))
                .copied()
                .unwrap_or(self.default_p);
            logprobs.push(p.ln());
        }
        Ok(logprobs)
    }
}

/// Generator that maps prompt template ids straight to canned outputs,
/// ignoring the sampling config.
#[derive(Debug, Clone)]
pub struct FixedGenerator {
    outputs: HashMap<String, String>,
}

pub fn make_fixed_generator(
    outputs: HashMap<String, String>,
) -> Result<FixedGenerator, ModelError> {
    if outputs.is_empty() {
        return Err(ModelError::InvalidArgument(
            "fixed generator needs at least one template mapping".into(),
        ));
    }
    Ok(FixedGenerator { outputs })
}

impl Generator for FixedGenerator {
    fn generate(
        &self,
        _source: &str,
        template: &PromptTemplate,
        _cfg: &SamplingConfig,
    ) -> Result<String, ModelError> {
        self.outputs
            .get(&template.id)
            .cloned()
            .ok_or_else(|| ModelError::UnknownTemplate {
                id: template.id.clone(),
            })
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Encoder that derives a deterministic pseudo-random unit vector from each
/// token's hash. Identical tokens always embed identically; distinct tokens
/// are near-orthogonal at reasonable dimensions.
#[derive(Debug, Clone)]
pub struct HashEmbedEncoder {
    dim: usize,
}

impl HashEmbedEncoder {
    pub fn new(dim: usize) -> Result<Self, ModelError> {
        if dim < 2 {
            return Err(ModelError::InvalidArgument(format!(
                "embedding dimension must be at least 2, got {dim}"
            )));
        }
        Ok(Self { dim })
    }

    fn vector_for(&self, token: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(token.as_bytes()));
        let mut v: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.iter_mut().for_each(|x| *x /= norm);
        v
    }
}

impl TokenEncoder for HashEmbedEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Encoding, ModelError> {
        let tokens: Vec<String> = lexical::tokenize(text).tokens().to_vec();
        let vectors = tokens.iter().map(|t| self.vector_for(t)).collect();
        Ok(Encoding { tokens, vectors })
    }
}

/// Encoder with an explicit token-to-vector table; unknown tokens error.
/// Useful for fixtures with hand-chosen geometry.
#[derive(Debug, Clone)]
pub struct LookupEncoder {
    table: HashMap<String, Vec<f64>>,
    dim: usize,
}

impl LookupEncoder {
    pub fn new(table: HashMap<String, Vec<f64>>) -> Result<Self, ModelError> {
        let dim = table
            .values()
            .next()
            .map(|v| v.len())
            .ok_or_else(|| ModelError::InvalidArgument("lookup encoder table is empty".into()))?;
        if table.values().any(|v| v.len() != dim) {
            return Err(ModelError::InvalidArgument(
                "lookup encoder vectors have mixed dimensions".into(),
            ));
        }
        Ok(Self { table, dim })
    }
}

impl TokenEncoder for LookupEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Encoding, ModelError> {
        let tokens: Vec<String> = lexical::tokenize(text).tokens().to_vec();
        let mut vectors = Vec::with_capacity(tokens.len());
        for t in &tokens {
            let v = self
                .table
                .get(t)
                .ok_or_else(|| ModelError::UnknownToken { token: t.clone() })?;
            vectors.push(v.clone());
        }
        Ok(Encoding { tokens, vectors })
    }
}

/// Infiller that substitutes a fixed string for every mask placeholder.
#[derive(Debug, Clone)]
pub struct StubInfiller {
    fill: String,
}

impl StubInfiller {
    pub fn new(fill: impl Into<String>) -> Result<Self, ModelError> {
        let fill = fill.into();
        if fill.is_empty() || fill.contains(MASK_PLACEHOLDER) {
            return Err(ModelError::InvalidArgument(
                "stub fill text must be nonempty and mask-free".into(),
            ));
        }
        Ok(Self { fill })
    }
}

impl Infiller for StubInfiller {
    fn infill(&self, masked_text: &str) -> Result<String, ModelError> {
        Ok(masked_text.replace(MASK_PLACEHOLDER, &self.fill))
    }
}

/// Gazetteer-backed entity tagger: exact, word-boundary-aware surface
/// matching against a known-entity list. NER quality is orthogonal to what
/// the negative generators test, so a lookup is enough for fixtures.
#[derive(Debug, Clone, Default)]
pub struct GazetteerTagger {
    entries: Vec<(String, String)>,
}

impl GazetteerTagger {
    pub fn new(entries: Vec<(String, String)>) -> Self {
        Self { entries }
    }

    /// Entries as `(surface, type)` pairs, e.g. `("Amanda", "PERSON")`.
    pub fn with_entry(mut self, surface: impl Into<String>, entity_type: impl Into<String>) -> Self {
        self.entries.push((surface.into(), entity_type.into()));
        self
    }
}

impl EntityTagger for GazetteerTagger {
    fn tag(&self, text: &str) -> Result<Vec<EntitySpan>, ModelError> {
        let chars: Vec<char> = text.chars().collect();
        let mut candidates: Vec<EntitySpan> = Vec::new();
        for (surface, entity_type) in &self.entries {
            let pattern: Vec<char> = surface.chars().collect();
            if pattern.is_empty() || pattern.len() > chars.len() {
                continue;
            }
            for start in 0..=(chars.len() - pattern.len()) {
                let end = start + pattern.len();
                if chars[start..end] != pattern[..] {
                    continue;
                }
                let bounded_left = start == 0 || !chars[start - 1].is_alphanumeric();
                let bounded_right = end == chars.len() || !chars[end].is_alphanumeric();
                if bounded_left && bounded_right {
                    candidates.push(EntitySpan::new(start, end, surface.clone(), entity_type.clone()));
                }
            }
        }
        // Longest match wins at equal starts; later overlaps are dropped.
        candidates.sort_by(|a, b| {
            a.char_start
                .cmp(&b.char_start)
                .then(b.char_end.cmp(&a.char_end))
        });
        let mut spans: Vec<EntitySpan> = Vec::new();
        for c in candidates {
            if spans.last().map_or(true, |prev| c.char_start >= prev.char_end) {
                spans.push(c);
            }
        }
        Ok(spans)
    }
}

/// Aligner with per-token probabilities from a lookup table (toolkit
/// tokenization); tokens without an entry get `default`.
#[derive(Debug, Clone)]
pub struct TokenTableAligner {
    table: HashMap<String, f64>,
    default: f64,
}

impl TokenTableAligner {
    pub fn new(table: HashMap<String, f64>, default: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&default) || table.values().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(ModelError::InvalidArgument(
                "consistency probabilities must be in [0, 1]".into(),
            ));
        }
        Ok(Self { table, default })
    }
}

impl TokenConsistencyAligner for TokenTableAligner {
    fn hypothesis_tokens(&self, hypothesis: &str) -> Result<Vec<String>, ModelError> {
        Ok(lexical::tokenize(hypothesis).tokens().to_vec())
    }

    fn align(&self, _source: &str, hypothesis: &str) -> Result<Vec<f64>, ModelError> {
        Ok(self
            .hypothesis_tokens(hypothesis)?
            .iter()
            .map(|t| self.table.get(t).copied().unwrap_or(self.default))
            .collect())
    }
}

/// Aligner that marks a hypothesis token consistent iff it occurs anywhere
/// in the source (toolkit tokenization). A crude but source-sensitive stand-in
/// for a learned token-consistency model.
#[derive(Debug, Clone, Default)]
pub struct LexicalOverlapAligner;

impl TokenConsistencyAligner for LexicalOverlapAligner {
    fn hypothesis_tokens(&self, hypothesis: &str) -> Result<Vec<String>, ModelError> {
        Ok(lexical::tokenize(hypothesis).tokens().to_vec())
    }

    fn align(&self, source: &str, hypothesis: &str) -> Result<Vec<f64>, ModelError> {
        let source_tokens: std::collections::HashSet<String> =
            lexical::tokenize(source).tokens().iter().cloned().collect();
        Ok(self
            .hypothesis_tokens(hypothesis)?
            .iter()
            .map(|t| if source_tokens.contains(t) { 1.0 } else { 0.0 })
            .collect())
    }
}
