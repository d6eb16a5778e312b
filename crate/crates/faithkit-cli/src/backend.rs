//! Backend construction shared by the subcommands: corpus-derived
//! vocabularies, tiny-model loading with the cache fallback, and gazetteer
//! parsing.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use faithkit::corpus::{render_dialogue, Dialogue, LabeledSummary};
use faithkit::lexical::tokenize;
use faithkit::models::{make_tiny_model, GazetteerTagger, PromptTemplate, TinyModel, BOS, EOS};

use crate::error::{usage, CliError};

pub const CACHE_ENV: &str = "FAITHKIT_CACHE";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Stub,
    Tiny,
}

impl Backend {
    pub fn parse(name: &str) -> Result<Self, CliError> {
        match name {
            "stub" => Ok(Backend::Stub),
            "tiny" => Ok(Backend::Tiny),
            other => Err(usage(format!(
                "unknown backend {other:?}; available backends: stub, tiny"
            ))),
        }
    }
}

/// Deterministic closed vocabulary covering every toolkit token in the
/// corpus (rendered dialogues and summary texts) plus extra texts such as
/// prompt templates, with the sequence sentinels.
pub fn corpus_vocab(
    dialogues: &[Dialogue],
    summaries: &[LabeledSummary],
    extra_texts: &[String],
) -> Vec<String> {
    let mut tokens: BTreeSet<String> = BTreeSet::new();
    for dialogue in dialogues {
        tokens.extend(tokenize(&render_dialogue(dialogue)).tokens().iter().cloned());
    }
    for summary in summaries {
        tokens.extend(tokenize(&summary.text).tokens().iter().cloned());
    }
    for text in extra_texts {
        tokens.extend(tokenize(text).tokens().iter().cloned());
    }
    let mut vocab = vec![BOS.to_string(), EOS.to_string()];
    vocab.extend(tokens);
    vocab
}

/// Template text with the placeholder blanked, for vocabulary harvesting.
pub fn template_text(template: &PromptTemplate) -> String {
    template.template.replace("{source}", " ")
}

// Relative checkpoint paths that do not resolve are retried under
// $FAITHKIT_CACHE.
fn resolve_checkpoint(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(CACHE_ENV) {
        Some(cache) => {
            let fallback = PathBuf::from(cache).join(path);
            if fallback.exists() {
                fallback
            } else {
                path.to_path_buf()
            }
        }
        None => path.to_path_buf(),
    }
}

/// Loads a checkpoint when given, otherwise builds a fresh seeded model
/// over the corpus vocabulary.
pub fn tiny_model(
    checkpoint: Option<&Path>,
    vocab: Vec<String>,
    dim: usize,
    seed: u64,
) -> Result<TinyModel, CliError> {
    match checkpoint {
        Some(path) => Ok(TinyModel::load(resolve_checkpoint(path))?),
        None => Ok(make_tiny_model(vocab, dim, seed)?),
    }
}

/// Parses a gazetteer file: one `surface<TAB>TYPE` per line, `#` comments.
pub fn load_gazetteer(path: &Path) -> Result<GazetteerTagger, CliError> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("failed to read gazetteer {}: {e}", path.display())))?;
    let mut tagger = GazetteerTagger::default();
    for (idx, line) in content.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (surface, entity_type) = trimmed.split_once('\t').ok_or_else(|| {
            CliError::Data(format!(
                "{}:{}: expected tab-separated `surface\\tTYPE`",
                path.display(),
                idx + 1
            ))
        })?;
        tagger = tagger.with_entry(surface.trim(), entity_type.trim());
    }
    Ok(tagger)
}
