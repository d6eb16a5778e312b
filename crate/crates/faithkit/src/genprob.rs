//! Generation-probability faithfulness scoring: the probability a scorer
//! assigns to a hypothesis conditioned on its (optionally prompt-wrapped)
//! source. With the identity template this is BARTScore-style scoring; with
//! an instruction template it is T0-Score-style. The template is the only
//! difference between the two modes.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

use crate::models::{ConditionalScorer, ModelError, PromptTemplate};
use crate::par;

#[derive(Debug, Error)]
pub enum GenProbError {
    #[error("hypothesis is empty under the scorer's tokenization")]
    EmptyHypothesis,
    #[error("prompt template must contain exactly one {{source}} placeholder: {0:?}")]
    BadTemplate(String),
    #[error("batch element {index} failed: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<GenProbError>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}:{line}: bad template entry: {detail}")]
    TemplateFile {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    /// Length-normalized: sum of log-probabilities over token count.
    Mean,
    /// Raw sum of log-probabilities.
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenProbConfig {
    pub prompt_template: String,
    pub aggregation: Aggregation,
}

impl GenProbConfig {
    pub fn new(
        prompt_template: impl Into<String>,
        aggregation: Aggregation,
    ) -> Result<Self, GenProbError> {
        let prompt_template = prompt_template.into();
        if prompt_template.matches("{source}").count() != 1 {
            return Err(GenProbError::BadTemplate(prompt_template));
        }
        Ok(Self {
            prompt_template,
            aggregation,
        })
    }

    /// Identity template, mean aggregation: plain conditional scoring.
    pub fn bartscore() -> Self {
        Self {
            prompt_template: "{source}".into(),
            aggregation: Aggregation::Mean,
        }
    }

    /// Default instruction prompt for prompt-conditioned scoring.
    pub fn t0_default() -> Self {
        Self {
            prompt_template: "{source}\n\nSummarize the conversation above.".into(),
            aggregation: Aggregation::Mean,
        }
    }
}

/// Aggregated log-probability of a hypothesis; higher means more faithful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaithfulnessScore {
    pub value: f64,
    pub token_count: usize,
}

/// Scores one (source, hypothesis) pair with the given scorer and config.
pub fn genprob_score<S: ConditionalScorer>(
    source: &str,
    hypothesis: &str,
    scorer: &S,
    cfg: &GenProbConfig,
) -> Result<FaithfulnessScore, GenProbError> {
    if cfg.prompt_template.matches("{source}").count() != 1 {
        return Err(GenProbError::BadTemplate(cfg.prompt_template.clone()));
    }
    let token_count = scorer.segment_target(hypothesis)?.len();
    if token_count == 0 {
        return Err(GenProbError::EmptyHypothesis);
    }
    let conditioned = PromptTemplate::new("genprob", &cfg.prompt_template).apply(source);
    let logprobs = scorer.token_logprobs(&conditioned, hypothesis)?;
    if logprobs.len() != token_count {
        return Err(GenProbError::Model(ModelError::Contract {
            interface: "ConditionalScorer",
            detail: format!(
                "{} log-probabilities for {token_count} target tokens",
                logprobs.len()
            ),
        }));
    }
    let sum: f64 = logprobs.iter().sum();
    let value = match cfg.aggregation {
        Aggregation::Mean => sum / token_count as f64,
        Aggregation::Sum => sum,
    };
    Ok(FaithfulnessScore { value, token_count })
}

/// Scores a batch of pairs; element `i` of the output equals a single
/// [`genprob_score`] call on pair `i`. The first failing element (in input
/// order) aborts the batch with its index.
pub fn genprob_score_batch<S: ConditionalScorer + Sync>(
    pairs: &[(String, String)],
    scorer: &S,
    cfg: &GenProbConfig,
) -> Result<Vec<FaithfulnessScore>, GenProbError> {
    let results = par::map(pairs, |(source, hypothesis)| {
        genprob_score(source, hypothesis, scorer, cfg)
    });
    let mut scores = Vec::with_capacity(results.len());
    for (index, result) in results.into_iter().enumerate() {
        match result {
            Ok(score) => scores.push(score),
            Err(e) => {
                return Err(GenProbError::Batch {
                    index,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(scores)
}

/// Loads named prompt templates from a plain-text file: one
/// `name = template` entry per line, `#` comments, with `\n`/`\t` escapes
/// expanded inside the template.
pub fn load_prompt_templates(path: impl AsRef<Path>) -> Result<Vec<PromptTemplate>, GenProbError> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let file = File::open(path).map_err(|source| GenProbError::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut templates = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| GenProbError::Io {
            path: path_str.clone(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (name, template) = trimmed.split_once('=').ok_or_else(|| {
            GenProbError::TemplateFile {
                path: path_str.clone(),
                line: line_no,
                detail: "expected `name = template`".into(),
            }
        })?;
        let name = name.trim();
        if name.is_empty() {
            return Err(GenProbError::TemplateFile {
                path: path_str.clone(),
                line: line_no,
                detail: "template name is empty".into(),
            });
        }
        let template = template.trim_start().replace("\\n", "\n").replace("\\t", "\t");
        if template.matches("{source}").count() != 1 {
            return Err(GenProbError::TemplateFile {
                path: path_str.clone(),
                line: line_no,
                detail: format!("template {template:?} needs exactly one {{source}} placeholder"),
            });
        }
        templates.push(PromptTemplate::new(name, template));
    }
    Ok(templates)
}
