//! The training objective and loop: maximum likelihood on positive
//! summaries plus weighted unlikelihood on the negative tokens of negative
//! summaries.
//!
//! For a sequence S with negative index set N the loss is
//!
//! * positive S: `-sum over all t of log p(x_t | x_<t)`
//! * negative S: `-alpha * sum over t in N of log(1 - p(x_t | x_<t))`
//!
//! with each probability clamped below one before the complement log so the
//! negative branch stays finite.

mod synth;

pub use synth::{synth_corpus, synth_gazetteer, synth_vocab, SynthCorpus};

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{Dialogue, Label, LabeledSummary};
use crate::lexical;
use crate::models::{
    ConditionalScorer, ModelError, SequenceObjective, SpannedToken, TrainableModel,
};
use crate::par;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("invalid loss config: {0}")]
    InvalidLossConfig(String),
    #[error("invalid train config: {0}")]
    InvalidTrainConfig(String),
    #[error("invalid train item: {0}")]
    InvalidItem(String),
    #[error("negative position {position} out of range for {count} token log-probabilities")]
    PositionOutOfRange { position: usize, count: usize },
    #[error("log-probability at position {position} is {value}, not a finite nonpositive number")]
    BadLogProb { position: usize, value: f64 },
    #[error("toolkit index {index} out of range for {count} tokens")]
    ToolkitIndexOutOfRange { index: usize, count: usize },
    #[error("model segmentation gap over negative toolkit token {index} ({token:?})")]
    SegmentationGap { index: usize, token: String },
    #[error("training data is empty")]
    EmptyData,
    #[error("training diverged (non-finite loss) at step {step}")]
    Diverged { step: usize },
    #[error("summary \"{summary_id}\" references unknown dialogue \"{dialogue_id}\"")]
    UnknownDialogue {
        summary_id: String,
        dialogue_id: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Unlikelihood weight and the probability ceiling that keeps the negative
/// branch finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub prob_ceiling_eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            prob_ceiling_eps: 1e-6,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(TrainingError::InvalidLossConfig(format!(
                "alpha must be finite and nonnegative, got {}",
                self.alpha
            )));
        }
        if !(self.prob_ceiling_eps > 0.0 && self.prob_ceiling_eps < 0.5) {
            return Err(TrainingError::InvalidLossConfig(format!(
                "prob_ceiling_eps must be in (0, 0.5), got {}",
                self.prob_ceiling_eps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// The learning rate decays linearly to this fraction of its initial
    /// value by the final step (1.0 keeps it constant).
    pub final_lr_fraction: f64,
    /// Global-norm gradient clip; 0 disables clipping.
    pub grad_clip: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    /// Seed-averaged repetitions used by the experiment harness.
    pub num_runs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            final_lr_fraction: 1.0,
            grad_clip: 5.0,
            batch_size: 16,
            steps: 300,
            seed: 0,
            num_runs: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainingError::InvalidTrainConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(TrainingError::InvalidTrainConfig(format!(
                "final_lr_fraction must be in [0, 1], got {}",
                self.final_lr_fraction
            )));
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return Err(TrainingError::InvalidTrainConfig(format!(
                "grad_clip must be finite and nonnegative, got {}",
                self.grad_clip
            )));
        }
        if self.batch_size == 0 || self.steps == 0 || self.num_runs == 0 {
            return Err(TrainingError::InvalidTrainConfig(
                "batch_size, steps, and num_runs must be positive".into(),
            ));
        }
        Ok(())
    }

    fn learning_rate_at(&self, step: usize) -> f64 {
        if self.steps <= 1 {
            return self.learning_rate;
        }
        let progress = step as f64 / (self.steps - 1) as f64;
        self.learning_rate * (1.0 - (1.0 - self.final_lr_fraction) * progress)
    }
}

/// One training example. `negative_indices` are toolkit-tokenizer positions;
/// `model_negative_positions` are the same positions mapped onto the model's
/// segmentation via [`align_negative_positions`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub source: String,
    pub target: String,
    pub label: Label,
    pub negative_indices: BTreeSet<usize>,
    pub model_negative_positions: BTreeSet<usize>,
}

impl TrainItem {
    pub fn positive(source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            label: Label::Positive,
            negative_indices: BTreeSet::new(),
            model_negative_positions: BTreeSet::new(),
        }
    }

    pub fn negative(
        source: impl Into<String>,
        target: impl Into<String>,
        negative_indices: BTreeSet<usize>,
        model_negative_positions: BTreeSet<usize>,
    ) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            label: Label::Negative,
            negative_indices,
            model_negative_positions,
        }
    }

    pub fn validate(&self) -> Result<(), TrainingError> {
        if self.label == Label::Positive
            && (!self.negative_indices.is_empty() || !self.model_negative_positions.is_empty())
        {
            return Err(TrainingError::InvalidItem(
                "positive item carries negative indices".into(),
            ));
        }
        Ok(())
    }

    fn objective(&self, cfg: &LossConfig) -> SequenceObjective {
        match self.label {
            Label::Positive => SequenceObjective::Likelihood,
            Label::Negative => SequenceObjective::Unlikelihood {
                negative_positions: self.model_negative_positions.clone(),
                alpha: cfg.alpha,
                prob_ceiling_eps: cfg.prob_ceiling_eps,
            },
        }
    }
}

/// The sequence loss given teacher-forced token log-probabilities.
///
/// Positive items pay the full negative log-likelihood; negative items pay
/// `alpha` times the complement-log sum over their negative model positions
/// only (an empty set costs zero).
pub fn unlikelihood_loss(
    item: &TrainItem,
    token_logprobs: &[f64],
    cfg: &LossConfig,
) -> Result<f64, TrainingError> {
    cfg.validate()?;
    item.validate()?;
    for (position, &value) in token_logprobs.iter().enumerate() {
        if !value.is_finite() || value > 0.0 {
            return Err(TrainingError::BadLogProb { position, value });
        }
    }
    match item.label {
        Label::Positive => Ok(-token_logprobs.iter().sum::<f64>()),
        Label::Negative => {
            let ceiling = 1.0 - cfg.prob_ceiling_eps;
            let mut loss = 0.0;
            for &position in &item.model_negative_positions {
                let &logprob =
                    token_logprobs
                        .get(position)
                        .ok_or(TrainingError::PositionOutOfRange {
                            position,
                            count: token_logprobs.len(),
                        })?;
                let p = logprob.exp().min(ceiling);
                loss -= cfg.alpha * (1.0 - p).ln();
            }
            Ok(loss)
        }
    }
}

/// Maps toolkit-tokenizer negative indices onto a model segmentation: a
/// model token is negative iff its character span overlaps the span of any
/// negative toolkit token. Errors when the model segmentation leaves part of
/// a negative toolkit token uncovered.
pub fn align_negative_positions(
    target: &str,
    toolkit_indices: &BTreeSet<usize>,
    model_segmentation: &[SpannedToken],
) -> Result<BTreeSet<usize>, TrainingError> {
    let toolkit_spans = lexical::tokenize_with_spans(target);
    let mut negative_spans = Vec::with_capacity(toolkit_indices.len());
    for &index in toolkit_indices {
        let span = toolkit_spans
            .get(index)
            .ok_or(TrainingError::ToolkitIndexOutOfRange {
                index,
                count: toolkit_spans.len(),
            })?;
        negative_spans.push((index, span));
    }
    let overlaps = |a: &SpannedToken, b: &SpannedToken| {
        a.char_start < b.char_end && b.char_start < a.char_end
    };
    // Every negative toolkit span must be fully covered by model tokens.
    for (index, span) in &negative_spans {
        let mut covered = span.char_start;
        for model_token in model_segmentation {
            if overlaps(model_token, span) && model_token.char_start <= covered {
                covered = covered.max(model_token.char_end);
            }
        }
        if covered < span.char_end {
            return Err(TrainingError::SegmentationGap {
                index: *index,
                token: span.token.clone(),
            });
        }
    }
    Ok(model_segmentation
        .iter()
        .enumerate()
        .filter(|(_, model_token)| negative_spans.iter().any(|(_, s)| overlaps(model_token, s)))
        .map(|(i, _)| i)
        .collect())
}

/// Seeded shuffled mini-batch gradient descent on the mean unlikelihood loss.
/// Returns the per-step loss trace. Per-item gradients are evaluated in
/// parallel against the frozen step snapshot and reduced in input order, so
/// the result is identical to a sequential run.
pub fn train<M: TrainableModel + Sync>(
    model: &mut M,
    data: &[TrainItem],
    loss_cfg: &LossConfig,
    train_cfg: &TrainConfig,
) -> Result<Vec<f64>, TrainingError> {
    loss_cfg.validate()?;
    train_cfg.validate()?;
    if data.is_empty() {
        return Err(TrainingError::EmptyData);
    }
    for item in data {
        item.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut trace = Vec::with_capacity(train_cfg.steps);
    for step in 0..train_cfg.steps {
        let mut batch: Vec<&TrainItem> = Vec::with_capacity(train_cfg.batch_size);
        while batch.len() < train_cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&data[order[cursor]]);
            cursor += 1;
        }
        let frozen: &M = model;
        let results = par::map(&batch, |item| {
            frozen.loss_and_grad(&item.source, &item.target, &item.objective(loss_cfg))
        });
        let mut batch_loss = 0.0;
        let mut grad = vec![0.0; model.param_count()];
        for result in results {
            let (loss, item_grad) = result?;
            batch_loss += loss;
            for (g, ig) in grad.iter_mut().zip(&item_grad) {
                *g += ig;
            }
        }
        let scale = 1.0 / batch.len() as f64;
        batch_loss *= scale;
        grad.iter_mut().for_each(|g| *g *= scale);
        if !batch_loss.is_finite() {
            return Err(TrainingError::Diverged { step });
        }
        if train_cfg.grad_clip > 0.0 {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > train_cfg.grad_clip {
                let shrink = train_cfg.grad_clip / norm;
                grad.iter_mut().for_each(|g| *g *= shrink);
            }
        }
        model.gradient_step(&grad, train_cfg.learning_rate_at(step));
        trace.push(batch_loss);
    }
    Ok(trace)
}

/// Rebalances a mixed dataset to roughly `ratio` positives per negative by
/// seeded resampling of the positive side (duplication when short,
/// subsampling when long). Negatives pass through unchanged; batch-level
/// mixing stays uniform over the returned items.
pub fn mix_with_ratio(
    positives: &[TrainItem],
    negatives: &[TrainItem],
    ratio: f64,
    seed: u64,
) -> Result<Vec<TrainItem>, TrainingError> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(TrainingError::InvalidTrainConfig(format!(
            "positive ratio must be positive, got {ratio}"
        )));
    }
    if positives.is_empty() || negatives.is_empty() {
        return Err(TrainingError::EmptyData);
    }
    let target = ((negatives.len() as f64 * ratio).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mixed: Vec<TrainItem> = Vec::with_capacity(target + negatives.len());
    if target <= positives.len() {
        let mut order: Vec<usize> = (0..positives.len()).collect();
        order.shuffle(&mut rng);
        order.truncate(target);
        order.sort_unstable();
        mixed.extend(order.into_iter().map(|i| positives[i].clone()));
    } else {
        mixed.extend(positives.iter().cloned());
        for _ in positives.len()..target {
            mixed.push(positives[rng.gen_range(0..positives.len())].clone());
        }
    }
    mixed.extend(negatives.iter().cloned());
    Ok(mixed)
}

/// Builds train items from a corpus, rendering each summary's dialogue as
/// the source and mapping negative indices onto the scorer's segmentation.
pub fn prepare_items<S: ConditionalScorer>(
    dialogues: &[Dialogue],
    summaries: &[LabeledSummary],
    scorer: &S,
) -> Result<Vec<TrainItem>, TrainingError> {
    let sources = crate::corpus::rendered_sources(dialogues);
    summaries
        .iter()
        .map(|summary| {
            let source =
                sources
                    .get(&summary.dialogue_id)
                    .ok_or_else(|| TrainingError::UnknownDialogue {
                        summary_id: summary.id.clone(),
                        dialogue_id: summary.dialogue_id.clone(),
                    })?;
            match summary.label {
                Label::Positive => Ok(TrainItem::positive(source.clone(), summary.text.clone())),
                Label::Negative => {
                    let segmentation = scorer.segment_target(&summary.text)?;
                    let model_positions = align_negative_positions(
                        &summary.text,
                        &summary.negative_indices,
                        &segmentation,
                    )?;
                    Ok(TrainItem::negative(
                        source.clone(),
                        summary.text.clone(),
                        summary.negative_indices.clone(),
                        model_positions,
                    ))
                }
            }
        })
        .collect()
}
