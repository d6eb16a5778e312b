//! End-to-end synthetic experiment: build a templated corpus, train the
//! tiny model in two phases (likelihood on references, then additional
//! unlikelihood training on the mixed positive/negative set), and
//! meta-evaluate generation-probability scoring against the ground-truth
//! labels on held-out dialogues, averaged over several training seeds.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::corpus::{render_dialogue, Label, LabeledSummary, ScoreRecord};
use crate::genprob::{genprob_score_batch, GenProbConfig, GenProbError};
use crate::metaeval::{spearman, CorrelationReport, Grouping, MetaEvalError};
use crate::models::{make_tiny_model, ModelError, TinyModel};
use crate::par::derive_seed;
use crate::training::{
    prepare_items, synth_corpus, synth_vocab, train, LossConfig, TrainConfig, TrainingError,
};

const CORPUS_STREAM: u64 = 0x0C;
const RUN_STREAM: u64 = 0x1000;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    GenProb(#[from] GenProbError),
    #[error(transparent)]
    MetaEval(#[from] MetaEvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub corpus_size: usize,
    pub held_out: usize,
    pub num_runs: usize,
    pub seed: u64,
    pub dim: usize,
    pub mle_steps: usize,
    pub unlikelihood_steps: usize,
    /// Learning rate of the likelihood phase.
    pub learning_rate: f64,
    /// Learning rate of the additional unlikelihood phase; lower than the
    /// likelihood rate so the continued training refines rather than
    /// displaces the fitted model.
    pub unlikelihood_learning_rate: f64,
    pub batch_size: usize,
    pub alpha: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus_size: 500,
            held_out: 100,
            num_runs: 3,
            seed: 0,
            dim: 8,
            mle_steps: 800,
            unlikelihood_steps: 800,
            learning_rate: 0.5,
            unlikelihood_learning_rate: 0.2,
            batch_size: 16,
            alpha: 0.1,
        }
    }
}

impl ExperimentConfig {
    fn validate(&self) -> Result<(), ExperimentError> {
        if self.held_out == 0 || self.held_out >= self.corpus_size {
            return Err(ExperimentError::InvalidConfig(format!(
                "held_out must be in 1..corpus_size, got {} of {}",
                self.held_out, self.corpus_size
            )));
        }
        if self.num_runs == 0 {
            return Err(ExperimentError::InvalidConfig("num_runs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Untrained,
    Mle,
    MleUnlikelihood,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Untrained, Stage::Mle, Stage::MleUnlikelihood];

    pub fn metric_name(self) -> &'static str {
        match self {
            Stage::Untrained => "genprob-untrained",
            Stage::Mle => "genprob-mle",
            Stage::MleUnlikelihood => "genprob-mle-unlikelihood",
        }
    }
}

/// Per-stage results across the seed-averaged runs.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub spearman_by_run: Vec<f64>,
    pub ranking_accuracy_by_run: Vec<f64>,
}

impl StageOutcome {
    pub fn mean_spearman(&self) -> f64 {
        mean(&self.spearman_by_run)
    }

    pub fn mean_ranking_accuracy(&self) -> f64 {
        mean(&self.ranking_accuracy_by_run)
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    /// Ordered: untrained, MLE, MLE + unlikelihood.
    pub stages: Vec<StageOutcome>,
    /// One record per held-out summary per stage per run.
    pub scores: Vec<ScoreRecord>,
    /// Per-run rows followed by a seed-averaged row, per stage.
    pub reports: Vec<CorrelationReport>,
    pub held_out_summaries: usize,
}

struct EvalItem {
    summary_id: String,
    dialogue_id: String,
    pair: (String, String),
    label: Label,
}

fn eval_items(
    sources: &HashMap<String, String>,
    summaries: &[&LabeledSummary],
) -> Vec<EvalItem> {
    summaries
        .iter()
        .map(|s| EvalItem {
            summary_id: s.id.clone(),
            dialogue_id: s.dialogue_id.clone(),
            pair: (sources[&s.dialogue_id].clone(), s.text.clone()),
            label: s.label,
        })
        .collect()
}

/// Fraction of (positive, matched negative) pairs within each held-out
/// dialogue where the positive outscores the negative.
fn pairwise_ranking_accuracy(items: &[EvalItem], values: &[f64]) -> f64 {
    let mut by_dialogue: HashMap<&str, (Vec<f64>, Vec<f64>)> = HashMap::new();
    for (item, &value) in items.iter().zip(values) {
        let entry = by_dialogue.entry(item.dialogue_id.as_str()).or_default();
        match item.label {
            Label::Positive => entry.0.push(value),
            Label::Negative => entry.1.push(value),
        }
    }
    let mut wins = 0usize;
    let mut total = 0usize;
    for (positives, negatives) in by_dialogue.values() {
        for p in positives {
            for n in negatives {
                total += 1;
                if p > n {
                    wins += 1;
                }
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        wins as f64 / total as f64
    }
}

/// Runs the full experiment. Deterministic for a fixed config: the corpus,
/// every model initialization, and every training shuffle derive from
/// `cfg.seed`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    cfg.validate()?;
    let corpus = synth_corpus(cfg.corpus_size, derive_seed(cfg.seed, CORPUS_STREAM));
    let cut = cfg.corpus_size - cfg.held_out;
    let held_ids: HashSet<&str> = corpus.dialogues[cut..].iter().map(|d| d.id.as_str()).collect();
    let sources: HashMap<String, String> = corpus
        .dialogues
        .iter()
        .map(|d| (d.id.clone(), render_dialogue(d)))
        .collect();

    let train_positives: Vec<LabeledSummary> = corpus
        .positives
        .iter()
        .filter(|s| !held_ids.contains(s.dialogue_id.as_str()))
        .cloned()
        .collect();
    let train_mixed: Vec<LabeledSummary> = corpus
        .all_summaries()
        .into_iter()
        .filter(|s| !held_ids.contains(s.dialogue_id.as_str()))
        .collect();
    let held_summaries: Vec<&LabeledSummary> = corpus
        .positives
        .iter()
        .chain(corpus.negatives.iter())
        .filter(|s| held_ids.contains(s.dialogue_id.as_str()))
        .collect();

    let vocab = synth_vocab();
    let probe = make_tiny_model(vocab.clone(), cfg.dim, 0)?;
    let positive_items = prepare_items(&corpus.dialogues, &train_positives, &probe)?;
    let mixed_items = prepare_items(&corpus.dialogues, &train_mixed, &probe)?;
    let eval = eval_items(&sources, &held_summaries);
    let pairs: Vec<(String, String)> = eval.iter().map(|e| e.pair.clone()).collect();
    let labels: Vec<f64> = eval
        .iter()
        .map(|e| if e.label == Label::Positive { 1.0 } else { 0.0 })
        .collect();

    let loss_cfg = LossConfig {
        alpha: cfg.alpha,
        ..LossConfig::default()
    };
    let score_cfg = GenProbConfig::bartscore();

    let mut stage_spearman: HashMap<&'static str, Vec<f64>> = HashMap::new();
    let mut stage_accuracy: HashMap<&'static str, Vec<f64>> = HashMap::new();
    let mut scores: Vec<ScoreRecord> = Vec::new();
    let mut run_reports: Vec<CorrelationReport> = Vec::new();

    for run in 0..cfg.num_runs {
        let run_seed = derive_seed(cfg.seed, RUN_STREAM + run as u64);
        let mut model = make_tiny_model(vocab.clone(), cfg.dim, derive_seed(run_seed, 0))?;
        let untrained = model.clone();
        train(
            &mut model,
            &positive_items,
            &loss_cfg,
            &TrainConfig {
                learning_rate: cfg.learning_rate,
                final_lr_fraction: 0.1,
                batch_size: cfg.batch_size,
                steps: cfg.mle_steps,
                seed: derive_seed(run_seed, 1),
                num_runs: 1,
                ..TrainConfig::default()
            },
        )?;
        let mle = model.clone();
        train(
            &mut model,
            &mixed_items,
            &loss_cfg,
            &TrainConfig {
                learning_rate: cfg.unlikelihood_learning_rate,
                final_lr_fraction: 0.1,
                batch_size: cfg.batch_size,
                steps: cfg.unlikelihood_steps,
                seed: derive_seed(run_seed, 2),
                num_runs: 1,
                ..TrainConfig::default()
            },
        )?;
        let unlikelihood = model;

        let staged: [(Stage, &TinyModel); 3] = [
            (Stage::Untrained, &untrained),
            (Stage::Mle, &mle),
            (Stage::MleUnlikelihood, &unlikelihood),
        ];
        for (stage, snapshot) in staged {
            let stage_scores = genprob_score_batch(&pairs, snapshot, &score_cfg)?;
            let values: Vec<f64> = stage_scores.iter().map(|s| s.value).collect();
            let rho = spearman(&values, &labels)?;
            let accuracy = pairwise_ranking_accuracy(&eval, &values);
            stage_spearman.entry(stage.metric_name()).or_default().push(rho);
            stage_accuracy
                .entry(stage.metric_name())
                .or_default()
                .push(accuracy);
            let metric = format!("{}-run{run}", stage.metric_name());
            for (item, value) in eval.iter().zip(&values) {
                scores.push(ScoreRecord {
                    summary_id: item.summary_id.clone(),
                    metric: metric.clone(),
                    value: *value,
                });
            }
            run_reports.push(CorrelationReport {
                metric,
                grouping: Grouping::Pooled,
                n: eval.len(),
                rho,
                ci_low: None,
                ci_high: None,
            });
        }
    }

    let mut stages = Vec::with_capacity(3);
    let mut reports = Vec::new();
    for stage in Stage::ALL {
        let spearman_by_run = stage_spearman.remove(stage.metric_name()).unwrap_or_default();
        let ranking_accuracy_by_run =
            stage_accuracy.remove(stage.metric_name()).unwrap_or_default();
        reports.extend(
            run_reports
                .iter()
                .filter(|r| {
                    r.metric
                        .strip_prefix(stage.metric_name())
                        .is_some_and(|rest| rest.starts_with("-run"))
                })
                .cloned(),
        );
        reports.push(CorrelationReport {
            metric: stage.metric_name().to_string(),
            grouping: Grouping::Pooled,
            n: eval.len(),
            rho: mean(&spearman_by_run),
            ci_low: None,
            ci_high: None,
        });
        stages.push(StageOutcome {
            stage,
            spearman_by_run,
            ranking_accuracy_by_run,
        });
    }

    Ok(ExperimentOutcome {
        stages,
        scores,
        reports,
        held_out_summaries: eval.len(),
    })
}
