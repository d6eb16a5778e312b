//! `faithkit train`: MLE plus unlikelihood training of the tiny scorer.

use faithkit::corpus::{
    check_referential_integrity, load_dialogues, load_summaries, save_scores, Label, ScoreRecord,
};
use faithkit::par::derive_seed;
use faithkit::training::{mix_with_ratio, prepare_items, train, LossConfig, TrainConfig};

use crate::backend::{corpus_vocab, tiny_model};
use crate::config::ConfigMap;
use crate::error::CliError;
use crate::TrainArgs;

pub fn run(args: TrainArgs, config: &ConfigMap, seed: u64) -> Result<(), CliError> {
    let dim = config.resolve(args.dim, "dim", 8)?;
    let steps = config.resolve(args.steps, "steps", 800)?;
    let learning_rate = config.resolve(args.lr, "lr", 0.5)?;
    let final_lr_fraction = config.resolve(args.final_lr_fraction, "final-lr-fraction", 0.1)?;
    let batch_size = config.resolve(args.batch_size, "batch-size", 16)?;
    let alpha = config.resolve(args.alpha, "alpha", 0.1)?;
    let eps = config.resolve(args.eps, "eps", 1e-6)?;
    let positive_ratio = config.resolve_opt(args.positive_ratio, "positive-ratio")?;
    eprintln!(
        "train: dim={dim} steps={steps} lr={learning_rate} final_lr_fraction={final_lr_fraction} \
         batch_size={batch_size} alpha={alpha} eps={eps} positive_ratio={positive_ratio:?} seed={seed}"
    );

    let dialogues = load_dialogues(&args.dialogues)?;
    let summaries = load_summaries(&args.summaries)?;
    check_referential_integrity(&dialogues, &summaries)?;

    let vocab = corpus_vocab(&dialogues, &summaries, &[]);
    let mut model = tiny_model(args.init_model.as_deref(), vocab, dim, derive_seed(seed, 0))?;

    let mut items = prepare_items(&dialogues, &summaries, &model)?;
    if let Some(ratio) = positive_ratio {
        let positives: Vec<_> = items
            .iter()
            .filter(|i| i.label == Label::Positive)
            .cloned()
            .collect();
        let negatives: Vec<_> = items
            .iter()
            .filter(|i| i.label == Label::Negative)
            .cloned()
            .collect();
        items = mix_with_ratio(&positives, &negatives, ratio, derive_seed(seed, 1))?;
    }

    let loss_cfg = LossConfig {
        alpha,
        prob_ceiling_eps: eps,
    };
    let train_cfg = TrainConfig {
        learning_rate,
        final_lr_fraction,
        batch_size,
        steps,
        seed: derive_seed(seed, 2),
        num_runs: 1,
        ..TrainConfig::default()
    };
    let trace = train(&mut model, &items, &loss_cfg, &train_cfg)?;
    model.save(&args.out)?;
    eprintln!(
        "train: {} items, final loss {:.6}, checkpoint at {}",
        items.len(),
        trace.last().copied().unwrap_or(f64::NAN),
        args.out.display()
    );

    if let Some(trace_path) = &args.trace {
        let records: Vec<ScoreRecord> = trace
            .iter()
            .enumerate()
            .map(|(step, loss)| ScoreRecord {
                summary_id: format!("step-{step:06}"),
                metric: "train_loss".into(),
                value: *loss,
            })
            .collect();
        save_scores(&records, trace_path)?;
    }
    Ok(())
}
