//! `faithkit experiment`: the end-to-end synthetic run comparing an
//! untrained scorer, an MLE-trained scorer, and an MLE + unlikelihood
//! scorer by their correlation with ground-truth labels.

use faithkit::corpus::save_scores;
use faithkit::experiment::{run_experiment, ExperimentConfig};
use faithkit::metaeval::{write_report_json, write_report_tsv};

use crate::config::ConfigMap;
use crate::error::CliError;
use crate::ExperimentArgs;

pub fn run(args: ExperimentArgs, config: &ConfigMap, seed: u64) -> Result<(), CliError> {
    let defaults = ExperimentConfig::default();
    let cfg = ExperimentConfig {
        corpus_size: config.resolve(args.corpus_size, "corpus-size", defaults.corpus_size)?,
        held_out: config.resolve(args.held_out, "held-out", defaults.held_out)?,
        num_runs: config.resolve(args.runs, "runs", defaults.num_runs)?,
        seed,
        dim: config.resolve(args.dim, "dim", defaults.dim)?,
        mle_steps: config.resolve(args.mle_steps, "mle-steps", defaults.mle_steps)?,
        unlikelihood_steps: config.resolve(args.ul_steps, "ul-steps", defaults.unlikelihood_steps)?,
        learning_rate: config.resolve(args.lr, "lr", defaults.learning_rate)?,
        unlikelihood_learning_rate: config.resolve(
            args.ul_lr,
            "ul-lr",
            defaults.unlikelihood_learning_rate,
        )?,
        batch_size: config.resolve(args.batch_size, "batch-size", defaults.batch_size)?,
        alpha: config.resolve(args.alpha, "alpha", defaults.alpha)?,
    };
    eprintln!("experiment: {cfg:?}");

    let outcome = run_experiment(&cfg)?;
    std::fs::create_dir_all(&args.out)?;
    save_scores(&outcome.scores, args.out.join("scores.jsonl"))?;
    write_report_tsv(&outcome.reports, args.out.join("report.tsv"))?;
    write_report_json(&outcome.reports, args.out.join("report.json"))?;

    for stage in &outcome.stages {
        println!(
            "{}\tmean_spearman={:.6}\tmean_ranking_accuracy={:.6}\truns={:?}",
            stage.stage.metric_name(),
            stage.mean_spearman(),
            stage.mean_ranking_accuracy(),
            stage
                .spearman_by_run
                .iter()
                .map(|v| (v * 1e6).round() / 1e6)
                .collect::<Vec<_>>()
        );
    }
    eprintln!(
        "experiment: wrote scores.jsonl, report.tsv, report.json under {}",
        args.out.display()
    );
    Ok(())
}
