//! `faithkit` command-line interface: score summaries with faithfulness
//! metrics, manufacture negative samples, build pseudo-references, train
//! the tiny scorer, meta-evaluate metrics against human judgments, and run
//! the end-to-end synthetic experiment.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or contract error.

mod backend;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "faithkit", version, about = "Faithfulness evaluation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Master seed; every component derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Optional key=value config file; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for data-parallel scoring (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Score a summary corpus with one metric, writing scores.jsonl.
    Score(ScoreArgs),
    /// Generate labeled negative summaries from positive references.
    Negatives(NegativesArgs),
    /// Generate pseudo-references for unlabeled dialogues.
    Fakerefs(FakerefsArgs),
    /// Train the tiny scorer with MLE plus unlikelihood on negatives.
    Train(TrainArgs),
    /// Correlate metric scores with human judgments.
    Metaeval(MetaevalArgs),
    /// Run the end-to-end synthetic experiment.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
pub struct ScoreArgs {
    /// One of: rouge-1, rouge-2, rouge-3, rouge-l, bertscore, ctc, genprob, t0.
    #[arg(long)]
    metric: String,
    #[arg(long)]
    dialogues: PathBuf,
    #[arg(long)]
    summaries: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Model backend: stub or tiny.
    #[arg(long)]
    backend: Option<String>,
    /// Tiny-model checkpoint to score with (FAITHKIT_CACHE is searched for
    /// relative paths that do not resolve).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Default probability of the stub table scorer.
    #[arg(long)]
    default_p: Option<f64>,
    /// IDF table file (token idf per line) for bertscore.
    #[arg(long)]
    idf: Option<PathBuf>,
    /// Enable IDF weighting for bertscore.
    #[arg(long)]
    use_idf: bool,
    /// Prompt template file for genprob/t0 scoring.
    #[arg(long)]
    template_file: Option<PathBuf>,
    /// Named template to use from the template file.
    #[arg(long)]
    template: Option<String>,
    /// Log-probability aggregation: mean or sum.
    #[arg(long)]
    aggregation: Option<String>,
}

#[derive(Args)]
pub struct NegativesArgs {
    #[arg(long)]
    dialogues: PathBuf,
    /// Positive (reference) summaries to corrupt.
    #[arg(long)]
    summaries: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated subset of: swapent, maskent, hallu.
    #[arg(long)]
    types: Option<String>,
    /// Entity gazetteer file: one tab-separated `surface<TAB>TYPE` per line.
    #[arg(long)]
    gazetteer: Option<PathBuf>,
    /// Fill text of the stub infiller used for maskent.
    #[arg(long)]
    fill: Option<String>,
    /// Maximum hallucination length in tokens.
    #[arg(long)]
    max_len: Option<usize>,
    /// Model backend for hallu generation (only tiny can sample).
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
pub struct FakerefsArgs {
    #[arg(long)]
    dialogues: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Prompt template file; defaults to the five stock prompts.
    #[arg(long)]
    template_file: Option<PathBuf>,
    /// Comma-separated template ids selecting/ordering the prompts.
    #[arg(long)]
    prompts: Option<String>,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    max_len: Option<usize>,
    /// Sample with top-p instead of greedy decoding (p in (0, 1]).
    #[arg(long)]
    top_p: Option<f64>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    dialogues: PathBuf,
    /// Labeled summaries: positives train MLE, negatives unlikelihood.
    #[arg(long)]
    summaries: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Warm-start checkpoint instead of a fresh seeded model.
    #[arg(long)]
    init_model: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    final_lr_fraction: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Unlikelihood weight alpha.
    #[arg(long)]
    alpha: Option<f64>,
    /// Probability ceiling epsilon for the complement log.
    #[arg(long)]
    eps: Option<f64>,
    /// Rebalance to this many positives per negative before training.
    #[arg(long)]
    positive_ratio: Option<f64>,
    /// Write per-step losses as scores.jsonl-style records.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
pub struct MetaevalArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    judgments: PathBuf,
    /// Report prefix; writes {out}.tsv and {out}.json.
    #[arg(long)]
    out: PathBuf,
    /// pooled or per-system-mean.
    #[arg(long)]
    grouping: Option<String>,
    /// Summaries file supplying the system of each summary id
    /// (required for per-system-mean).
    #[arg(long)]
    summaries: Option<PathBuf>,
    /// Bootstrap resample count (0 disables confidence intervals).
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Bootstrap confidence level.
    #[arg(long)]
    level: Option<f64>,
    /// Also write one {out}-{metric}.png scatter plot per metric.
    #[arg(long)]
    scatter: bool,
}

#[derive(Args)]
pub struct ExperimentArgs {
    /// Output directory for scores.jsonl, report.tsv, and report.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    corpus_size: Option<usize>,
    #[arg(long)]
    held_out: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    mle_steps: Option<usize>,
    #[arg(long)]
    ul_steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    ul_lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Data(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    faithkit::par::configure_threads(cli.workers);
    let config = config::ConfigMap::load(cli.config.as_deref())?;
    let seed = cli.seed;
    match cli.command {
        Command::Score(args) => commands::score::run(args, &config, seed),
        Command::Negatives(args) => commands::negatives::run(args, &config, seed),
        Command::Fakerefs(args) => commands::fakerefs::run(args, &config, seed),
        Command::Train(args) => commands::train::run(args, &config, seed),
        Command::Metaeval(args) => commands::metaeval::run(args, &config, seed),
        Command::Experiment(args) => commands::experiment::run(args, &config, seed),
    }
}
