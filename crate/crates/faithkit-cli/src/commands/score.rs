//! `faithkit score`: one metric over a summary corpus.

use std::collections::HashMap;

use faithkit::corpus::{
    check_referential_integrity, load_dialogues, load_summaries, rendered_sources, save_scores,
    LabeledSummary, ScoreRecord,
};
use faithkit::genprob::{genprob_score_batch, Aggregation, GenProbConfig};
use faithkit::lexical::{rouge_l, rouge_n, tokenize};
use faithkit::models::{HashEmbedEncoder, LexicalOverlapAligner, TableScorer};
use faithkit::similarity::{bertscore, ctc_consistency, load_idf_table};
use faithkit::{genprob, models, par};

use crate::backend::{corpus_vocab, tiny_model, Backend};
use crate::config::ConfigMap;
use crate::error::{usage, CliError};
use crate::ScoreArgs;

const METRICS: &[&str] = &[
    "rouge-1",
    "rouge-2",
    "rouge-3",
    "rouge-l",
    "bertscore",
    "ctc",
    "genprob",
    "t0",
];

pub fn run(args: ScoreArgs, config: &ConfigMap, seed: u64) -> Result<(), CliError> {
    let metric = args.metric.clone();
    if !METRICS.contains(&metric.as_str()) {
        return Err(usage(format!(
            "unknown metric {metric:?}; available metrics: {}",
            METRICS.join(", ")
        )));
    }
    let backend = Backend::parse(&config.resolve(args.backend.clone(), "backend", "stub".into())?)?;
    eprintln!(
        "score: metric={metric} backend={backend:?} seed={seed} dialogues={} summaries={}",
        args.dialogues.display(),
        args.summaries.display()
    );

    let dialogues = load_dialogues(&args.dialogues)?;
    let summaries = load_summaries(&args.summaries)?;
    check_referential_integrity(&dialogues, &summaries)?;
    let sources = rendered_sources(&dialogues);
    let references: HashMap<&str, &str> = summaries
        .iter()
        .filter(|s| s.system == "reference")
        .map(|s| (s.dialogue_id.as_str(), s.text.as_str()))
        .collect();
    let candidates: Vec<&LabeledSummary> = summaries
        .iter()
        .filter(|s| s.system != "reference")
        .collect();

    let values: Vec<f64> = match metric.as_str() {
        "rouge-1" | "rouge-2" | "rouge-3" | "rouge-l" => {
            let pairs = reference_pairs(&candidates, &references)?;
            let order: Option<usize> = metric
                .strip_prefix("rouge-")
                .and_then(|suffix| suffix.parse().ok());
            collect(par::map(&pairs, |(hyp, reference)| {
                let hyp = tokenize(hyp);
                let reference = tokenize(reference);
                match order {
                    Some(n) => Ok(rouge_n(&hyp, &reference, n)
                        .map_err(|e| CliError::Data(e.to_string()))?
                        .f1),
                    None => Ok(rouge_l(&hyp, &reference).f1),
                }
            }))?
        }
        "bertscore" => {
            let use_idf = args.use_idf;
            let idf = match &args.idf {
                Some(path) => Some(load_idf_table(path)?),
                None => None,
            };
            if use_idf && idf.is_none() {
                return Err(usage("--use-idf requires --idf <table>"));
            }
            let pairs = reference_pairs(&candidates, &references)?;
            match backend {
                Backend::Stub => {
                    let encoder = HashEmbedEncoder::new(64)?;
                    collect(par::map(&pairs, |(hyp, reference)| {
                        Ok(bertscore(hyp, reference, &encoder, use_idf, idf.as_ref())?.f1)
                    }))?
                }
                Backend::Tiny => {
                    let vocab = corpus_vocab(&dialogues, &summaries, &[]);
                    let encoder = tiny_model(args.model.as_deref(), vocab, 8, seed)?;
                    collect(par::map(&pairs, |(hyp, reference)| {
                        Ok(bertscore(hyp, reference, &encoder, use_idf, idf.as_ref())?.f1)
                    }))?
                }
            }
        }
        "ctc" => {
            // Both backends use the lexical-overlap aligner; a learned
            // consistency model would attach behind the same trait.
            let aligner = LexicalOverlapAligner;
            let pairs: Vec<(&str, &str)> = candidates
                .iter()
                .map(|s| (sources[&s.dialogue_id].as_str(), s.text.as_str()))
                .collect();
            collect(par::map(&pairs, |(source, hyp)| {
                Ok(ctc_consistency(source, hyp, &aligner)?)
            }))?
        }
        "genprob" | "t0" => {
            let cfg = genprob_config(&args, config, &metric)?;
            let pairs: Vec<(String, String)> = candidates
                .iter()
                .map(|s| (sources[&s.dialogue_id].clone(), s.text.clone()))
                .collect();
            let scores = match backend {
                Backend::Stub => {
                    let default_p = config.resolve(args.default_p, "default-p", 0.5)?;
                    let scorer: TableScorer =
                        models::make_table_scorer(HashMap::new(), default_p)?;
                    genprob_score_batch(&pairs, &scorer, &cfg)?
                }
                Backend::Tiny => {
                    let extra = vec![cfg.prompt_template.replace("{source}", " ")];
                    let vocab = corpus_vocab(&dialogues, &summaries, &extra);
                    let scorer = tiny_model(args.model.as_deref(), vocab, 8, seed)?;
                    genprob_score_batch(&pairs, &scorer, &cfg)?
                }
            };
            scores.iter().map(|s| s.value).collect()
        }
        _ => unreachable!("metric validated above"),
    };

    let records: Vec<ScoreRecord> = candidates
        .iter()
        .zip(&values)
        .map(|(summary, value)| ScoreRecord {
            summary_id: summary.id.clone(),
            metric: metric.clone(),
            value: *value,
        })
        .collect();
    save_scores(&records, &args.out)?;
    eprintln!("score: wrote {} records to {}", records.len(), args.out.display());
    Ok(())
}

fn reference_pairs<'a>(
    candidates: &[&'a LabeledSummary],
    references: &HashMap<&str, &'a str>,
) -> Result<Vec<(&'a str, &'a str)>, CliError> {
    candidates
        .iter()
        .map(|s| {
            references
                .get(s.dialogue_id.as_str())
                .map(|reference| (s.text.as_str(), *reference))
                .ok_or_else(|| {
                    CliError::Data(format!(
                        "no reference summary for dialogue \"{}\" (needed by summary \"{}\")",
                        s.dialogue_id, s.id
                    ))
                })
        })
        .collect()
}

fn genprob_config(
    args: &ScoreArgs,
    config: &ConfigMap,
    metric: &str,
) -> Result<GenProbConfig, CliError> {
    let aggregation = match config
        .resolve(args.aggregation.clone(), "aggregation", "mean".into())?
        .as_str()
    {
        "mean" => Aggregation::Mean,
        "sum" => Aggregation::Sum,
        other => return Err(usage(format!("unknown aggregation {other:?}; use mean or sum"))),
    };
    let template = match (&args.template_file, &args.template) {
        (Some(path), Some(name)) => {
            let templates = genprob::load_prompt_templates(path)?;
            templates
                .into_iter()
                .find(|t| t.id == *name)
                .ok_or_else(|| usage(format!("template {name:?} not found in {}", path.display())))?
                .template
        }
        (Some(_), None) => return Err(usage("--template-file needs --template <name>")),
        (None, Some(_)) => return Err(usage("--template needs --template-file <path>")),
        (None, None) => match metric {
            "t0" => GenProbConfig::t0_default().prompt_template,
            _ => GenProbConfig::bartscore().prompt_template,
        },
    };
    Ok(GenProbConfig::new(template, aggregation)?)
}

fn collect(results: Vec<Result<f64, CliError>>) -> Result<Vec<f64>, CliError> {
    results.into_iter().collect()
}
