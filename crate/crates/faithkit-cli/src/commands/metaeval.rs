//! `faithkit metaeval`: rank-correlation reports for metric scores against
//! human judgments.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use faithkit::corpus::{load_judgments, load_scores, load_summaries, ScoreRecord};
use faithkit::metaeval::{
    bootstrap_ci, evaluate_metric, write_report_json, write_report_tsv, write_scatter_png,
    CorrelationReport, Grouping, PairedSeries,
};
use faithkit::par::derive_seed;

use crate::config::ConfigMap;
use crate::error::{usage, CliError};
use crate::MetaevalArgs;

pub fn run(args: MetaevalArgs, config: &ConfigMap, seed: u64) -> Result<(), CliError> {
    let grouping = match config
        .resolve(args.grouping.clone(), "grouping", "pooled".into())?
        .as_str()
    {
        "pooled" => Grouping::Pooled,
        "per-system-mean" | "per_system_mean" => Grouping::PerSystemMean,
        other => {
            return Err(usage(format!(
                "unknown grouping {other:?}; use pooled or per-system-mean"
            )))
        }
    };
    let resamples = config.resolve(args.bootstrap, "bootstrap", 0)?;
    let level = config.resolve(args.level, "level", 0.95)?;
    eprintln!(
        "metaeval: grouping={} bootstrap={resamples} level={level} seed={seed}",
        grouping.as_str()
    );

    let scores = load_scores(&args.scores)?;
    let judgments = load_judgments(&args.judgments)?;
    let systems: Option<HashMap<String, String>> = match &args.summaries {
        Some(path) => Some(
            load_summaries(path)?
                .into_iter()
                .map(|s| (s.id, s.system))
                .collect(),
        ),
        None => None,
    };
    if grouping == Grouping::PerSystemMean && systems.is_none() {
        return Err(usage("per-system-mean grouping needs --summaries <file>"));
    }

    let mut by_metric: BTreeMap<String, Vec<ScoreRecord>> = BTreeMap::new();
    for record in scores {
        by_metric.entry(record.metric.clone()).or_default().push(record);
    }
    if by_metric.is_empty() {
        return Err(CliError::Data("scores file contains no records".into()));
    }

    let mut reports: Vec<CorrelationReport> = Vec::new();
    for (index, (metric, records)) in by_metric.iter().enumerate() {
        let mut report = evaluate_metric(records, &judgments, grouping, systems.as_ref())?;
        if resamples > 0 {
            let series = joined_series(records, &judgments)?;
            let (low, high) = bootstrap_ci(&series, resamples, level, derive_seed(seed, index as u64))?;
            report.ci_low = Some(low);
            report.ci_high = Some(high);
        }
        if args.scatter {
            let series = joined_series(records, &judgments)?;
            let path = suffixed(&args.out, &format!("-{metric}.png"));
            write_scatter_png(&series, path)?;
        }
        reports.push(report);
    }

    let tsv = suffixed(&args.out, ".tsv");
    let json = suffixed(&args.out, ".json");
    write_report_tsv(&reports, &tsv)?;
    write_report_json(&reports, &json)?;
    for report in &reports {
        println!(
            "{}\t{}\tn={}\trho={:.6}",
            report.metric,
            report.grouping.as_str(),
            report.n,
            report.rho
        );
    }
    eprintln!("metaeval: wrote {} and {}", tsv.display(), json.display());
    Ok(())
}

fn joined_series(
    records: &[ScoreRecord],
    judgments: &[faithkit::corpus::HumanJudgment],
) -> Result<PairedSeries, CliError> {
    let judgment_by_id: HashMap<&str, f64> = judgments
        .iter()
        .map(|j| (j.summary_id.as_str(), j.faithfulness))
        .collect();
    let mut ids = Vec::with_capacity(records.len());
    let mut metric_values = Vec::with_capacity(records.len());
    let mut human_values = Vec::with_capacity(records.len());
    for record in records {
        let human = judgment_by_id.get(record.summary_id.as_str()).ok_or_else(|| {
            CliError::Data(format!("no judgment for summary \"{}\"", record.summary_id))
        })?;
        ids.push(record.summary_id.clone());
        metric_values.push(record.value);
        human_values.push(*human);
    }
    Ok(PairedSeries::new(ids, metric_values, human_values)?)
}

fn suffixed(base: &PathBuf, suffix: &str) -> PathBuf {
    let mut name = base.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}
