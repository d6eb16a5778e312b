use std::time::Instant;

use faithkit::experiment::{run_experiment, ExperimentConfig};

fn main() {
    let mut cfg = ExperimentConfig::default();
    let args: Vec<String> = std::env::args().collect();
    for arg in &args[1..] {
        let (k, v) = arg.split_once('=').expect("key=value");
        match k {
            "n" => cfg.corpus_size = v.parse().unwrap(),
            "held" => cfg.held_out = v.parse().unwrap(),
            "runs" => cfg.num_runs = v.parse().unwrap(),
            "seed" => cfg.seed = v.parse().unwrap(),
            "dim" => cfg.dim = v.parse().unwrap(),
            "mle" => cfg.mle_steps = v.parse().unwrap(),
            "ul" => cfg.unlikelihood_steps = v.parse().unwrap(),
            "lr" => cfg.learning_rate = v.parse().unwrap(),
            "batch" => cfg.batch_size = v.parse().unwrap(),
            "alpha" => cfg.alpha = v.parse().unwrap(),
            other => panic!("unknown key {other}"),
        }
    }
    println!("config: {cfg:?}");
    let start = Instant::now();
    let outcome = run_experiment(&cfg).expect("experiment failed");
    println!("elapsed: {:?}", start.elapsed());

    // Per-negative-type diagnosis from the emitted score records.
    use std::collections::HashMap;
    let mut by_metric: HashMap<&str, HashMap<&str, f64>> = HashMap::new();
    for record in &outcome.scores {
        by_metric
            .entry(record.metric.as_str())
            .or_default()
            .insert(record.summary_id.as_str(), record.value);
    }
    for metric in ["genprob-mle-run0", "genprob-mle-unlikelihood-run0"] {
        let Some(scores) = by_metric.get(metric) else { continue };
        for neg in ["swapent", "maskent", "hallu"] {
            let mut wins = 0;
            let mut total = 0;
            let mut gap = 0.0;
            for (id, value) in scores {
                let Some(dlg) = id.strip_suffix(&format!("-{neg}")) else { continue };
                let Some(pos) = scores.get(format!("{dlg}-pos").as_str()) else { continue };
                total += 1;
                if pos > value {
                    wins += 1;
                }
                gap += pos - value;
            }
            if total > 0 {
                println!(
                    "  {metric:-34} vs {neg:-8}: acc {:.3} meangap {:+.4} (n={total})",
                    wins as f64 / total as f64,
                    gap / total as f64
                );
            }
        }
    }
    for stage in &outcome.stages {
        println!(
            "{:-28} spearman mean {:+.4} by-run {:?} | rankacc mean {:.4} by-run {:?}",
            format!("{:?}", stage.stage),
            stage.mean_spearman(),
            stage
                .spearman_by_run
                .iter()
                .map(|v| (v * 1e4).round() / 1e4)
                .collect::<Vec<_>>(),
            stage.mean_ranking_accuracy(),
            stage
                .ranking_accuracy_by_run
                .iter()
                .map(|v| (v * 1e4).round() / 1e4)
                .collect::<Vec<_>>(),
        );
    }
}
