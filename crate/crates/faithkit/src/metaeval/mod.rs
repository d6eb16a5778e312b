//! Rank-correlation meta-evaluation of metric scores against human
//! faithfulness judgments, with bootstrap uncertainty.

mod report;

pub use report::{write_report_json, write_report_tsv, write_scatter_png};

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{HumanJudgment, ScoreRecord};
use crate::par;

#[derive(Debug, Error)]
pub enum MetaEvalError {
    #[error("input lengths differ: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("need at least 2 paired samples, got {n}")]
    TooFewSamples { n: usize },
    #[error("non-finite value in {which}")]
    NonFinite { which: &'static str },
    #[error("correlation undefined: zero variance in {which}")]
    ZeroVariance { which: &'static str },
    #[error("duplicate summary id \"{id}\" in scores")]
    DuplicateScoreId { id: String },
    #[error("scores mix metrics: {found:?}")]
    MixedMetrics { found: Vec<String> },
    #[error("{missing} score ids lack judgments, first {}: {ids:?}", ids.len())]
    UnmatchedIds { missing: usize, ids: Vec<String> },
    #[error("per-system grouping requires a summary-id to system map")]
    MissingSystemMap,
    #[error("no system known for summary id \"{id}\"")]
    UnknownSystem { id: String },
    #[error("need at least 100 bootstrap resamples, got {resamples}")]
    TooFewResamples { resamples: usize },
    #[error("confidence level must be in (0, 1), got {level}")]
    BadLevel { level: f64 },
    #[error("{degenerate} of {total} bootstrap resamples were degenerate")]
    DegenerateResamples { degenerate: usize, total: usize },
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Paired metric/human values joined by summary id.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    pub ids: Vec<String>,
    pub metric_values: Vec<f64>,
    pub human_values: Vec<f64>,
}

impl PairedSeries {
    pub fn new(
        ids: Vec<String>,
        metric_values: Vec<f64>,
        human_values: Vec<f64>,
    ) -> Result<Self, MetaEvalError> {
        if ids.len() != metric_values.len() || metric_values.len() != human_values.len() {
            return Err(MetaEvalError::LengthMismatch {
                x: metric_values.len(),
                y: human_values.len(),
            });
        }
        if ids.len() < 2 {
            return Err(MetaEvalError::TooFewSamples { n: ids.len() });
        }
        let mut seen = std::collections::HashSet::new();
        for id in &ids {
            if !seen.insert(id.clone()) {
                return Err(MetaEvalError::DuplicateScoreId { id: id.clone() });
            }
        }
        if metric_values.iter().any(|v| !v.is_finite()) {
            return Err(MetaEvalError::NonFinite {
                which: "metric values",
            });
        }
        if human_values.iter().any(|v| !v.is_finite()) {
            return Err(MetaEvalError::NonFinite {
                which: "human values",
            });
        }
        Ok(Self {
            ids,
            metric_values,
            human_values,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Pooled,
    PerSystemMean,
}

impl Grouping {
    pub fn as_str(self) -> &'static str {
        match self {
            Grouping::Pooled => "pooled",
            Grouping::PerSystemMean => "per_system_mean",
        }
    }
}

/// Correlation of one metric against human judgments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub metric: String,
    pub grouping: Grouping,
    pub n: usize,
    pub rho: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

/// Average ranks (1-based; ties share the mean of their rank block).
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) hold equal values; 1-based ranks i+1..=j+1.
        let rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties: the Pearson
/// correlation of the two rank vectors.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MetaEvalError> {
    if x.len() != y.len() {
        return Err(MetaEvalError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(MetaEvalError::TooFewSamples { n: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(MetaEvalError::NonFinite { which: "x" });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(MetaEvalError::NonFinite { which: "y" });
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    pearson(&rx, &ry)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetaEvalError> {
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 {
        return Err(MetaEvalError::ZeroVariance { which: "x ranks" });
    }
    if var_y == 0.0 {
        return Err(MetaEvalError::ZeroVariance { which: "y ranks" });
    }
    Ok(cov / (var_x * var_y).sqrt())
}

/// Joins metric scores with judgments by summary id and reports the Spearman
/// correlation, either pooled across every pair or as the unweighted mean of
/// within-system correlations (which needs `systems`: summary id to system
/// name).
pub fn evaluate_metric(
    scores: &[ScoreRecord],
    judgments: &[HumanJudgment],
    grouping: Grouping,
    systems: Option<&HashMap<String, String>>,
) -> Result<CorrelationReport, MetaEvalError> {
    let mut metric_names: Vec<String> = scores.iter().map(|s| s.metric.clone()).collect();
    metric_names.sort();
    metric_names.dedup();
    if metric_names.len() > 1 {
        return Err(MetaEvalError::MixedMetrics {
            found: metric_names,
        });
    }
    let metric = metric_names.pop().unwrap_or_default();

    let judgment_by_id: HashMap<&str, f64> = judgments
        .iter()
        .map(|j| (j.summary_id.as_str(), j.faithfulness))
        .collect();
    let mut seen = std::collections::HashSet::new();
    let mut pairs: Vec<(&str, f64, f64)> = Vec::with_capacity(scores.len());
    let mut unmatched: Vec<String> = Vec::new();
    for s in scores {
        if !seen.insert(s.summary_id.as_str()) {
            return Err(MetaEvalError::DuplicateScoreId {
                id: s.summary_id.clone(),
            });
        }
        match judgment_by_id.get(s.summary_id.as_str()) {
            Some(&human) => pairs.push((s.summary_id.as_str(), s.value, human)),
            None => unmatched.push(s.summary_id.clone()),
        }
    }
    if !unmatched.is_empty() {
        let missing = unmatched.len();
        unmatched.truncate(10);
        return Err(MetaEvalError::UnmatchedIds {
            missing,
            ids: unmatched,
        });
    }
    if pairs.len() < 2 {
        return Err(MetaEvalError::TooFewSamples { n: pairs.len() });
    }

    let n = pairs.len();
    let rho = match grouping {
        Grouping::Pooled => {
            let xs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.2).collect();
            spearman(&xs, &ys)?
        }
        Grouping::PerSystemMean => {
            let systems = systems.ok_or(MetaEvalError::MissingSystemMap)?;
            let mut by_system: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            for (id, metric_value, human) in &pairs {
                let system = systems
                    .get(*id)
                    .ok_or_else(|| MetaEvalError::UnknownSystem { id: id.to_string() })?;
                let entry = by_system.entry(system.as_str()).or_default();
                entry.0.push(*metric_value);
                entry.1.push(*human);
            }
            let mut total = 0.0;
            for (xs, ys) in by_system.values() {
                total += spearman(xs, ys)?;
            }
            total / by_system.len() as f64
        }
    };
    Ok(CorrelationReport {
        metric,
        grouping,
        n,
        rho,
        ci_low: None,
        ci_high: None,
    })
}

/// Percentile bootstrap over paired resampling. Degenerate resamples (zero
/// rank variance) are skipped and counted; more than half degenerate is an
/// error. Deterministic for a fixed seed: each resample draws from its own
/// derived stream, so parallel execution cannot reorder randomness.
pub fn bootstrap_ci(
    series: &PairedSeries,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64), MetaEvalError> {
    if resamples < 100 {
        return Err(MetaEvalError::TooFewResamples { resamples });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MetaEvalError::BadLevel { level });
    }
    let n = series.len();
    let indices: Vec<u64> = (0..resamples as u64).collect();
    let rhos: Vec<Option<f64>> = par::map(&indices, |&i| {
        let mut rng = ChaCha8Rng::seed_from_u64(par::derive_seed(seed, i));
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let pick = rng.gen_range(0..n);
            xs.push(series.metric_values[pick]);
            ys.push(series.human_values[pick]);
        }
        spearman(&xs, &ys).ok()
    });
    let mut valid: Vec<f64> = rhos.iter().filter_map(|r| *r).collect();
    let degenerate = resamples - valid.len();
    if degenerate * 2 > resamples {
        return Err(MetaEvalError::DegenerateResamples {
            degenerate,
            total: resamples,
        });
    }
    valid.sort_by(|a, b| a.partial_cmp(b).expect("finite correlations"));
    let alpha = (1.0 - level) / 2.0;
    Ok((percentile(&valid, alpha), percentile(&valid, 1.0 - alpha)))
}

// Linear interpolation between order statistics.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_order_is_plus_one() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
    }

    #[test]
    fn reversed_order_is_minus_one() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
    }

    #[test]
    fn tied_hand_example() {
        // Ranks [1, 2.5, 2.5, 4] vs [1, 3, 2, 4]: Pearson = 4.5/sqrt(22.5).
        let rho = spearman(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((rho - 0.9487).abs() < 1e-4);
        assert!((rho - 4.5 / 22.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn average_ranks_handle_tie_blocks() {
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(average_ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn spearman_rejects_degenerate_inputs() {
        assert!(matches!(
            spearman(&[1.0, 2.0], &[1.0]),
            Err(MetaEvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            spearman(&[1.0], &[1.0]),
            Err(MetaEvalError::TooFewSamples { .. })
        ));
        assert!(matches!(
            spearman(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(MetaEvalError::ZeroVariance { .. })
        ));
    }

    #[test]
    fn spearman_is_symmetric_in_its_arguments() {
        let x = [0.3, 1.2, 0.7, 2.0, 1.2];
        let y = [4.0, 2.0, 2.0, 9.0, 1.0];
        assert_eq!(spearman(&x, &y).unwrap(), spearman(&y, &x).unwrap());
    }

    #[test]
    fn invariant_under_strictly_increasing_transforms() {
        let x = [0.3, 1.2, 0.7, 2.0, 1.2, -0.4];
        let y = [4.0, 2.0, 2.0, 9.0, 1.0, 5.0];
        let base = spearman(&x, &y).unwrap();
        let exp_x: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        assert!((spearman(&exp_x, &y).unwrap() - base).abs() < 1e-12);
        let affine_x: Vec<f64> = x.iter().map(|v| 3.5 * v + 11.0).collect();
        assert!((spearman(&affine_x, &y).unwrap() - base).abs() < 1e-12);
    }

    fn score(id: &str, metric: &str, value: f64) -> ScoreRecord {
        ScoreRecord {
            summary_id: id.into(),
            metric: metric.into(),
            value,
        }
    }

    fn judgment(id: &str, value: f64) -> HumanJudgment {
        HumanJudgment {
            summary_id: id.into(),
            faithfulness: value,
        }
    }

    #[test]
    fn evaluate_metric_perfect_and_inverted() {
        let judgments = vec![judgment("a", 1.0), judgment("b", 5.0), judgment("c", 9.0)];
        let aligned = vec![score("a", "m", 0.1), score("b", "m", 0.5), score("c", "m", 0.9)];
        let report =
            evaluate_metric(&aligned, &judgments, Grouping::Pooled, None).unwrap();
        assert_eq!(report.rho, 1.0);
        assert_eq!(report.n, 3);
        let inverted: Vec<ScoreRecord> = aligned
            .iter()
            .map(|s| score(&s.summary_id, "m", -s.value))
            .collect();
        let report = evaluate_metric(&inverted, &judgments, Grouping::Pooled, None).unwrap();
        assert_eq!(report.rho, -1.0);
    }

    #[test]
    fn evaluate_metric_tied_fixture_matches_hand_value() {
        let judgments = vec![
            judgment("a", 1.0),
            judgment("b", 3.0),
            judgment("c", 2.0),
            judgment("d", 4.0),
        ];
        let scores = vec![
            score("a", "m", 1.0),
            score("b", "m", 2.0),
            score("c", "m", 2.0),
            score("d", "m", 4.0),
        ];
        let report = evaluate_metric(&scores, &judgments, Grouping::Pooled, None).unwrap();
        assert!((report.rho - 0.9487).abs() < 1e-4);
    }

    #[test]
    fn evaluate_metric_is_record_order_invariant() {
        let judgments = vec![
            judgment("a", 2.0),
            judgment("b", 7.0),
            judgment("c", 4.0),
            judgment("d", 9.0),
        ];
        let mut scores = vec![
            score("a", "m", 0.9),
            score("b", "m", 0.2),
            score("c", "m", 0.4),
            score("d", "m", 0.8),
        ];
        let forward = evaluate_metric(&scores, &judgments, Grouping::Pooled, None).unwrap();
        scores.reverse();
        let reversed = evaluate_metric(&scores, &judgments, Grouping::Pooled, None).unwrap();
        assert_eq!(forward.rho, reversed.rho);
    }

    #[test]
    fn evaluate_metric_lists_unmatched_ids() {
        let judgments = vec![judgment("a", 2.0)];
        let scores = vec![score("a", "m", 0.1), score("ghost", "m", 0.2)];
        match evaluate_metric(&scores, &judgments, Grouping::Pooled, None) {
            Err(MetaEvalError::UnmatchedIds { missing, ids }) => {
                assert_eq!(missing, 1);
                assert_eq!(ids, vec!["ghost".to_string()]);
            }
            other => panic!("expected UnmatchedIds, got {other:?}"),
        }
    }

    #[test]
    fn evaluate_metric_rejects_mixed_metrics() {
        let judgments = vec![judgment("a", 2.0), judgment("b", 3.0)];
        let scores = vec![score("a", "m1", 0.1), score("b", "m2", 0.2)];
        assert!(matches!(
            evaluate_metric(&scores, &judgments, Grouping::Pooled, None),
            Err(MetaEvalError::MixedMetrics { .. })
        ));
    }

    #[test]
    fn per_system_mean_averages_within_system_correlations() {
        // System s1 correlates perfectly, s2 perfectly inversely: mean 0.
        let judgments = vec![
            judgment("a", 1.0),
            judgment("b", 2.0),
            judgment("c", 3.0),
            judgment("x", 1.0),
            judgment("y", 2.0),
            judgment("z", 3.0),
        ];
        let scores = vec![
            score("a", "m", 0.1),
            score("b", "m", 0.2),
            score("c", "m", 0.3),
            score("x", "m", 0.3),
            score("y", "m", 0.2),
            score("z", "m", 0.1),
        ];
        let systems: HashMap<String, String> = [
            ("a", "s1"),
            ("b", "s1"),
            ("c", "s1"),
            ("x", "s2"),
            ("y", "s2"),
            ("z", "s2"),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        let report =
            evaluate_metric(&scores, &judgments, Grouping::PerSystemMean, Some(&systems)).unwrap();
        assert_eq!(report.rho, 0.0);
        assert_eq!(report.n, 6);
        assert!(matches!(
            evaluate_metric(&scores, &judgments, Grouping::PerSystemMean, None),
            Err(MetaEvalError::MissingSystemMap)
        ));
    }

    fn increasing_series(n: usize) -> PairedSeries {
        PairedSeries::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            (0..n).map(|i| i as f64).collect(),
            (0..n).map(|i| (i * i) as f64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn bootstrap_perfect_correlation_pins_interval_at_one() {
        let series = increasing_series(12);
        let (low, high) = bootstrap_ci(&series, 200, 0.95, 7).unwrap();
        assert_eq!((low, high), (1.0, 1.0));
    }

    #[test]
    fn bootstrap_anti_correlation_pins_interval_at_minus_one() {
        let series = PairedSeries::new(
            (0..12).map(|i| format!("s{i}")).collect(),
            (0..12).map(|i| i as f64).collect(),
            (0..12).map(|i| -(i as f64)).collect(),
        )
        .unwrap();
        let (low, high) = bootstrap_ci(&series, 200, 0.95, 7).unwrap();
        assert_eq!((low, high), (-1.0, -1.0));
    }

    #[test]
    fn bootstrap_is_bit_reproducible_per_seed() {
        let series = PairedSeries::new(
            (0..20).map(|i| format!("s{i}")).collect(),
            (0..20).map(|i| ((i * 37) % 11) as f64).collect(),
            (0..20).map(|i| ((i * 13) % 7) as f64).collect(),
        )
        .unwrap();
        let a = bootstrap_ci(&series, 500, 0.9, 42).unwrap();
        let b = bootstrap_ci(&series, 500, 0.9, 42).unwrap();
        assert_eq!(a, b);
        let c = bootstrap_ci(&series, 500, 0.9, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bootstrap_rejects_bad_parameters() {
        let series = increasing_series(5);
        assert!(matches!(
            bootstrap_ci(&series, 99, 0.95, 0),
            Err(MetaEvalError::TooFewResamples { .. })
        ));
        assert!(matches!(
            bootstrap_ci(&series, 100, 1.0, 0),
            Err(MetaEvalError::BadLevel { .. })
        ));
    }

    proptest! {
        // Independent oracle: O(n^2) counting ranks, then Pearson.
        #[test]
        fn spearman_matches_counting_rank_oracle(
            pairs in proptest::collection::vec((0i8..6, 0i8..6), 2..30),
        ) {
            let x: Vec<f64> = pairs.iter().map(|(a, _)| *a as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|(_, b)| *b as f64).collect();
            let ours = spearman(&x, &y);
            let oracle = oracle_spearman(&x, &y);
            match (ours, oracle) {
                (Ok(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}"),
                (Err(MetaEvalError::ZeroVariance { .. }), None) => {}
                (a, b) => prop_assert!(false, "mismatch: {a:?} vs {b:?}"),
            }
        }
    }

    fn oracle_spearman(x: &[f64], y: &[f64]) -> Option<f64> {
        let rx = counting_ranks(x);
        let ry = counting_ranks(y);
        let n = x.len() as f64;
        let mx = rx.iter().sum::<f64>() / n;
        let my = ry.iter().sum::<f64>() / n;
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
        let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
        if vx == 0.0 || vy == 0.0 {
            return None;
        }
        Some(cov / (vx * vy).sqrt())
    }

    fn counting_ranks(values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .map(|&v| {
                let less = values.iter().filter(|&&o| o < v).count() as f64;
                let equal = values.iter().filter(|&&o| o == v).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    }
}
