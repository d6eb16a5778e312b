//! Serialization round-trip and rendering properties over randomized
//! corpora.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use faithkit::corpus::{
    load_dialogues, load_judgments, load_scores, load_summaries, render_dialogue, save_dialogues,
    save_judgments, save_scores, save_summaries, Dialogue, HumanJudgment, Label, LabeledSummary,
    NegType, ScoreRecord, Turn,
};
use faithkit::lexical::tokenize;

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,8}"
}

fn text() -> impl Strategy<Value = String> {
    proptest::collection::vec(word(), 1..8).prop_map(|words| words.join(" "))
}

fn dialogue() -> impl Strategy<Value = Dialogue> {
    (
        "[a-z0-9-]{1,12}",
        proptest::collection::vec(("[A-Z][a-z]{1,6}", text()), 1..5),
    )
        .prop_map(|(id, turns)| Dialogue {
            id,
            turns: turns
                .into_iter()
                .map(|(speaker, text)| Turn::new(speaker, text))
                .collect(),
        })
}

fn labeled_summary() -> impl Strategy<Value = LabeledSummary> {
    (
        "[a-z0-9-]{1,12}",
        "[a-z0-9-]{1,12}",
        "[a-z-]{1,10}",
        text(),
        proptest::option::of(0usize..3),
    )
        .prop_map(|(id, dialogue_id, system, text, neg)| {
            let token_count = tokenize(&text).len();
            match neg {
                None => LabeledSummary {
                    id,
                    dialogue_id,
                    system,
                    text,
                    label: Label::Positive,
                    neg_type: None,
                    negative_indices: BTreeSet::new(),
                },
                Some(kind) => {
                    let neg_type = [NegType::Swapent, NegType::Maskent, NegType::Hallu][kind];
                    let negative_indices = (0..token_count).step_by(2).collect();
                    LabeledSummary {
                        id,
                        dialogue_id,
                        system,
                        text,
                        label: Label::Negative,
                        neg_type: Some(neg_type),
                        negative_indices,
                    }
                }
            }
        })
}

fn unique_by_id<T, F: Fn(&T) -> &str>(items: Vec<T>, key: F) -> Vec<T> {
    let mut seen = std::collections::HashSet::new();
    items
        .into_iter()
        .filter(|item| seen.insert(key(item).to_string()))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dialogues_round_trip(raw in proptest::collection::vec(dialogue(), 0..12)) {
        let dialogues = unique_by_id(raw, |d| &d.id);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dialogues.jsonl");
        save_dialogues(&dialogues, &path).unwrap();
        prop_assert_eq!(load_dialogues(&path).unwrap(), dialogues);
    }

    #[test]
    fn summaries_round_trip(raw in proptest::collection::vec(labeled_summary(), 0..12)) {
        let summaries = unique_by_id(raw, |s| &s.id);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summaries.jsonl");
        save_summaries(&summaries, &path).unwrap();
        prop_assert_eq!(load_summaries(&path).unwrap(), summaries);
    }

    #[test]
    fn judgments_round_trip(
        raw in proptest::collection::vec(("[a-z0-9-]{1,12}", 1.0f64..=10.0), 0..12),
    ) {
        let judgments = unique_by_id(
            raw.into_iter()
                .map(|(summary_id, faithfulness)| HumanJudgment { summary_id, faithfulness })
                .collect(),
            |j| &j.summary_id,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("judgments.jsonl");
        save_judgments(&judgments, &path).unwrap();
        prop_assert_eq!(load_judgments(&path).unwrap(), judgments);
    }

    #[test]
    fn scores_round_trip(
        records in proptest::collection::vec(
            ("[a-z0-9-]{1,12}", "[a-z-]{1,10}", -1e6f64..1e6),
            0..50,
        ),
    ) {
        let records: Vec<ScoreRecord> = records
            .into_iter()
            .map(|(summary_id, metric, value)| ScoreRecord { summary_id, metric, value })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.jsonl");
        save_scores(&records, &path).unwrap();
        // Same multiset (in fact same order) back.
        prop_assert_eq!(load_scores(&path).unwrap(), records);
    }
}

// Rendering is injective over distinct turn lists: brute-force pairwise
// comparison across 100 random dialogues.
#[test]
fn render_dialogue_is_injective_over_random_corpus() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let speakers = ["Amanda", "Jerry", "Bob", "Alice"];
    let words = ["hi", "tea", "sure", "ok", "bring", "see", "you"];
    let mut dialogues: Vec<Dialogue> = Vec::new();
    while dialogues.len() < 100 {
        let turns: Vec<Turn> = (0..rng.gen_range(1..4))
            .map(|_| {
                let speaker = speakers[rng.gen_range(0..speakers.len())];
                let text: Vec<&str> = (0..rng.gen_range(1..5))
                    .map(|_| words[rng.gen_range(0..words.len())])
                    .collect();
                Turn::new(speaker, text.join(" "))
            })
            .collect();
        if !dialogues.iter().any(|d| d.turns == turns) {
            dialogues.push(Dialogue {
                id: format!("d{}", dialogues.len()),
                turns,
            });
        }
    }
    for i in 0..dialogues.len() {
        for j in (i + 1)..dialogues.len() {
            assert_ne!(
                render_dialogue(&dialogues[i]),
                render_dialogue(&dialogues[j]),
                "distinct turn lists {i} and {j} rendered identically"
            );
        }
    }
}
