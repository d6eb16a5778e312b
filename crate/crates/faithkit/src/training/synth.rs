//! Synthetic desk-scale corpus: templated toy dialogues over a closed
//! vocabulary with rule-derived correct summaries, plus the three negative
//! types manufactured by the generators in [`crate::negatives`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dialogue, Label, LabeledSummary, Turn};
use crate::models::{make_tiny_model, EntityTagger, GazetteerTagger, StubInfiller, BOS, EOS};
use crate::negatives::{hallucinate, mask_and_fill, swap_entities, NegativeSample};
use crate::par::derive_seed;

const NAMES: [&str; 8] = [
    "Amanda", "Jerry", "Bob", "Alice", "Tom", "Sara", "Mike", "Lucy",
];
const ITEMS: [&str; 8] = [
    "cookies", "muffins", "tea", "coffee", "pizza", "soup", "bread", "cake",
];
const DAYS: [&str; 8] = [
    "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday", "tomorrow",
];
const WORDS: [&str; 23] = [
    "i", "made", "do", "you", "want", "some", "sure", "will", "bring", "can", "on", "yes", "ok",
    "see", "we", "meet", "to", "share", "and", "asked", "wants", "too", "come",
];
const PUNCT: [&str; 5] = [".", "?", "!", ":", ","];

/// The filler the synthetic maskent negatives are built with.
pub const SYNTH_FILL: &str = "someone";

const HALLU_MODEL_STREAM: u64 = 0xA110;
const HALLU_MAX_LEN: usize = 12;

/// The closed vocabulary covering every token the synthetic corpus can
/// produce (dialogues, summaries, negatives), including sentinels.
pub fn synth_vocab() -> Vec<String> {
    let mut vocab: Vec<String> = [BOS, EOS, SYNTH_FILL]
        .iter()
        .map(|s| s.to_string())
        .collect();
    vocab.extend(NAMES.iter().map(|s| s.to_lowercase()));
    vocab.extend(ITEMS.iter().map(|s| s.to_string()));
    vocab.extend(DAYS.iter().map(|s| s.to_string()));
    vocab.extend(WORDS.iter().map(|s| s.to_string()));
    vocab.extend(PUNCT.iter().map(|s| s.to_string()));
    vocab
}

/// Tagger covering every synthetic entity: names as PERSON, items as ITEM,
/// days as DAY.
pub fn synth_gazetteer() -> GazetteerTagger {
    let mut tagger = GazetteerTagger::default();
    for name in NAMES {
        tagger = tagger.with_entry(name, "PERSON");
    }
    for item in ITEMS {
        tagger = tagger.with_entry(item, "ITEM");
    }
    for day in DAYS {
        tagger = tagger.with_entry(day, "DAY");
    }
    tagger
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub dialogues: Vec<Dialogue>,
    pub positives: Vec<LabeledSummary>,
    pub negatives: Vec<LabeledSummary>,
}

impl SynthCorpus {
    /// Positives followed by negatives, the order training consumes them in.
    pub fn all_summaries(&self) -> Vec<LabeledSummary> {
        let mut all = self.positives.clone();
        all.extend(self.negatives.clone());
        all
    }
}

struct Scenario {
    turns: Vec<Turn>,
    summary: String,
}

fn scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let a = NAMES[rng.gen_range(0..NAMES.len())];
    let b = loop {
        let candidate = NAMES[rng.gen_range(0..NAMES.len())];
        if candidate != a {
            break candidate;
        }
    };
    let item = ITEMS[rng.gen_range(0..ITEMS.len())];
    let day = DAYS[rng.gen_range(0..DAYS.len())];
    let mut scenario = match rng.gen_range(0..3) {
        0 => Scenario {
            turns: vec![
                Turn::new(a, format!("I made {item}. Do you want some?")),
                Turn::new(b, "Sure!"),
                Turn::new(a, format!("I will bring you some {day}.")),
            ],
            summary: format!("{a} made {item} and will bring {b} some {day}."),
        },
        1 => Scenario {
            turns: vec![
                Turn::new(a, format!("Can you bring {item} on {day}?")),
                Turn::new(b, format!("Yes, I will bring {item}.")),
            ],
            summary: format!("{a} asked {b} to bring {item} on {day}."),
        },
        _ => Scenario {
            turns: vec![
                Turn::new(a, format!("I want {item}. Can we meet {day}?")),
                Turn::new(b, format!("Ok, see you {day}.")),
            ],
            summary: format!("{a} and {b} will meet {day} to share {item}."),
        },
    };
    // Most dialogues mention a third person the summary must not pick up,
    // which keeps name-role binding from being trivially solvable.
    if rng.gen_range(0..4) < 3 {
        let c = loop {
            let candidate = NAMES[rng.gen_range(0..NAMES.len())];
            if candidate != a && candidate != b {
                break candidate;
            }
        };
        let speaker = if rng.gen_range(0..2) == 0 { a } else { b };
        let distractor = match rng.gen_range(0..3) {
            0 => format!("{c} wants some too."),
            1 => format!("Can {c} come too?"),
            _ => format!("I will see {c} on {day}."),
        };
        let position = rng.gen_range(1..=scenario.turns.len());
        scenario.turns.insert(position, Turn::new(speaker, distractor));
    }
    scenario
}

fn to_labeled(sample: NegativeSample, dialogue_id: &str) -> LabeledSummary {
    let suffix = sample.neg_type.as_str();
    LabeledSummary {
        id: format!("{dialogue_id}-{suffix}"),
        dialogue_id: dialogue_id.to_string(),
        system: suffix.to_string(),
        text: sample.text,
        label: Label::Negative,
        neg_type: Some(sample.neg_type),
        negative_indices: sample.negative_indices,
    }
}

/// Generates `n` templated dialogues with correct summaries and up to three
/// negatives each (swapent, maskent, hallu). Deterministic per seed; the
/// hallucination generator is an untrained tiny model, so its samples are
/// free-running vocabulary babble.
pub fn synth_corpus(n: usize, seed: u64) -> SynthCorpus {
    assert!(n >= 1, "synth_corpus needs n >= 1");
    let tagger = synth_gazetteer();
    let infiller = StubInfiller::new(SYNTH_FILL).expect("static fill text is valid");
    let hallu_model = make_tiny_model(synth_vocab(), 16, derive_seed(seed, HALLU_MODEL_STREAM))
        .expect("synthetic vocabulary is valid");

    let mut dialogues = Vec::with_capacity(n);
    let mut positives = Vec::with_capacity(n);
    let mut negatives = Vec::with_capacity(3 * n);
    for i in 0..n {
        let dialogue_seed = derive_seed(seed, i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(dialogue_seed);
        let scenario = scenario(&mut rng);
        let dialogue_id = format!("synth-{i:04}");
        let positive_id = format!("{dialogue_id}-pos");
        let dialogue = Dialogue {
            id: dialogue_id.clone(),
            turns: scenario.turns,
        };
        let spans = tagger
            .tag(&scenario.summary)
            .expect("gazetteer tagging cannot fail");

        if let Some(sample) = swap_entities(&scenario.summary, &spans, derive_seed(dialogue_seed, 1))
            .expect("synthetic spans are valid")
        {
            negatives.push(to_labeled(
                sample.with_source_summary_id(&positive_id),
                &dialogue_id,
            ));
        }
        if let Some(sample) = mask_and_fill(
            &scenario.summary,
            &spans,
            &infiller,
            derive_seed(dialogue_seed, 2),
        )
        .expect("stub infilling cannot fail")
        {
            negatives.push(to_labeled(
                sample.with_source_summary_id(&positive_id),
                &dialogue_id,
            ));
        }
        // Empty generations are rare; retry on fresh derived seeds, then
        // skip the hallu negative for this dialogue.
        for attempt in 0..8 {
            match hallucinate(
                &dialogue,
                &hallu_model,
                derive_seed(dialogue_seed, 3 + attempt),
                HALLU_MAX_LEN,
            ) {
                Ok(sample) => {
                    negatives.push(to_labeled(
                        sample.with_source_summary_id(&positive_id),
                        &dialogue_id,
                    ));
                    break;
                }
                Err(crate::negatives::NegativesError::EmptyGeneration) => continue,
                Err(e) => panic!("hallucination over the closed vocabulary failed: {e}"),
            }
        }

        positives.push(LabeledSummary {
            id: positive_id,
            dialogue_id: dialogue_id.clone(),
            system: "reference".into(),
            text: scenario.summary,
            label: Label::Positive,
            neg_type: None,
            negative_indices: Default::default(),
        });
        dialogues.push(dialogue);
    }
    SynthCorpus {
        dialogues,
        positives,
        negatives,
    }
}
