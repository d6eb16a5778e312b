//! Manufactured negative summaries with token-level negative indices.
//!
//! Three corruption types: entity swaps within a type (wrong-reference
//! errors), masked-entity refills (wrong subject/object errors), and
//! free-running sampled generations (complete hallucinations). Negative
//! token indices are computed by LCS alignment against the reference under
//! the toolkit tokenizer, except for hallucinations where every position is
//! negative.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{render_dialogue, Dialogue, NegType};
use crate::lexical;
use crate::models::{
    EntitySpan, Generator, Infiller, ModelError, PromptTemplate, SamplingConfig,
    MASK_PLACEHOLDER,
};

#[derive(Debug, Error)]
pub enum NegativesError {
    #[error("invalid entity spans: {0}")]
    InvalidSpans(String),
    #[error("hallucination generator produced empty text")]
    EmptyGeneration,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// An accepted negative summary. `negative_indices` are toolkit-tokenizer
/// positions and are nonempty by construction; generators return `None`
/// instead of emitting a sample indistinguishable from its reference.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSample {
    pub text: String,
    pub neg_type: NegType,
    pub negative_indices: BTreeSet<usize>,
    pub source_summary_id: String,
}

impl NegativeSample {
    pub fn with_source_summary_id(mut self, id: impl Into<String>) -> Self {
        self.source_summary_id = id.into();
        self
    }
}

/// Positions of candidate tokens not matched to a reference token under an
/// LCS alignment of the two toolkit token sequences.
pub fn negative_token_indices(reference: &str, candidate: &str) -> BTreeSet<usize> {
    let ref_tokens = lexical::tokenize(reference);
    let cand_tokens = lexical::tokenize(candidate);
    lexical::lcs_align(cand_tokens.tokens(), ref_tokens.tokens())
        .iter()
        .enumerate()
        .filter(|(_, matched)| matched.is_none())
        .map(|(i, _)| i)
        .collect()
}

// Spans sorted by start, then validated for bounds/surface/non-overlap.
fn sorted_valid_spans(text: &str, spans: &[EntitySpan]) -> Result<Vec<EntitySpan>, NegativesError> {
    let mut spans = spans.to_vec();
    spans.sort_by_key(|s| s.char_start);
    crate::models::validate_spans(text, &spans).map_err(NegativesError::InvalidSpans)?;
    Ok(spans)
}

// Groups span indices by entity type, in order of first appearance.
fn group_by_type(spans: &[EntitySpan]) -> Vec<(String, Vec<usize>)> {
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, span) in spans.iter().enumerate() {
        match groups.iter_mut().find(|(t, _)| *t == span.entity_type) {
            Some((_, members)) => members.push(i),
            None => groups.push((span.entity_type.clone(), vec![i])),
        }
    }
    groups
}

fn rebuild_with_replacements(text: &str, replacements: &[(usize, usize, String)]) -> String {
    // Replacements are (char_start, char_end, new_surface), applied right to
    // left so earlier offsets stay valid.
    let mut chars: Vec<char> = text.chars().collect();
    let mut ordered = replacements.to_vec();
    ordered.sort_by_key(|(start, _, _)| std::cmp::Reverse(*start));
    for (start, end, surface) in ordered {
        chars.splice(start..end, surface.chars());
    }
    chars.into_iter().collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    heap_permute(n, &mut current, &mut out);
    out
}

fn heap_permute(k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(current.clone());
        return;
    }
    for i in 0..k {
        heap_permute(k - 1, current, out);
        if k % 2 == 0 {
            current.swap(i, k - 1);
        } else {
            current.swap(0, k - 1);
        }
    }
}

// A seeded derangement of the group's surfaces: a permutation assigning each
// position a surface different from its original. None when the surface
// multiset admits no such permutation.
fn deranged_assignment(
    surfaces: &[String],
    rng: &mut ChaCha8Rng,
) -> Option<Vec<usize>> {
    let n = surfaces.len();
    let distinct: BTreeSet<&String> = surfaces.iter().collect();
    if n < 2 || distinct.len() < 2 {
        return None;
    }
    if n <= 8 {
        let mut valid: Vec<Vec<usize>> = permutations(n)
            .into_iter()
            .filter(|perm| (0..n).all(|k| surfaces[perm[k]] != surfaces[k]))
            .collect();
        valid.sort();
        if valid.is_empty() {
            return None;
        }
        let pick = rng.gen_range(0..valid.len());
        return Some(valid.swap_remove(pick));
    }
    // Large groups: seeded shuffle attempts instead of n! enumeration.
    let mut perm: Vec<usize> = (0..n).collect();
    for _ in 0..1000 {
        perm.shuffle(rng);
        if (0..n).all(|k| surfaces[perm[k]] != surfaces[k]) {
            return Some(perm);
        }
    }
    None
}

/// Shuffles same-type entities with a seeded derangement (no position keeps
/// its surface), simulating wrong-reference errors. Returns `None` when no
/// entity type admits a derangement.
pub fn swap_entities(
    reference: &str,
    spans: &[EntitySpan],
    seed: u64,
) -> Result<Option<NegativeSample>, NegativesError> {
    let spans = sorted_valid_spans(reference, spans)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut replacements: Vec<(usize, usize, String)> = Vec::new();
    for (_, members) in group_by_type(&spans) {
        let surfaces: Vec<String> = members.iter().map(|&i| spans[i].surface.clone()).collect();
        if let Some(perm) = deranged_assignment(&surfaces, &mut rng) {
            for (k, &member) in members.iter().enumerate() {
                let span = &spans[member];
                replacements.push((span.char_start, span.char_end, surfaces[perm[k]].clone()));
            }
        }
    }
    if replacements.is_empty() {
        return Ok(None);
    }
    let text = rebuild_with_replacements(reference, &replacements);
    if text == reference {
        return Ok(None);
    }
    let negative_indices = negative_token_indices(reference, &text);
    if negative_indices.is_empty() {
        return Ok(None);
    }
    Ok(Some(NegativeSample {
        text,
        neg_type: NegType::Swapent,
        negative_indices,
        source_summary_id: String::new(),
    }))
}

/// Masks one seeded-random entity of each type and asks the infiller to
/// refill all masks in a single pass, simulating wrong subjects/objects.
/// Returns `None` for a span-free reference or when the refill reproduces
/// the reference exactly.
pub fn mask_and_fill<I: Infiller>(
    reference: &str,
    spans: &[EntitySpan],
    infiller: &I,
    seed: u64,
) -> Result<Option<NegativeSample>, NegativesError> {
    let spans = sorted_valid_spans(reference, spans)?;
    if spans.is_empty() {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut replacements: Vec<(usize, usize, String)> = Vec::new();
    for (_, members) in group_by_type(&spans) {
        let chosen = &spans[members[rng.gen_range(0..members.len())]];
        replacements.push((
            chosen.char_start,
            chosen.char_end,
            MASK_PLACEHOLDER.to_string(),
        ));
    }
    let masked = rebuild_with_replacements(reference, &replacements);
    let filled = infiller.infill(&masked)?;
    if filled.contains(MASK_PLACEHOLDER) {
        return Err(ModelError::Contract {
            interface: "Infiller",
            detail: format!("residual mask placeholder in {filled:?}"),
        }
        .into());
    }
    if filled == reference {
        return Ok(None);
    }
    let negative_indices = negative_token_indices(reference, &filled);
    if negative_indices.is_empty() {
        return Ok(None);
    }
    Ok(Some(NegativeSample {
        text: filled,
        neg_type: NegType::Maskent,
        negative_indices,
        source_summary_id: String::new(),
    }))
}

/// Free-runs the generator on the rendered dialogue with unrestricted
/// nucleus sampling (p = 1.0), simulating a complete hallucination. Every
/// output token is negative.
pub fn hallucinate<G: Generator>(
    dialogue: &Dialogue,
    generator: &G,
    seed: u64,
    max_len: usize,
) -> Result<NegativeSample, NegativesError> {
    let source = render_dialogue(dialogue);
    let cfg = SamplingConfig::top_p(1.0, seed, max_len);
    let text = generator.generate(&source, &PromptTemplate::identity(), &cfg)?;
    let token_count = lexical::tokenize(&text).len();
    if token_count == 0 {
        return Err(NegativesError::EmptyGeneration);
    }
    Ok(NegativeSample {
        text,
        neg_type: NegType::Hallu,
        negative_indices: (0..token_count).collect(),
        source_summary_id: String::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Turn;
    use crate::models::{
        make_fixed_generator, make_tiny_model, EntityTagger, GazetteerTagger, StubInfiller,
    };
    use std::collections::HashMap;

    const TABLE5_REFERENCE: &str = "Amanda baked cookies and will bring Jerry some tomorrow.";
    const TABLE5_SWAPPED: &str = "Jerry baked cookies and will bring Amanda some tomorrow.";

    fn person_tagger() -> GazetteerTagger {
        GazetteerTagger::default()
            .with_entry("Amanda", "PERSON")
            .with_entry("Jerry", "PERSON")
            .with_entry("Bob", "PERSON")
            .with_entry("Seattle", "LOCATION")
    }

    fn person_spans(text: &str) -> Vec<EntitySpan> {
        person_tagger().tag(text).unwrap()
    }

    #[test]
    fn swap_reproduces_two_person_fixture_exactly() {
        let spans = person_spans(TABLE5_REFERENCE);
        assert_eq!(spans.len(), 2);
        for seed in [0, 1, 99] {
            let sample = swap_entities(TABLE5_REFERENCE, &spans, seed).unwrap().unwrap();
            assert_eq!(sample.text, TABLE5_SWAPPED);
            assert_eq!(sample.negative_indices, BTreeSet::from([0, 6]));
        }
    }

    #[test]
    fn swap_single_entity_returns_none() {
        let text = "Amanda baked cookies.";
        let sample = swap_entities(text, &person_spans(text), 0).unwrap();
        assert!(sample.is_none());
    }

    #[test]
    fn swap_leaves_singleton_types_unchanged() {
        let text = "Amanda met Jerry and Bob in Seattle.";
        let spans = person_spans(text);
        assert_eq!(spans.len(), 4);
        let sample = swap_entities(text, &spans, 3).unwrap().unwrap();
        assert!(sample.text.contains("Seattle"), "location must stay put");

        // Output must be among the surface derangements of the PERSON group.
        let persons = ["Amanda", "Jerry", "Bob"];
        let mut valid_texts = Vec::new();
        for perm in permutations(3) {
            if (0..3).all(|k| persons[perm[k]] != persons[k]) {
                let replacements: Vec<(usize, usize, String)> = spans
                    .iter()
                    .filter(|s| s.entity_type == "PERSON")
                    .enumerate()
                    .map(|(k, s)| (s.char_start, s.char_end, persons[perm[k]].to_string()))
                    .collect();
                valid_texts.push(rebuild_with_replacements(text, &replacements));
            }
        }
        assert_eq!(valid_texts.len(), 2);
        assert!(valid_texts.contains(&sample.text), "{:?}", sample.text);
    }

    #[test]
    fn swap_preserves_token_multiset() {
        let text = "Amanda met Jerry and Bob in Seattle.";
        let sample = swap_entities(text, &person_spans(text), 7).unwrap().unwrap();
        let mut before = lexical::tokenize(text).tokens().to_vec();
        let mut after = lexical::tokenize(&sample.text).tokens().to_vec();
        before.sort();
        after.sort();
        assert_eq!(before, after);
    }

    #[test]
    fn swap_rejects_overlapping_spans() {
        let text = "Amanda baked";
        let spans = vec![
            EntitySpan::new(0, 6, "Amanda", "PERSON"),
            EntitySpan::new(3, 8, "nda ba", "PERSON"),
        ];
        assert!(matches!(
            swap_entities(text, &spans, 0),
            Err(NegativesError::InvalidSpans(_))
        ));
    }

    #[test]
    fn swap_repeated_surface_cannot_derange() {
        // Surfaces [Amanda, Amanda, Jerry] admit no derangement.
        let text = "Amanda saw Amanda and Jerry.";
        let sample = swap_entities(text, &person_spans(text), 0).unwrap();
        assert!(sample.is_none());
    }

    #[test]
    fn mask_and_fill_with_stub_marks_position_zero() {
        let spans = vec![EntitySpan::new(0, 6, "Amanda", "PERSON")];
        let infiller = StubInfiller::new("someone").unwrap();
        let sample = mask_and_fill(TABLE5_REFERENCE, &spans, &infiller, 0)
            .unwrap()
            .unwrap();
        assert_eq!(
            sample.text,
            "someone baked cookies and will bring Jerry some tomorrow."
        );
        assert_eq!(sample.negative_indices, BTreeSet::from([0]));
        assert_eq!(sample.neg_type, NegType::Maskent);
    }

    #[test]
    fn mask_and_fill_without_spans_returns_none() {
        let infiller = StubInfiller::new("someone").unwrap();
        assert!(mask_and_fill("No entities here.", &[], &infiller, 0)
            .unwrap()
            .is_none());
    }

    #[test]
    fn mask_and_fill_discards_identity_refill() {
        let text = "someone baked cookies.";
        let spans = vec![EntitySpan::new(0, 7, "someone", "PERSON")];
        let infiller = StubInfiller::new("someone").unwrap();
        assert!(mask_and_fill(text, &spans, &infiller, 0).unwrap().is_none());
    }

    struct LeakyInfiller;

    impl Infiller for LeakyInfiller {
        fn infill(&self, masked_text: &str) -> Result<String, ModelError> {
            Ok(masked_text.to_string())
        }
    }

    #[test]
    fn mask_and_fill_rejects_residual_mask() {
        let spans = vec![EntitySpan::new(0, 6, "Amanda", "PERSON")];
        assert!(matches!(
            mask_and_fill(TABLE5_REFERENCE, &spans, &LeakyInfiller, 0),
            Err(NegativesError::Model(ModelError::Contract { .. }))
        ));
    }

    fn cookie_dialogue() -> Dialogue {
        Dialogue {
            id: "d1".into(),
            turns: vec![
                Turn::new("Amanda", "I baked cookies. Do you want some?"),
                Turn::new("Jerry", "Sure!"),
                Turn::new("Amanda", "I'll bring you tomorrow :-)"),
            ],
        }
    }

    #[test]
    fn hallucinate_marks_every_token_negative() {
        let generator = make_fixed_generator(HashMap::from([(
            "identity".to_string(),
            "Amanda: I baked cookies, and I want to bring them to your house so you can eat them!"
                .to_string(),
        )]))
        .unwrap();
        let sample = hallucinate(&cookie_dialogue(), &generator, 0, 32).unwrap();
        let token_count = lexical::tokenize(&sample.text).len();
        assert_eq!(token_count, 21);
        assert_eq!(sample.negative_indices, (0..token_count).collect());
        assert_eq!(sample.neg_type, NegType::Hallu);
    }

    #[test]
    fn hallucinate_is_seed_deterministic_with_tiny_model() {
        let vocab: Vec<String> = [
            crate::models::BOS,
            crate::models::EOS,
            "amanda",
            "jerry",
            "i",
            "baked",
            "cookies",
            "do",
            "you",
            "want",
            "some",
            "sure",
            "i'll",
            "bring",
            "tomorrow",
            ".",
            "?",
            "!",
            ":",
            "-",
            ")",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let model = make_tiny_model(vocab, 4, 17).unwrap();
        let a = hallucinate(&cookie_dialogue(), &model, 5, 12).unwrap();
        let b = hallucinate(&cookie_dialogue(), &model, 5, 12).unwrap();
        assert_eq!(a, b);
        let c = hallucinate(&cookie_dialogue(), &model, 6, 12);
        // A different seed usually gives different text; empty output is the
        // only allowed failure.
        if let Ok(c) = c {
            assert_eq!(c.negative_indices.len(), lexical::tokenize(&c.text).len());
        }
    }

    #[test]
    fn empty_generation_is_an_error() {
        let generator =
            make_fixed_generator(HashMap::from([("identity".to_string(), String::new())]))
                .unwrap();
        assert!(matches!(
            hallucinate(&cookie_dialogue(), &generator, 0, 8),
            Err(NegativesError::EmptyGeneration)
        ));
    }

    #[test]
    fn indices_identity_is_empty() {
        assert!(negative_token_indices(TABLE5_REFERENCE, TABLE5_REFERENCE).is_empty());
    }

    #[test]
    fn indices_of_table5_swap_are_zero_and_six() {
        assert_eq!(
            negative_token_indices(TABLE5_REFERENCE, TABLE5_SWAPPED),
            BTreeSet::from([0, 6])
        );
    }

    #[test]
    fn indices_of_single_insertion() {
        let indices = negative_token_indices("the cat sat down", "the cat quietly sat down");
        assert_eq!(indices, BTreeSet::from([2]));
    }

    #[test]
    fn indices_bounded_by_candidate_length() {
        let candidate = "completely different words";
        let indices = negative_token_indices(TABLE5_REFERENCE, candidate);
        assert!(indices.len() <= lexical::tokenize(candidate).len());
        assert!(!indices.is_empty());
    }
}
