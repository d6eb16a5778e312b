//! Pseudo-reference construction for unlabeled dialogues: generate one
//! candidate summary per prompt and keep the one with the highest ROUGE-L F1
//! against the rendered source, which rewards source overlap without
//! rewarding wholesale copying.

use thiserror::Error;

use crate::corpus::{render_dialogue, Dialogue};
use crate::lexical::{rouge_l, tokenize};
use crate::models::{Generator, ModelError, PromptTemplate, SamplingConfig};
use crate::par;

#[derive(Debug, Error)]
pub enum FakeRefError {
    #[error("at least one prompt template is required")]
    NoPrompts,
    #[error("every candidate generation came back empty")]
    AllCandidatesEmpty,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The selected pseudo-reference and how it was chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoReference {
    pub text: String,
    pub chosen_prompt: String,
    pub rouge_l_vs_source: f64,
}

/// Five stock prompts for pseudo-reference generation; callers usually load
/// their own set from a template file instead.
pub fn default_prompts() -> Vec<PromptTemplate> {
    vec![
        PromptTemplate::new("summarize", "{source}\n\nSummarize the conversation above."),
        PromptTemplate::new("brief", "{source}\n\nWrite a brief summary of this dialogue."),
        PromptTemplate::new("tldr", "{source}\n\nTL;DR:"),
        PromptTemplate::new(
            "main-points",
            "{source}\n\nWhat are the main points of this conversation?",
        ),
        PromptTemplate::new(
            "one-sentence",
            "{source}\n\nDescribe what happened in one sentence.",
        ),
    ]
}

/// Generates one candidate per prompt (all under the same sampling config)
/// and returns the ROUGE-L F1 argmax against the rendered dialogue. Ties go
/// to the earliest prompt in the list.
pub fn generate_pseudo_reference<G: Generator + Sync>(
    dialogue: &Dialogue,
    generator: &G,
    prompts: &[PromptTemplate],
    sampling: &SamplingConfig,
) -> Result<PseudoReference, FakeRefError> {
    if prompts.is_empty() {
        return Err(FakeRefError::NoPrompts);
    }
    let source = render_dialogue(dialogue);
    let source_tokens = tokenize(&source);
    let candidates = par::map(prompts, |prompt| {
        generator.generate(&source, prompt, sampling)
    });
    let mut best: Option<(usize, f64, String)> = None;
    let mut any_nonempty = false;
    for (i, candidate) in candidates.into_iter().enumerate() {
        let text = candidate?;
        let candidate_tokens = tokenize(&text);
        if !candidate_tokens.is_empty() {
            any_nonempty = true;
        }
        let score = rouge_l(&candidate_tokens, &source_tokens).f1;
        // Strict comparison keeps the earliest prompt on ties.
        if best.as_ref().map_or(true, |(_, s, _)| score > *s) {
            best = Some((i, score, text));
        }
    }
    if !any_nonempty {
        return Err(FakeRefError::AllCandidatesEmpty);
    }
    let (index, score, text) = best.expect("prompts are nonempty");
    Ok(PseudoReference {
        text,
        chosen_prompt: prompts[index].id.clone(),
        rouge_l_vs_source: score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Turn;
    use crate::models::make_fixed_generator;
    use std::collections::HashMap;

    fn dialogue() -> Dialogue {
        Dialogue {
            id: "d1".into(),
            turns: vec![Turn::new("A", "x y z w q r")],
        }
    }

    fn prompt(id: &str) -> PromptTemplate {
        PromptTemplate::new(id, "{source}")
    }

    #[test]
    fn single_prompt_wins_regardless_of_score() {
        let generator = make_fixed_generator(HashMap::from([(
            "only".to_string(),
            "nothing shared".to_string(),
        )]))
        .unwrap();
        let result = generate_pseudo_reference(
            &dialogue(),
            &generator,
            &[prompt("only")],
            &SamplingConfig::greedy(16),
        )
        .unwrap();
        assert_eq!(result.chosen_prompt, "only");
        assert_eq!(result.text, "nothing shared");
        assert_eq!(result.rouge_l_vs_source, 0.0);
    }

    #[test]
    fn copy_heavy_candidate_beats_disjoint_one() {
        // Rendered source "A: x y z w q r" has 8 toolkit tokens; the copy
        // candidate shares 6 of them, so ROUGE-L F1 = 2*(6/6)*(6/8)/(6/6+6/8)
        // = 6/7. The disjoint candidate scores 0.
        let generator = make_fixed_generator(HashMap::from([
            ("copy".to_string(), "x y z w q r".to_string()),
            ("disjoint".to_string(), "totally unrelated words".to_string()),
        ]))
        .unwrap();
        let prompts = [prompt("disjoint"), prompt("copy")];
        let result = generate_pseudo_reference(
            &dialogue(),
            &generator,
            &prompts,
            &SamplingConfig::greedy(16),
        )
        .unwrap();
        assert_eq!(result.chosen_prompt, "copy");
        assert!((result.rouge_l_vs_source - 6.0 / 7.0).abs() < 1e-12);

        // The reported score is the max over re-scored candidates.
        let source = render_dialogue(&dialogue());
        let rescored = ["totally unrelated words", "x y z w q r"]
            .iter()
            .map(|c| rouge_l(&tokenize(c), &tokenize(&source)).f1)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(result.rouge_l_vs_source, rescored);
    }

    #[test]
    fn ties_break_to_the_earliest_prompt() {
        let generator = make_fixed_generator(HashMap::from([
            ("first".to_string(), "same text".to_string()),
            ("second".to_string(), "same text".to_string()),
        ]))
        .unwrap();
        let result = generate_pseudo_reference(
            &dialogue(),
            &generator,
            &[prompt("first"), prompt("second")],
            &SamplingConfig::greedy(16),
        )
        .unwrap();
        assert_eq!(result.chosen_prompt, "first");
    }

    #[test]
    fn no_prompts_is_an_error() {
        let generator =
            make_fixed_generator(HashMap::from([("p".to_string(), "t".to_string())])).unwrap();
        assert!(matches!(
            generate_pseudo_reference(&dialogue(), &generator, &[], &SamplingConfig::greedy(8)),
            Err(FakeRefError::NoPrompts)
        ));
    }

    #[test]
    fn all_empty_candidates_is_an_error() {
        let generator = make_fixed_generator(HashMap::from([
            ("a".to_string(), String::new()),
            ("b".to_string(), "   ".to_string()),
        ]))
        .unwrap();
        assert!(matches!(
            generate_pseudo_reference(
                &dialogue(),
                &generator,
                &[prompt("a"), prompt("b")],
                &SamplingConfig::greedy(8)
            ),
            Err(FakeRefError::AllCandidatesEmpty)
        ));
    }

    #[test]
    fn default_prompt_set_has_five_valid_templates() {
        let prompts = default_prompts();
        assert_eq!(prompts.len(), 5);
        for p in &prompts {
            assert_eq!(p.template.matches("{source}").count(), 1);
        }
    }
}
