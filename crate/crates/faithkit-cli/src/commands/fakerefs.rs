//! `faithkit fakerefs`: pseudo-reference generation for unlabeled dialogues.

use faithkit::corpus::{load_dialogues, save_summaries, Label, LabeledSummary};
use faithkit::fakeref::{default_prompts, generate_pseudo_reference};
use faithkit::genprob::load_prompt_templates;
use faithkit::models::{PromptTemplate, SamplingConfig};
use faithkit::par::{self, derive_seed};

use crate::backend::{corpus_vocab, template_text, tiny_model, Backend};
use crate::config::ConfigMap;
use crate::error::{usage, CliError};
use crate::FakerefsArgs;

pub fn run(args: FakerefsArgs, config: &ConfigMap, seed: u64) -> Result<(), CliError> {
    let backend = Backend::parse(&config.resolve(args.backend.clone(), "backend", "tiny".into())?)?;
    if backend != Backend::Tiny {
        return Err(usage(
            "fakerefs needs a generative backend; use --backend tiny",
        ));
    }
    let max_len = config.resolve(args.max_len, "max-len", 24)?;
    let top_p = config.resolve(args.top_p, "top-p", 1.0)?;

    let mut prompts = match &args.template_file {
        Some(path) => load_prompt_templates(path)?,
        None => default_prompts(),
    };
    if let Some(selection) = config.resolve_opt(args.prompts.clone(), "prompts")? {
        prompts = select_prompts(prompts, &selection)?;
    }
    eprintln!(
        "fakerefs: backend={backend:?} prompts={:?} top_p={top_p} max_len={max_len} seed={seed}",
        prompts.iter().map(|p| p.id.as_str()).collect::<Vec<_>>()
    );

    let dialogues = load_dialogues(&args.dialogues)?;
    // Prompt wording joins the vocabulary so templated conditioning stays
    // tokenizable by the tiny backend.
    let extra: Vec<String> = prompts.iter().map(template_text).collect();
    let vocab = corpus_vocab(&dialogues, &[], &extra);
    let generator = tiny_model(args.model.as_deref(), vocab, 8, derive_seed(seed, 0xFA))?;
    let sampling = SamplingConfig::top_p(top_p, derive_seed(seed, 0xFB), max_len);

    let results: Vec<Result<LabeledSummary, CliError>> = par::map(&dialogues, |dialogue| {
        let pseudo = generate_pseudo_reference(dialogue, &generator, &prompts, &sampling)?;
        Ok(LabeledSummary {
            id: format!("fakeref-{}", dialogue.id),
            dialogue_id: dialogue.id.clone(),
            system: "pseudo-ref".into(),
            text: pseudo.text,
            label: Label::Positive,
            neg_type: None,
            negative_indices: Default::default(),
        })
    });
    let records: Vec<LabeledSummary> = results.into_iter().collect::<Result<_, _>>()?;
    save_summaries(&records, &args.out)?;
    eprintln!(
        "fakerefs: wrote {} pseudo-references to {}",
        records.len(),
        args.out.display()
    );
    Ok(())
}

fn select_prompts(
    prompts: Vec<PromptTemplate>,
    selection: &str,
) -> Result<Vec<PromptTemplate>, CliError> {
    selection
        .split(',')
        .map(|raw| {
            let id = raw.trim();
            prompts
                .iter()
                .find(|p| p.id == id)
                .cloned()
                .ok_or_else(|| usage(format!("unknown prompt id {id:?}")))
        })
        .collect()
}
