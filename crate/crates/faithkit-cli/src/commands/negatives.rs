//! `faithkit negatives`: corrupt positive summaries into labeled negatives.

use std::collections::HashMap;

use faithkit::corpus::{
    check_referential_integrity, load_dialogues, load_summaries, save_summaries, Dialogue, Label,
    LabeledSummary, NegType,
};
use faithkit::models::{EntityTagger, StubInfiller, TinyModel};
use faithkit::negatives::{hallucinate, mask_and_fill, swap_entities, NegativeSample};
use faithkit::par::{self, derive_seed};
use faithkit::training::synth_gazetteer;

use crate::backend::{corpus_vocab, load_gazetteer, tiny_model, Backend};
use crate::config::ConfigMap;
use crate::error::{usage, CliError};
use crate::NegativesArgs;

pub fn run(args: NegativesArgs, config: &ConfigMap, seed: u64) -> Result<(), CliError> {
    let types = parse_types(&config.resolve(
        args.types.clone(),
        "types",
        "swapent,maskent,hallu".into(),
    )?)?;
    let backend = Backend::parse(&config.resolve(args.backend.clone(), "backend", "tiny".into())?)?;
    let fill = config.resolve(args.fill.clone(), "fill", "someone".into())?;
    let max_len = config.resolve(args.max_len, "max-len", 12)?;
    eprintln!(
        "negatives: types={types:?} backend={backend:?} fill={fill:?} max_len={max_len} seed={seed}"
    );

    let dialogues = load_dialogues(&args.dialogues)?;
    let summaries = load_summaries(&args.summaries)?;
    check_referential_integrity(&dialogues, &summaries)?;
    let dialogue_by_id: HashMap<&str, &Dialogue> =
        dialogues.iter().map(|d| (d.id.as_str(), d)).collect();
    let references: Vec<&LabeledSummary> = summaries
        .iter()
        .filter(|s| s.label == Label::Positive)
        .collect();

    let tagger = match &args.gazetteer {
        Some(path) => load_gazetteer(path)?,
        None => synth_gazetteer(),
    };
    let infiller = StubInfiller::new(fill)?;
    let generator: Option<TinyModel> = if types.contains(&NegType::Hallu) {
        if backend != Backend::Tiny {
            return Err(usage(
                "hallu negatives need a sampling generator; use --backend tiny",
            ));
        }
        let vocab = corpus_vocab(&dialogues, &summaries, &[]);
        Some(tiny_model(args.model.as_deref(), vocab, 8, derive_seed(seed, 0xB0))?)
    } else {
        None
    };

    let produced: Vec<Result<Vec<LabeledSummary>, CliError>> =
        par::map_indexed(&references, |index, reference| {
            let reference_seed = derive_seed(seed, index as u64);
            let spans = tagger.tag(&reference.text)?;
            let mut out = Vec::new();
            for neg_type in &types {
                let sample: Option<NegativeSample> = match neg_type {
                    NegType::Swapent => {
                        swap_entities(&reference.text, &spans, derive_seed(reference_seed, 1))?
                    }
                    NegType::Maskent => mask_and_fill(
                        &reference.text,
                        &spans,
                        &infiller,
                        derive_seed(reference_seed, 2),
                    )?,
                    NegType::Hallu => {
                        let dialogue = dialogue_by_id[reference.dialogue_id.as_str()];
                        let generator = generator.as_ref().expect("generator built above");
                        Some(hallucinate(
                            dialogue,
                            generator,
                            derive_seed(reference_seed, 3),
                            max_len,
                        )?)
                    }
                };
                if let Some(sample) = sample {
                    let sample = sample.with_source_summary_id(&reference.id);
                    out.push(LabeledSummary {
                        id: format!("{}-{}", reference.id, sample.neg_type.as_str()),
                        dialogue_id: reference.dialogue_id.clone(),
                        system: sample.neg_type.as_str().to_string(),
                        text: sample.text,
                        label: Label::Negative,
                        neg_type: Some(sample.neg_type),
                        negative_indices: sample.negative_indices,
                    });
                }
            }
            Ok(out)
        });

    let mut records = Vec::new();
    for group in produced {
        records.extend(group?);
    }
    save_summaries(&records, &args.out)?;
    eprintln!(
        "negatives: wrote {} samples from {} references to {}",
        records.len(),
        references.len(),
        args.out.display()
    );
    Ok(())
}

fn parse_types(raw: &str) -> Result<Vec<NegType>, CliError> {
    let mut types = Vec::new();
    for part in raw.split(',') {
        let neg_type = match part.trim() {
            "swapent" => NegType::Swapent,
            "maskent" => NegType::Maskent,
            "hallu" => NegType::Hallu,
            other => {
                return Err(usage(format!(
                    "unknown negative type {other:?}; available: swapent, maskent, hallu"
                )))
            }
        };
        if !types.contains(&neg_type) {
            types.push(neg_type);
        }
    }
    if types.is_empty() {
        return Err(usage("at least one negative type is required"));
    }
    Ok(types)
}
