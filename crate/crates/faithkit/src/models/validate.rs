//! Contract-enforcing wrapper usable around any backend.
//!
//! `Validated<B>` re-checks each interface's invariants on every call and
//! turns violations into [`ModelError::Contract`] naming the interface.
//! Intended for tests and for vetting external adapters; the checks cost an
//! extra pass over each result (and a second generation call for the
//! determinism check), so hot paths use the raw backend.

use crate::models::{
    validate_spans, ConditionalScorer, Encoding, EntitySpan, EntityTagger, Generator, Infiller,
    ModelError, PromptTemplate, SamplingConfig, SpannedToken, TokenConsistencyAligner,
    TokenEncoder, MASK_PLACEHOLDER,
};

#[derive(Debug, Clone)]
pub struct Validated<B>(pub B);

fn contract(interface: &'static str, detail: String) -> ModelError {
    ModelError::Contract { interface, detail }
}

impl<B: ConditionalScorer> ConditionalScorer for Validated<B> {
    fn segment_target(&self, target: &str) -> Result<Vec<SpannedToken>, ModelError> {
        self.0.segment_target(target)
    }

    fn token_logprobs(&self, source: &str, target: &str) -> Result<Vec<f64>, ModelError> {
        let logprobs = self.0.token_logprobs(source, target)?;
        let expected = self.0.segment_target(target)?.len();
        if logprobs.len() != expected {
            return Err(contract(
                "ConditionalScorer",
                format!("{} log-probabilities for {expected} target tokens", logprobs.len()),
            ));
        }
        if let Some(bad) = logprobs.iter().find(|x| !x.is_finite() || **x > 0.0) {
            return Err(contract(
                "ConditionalScorer",
                format!("log-probability {bad} is not a finite nonpositive number"),
            ));
        }
        Ok(logprobs)
    }
}

impl<B: Generator> Generator for Validated<B> {
    fn generate(
        &self,
        source: &str,
        template: &PromptTemplate,
        cfg: &SamplingConfig,
    ) -> Result<String, ModelError> {
        let first = self.0.generate(source, template, cfg)?;
        let second = self.0.generate(source, template, cfg)?;
        if first != second {
            return Err(contract(
                "Generator",
                format!("nondeterministic output for fixed config: {first:?} vs {second:?}"),
            ));
        }
        Ok(first)
    }
}

impl<B: TokenEncoder> TokenEncoder for Validated<B> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn encode(&self, text: &str) -> Result<Encoding, ModelError> {
        let encoding = self.0.encode(text)?;
        if encoding.vectors.len() != encoding.tokens.len() {
            return Err(contract(
                "TokenEncoder",
                format!(
                    "{} vectors for {} tokens",
                    encoding.vectors.len(),
                    encoding.tokens.len()
                ),
            ));
        }
        let dim = self.0.dim();
        if let Some(v) = encoding.vectors.iter().find(|v| v.len() != dim) {
            return Err(contract(
                "TokenEncoder",
                format!("vector of dimension {} from a dimension-{dim} encoder", v.len()),
            ));
        }
        Ok(encoding)
    }
}

impl<B: Infiller> Infiller for Validated<B> {
    fn infill(&self, masked_text: &str) -> Result<String, ModelError> {
        let filled = self.0.infill(masked_text)?;
        if filled.contains(MASK_PLACEHOLDER) {
            return Err(contract(
                "Infiller",
                format!("residual mask placeholder in {filled:?}"),
            ));
        }
        // Unmasked text must survive verbatim, in order.
        let mut rest = filled.as_str();
        for (i, part) in masked_text.split(MASK_PLACEHOLDER).enumerate() {
            match rest.find(part) {
                Some(pos) if i == 0 && pos != 0 => {
                    return Err(contract(
                        "Infiller",
                        format!("leading unmasked text {part:?} not preserved"),
                    ));
                }
                Some(pos) => rest = &rest[pos + part.len()..],
                None => {
                    return Err(contract(
                        "Infiller",
                        format!("unmasked text {part:?} missing from output"),
                    ));
                }
            }
        }
        if !masked_text.ends_with(MASK_PLACEHOLDER) && !rest.is_empty() {
            return Err(contract(
                "Infiller",
                format!("trailing content {rest:?} appended after unmasked text"),
            ));
        }
        Ok(filled)
    }
}

impl<B: EntityTagger> EntityTagger for Validated<B> {
    fn tag(&self, text: &str) -> Result<Vec<EntitySpan>, ModelError> {
        let spans = self.0.tag(text)?;
        validate_spans(text, &spans).map_err(|detail| contract("EntityTagger", detail))?;
        Ok(spans)
    }
}

impl<B: TokenConsistencyAligner> TokenConsistencyAligner for Validated<B> {
    fn hypothesis_tokens(&self, hypothesis: &str) -> Result<Vec<String>, ModelError> {
        self.0.hypothesis_tokens(hypothesis)
    }

    fn align(&self, source: &str, hypothesis: &str) -> Result<Vec<f64>, ModelError> {
        let values = self.0.align(source, hypothesis)?;
        let expected = self.0.hypothesis_tokens(hypothesis)?.len();
        if values.len() != expected {
            return Err(contract(
                "TokenConsistencyAligner",
                format!("{} probabilities for {expected} hypothesis tokens", values.len()),
            ));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(contract(
                "TokenConsistencyAligner",
                format!("probability {bad} outside [0, 1]"),
            ));
        }
        Ok(values)
    }
}
