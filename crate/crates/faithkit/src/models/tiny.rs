//! A small trainable conditional sequence model.
//!
//! The architecture is a miniature encoder-decoder over a closed
//! vocabulary: a tanh RNN encoder reads the source and conditions a tanh
//! RNN decoder through two channels (final encoder state and mean of
//! encoder states), the decoder state feeds a softmax over the vocabulary,
//! and all gradients are computed by hand-rolled backpropagation through
//! time. At the default sizes the model has a few thousand parameters,
//! which is enough to learn the synthetic corpora this crate trains on
//! while keeping every test CPU-cheap and bit-deterministic.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lexical;
use crate::models::{
    ConditionalScorer, Encoding, Generator, ModelError, PromptTemplate, SamplingConfig,
    SamplingStrategy, SequenceObjective, SpannedToken, TokenEncoder, TrainableModel,
};

/// Begin-of-sequence sentinel; must be present in the vocabulary.
pub const BOS: &str = "<s>";
/// End-of-sequence sentinel; must be present in the vocabulary.
pub const EOS: &str = "</s>";

const MAX_PARAMS: usize = 100_000;

#[derive(Debug, Clone)]
pub struct TinyModel {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    bos_id: usize,
    eos_id: usize,
    theta: Vec<f64>,
}

// Flat parameter layout: embeddings; encoder input/recurrent projections
// and bias; decoder projections for previous token, decoder state, mean
// encoder state, final encoder state, and bias; output projection and bias.
#[derive(Clone, Copy)]
struct Layout {
    v: usize,
    d: usize,
}

impl Layout {
    fn embed(self, token: usize, k: usize) -> usize {
        token * self.d + k
    }
    fn mat(self, slot: usize, i: usize, j: usize) -> usize {
        self.v * self.d + slot * self.d * self.d + i * self.d + j
    }
    fn wex(self, i: usize, j: usize) -> usize {
        self.mat(0, i, j)
    }
    fn weh(self, i: usize, j: usize) -> usize {
        self.mat(1, i, j)
    }
    fn wx(self, i: usize, j: usize) -> usize {
        self.mat(2, i, j)
    }
    fn wh(self, i: usize, j: usize) -> usize {
        self.mat(3, i, j)
    }
    fn wc(self, i: usize, j: usize) -> usize {
        self.mat(4, i, j)
    }
    fn wf(self, i: usize, j: usize) -> usize {
        self.mat(5, i, j)
    }
    fn be(self, i: usize) -> usize {
        self.v * self.d + 6 * self.d * self.d + i
    }
    fn bh(self, i: usize) -> usize {
        self.v * self.d + 6 * self.d * self.d + self.d + i
    }
    fn wo(self, token: usize, j: usize) -> usize {
        self.v * self.d + 6 * self.d * self.d + 2 * self.d + token * self.d + j
    }
    fn bo(self, token: usize) -> usize {
        2 * self.v * self.d + 6 * self.d * self.d + 2 * self.d + token
    }
    fn total(self) -> usize {
        2 * self.v * self.d + 6 * self.d * self.d + 2 * self.d + self.v
    }
}

/// Builds a tiny model with deterministic parameter initialization.
///
/// The vocabulary must contain the [`BOS`] and [`EOS`] sentinels, have no
/// duplicates, and every other entry must be a single toolkit token (so that
/// text produced by the model re-tokenizes to known tokens).
pub fn make_tiny_model(vocab: Vec<String>, dim: usize, seed: u64) -> Result<TinyModel, ModelError> {
    if dim < 2 {
        return Err(ModelError::InvalidArgument(format!(
            "model dimension must be at least 2, got {dim}"
        )));
    }
    let mut index = HashMap::new();
    for (i, token) in vocab.iter().enumerate() {
        if token.is_empty() {
            return Err(ModelError::InvalidArgument(
                "vocabulary contains an empty token".into(),
            ));
        }
        if token != BOS && token != EOS && lexical::tokenize(token).tokens() != [token.as_str()] {
            return Err(ModelError::InvalidArgument(format!(
                "vocabulary entry \"{token}\" is not a single toolkit token"
            )));
        }
        if index.insert(token.clone(), i).is_some() {
            return Err(ModelError::InvalidArgument(format!(
                "duplicate vocabulary entry \"{token}\""
            )));
        }
    }
    let bos_id = *index
        .get(BOS)
        .ok_or_else(|| ModelError::InvalidArgument(format!("vocabulary is missing {BOS}")))?;
    let eos_id = *index
        .get(EOS)
        .ok_or_else(|| ModelError::InvalidArgument(format!("vocabulary is missing {EOS}")))?;
    let layout = Layout {
        v: vocab.len(),
        d: dim,
    };
    if layout.total() > MAX_PARAMS {
        return Err(ModelError::InvalidArgument(format!(
            "{} parameters exceed the {MAX_PARAMS} budget",
            layout.total()
        )));
    }
    // Fan-in-scaled weights, moderate embeddings, zero biases.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = vec![0.0; layout.total()];
    let embed_scale = 0.5;
    let weight_scale = (3.0 / dim as f64).sqrt();
    for v in 0..layout.v {
        for k in 0..dim {
            theta[layout.embed(v, k)] = rng.gen_range(-embed_scale..embed_scale);
        }
    }
    for slot in 0..6 {
        for i in 0..dim {
            for j in 0..dim {
                theta[layout.mat(slot, i, j)] = rng.gen_range(-weight_scale..weight_scale);
            }
        }
    }
    for v in 0..layout.v {
        for j in 0..dim {
            theta[layout.wo(v, j)] = rng.gen_range(-weight_scale..weight_scale);
        }
    }
    Ok(TinyModel {
        vocab,
        index,
        dim,
        bos_id,
        eos_id,
        theta,
    })
}

// Encoder pass over the source: per-token states plus the two conditioning
// channels derived from them (mean state and final state).
struct EncoderPass {
    states: Vec<Vec<f64>>,
    mean: Vec<f64>,
    last: Vec<f64>,
}

struct Forward {
    enc: EncoderPass,
    input_ids: Vec<usize>,
    states: Vec<Vec<f64>>,
    probs: Vec<Vec<f64>>,
}

impl TinyModel {
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn layout(&self) -> Layout {
        Layout {
            v: self.vocab.len(),
            d: self.dim,
        }
    }

    fn lookup_tokens(&self, text: &str) -> Result<Vec<usize>, ModelError> {
        lexical::tokenize(text)
            .tokens()
            .iter()
            .map(|t| {
                self.index
                    .get(t)
                    .copied()
                    .ok_or_else(|| ModelError::UnknownToken { token: t.clone() })
            })
            .collect()
    }

    // The conditioning pass feeds the source to the encoder reversed, so
    // the final state sits closest to the beginning of the dialogue (the
    // short-path trick; early tokens carry speaker identity).
    fn conditioning_ids(src_ids: &[usize]) -> Vec<usize> {
        src_ids.iter().rev().copied().collect()
    }

    // Runs the encoder over the given token sequence; empty input yields
    // zero channels.
    fn encode_source(&self, src_ids: &[usize]) -> EncoderPass {
        let lay = self.layout();
        let d = self.dim;
        let mut states: Vec<Vec<f64>> = Vec::with_capacity(src_ids.len());
        let mut h = vec![0.0; d];
        for &s in src_ids {
            let mut next = vec![0.0; d];
            for i in 0..d {
                let mut u = self.theta[lay.be(i)];
                for j in 0..d {
                    u += self.theta[lay.wex(i, j)] * self.theta[lay.embed(s, j)];
                    u += self.theta[lay.weh(i, j)] * h[j];
                }
                next[i] = u.tanh();
            }
            states.push(next.clone());
            h = next;
        }
        let mut mean = vec![0.0; d];
        if !states.is_empty() {
            let scale = 1.0 / states.len() as f64;
            for state in &states {
                for j in 0..d {
                    mean[j] += state[j] * scale;
                }
            }
        }
        let last = states.last().cloned().unwrap_or_else(|| vec![0.0; d]);
        EncoderPass { states, mean, last }
    }

    // One decoder step: consumes `input_id`, returns the new state and the
    // distribution over the following token.
    fn step(&self, prev_h: &[f64], input_id: usize, enc: &EncoderPass) -> (Vec<f64>, Vec<f64>) {
        let lay = self.layout();
        let d = self.dim;
        let mut h = vec![0.0; d];
        for i in 0..d {
            let mut u = self.theta[lay.bh(i)];
            for j in 0..d {
                u += self.theta[lay.wx(i, j)] * self.theta[lay.embed(input_id, j)];
                u += self.theta[lay.wh(i, j)] * prev_h[j];
                u += self.theta[lay.wc(i, j)] * enc.mean[j];
                u += self.theta[lay.wf(i, j)] * enc.last[j];
            }
            h[i] = u.tanh();
        }
        let mut z = vec![0.0; self.vocab.len()];
        for (v, zv) in z.iter_mut().enumerate() {
            let mut acc = self.theta[lay.bo(v)];
            for j in 0..d {
                acc += self.theta[lay.wo(v, j)] * h[j];
            }
            *zv = acc;
        }
        (h, softmax(&z))
    }

    fn forward(&self, src_ids: &[usize], tgt_ids: &[usize]) -> Forward {
        let enc = self.encode_source(&Self::conditioning_ids(src_ids));
        let mut input_ids = Vec::with_capacity(tgt_ids.len());
        let mut states = Vec::with_capacity(tgt_ids.len());
        let mut probs = Vec::with_capacity(tgt_ids.len());
        let mut h = vec![0.0; self.dim];
        let mut prev = self.bos_id;
        for &y in tgt_ids {
            let (nh, p) = self.step(&h, prev, &enc);
            input_ids.push(prev);
            states.push(nh.clone());
            probs.push(p);
            h = nh;
            prev = y;
        }
        Forward {
            enc,
            input_ids,
            states,
            probs,
        }
    }

    /// Distribution over the next token after teacher-forcing the given
    /// target prefix. Sums to one up to floating-point error.
    pub fn next_token_distribution(
        &self,
        source: &str,
        target_prefix: &str,
    ) -> Result<Vec<f64>, ModelError> {
        let src_ids = self.lookup_tokens(source)?;
        let prefix_ids = self.lookup_tokens(target_prefix)?;
        let enc = self.encode_source(&Self::conditioning_ids(&src_ids));
        let mut h = vec![0.0; self.dim];
        let mut prev = self.bos_id;
        let mut p = Vec::new();
        for id in prefix_ids.iter().copied().chain(std::iter::once(usize::MAX)) {
            let (nh, np) = self.step(&h, prev, &enc);
            p = np;
            if id == usize::MAX {
                break;
            }
            h = nh;
            prev = id;
        }
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let checkpoint = Checkpoint {
            vocab: self.vocab.clone(),
            dim: self.dim,
            theta: self.theta.clone(),
        };
        let json = serde_json::to_string(&checkpoint)
            .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let json =
            std::fs::read_to_string(path).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let checkpoint: Checkpoint =
            serde_json::from_str(&json).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let mut model = make_tiny_model(checkpoint.vocab, checkpoint.dim, 0)?;
        if checkpoint.theta.len() != model.theta.len() {
            return Err(ModelError::Checkpoint(format!(
                "parameter count {} does not match the {} expected for this shape",
                checkpoint.theta.len(),
                model.theta.len()
            )));
        }
        model.theta = checkpoint.theta;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    vocab: Vec<String>,
    dim: usize,
    theta: Vec<f64>,
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / total).collect()
}

impl ConditionalScorer for TinyModel {
    fn segment_target(&self, target: &str) -> Result<Vec<SpannedToken>, ModelError> {
        let spans = lexical::tokenize_with_spans(target);
        for s in &spans {
            if !self.index.contains_key(&s.token) {
                return Err(ModelError::UnknownToken {
                    token: s.token.clone(),
                });
            }
        }
        Ok(spans)
    }

    fn token_logprobs(&self, source: &str, target: &str) -> Result<Vec<f64>, ModelError> {
        let src_ids = self.lookup_tokens(source)?;
        let tgt_ids = self.lookup_tokens(target)?;
        let fwd = self.forward(&src_ids, &tgt_ids);
        Ok(tgt_ids
            .iter()
            .zip(&fwd.probs)
            .map(|(&y, p)| p[y].ln())
            .collect())
    }
}

impl Generator for TinyModel {
    fn generate(
        &self,
        source: &str,
        template: &PromptTemplate,
        cfg: &SamplingConfig,
    ) -> Result<String, ModelError> {
        if let SamplingStrategy::TopP { p } = cfg.strategy {
            if !(p > 0.0 && p <= 1.0) {
                return Err(ModelError::InvalidArgument(format!(
                    "top-p value must be in (0, 1], got {p}"
                )));
            }
        }
        let conditioned = template.apply(source);
        let src_ids = self.lookup_tokens(&conditioned)?;
        let enc = self.encode_source(&Self::conditioning_ids(&src_ids));
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut h = vec![0.0; self.dim];
        let mut prev = self.bos_id;
        let mut words: Vec<String> = Vec::new();
        for _ in 0..cfg.max_len {
            let (nh, mut p) = self.step(&h, prev, &enc);
            h = nh;
            // The begin sentinel is never emitted as text.
            p[self.bos_id] = 0.0;
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= total);
            let next = match cfg.strategy {
                SamplingStrategy::Greedy => argmax(&p),
                SamplingStrategy::TopP { p: top_p } => sample_top_p(&p, top_p, &mut rng),
            };
            if next == self.eos_id {
                break;
            }
            words.push(self.vocab[next].clone());
            prev = next;
        }
        Ok(words.join(" "))
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}

fn sample_top_p(p: &[f64], top_p: f64, rng: &mut ChaCha8Rng) -> usize {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).unwrap().then(a.cmp(&b)));
    let mut nucleus = Vec::new();
    let mut mass = 0.0;
    for &i in &order {
        nucleus.push(i);
        mass += p[i];
        if top_p < 1.0 && mass >= top_p {
            break;
        }
    }
    let draw = rng.gen::<f64>() * mass;
    let mut cum = 0.0;
    for &i in &nucleus {
        cum += p[i];
        if draw < cum {
            return i;
        }
    }
    *nucleus.last().expect("nucleus is never empty")
}

impl TokenEncoder for TinyModel {
    fn dim(&self) -> usize {
        self.dim
    }

    // Encoder states rather than raw embeddings, so the vectors reflect
    // left context.
    fn encode(&self, text: &str) -> Result<Encoding, ModelError> {
        let ids = self.lookup_tokens(text)?;
        let tokens = lexical::tokenize(text).tokens().to_vec();
        let vectors = self.encode_source(&ids).states;
        Ok(Encoding { tokens, vectors })
    }
}

impl TrainableModel for TinyModel {
    fn param_count(&self) -> usize {
        self.theta.len()
    }

    fn param(&self, i: usize) -> f64 {
        self.theta[i]
    }

    fn set_param(&mut self, i: usize, value: f64) {
        self.theta[i] = value;
    }

    fn loss_and_grad(
        &self,
        source: &str,
        target: &str,
        objective: &SequenceObjective,
    ) -> Result<(f64, Vec<f64>), ModelError> {
        let lay = self.layout();
        let d = self.dim;
        let src_ids = self.lookup_tokens(source)?;
        let tgt_ids = self.lookup_tokens(target)?;
        let steps = tgt_ids.len();
        if steps == 0 {
            return Ok((0.0, vec![0.0; self.theta.len()]));
        }
        let fwd = self.forward(&src_ids, &tgt_ids);

        // Per-step dL/dz, None where the objective has no term.
        let mut dzs: Vec<Option<Vec<f64>>> = vec![None; steps];
        let mut loss = 0.0;
        match objective {
            SequenceObjective::Likelihood => {
                for t in 0..steps {
                    let y = tgt_ids[t];
                    let p = &fwd.probs[t];
                    loss -= p[y].ln();
                    let mut dz = p.clone();
                    dz[y] -= 1.0;
                    dzs[t] = Some(dz);
                }
            }
            SequenceObjective::Unlikelihood {
                negative_positions,
                alpha,
                prob_ceiling_eps,
            } => {
                if *alpha < 0.0 {
                    return Err(ModelError::InvalidArgument(format!(
                        "unlikelihood weight must be nonnegative, got {alpha}"
                    )));
                }
                if !(*prob_ceiling_eps > 0.0 && *prob_ceiling_eps < 0.5) {
                    return Err(ModelError::InvalidArgument(format!(
                        "probability ceiling epsilon must be in (0, 0.5), got {prob_ceiling_eps}"
                    )));
                }
                let ceiling = 1.0 - prob_ceiling_eps;
                for &t in negative_positions {
                    if t >= steps {
                        return Err(ModelError::InvalidArgument(format!(
                            "negative position {t} out of range for {steps} target tokens"
                        )));
                    }
                    let y = tgt_ids[t];
                    let p = &fwd.probs[t];
                    let py = p[y];
                    let clamped = py.min(ceiling);
                    loss -= alpha * (1.0 - clamped).ln();
                    if py < ceiling && *alpha > 0.0 {
                        // d(-alpha ln(1-p_y))/dz = alpha * p_y/(1-p_y) * (onehot(y) - p)
                        let coeff = alpha * py / (1.0 - py);
                        let mut dz: Vec<f64> = p.iter().map(|&pj| -coeff * pj).collect();
                        dz[y] += coeff;
                        dzs[t] = Some(dz);
                    }
                }
            }
        }

        // Backpropagation through time, decoder first.
        let mut grad = vec![0.0; self.theta.len()];
        let mut dmean = vec![0.0; d];
        let mut dlast = vec![0.0; d];
        let mut dh_next = vec![0.0; d];
        let zeros = vec![0.0; d];
        for t in (0..steps).rev() {
            let h_t = &fwd.states[t];
            let mut dh = std::mem::replace(&mut dh_next, vec![0.0; d]);
            if let Some(dz) = &dzs[t] {
                for (v, &g) in dz.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    grad[lay.bo(v)] += g;
                    for j in 0..d {
                        grad[lay.wo(v, j)] += g * h_t[j];
                        dh[j] += self.theta[lay.wo(v, j)] * g;
                    }
                }
            }
            let du: Vec<f64> = (0..d).map(|i| dh[i] * (1.0 - h_t[i] * h_t[i])).collect();
            let x_id = fwd.input_ids[t];
            let h_prev: &[f64] = if t > 0 { &fwd.states[t - 1] } else { &zeros };
            for i in 0..d {
                if du[i] == 0.0 {
                    continue;
                }
                grad[lay.bh(i)] += du[i];
                for j in 0..d {
                    grad[lay.wx(i, j)] += du[i] * self.theta[lay.embed(x_id, j)];
                    grad[lay.wh(i, j)] += du[i] * h_prev[j];
                    grad[lay.wc(i, j)] += du[i] * fwd.enc.mean[j];
                    grad[lay.wf(i, j)] += du[i] * fwd.enc.last[j];
                }
            }
            for j in 0..d {
                let mut de = 0.0;
                let mut dc = 0.0;
                let mut df = 0.0;
                let mut dhn = 0.0;
                for i in 0..d {
                    de += self.theta[lay.wx(i, j)] * du[i];
                    dc += self.theta[lay.wc(i, j)] * du[i];
                    df += self.theta[lay.wf(i, j)] * du[i];
                    dhn += self.theta[lay.wh(i, j)] * du[i];
                }
                grad[lay.embed(x_id, j)] += de;
                dmean[j] += dc;
                dlast[j] += df;
                dh_next[j] = dhn;
            }
        }

        // Encoder BPTT over the conditioning (reversed) sequence: the mean
        // channel feeds every state, the last channel only the final one.
        let cond_ids = Self::conditioning_ids(&src_ids);
        let src_len = cond_ids.len();
        if src_len > 0 {
            let mean_scale = 1.0 / src_len as f64;
            let mut denc_next = vec![0.0; d];
            for t in (0..src_len).rev() {
                let h_t = &fwd.enc.states[t];
                let mut dh: Vec<f64> = (0..d).map(|j| dmean[j] * mean_scale).collect();
                if t == src_len - 1 {
                    for j in 0..d {
                        dh[j] += dlast[j];
                    }
                }
                for j in 0..d {
                    dh[j] += denc_next[j];
                }
                let du: Vec<f64> = (0..d).map(|i| dh[i] * (1.0 - h_t[i] * h_t[i])).collect();
                let s_id = cond_ids[t];
                let h_prev: &[f64] = if t > 0 { &fwd.enc.states[t - 1] } else { &zeros };
                for i in 0..d {
                    if du[i] == 0.0 {
                        continue;
                    }
                    grad[lay.be(i)] += du[i];
                    for j in 0..d {
                        grad[lay.wex(i, j)] += du[i] * self.theta[lay.embed(s_id, j)];
                        grad[lay.weh(i, j)] += du[i] * h_prev[j];
                    }
                }
                for j in 0..d {
                    let mut de = 0.0;
                    let mut dhn = 0.0;
                    for i in 0..d {
                        de += self.theta[lay.wex(i, j)] * du[i];
                        dhn += self.theta[lay.weh(i, j)] * du[i];
                    }
                    grad[lay.embed(s_id, j)] += de;
                    denc_next[j] = dhn;
                }
            }
        }
        Ok((loss, grad))
    }

    fn gradient_step(&mut self, grad: &[f64], learning_rate: f64) {
        assert_eq!(grad.len(), self.theta.len());
        for (t, g) in self.theta.iter_mut().zip(grad) {
            *t -= learning_rate * g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn test_vocab() -> Vec<String> {
        [
            BOS, EOS, "amanda", "jerry", "baked", "cookies", "will", "bring", "some", "tomorrow",
            ".", "a", "b", "c",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }

    fn test_model(seed: u64) -> TinyModel {
        make_tiny_model(test_vocab(), 4, seed).unwrap()
    }

    #[test]
    fn construction_is_seed_deterministic() {
        let m1 = test_model(7);
        let m2 = test_model(7);
        assert_eq!(m1.theta, m2.theta);
        let m3 = test_model(8);
        assert_ne!(m1.theta, m3.theta);
    }

    #[test]
    fn requires_sentinels_and_min_dim() {
        assert!(make_tiny_model(vec!["a".into()], 4, 0).is_err());
        assert!(make_tiny_model(test_vocab(), 1, 0).is_err());
    }

    #[test]
    fn rejects_multi_token_vocab_entries() {
        let mut vocab = test_vocab();
        vocab.push("two words".into());
        assert!(make_tiny_model(vocab, 4, 0).is_err());
    }

    #[test]
    fn distribution_sums_to_one_for_any_prefix() {
        let m = test_model(3);
        for prefix in ["", "amanda", "amanda baked", "amanda baked cookies ."] {
            let p = m.next_token_distribution("jerry will bring some", prefix).unwrap();
            let total: f64 = p.iter().sum();
            assert!((total - 1.0).abs() < 1e-6, "prefix {prefix:?}: {total}");
        }
    }

    #[test]
    fn unknown_token_is_reported_by_name() {
        let m = test_model(0);
        let err = m.token_logprobs("amanda", "zebra").unwrap_err();
        match err {
            ModelError::UnknownToken { token } => assert_eq!(token, "zebra"),
            other => panic!("expected UnknownToken, got {other:?}"),
        }
    }

    #[test]
    fn logprobs_are_nonpositive_and_match_segmentation() {
        let m = test_model(0);
        let target = "amanda baked cookies .";
        let lp = m.token_logprobs("jerry will bring some", target).unwrap();
        assert_eq!(lp.len(), m.segment_target(target).unwrap().len());
        assert!(lp.iter().all(|&x| x <= 0.0));
    }

    #[test]
    fn greedy_generation_is_deterministic() {
        let m = test_model(5);
        let t = PromptTemplate::identity();
        let cfg = SamplingConfig::greedy(8);
        assert_eq!(
            m.generate("amanda baked", &t, &cfg).unwrap(),
            m.generate("amanda baked", &t, &cfg).unwrap()
        );
    }

    #[test]
    fn top_p_full_mass_is_seed_reproducible() {
        let m = test_model(5);
        let t = PromptTemplate::identity();
        let a = m
            .generate("amanda baked", &t, &SamplingConfig::top_p(1.0, 42, 10))
            .unwrap();
        let b = m
            .generate("amanda baked", &t, &SamplingConfig::top_p(1.0, 42, 10))
            .unwrap();
        assert_eq!(a, b);
        assert!(lexical::tokenize(&a).len() <= 10);
    }

    #[test]
    fn generated_text_stays_in_vocabulary() {
        let m = test_model(11);
        let t = PromptTemplate::identity();
        for seed in 0..20 {
            let text = m
                .generate("amanda baked cookies", &t, &SamplingConfig::top_p(1.0, seed, 12))
                .unwrap();
            if !text.is_empty() {
                assert!(m.lookup_tokens(&text).is_ok(), "unlookupable output {text:?}");
            }
        }
    }

    #[test]
    fn mle_loss_matches_negative_logprob_sum() {
        let m = test_model(2);
        let source = "jerry will bring some";
        let target = "amanda baked cookies .";
        let lp_sum: f64 = m.token_logprobs(source, target).unwrap().iter().sum();
        let (loss, _) = m
            .loss_and_grad(source, target, &SequenceObjective::Likelihood)
            .unwrap();
        assert!((loss + lp_sum).abs() < 1e-12);
    }

    fn finite_difference_check(objective: &SequenceObjective) {
        let mut m = test_model(9);
        let source = "jerry will bring some tomorrow";
        let target = "amanda baked cookies some .";
        let (_, grad) = m.loss_and_grad(source, target, objective).unwrap();
        let eps = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..m.param_count() {
            let orig = m.param(i);
            m.set_param(i, orig + eps);
            let (up, _) = m.loss_and_grad(source, target, objective).unwrap();
            m.set_param(i, orig - eps);
            let (down, _) = m.loss_and_grad(source, target, objective).unwrap();
            m.set_param(i, orig);
            let numeric = (up - down) / (2.0 * eps);
            let denom = grad[i].abs().max(numeric.abs());
            // Below ~1e-5 the central difference is dominated by f64
            // round-off in the loss sums, not by the gradient.
            if denom < 1e-5 {
                continue;
            }
            worst = worst.max((grad[i] - numeric).abs() / denom);
        }
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }

    #[test]
    fn mle_gradient_matches_central_differences() {
        finite_difference_check(&SequenceObjective::Likelihood);
    }

    #[test]
    fn unlikelihood_gradient_matches_central_differences() {
        finite_difference_check(&SequenceObjective::Unlikelihood {
            negative_positions: BTreeSet::from([0, 2]),
            alpha: 0.1,
            prob_ceiling_eps: 1e-6,
        });
    }

    #[test]
    fn checkpoint_round_trips_exactly() {
        let m = test_model(13);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save(&path).unwrap();
        let restored = TinyModel::load(&path).unwrap();
        assert_eq!(m.theta, restored.theta);
        assert_eq!(m.vocab, restored.vocab);
    }
}
