//! Deterministic tokenizer and the ROUGE family of overlap metrics.
//!
//! The tokenizer here is the *toolkit* tokenizer: token positions stored in
//! corpora (negative-token indices) are always defined against it, never
//! against any model's subword scheme.

use std::collections::HashMap;

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexicalError {
    #[error("n-gram order must be at least 1, got {0}")]
    InvalidNgramOrder(usize),
}

/// An ordered token sequence produced by [`tokenize`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSeq {
    tokens: Vec<String>,
}

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> Self {
        debug_assert!(tokens.iter().all(|t| !t.is_empty()));
        Self { tokens }
    }

    pub fn from_words(words: &[&str]) -> Self {
        Self::new(words.iter().map(|w| w.to_string()).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Space-joins the tokens back into a single string.
    pub fn join(&self) -> String {
        self.tokens.join(" ")
    }
}

/// A token plus its `[start, end)` character span in the original text.
///
/// Spans always index the text as passed in. For the toolkit tokenizer the
/// token text is normalized (NFC + lowercase) and may differ from the raw
/// slice by case; model backends produce these with their own conventions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpannedToken {
    pub token: String,
    pub char_start: usize,
    pub char_end: usize,
}

/// Default tokenization pipeline: NFC-normalize, lowercase, split on
/// whitespace, and peel leading/trailing ASCII punctuation into separate
/// single-character tokens. Deterministic; empty input yields an empty
/// sequence.
pub fn tokenize(text: &str) -> TokenSeq {
    TokenSeq::new(
        tokenize_with_spans(text)
            .into_iter()
            .map(|t| t.token)
            .collect(),
    )
}

/// Like [`tokenize`] but keeps the character span of every token, which the
/// training module needs to align toolkit positions with model segmentations.
pub fn tokenize_with_spans(text: &str) -> Vec<SpannedToken> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_chunk(&chars, start, i, &mut out);
    }
    out
}

// Peels punctuation off both ends of a whitespace-delimited chunk. The core
// keeps internal punctuation ("i'll" stays one token).
fn split_chunk(chars: &[char], start: usize, end: usize, out: &mut Vec<SpannedToken>) {
    let mut lo = start;
    let mut hi = end;
    let mut leading = Vec::new();
    while lo < hi && chars[lo].is_ascii_punctuation() {
        leading.push((lo, lo + 1));
        lo += 1;
    }
    let mut trailing = Vec::new();
    while hi > lo && chars[hi - 1].is_ascii_punctuation() {
        trailing.push((hi - 1, hi));
        hi -= 1;
    }
    trailing.reverse();

    let mut push = |s: usize, e: usize| {
        out.push(SpannedToken {
            token: normalize_token(&chars[s..e]),
            char_start: s,
            char_end: e,
        });
    };
    for (s, e) in leading {
        push(s, e);
    }
    if lo < hi {
        push(lo, hi);
    }
    for (s, e) in trailing {
        push(s, e);
    }
}

fn normalize_token(chars: &[char]) -> String {
    chars
        .iter()
        .collect::<String>()
        .nfc()
        .collect::<String>()
        .to_lowercase()
}

/// Precision/recall/F1 triple shared by the overlap metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl OverlapScore {
    /// Builds the triple, deriving F1 as the harmonic mean (0 when P+R is
    /// not positive).
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }

    pub const ZERO: OverlapScore = OverlapScore {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
}

/// ROUGE-N: clipped n-gram overlap between hypothesis and reference.
///
/// An empty hypothesis or reference (after n-gram extraction) scores 0 on
/// every component rather than erroring; degenerate generations must not
/// abort a metric pipeline.
pub fn rouge_n(hyp: &TokenSeq, reference: &TokenSeq, n: usize) -> Result<OverlapScore, LexicalError> {
    if n == 0 {
        return Err(LexicalError::InvalidNgramOrder(n));
    }
    let hyp_grams = ngram_counts(hyp.tokens(), n);
    let ref_grams = ngram_counts(reference.tokens(), n);
    let hyp_total: usize = hyp_grams.values().sum();
    let ref_total: usize = ref_grams.values().sum();
    if hyp_total == 0 || ref_total == 0 {
        return Ok(OverlapScore::ZERO);
    }
    let overlap: usize = hyp_grams
        .iter()
        .map(|(gram, count)| count.min(ref_grams.get(gram).unwrap_or(&0)))
        .sum();
    Ok(OverlapScore::new(
        overlap as f64 / hyp_total as f64,
        overlap as f64 / ref_total as f64,
    ))
}

fn ngram_counts<'a>(tokens: &'a [String], n: usize) -> HashMap<&'a [String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// ROUGE-L: longest-common-subsequence overlap. P = LCS/|hyp|, R = LCS/|ref|.
pub fn rouge_l(hyp: &TokenSeq, reference: &TokenSeq) -> OverlapScore {
    if hyp.is_empty() || reference.is_empty() {
        return OverlapScore::ZERO;
    }
    let lcs = lcs_length(hyp.tokens(), reference.tokens()) as f64;
    OverlapScore::new(lcs / hyp.len() as f64, lcs / reference.len() as f64)
}

/// Length of the longest common subsequence of two token slices.
pub fn lcs_length(a: &[String], b: &[String]) -> usize {
    lcs_table(a, b)[a.len()][b.len()]
}

/// LCS alignment: for every position of `a`, the matched position in `b`
/// (or `None` when the token is unmatched). Ties in the DP backtrace are
/// broken by a fixed rule so the alignment is deterministic.
pub fn lcs_align(a: &[String], b: &[String]) -> Vec<Option<usize>> {
    let dp = lcs_table(a, b);
    let mut matched = vec![None; a.len()];
    let (mut i, mut j) = (a.len(), b.len());
    while i > 0 && j > 0 {
        if a[i - 1] == b[j - 1] {
            matched[i - 1] = Some(j - 1);
            i -= 1;
            j -= 1;
        } else if dp[i - 1][j] >= dp[i][j - 1] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    matched
}

fn lcs_table(a: &[String], b: &[String]) -> Vec<Vec<usize>> {
    let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 0..a.len() {
        for j in 0..b.len() {
            dp[i + 1][j + 1] = if a[i] == b[j] {
                dp[i][j] + 1
            } else {
                dp[i + 1][j].max(dp[i][j + 1])
            };
        }
    }
    dp
}
