//! Embedding-similarity (greedy-matched cosine) and token-consistency
//! metrics over the encoder/aligner interfaces.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

use crate::lexical::OverlapScore;
use crate::models::{ModelError, TokenConsistencyAligner, TokenEncoder};

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("{side} is empty after encoding")]
    EmptyText { side: &'static str },
    #[error("IDF weighting requested without an IDF table")]
    MissingIdfTable,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}:{line}: bad IDF entry: {detail}")]
    IdfFile {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Greedy-matching embedding similarity between hypothesis and reference.
///
/// Precision is the (optionally IDF-weighted) mean over hypothesis tokens of
/// the best cosine similarity to any reference token; recall is symmetric;
/// F1 is their harmonic mean. Tokens missing from the IDF table weigh 1.
pub fn bertscore<E: TokenEncoder>(
    hyp: &str,
    reference: &str,
    encoder: &E,
    use_idf: bool,
    idf_table: Option<&HashMap<String, f64>>,
) -> Result<OverlapScore, SimilarityError> {
    let idf = if use_idf {
        Some(idf_table.ok_or(SimilarityError::MissingIdfTable)?)
    } else {
        None
    };
    let hyp_enc = encoder.encode(hyp)?;
    let ref_enc = encoder.encode(reference)?;
    if hyp_enc.tokens.is_empty() {
        return Err(SimilarityError::EmptyText { side: "hypothesis" });
    }
    if ref_enc.tokens.is_empty() {
        return Err(SimilarityError::EmptyText { side: "reference" });
    }
    let dim = encoder.dim();
    for v in hyp_enc.vectors.iter().chain(ref_enc.vectors.iter()) {
        if v.len() != dim {
            return Err(ModelError::Contract {
                interface: "TokenEncoder",
                detail: format!("vector of dimension {} from a dimension-{dim} encoder", v.len()),
            }
            .into());
        }
    }
    let precision = greedy_side(&hyp_enc.tokens, &hyp_enc.vectors, &ref_enc.vectors, idf);
    let recall = greedy_side(&ref_enc.tokens, &ref_enc.vectors, &hyp_enc.vectors, idf);
    Ok(OverlapScore::new(precision, recall))
}

fn greedy_side(
    tokens: &[String],
    vectors: &[Vec<f64>],
    other: &[Vec<f64>],
    idf: Option<&HashMap<String, f64>>,
) -> f64 {
    let mut weighted = 0.0;
    let mut weight_total = 0.0;
    for (token, vector) in tokens.iter().zip(vectors) {
        let best = other
            .iter()
            .map(|o| cosine(vector, o))
            .fold(f64::NEG_INFINITY, f64::max);
        let weight = idf
            .map(|table| table.get(token).copied().unwrap_or(1.0))
            .unwrap_or(1.0);
        weighted += weight * best;
        weight_total += weight;
    }
    if weight_total > 0.0 {
        weighted / weight_total
    } else {
        0.0
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Mean per-token consistency probability of the hypothesis against the
/// source, as judged by the aligner.
pub fn ctc_consistency<A: TokenConsistencyAligner>(
    source: &str,
    hyp: &str,
    aligner: &A,
) -> Result<f64, SimilarityError> {
    let values = aligner.align(source, hyp)?;
    if values.is_empty() {
        return Err(SimilarityError::EmptyText { side: "hypothesis" });
    }
    if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(ModelError::Contract {
            interface: "TokenConsistencyAligner",
            detail: format!("probability {bad} outside [0, 1]"),
        }
        .into());
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Loads a two-column `token idf` table (whitespace separated, `#` comments).
pub fn load_idf_table(path: impl AsRef<Path>) -> Result<HashMap<String, f64>, SimilarityError> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let file = File::open(path).map_err(|source| SimilarityError::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut table = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| SimilarityError::Io {
            path: path_str.clone(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let (token, value) = match (parts.next(), parts.next(), parts.next()) {
            (Some(t), Some(v), None) => (t, v),
            _ => {
                return Err(SimilarityError::IdfFile {
                    path: path_str,
                    line: line_no,
                    detail: "expected exactly two columns: token idf".into(),
                })
            }
        };
        let value: f64 = value.parse().map_err(|e| SimilarityError::IdfFile {
            path: path_str.clone(),
            line: line_no,
            detail: format!("bad idf value: {e}"),
        })?;
        table.insert(token.to_string(), value);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{HashEmbedEncoder, LookupEncoder, TokenTableAligner};
    use proptest::prelude::*;
    use std::io::Write as _;

    fn orthogonal_encoder() -> LookupEncoder {
        // e1, e2, e3 mutually orthogonal unit vectors.
        LookupEncoder::new(HashMap::from([
            ("p".to_string(), vec![1.0, 0.0, 0.0]),
            ("q".to_string(), vec![0.0, 1.0, 0.0]),
            ("r".to_string(), vec![0.0, 0.0, 1.0]),
        ]))
        .unwrap()
    }

    #[test]
    fn identical_texts_score_one() {
        let enc = orthogonal_encoder();
        let s = bertscore("p q", "p q", &enc, false, None).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn half_overlapping_orthogonal_tokens_score_half() {
        // hyp {e1, e2} vs ref {e1, e3}: each side matches one of two tokens.
        let enc = orthogonal_encoder();
        let s = bertscore("p q", "p r", &enc, false, None).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn empty_side_is_an_error() {
        let enc = orthogonal_encoder();
        assert!(matches!(
            bertscore("", "p", &enc, false, None),
            Err(SimilarityError::EmptyText { side: "hypothesis" })
        ));
        assert!(matches!(
            bertscore("p", "", &enc, false, None),
            Err(SimilarityError::EmptyText { side: "reference" })
        ));
    }

    #[test]
    fn idf_weighting_requires_a_table() {
        let enc = orthogonal_encoder();
        assert!(matches!(
            bertscore("p", "p", &enc, true, None),
            Err(SimilarityError::MissingIdfTable)
        ));
    }

    #[test]
    fn idf_weights_shift_precision_toward_heavy_tokens() {
        let enc = orthogonal_encoder();
        // "p" matches, "q" does not; weighting "p" higher raises precision.
        let idf = HashMap::from([("p".to_string(), 3.0), ("q".to_string(), 1.0)]);
        let unweighted = bertscore("p q", "p r", &enc, false, None).unwrap();
        let weighted = bertscore("p q", "p r", &enc, true, Some(&idf)).unwrap();
        assert!(weighted.precision > unweighted.precision);
        assert!((weighted.precision - 0.75).abs() < 1e-12);
    }

    #[test]
    fn ctc_means_the_aligner_probabilities() {
        let aligner = TokenTableAligner::new(
            HashMap::from([
                ("a".to_string(), 1.0),
                ("b".to_string(), 0.0),
                ("c".to_string(), 0.5),
                ("d".to_string(), 0.5),
            ]),
            0.0,
        )
        .unwrap();
        let score = ctc_consistency("src", "a b c d", &aligner).unwrap();
        assert!((score - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ctc_floor_and_ceiling() {
        let all_one = TokenTableAligner::new(HashMap::new(), 1.0).unwrap();
        assert_eq!(ctc_consistency("s", "x y z", &all_one).unwrap(), 1.0);
        let all_zero = TokenTableAligner::new(HashMap::new(), 0.0).unwrap();
        assert_eq!(ctc_consistency("s", "x y z", &all_zero).unwrap(), 0.0);
    }

    #[test]
    fn ctc_empty_hypothesis_is_an_error() {
        let aligner = TokenTableAligner::new(HashMap::new(), 1.0).unwrap();
        assert!(ctc_consistency("s", "", &aligner).is_err());
    }

    #[test]
    fn ctc_shift_property() {
        // Replacing one token's probability p with p + delta moves the mean
        // by exactly delta / token_count.
        let base = TokenTableAligner::new(HashMap::from([("a".to_string(), 0.2)]), 0.6).unwrap();
        let shifted = TokenTableAligner::new(HashMap::from([("a".to_string(), 0.5)]), 0.6).unwrap();
        let before = ctc_consistency("s", "a b c d", &base).unwrap();
        let after = ctc_consistency("s", "a b c d", &shifted).unwrap();
        assert!((after - before - 0.3 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn idf_table_loads_two_columns() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# token idf").unwrap();
        writeln!(f, "the 0.1").unwrap();
        writeln!(f, "cookies 2.5").unwrap();
        let table = load_idf_table(f.path()).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table["cookies"], 2.5);
        let mut bad = tempfile::NamedTempFile::new().unwrap();
        writeln!(bad, "three columns here").unwrap();
        assert!(load_idf_table(bad.path()).is_err());
    }

    proptest! {
        // Greedy maxima are order-free: permuting reference words leaves
        // every component unchanged.
        #[test]
        fn bertscore_invariant_under_reference_permutation(
            hyp in proptest::collection::vec("[a-f]{1,3}", 1..6),
            reference in proptest::collection::vec("[a-f]{1,3}", 1..6),
            rotation in 0usize..6,
        ) {
            let enc = HashEmbedEncoder::new(16).unwrap();
            let hyp_text = hyp.join(" ");
            let ref_text = reference.join(" ");
            let mut rotated = reference.clone();
            rotated.rotate_left(rotation % reference.len());
            let a = bertscore(&hyp_text, &ref_text, &enc, false, None).unwrap();
            let b = bertscore(&hyp_text, &rotated.join(" "), &enc, false, None).unwrap();
            prop_assert!((a.precision - b.precision).abs() < 1e-12);
            prop_assert!((a.recall - b.recall).abs() < 1e-12);
        }

        // Swapping the argument order swaps precision and recall.
        #[test]
        fn bertscore_precision_recall_symmetry(
            a in proptest::collection::vec("[a-f]{1,3}", 1..6),
            b in proptest::collection::vec("[a-f]{1,3}", 1..6),
        ) {
            let enc = HashEmbedEncoder::new(16).unwrap();
            let fwd = bertscore(&a.join(" "), &b.join(" "), &enc, false, None).unwrap();
            let rev = bertscore(&b.join(" "), &a.join(" "), &enc, false, None).unwrap();
            prop_assert!((fwd.precision - rev.recall).abs() < 1e-12);
            prop_assert!((fwd.recall - rev.precision).abs() < 1e-12);
        }

        #[test]
        fn bertscore_components_bounded_by_cosine_range(
            a in proptest::collection::vec("[a-f]{1,3}", 1..6),
            b in proptest::collection::vec("[a-f]{1,3}", 1..6),
        ) {
            let enc = HashEmbedEncoder::new(8).unwrap();
            let s = bertscore(&a.join(" "), &b.join(" "), &enc, false, None).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s.precision));
            prop_assert!((-1.0..=1.0).contains(&s.recall));
        }
    }
}
