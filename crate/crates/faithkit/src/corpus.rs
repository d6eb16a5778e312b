//! Canonical data model for dialogues, summaries, human judgments, and
//! metric scores, with JSONL (one object per line, UTF-8) persistence.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexical;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {detail}")]
    Malformed {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("{path}:{line}: invalid record: {detail}")]
    Invalid {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("{path}:{line}: duplicate id \"{id}\"")]
    DuplicateId {
        path: String,
        line: usize,
        id: String,
    },
    #[error("summary \"{summary_id}\" references unknown dialogue \"{dialogue_id}\"")]
    UnknownDialogue {
        summary_id: String,
        dialogue_id: String,
    },
    #[error("refusing to persist non-finite value for \"{summary_id}\"/{metric}")]
    NonFiniteScore { summary_id: String, metric: String },
}

/// One speaker turn of a dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Turn {
    pub speaker: String,
    pub text: String,
}

impl Turn {
    pub fn new(speaker: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            speaker: speaker.into(),
            text: text.into(),
        }
    }
}

/// An ordered multi-turn conversation; the source text every metric
/// conditions on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("dialogue id is empty".into());
        }
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.speaker.is_empty() {
                return Err(format!("turn {i} has an empty speaker"));
            }
            if turn.text.is_empty() {
                return Err(format!("turn {i} has an empty utterance"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegType {
    Swapent,
    Maskent,
    Hallu,
}

impl NegType {
    pub fn as_str(self) -> &'static str {
        match self {
            NegType::Swapent => "swapent",
            NegType::Maskent => "maskent",
            NegType::Hallu => "hallu",
        }
    }
}

/// A summary with its polarity label. For negatives, `negative_indices`
/// holds the unfaithful token positions under the toolkit tokenizer
/// ([`crate::lexical::tokenize`]), never a model's subword scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledSummary {
    pub id: String,
    pub dialogue_id: String,
    pub system: String,
    pub text: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neg_type: Option<NegType>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub negative_indices: BTreeSet<usize>,
}

impl LabeledSummary {
    fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("summary id is empty".into());
        }
        match self.label {
            Label::Positive => {
                if !self.negative_indices.is_empty() {
                    return Err("positive summary carries negative_indices".into());
                }
                if self.neg_type.is_some() {
                    return Err("positive summary carries a neg_type".into());
                }
            }
            Label::Negative => {
                if self.neg_type.is_none() {
                    return Err("negative summary is missing neg_type".into());
                }
            }
        }
        let token_count = lexical::tokenize(&self.text).len();
        if let Some(&bad) = self.negative_indices.iter().find(|&&i| i >= token_count) {
            return Err(format!(
                "negative index {bad} out of range for {token_count} tokens"
            ));
        }
        Ok(())
    }
}

/// A single human faithfulness judgment on a 1-10 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanJudgment {
    pub summary_id: String,
    pub faithfulness: f64,
}

impl HumanJudgment {
    fn validate(&self) -> Result<(), String> {
        if self.summary_id.is_empty() {
            return Err("summary_id is empty".into());
        }
        if !(1.0..=10.0).contains(&self.faithfulness) {
            return Err(format!(
                "faithfulness {} outside the 1-10 scale",
                self.faithfulness
            ));
        }
        Ok(())
    }
}

/// One metric value for one summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub summary_id: String,
    pub metric: String,
    pub value: f64,
}

impl ScoreRecord {
    fn validate(&self) -> Result<(), String> {
        if !self.value.is_finite() {
            return Err(format!("non-finite value {}", self.value));
        }
        Ok(())
    }
}

/// Flattens a dialogue to the single source string metrics condition on:
/// one "Speaker: utterance" line per turn.
pub fn render_dialogue(dialogue: &Dialogue) -> String {
    dialogue
        .turns
        .iter()
        .map(|t| format!("{}: {}", t.speaker, t.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path_str(path),
        source,
    })?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path_str(path),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: path_str(path),
            line: line_no,
            detail: e.to_string(),
        })?;
        records.push((line_no, record));
    }
    Ok(records)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|source| CorpusError::Io {
        path: path_str(path),
        source,
    })?;
    let mut writer = BufWriter::new(file);
    for record in records {
        let json = serde_json::to_string(record).expect("record serialization cannot fail");
        writeln!(writer, "{json}").map_err(|source| CorpusError::Io {
            path: path_str(path),
            source,
        })?;
    }
    writer.flush().map_err(|source| CorpusError::Io {
        path: path_str(path),
        source,
    })
}

/// Loads a dialogue corpus, enforcing schema, per-record invariants, and id
/// uniqueness. Errors carry the offending line number.
pub fn load_dialogues(path: impl AsRef<Path>) -> Result<Vec<Dialogue>, CorpusError> {
    let path = path.as_ref();
    let records: Vec<(usize, Dialogue)> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    for (line, d) in &records {
        d.validate().map_err(|detail| CorpusError::Invalid {
            path: path_str(path),
            line: *line,
            detail,
        })?;
        if !seen.insert(d.id.clone()) {
            return Err(CorpusError::DuplicateId {
                path: path_str(path),
                line: *line,
                id: d.id.clone(),
            });
        }
    }
    Ok(records.into_iter().map(|(_, d)| d).collect())
}

pub fn load_summaries(path: impl AsRef<Path>) -> Result<Vec<LabeledSummary>, CorpusError> {
    let path = path.as_ref();
    let records: Vec<(usize, LabeledSummary)> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    for (line, s) in &records {
        s.validate().map_err(|detail| CorpusError::Invalid {
            path: path_str(path),
            line: *line,
            detail,
        })?;
        if !seen.insert(s.id.clone()) {
            return Err(CorpusError::DuplicateId {
                path: path_str(path),
                line: *line,
                id: s.id.clone(),
            });
        }
    }
    Ok(records.into_iter().map(|(_, s)| s).collect())
}

pub fn load_judgments(path: impl AsRef<Path>) -> Result<Vec<HumanJudgment>, CorpusError> {
    let path = path.as_ref();
    let records: Vec<(usize, HumanJudgment)> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    for (line, j) in &records {
        j.validate().map_err(|detail| CorpusError::Invalid {
            path: path_str(path),
            line: *line,
            detail,
        })?;
        if !seen.insert(j.summary_id.clone()) {
            return Err(CorpusError::DuplicateId {
                path: path_str(path),
                line: *line,
                id: j.summary_id.clone(),
            });
        }
    }
    Ok(records.into_iter().map(|(_, j)| j).collect())
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord>, CorpusError> {
    let path = path.as_ref();
    let records: Vec<(usize, ScoreRecord)> = read_jsonl(path)?;
    for (line, r) in &records {
        r.validate().map_err(|detail| CorpusError::Invalid {
            path: path_str(path),
            line: *line,
            detail,
        })?;
    }
    Ok(records.into_iter().map(|(_, r)| r).collect())
}

pub fn save_dialogues(
    dialogues: &[Dialogue],
    path: impl AsRef<Path>,
) -> Result<(), CorpusError> {
    write_jsonl(path.as_ref(), dialogues)
}

pub fn save_summaries(
    summaries: &[LabeledSummary],
    path: impl AsRef<Path>,
) -> Result<(), CorpusError> {
    write_jsonl(path.as_ref(), summaries)
}

pub fn save_judgments(
    judgments: &[HumanJudgment],
    path: impl AsRef<Path>,
) -> Result<(), CorpusError> {
    write_jsonl(path.as_ref(), judgments)
}

pub fn save_scores(records: &[ScoreRecord], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    for r in records {
        if !r.value.is_finite() {
            return Err(CorpusError::NonFiniteScore {
                summary_id: r.summary_id.clone(),
                metric: r.metric.clone(),
            });
        }
    }
    write_jsonl(path.as_ref(), records)
}

/// Verifies that every summary's `dialogue_id` resolves against the loaded
/// dialogue set.
pub fn check_referential_integrity(
    dialogues: &[Dialogue],
    summaries: &[LabeledSummary],
) -> Result<(), CorpusError> {
    let ids: HashSet<&str> = dialogues.iter().map(|d| d.id.as_str()).collect();
    for s in summaries {
        if !ids.contains(s.dialogue_id.as_str()) {
            return Err(CorpusError::UnknownDialogue {
                summary_id: s.id.clone(),
                dialogue_id: s.dialogue_id.clone(),
            });
        }
    }
    Ok(())
}

/// Convenience index from dialogue id to rendered source text.
pub fn rendered_sources(dialogues: &[Dialogue]) -> HashMap<String, String> {
    dialogues
        .iter()
        .map(|d| (d.id.clone(), render_dialogue(d)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
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
    fn load_dialogues_parses_three_turn_record() {
        let f = write_temp(concat!(
            r#"{"id":"d1","turns":[{"speaker":"Amanda","text":"I baked cookies. Do you want some?"},"#,
            r#"{"speaker":"Jerry","text":"Sure!"},{"speaker":"Amanda","text":"I'll bring you tomorrow :-)"}]}"#,
            "\n"
        ));
        let dialogues = load_dialogues(f.path()).unwrap();
        assert_eq!(dialogues.len(), 1);
        assert_eq!(dialogues[0].turns.len(), 3);
        assert_eq!(dialogues[0], cookie_dialogue());
    }

    #[test]
    fn load_dialogues_empty_file_is_empty_list() {
        let f = write_temp("");
        assert!(load_dialogues(f.path()).unwrap().is_empty());
    }

    #[test]
    fn load_dialogues_reports_duplicate_id_and_line() {
        let one = r#"{"id":"d1","turns":[{"speaker":"A","text":"hi"}]}"#;
        let two = r#"{"id":"d2","turns":[{"speaker":"A","text":"hi"}]}"#;
        let three = r#"{"id":"d3","turns":[{"speaker":"A","text":"hi"}]}"#;
        let f = write_temp(&format!("{one}\n{two}\n{three}\n{one}\n"));
        let err = load_dialogues(f.path()).unwrap_err();
        match err {
            CorpusError::DuplicateId { id, line, .. } => {
                assert_eq!(id, "d1");
                assert_eq!(line, 4);
            }
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn load_dialogues_reports_malformed_line_number() {
        let good = r#"{"id":"d1","turns":[{"speaker":"A","text":"hi"}]}"#;
        let f = write_temp(&format!("{good}\nnot json\n"));
        let err = load_dialogues(f.path()).unwrap_err();
        match err {
            CorpusError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("expected Malformed, got {other:?}"),
        }
    }

    #[test]
    fn render_dialogue_joins_speaker_lines() {
        assert_eq!(
            render_dialogue(&cookie_dialogue()),
            "Amanda: I baked cookies. Do you want some?\nJerry: Sure!\nAmanda: I'll bring you tomorrow :-)"
        );
    }

    #[test]
    fn render_dialogue_single_turn() {
        let d = Dialogue {
            id: "x".into(),
            turns: vec![Turn::new("A", "hi")],
        };
        assert_eq!(render_dialogue(&d), "A: hi");
    }

    #[test]
    fn load_summaries_keeps_negative_metadata_intact() {
        let f = write_temp(concat!(
            r#"{"id":"s1","dialogue_id":"d1","system":"gen","text":"Jerry baked cookies and will bring Amanda some tomorrow.","#,
            r#""label":"negative","neg_type":"swapent","negative_indices":[0,6]}"#,
            "\n"
        ));
        let summaries = load_summaries(f.path()).unwrap();
        assert_eq!(summaries[0].neg_type, Some(NegType::Swapent));
        assert_eq!(
            summaries[0].negative_indices,
            BTreeSet::from([0usize, 6usize])
        );
    }

    #[test]
    fn load_summaries_rejects_positive_with_indices() {
        let f = write_temp(
            r#"{"id":"s1","dialogue_id":"d1","system":"gen","text":"a b","label":"positive","negative_indices":[0]}"#,
        );
        let err = load_summaries(f.path()).unwrap_err();
        assert!(matches!(err, CorpusError::Invalid { .. }), "{err:?}");
    }

    #[test]
    fn load_summaries_rejects_out_of_range_index() {
        let f = write_temp(
            r#"{"id":"s1","dialogue_id":"d1","system":"gen","text":"a b","label":"negative","neg_type":"hallu","negative_indices":[2]}"#,
        );
        assert!(load_summaries(f.path()).is_err());
    }

    #[test]
    fn judgments_must_stay_on_scale() {
        let f = write_temp(r#"{"summary_id":"s1","faithfulness":11.0}"#);
        assert!(load_judgments(f.path()).is_err());
        let f = write_temp(r#"{"summary_id":"s1","faithfulness":10.0}"#);
        assert!(load_judgments(f.path()).is_ok());
    }

    #[test]
    fn save_scores_rejects_non_finite() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("scores.jsonl");
        let records = vec![ScoreRecord {
            summary_id: "s1".into(),
            metric: "rouge-l".into(),
            value: f64::NAN,
        }];
        assert!(matches!(
            save_scores(&records, &out),
            Err(CorpusError::NonFiniteScore { .. })
        ));
    }

    #[test]
    fn referential_integrity_names_the_missing_dialogue() {
        let dialogues = vec![cookie_dialogue()];
        let summary = LabeledSummary {
            id: "s9".into(),
            dialogue_id: "ghost".into(),
            system: "gen".into(),
            text: "hi".into(),
            label: Label::Positive,
            neg_type: None,
            negative_indices: BTreeSet::new(),
        };
        let err = check_referential_integrity(&dialogues, &[summary]).unwrap_err();
        match err {
            CorpusError::UnknownDialogue {
                summary_id,
                dialogue_id,
            } => {
                assert_eq!(summary_id, "s9");
                assert_eq!(dialogue_id, "ghost");
            }
            other => panic!("expected UnknownDialogue, got {other:?}"),
        }
    }
}
