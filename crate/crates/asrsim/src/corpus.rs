//! Data model and I/O for dialogues and transcript pairs, plus a read-only
//! adapter for MultiWOZ 2.1 source files.
//!
//! File formats:
//! - Transcript pairs: JSON lines, one record per line with fields
//!   `id`, `ref`, `hyp`.
//! - Native dialogues: JSON lines, one dialogue per line:
//!   `{"id": ..., "turns": [{"speaker": "user"|"system", "text": ...,
//!   "state": {slot: value}}]}`. The `state` field is present only on
//!   annotated user turns. Slot maps are sorted and field order is fixed, so
//!   identical corpora serialize byte-identically.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Cumulative dialogue state: domain-qualified slot names to verbatim values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DialogueState {
    pub slots: BTreeMap<String, String>,
}

impl DialogueState {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<const N: usize> From<[(&str, &str); N]> for DialogueState {
    fn from(entries: [(&str, &str); N]) -> Self {
        DialogueState {
            slots: entries
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    System,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<DialogueState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Turn>,
}

/// One reference sentence and its ASR hypothesis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptPair {
    pub id: String,
    #[serde(rename = "ref")]
    pub ref_text: String,
    #[serde(rename = "hyp")]
    pub hyp_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DialogueFormat {
    Native,
    MultiWoz21,
}

impl std::str::FromStr for DialogueFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "native" => Ok(DialogueFormat::Native),
            "multiwoz21" => Ok(DialogueFormat::MultiWoz21),
            other => Err(Error::Config(format!("unknown dialogue format {other:?}"))),
        }
    }
}

/// Reads transcript pairs from a JSONL file, preserving order and rejecting
/// duplicate ids.
pub fn read_pairs(path: &Path) -> Result<Vec<TranscriptPair>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pairs_from(BufReader::new(file))
}

/// Reads transcript pairs from any reader (stdin streaming included).
pub fn read_pairs_from(reader: impl BufRead) -> Result<Vec<TranscriptPair>> {
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: TranscriptPair = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        if !seen.insert(pair.id.clone()) {
            return Err(Error::DuplicateId(pair.id));
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn write_pairs(pairs: &[TranscriptPair], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for pair in pairs {
        serde_json::to_writer(&mut writer, pair)
            .map_err(|e| Error::format(path, e.to_string()))?;
        writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Reads a dialogue corpus in the named format.
pub fn read_dialogues(path: &Path, format: DialogueFormat) -> Result<Vec<Dialogue>> {
    match format {
        DialogueFormat::Native => read_native(path),
        DialogueFormat::MultiWoz21 => read_multiwoz(path),
    }
}

fn validate_corpus(dialogues: &[Dialogue]) -> Result<()> {
    let mut seen = HashSet::new();
    for dialogue in dialogues {
        if !seen.insert(dialogue.id.as_str()) {
            return Err(Error::DuplicateId(dialogue.id.clone()));
        }
        if dialogue.turns.is_empty() {
            return Err(Error::Dialogue {
                id: dialogue.id.clone(),
                message: "dialogue has zero turns".into(),
            });
        }
        for turn in &dialogue.turns {
            if let Some(state) = &turn.state {
                if state.slots.keys().any(|k| k.is_empty()) {
                    return Err(Error::Dialogue {
                        id: dialogue.id.clone(),
                        message: "empty slot name in dialogue state".into(),
                    });
                }
            }
        }
    }
    Ok(())
}

fn read_native(path: &Path) -> Result<Vec<Dialogue>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut dialogues = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let dialogue: Dialogue = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        dialogues.push(dialogue);
    }
    validate_corpus(&dialogues)?;
    Ok(dialogues)
}

/// Writes a corpus in the native JSONL format with byte-stable output.
/// Invariants are checked before any bytes are written.
pub fn write_dialogues(dialogues: &[Dialogue], path: &Path) -> Result<()> {
    validate_corpus(dialogues)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for dialogue in dialogues {
        serde_json::to_writer(&mut writer, dialogue)
            .map_err(|e| Error::format(path, e.to_string()))?;
        writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

// Slot values MultiWOZ uses to mean "not set"; dropped rather than stored.
fn is_absent_value(v: &str) -> bool {
    v.is_empty() || v == "none" || v == "not mentioned"
}

/// Reads a MultiWOZ 2.1 `data.json`-style file: a single JSON object mapping
/// dialogue id to `{"log": [...]}` with turns alternating user/system and the
/// belief state recorded in the `metadata` of the system turn that follows
/// each user turn. Per-domain `semi` slots become `domain-slot`; `book` slots
/// (except the `booked` record list) become `domain-book slot`.
fn read_multiwoz(path: &Path) -> Result<Vec<Dialogue>> {
    let mut raw = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    let root: BTreeMap<String, serde_json::Value> =
        serde_json::from_str(&raw).map_err(|e| Error::format(path, e.to_string()))?;

    let mut dialogues = Vec::new();
    for (id, value) in root {
        let log = value
            .get("log")
            .and_then(|l| l.as_array())
            .ok_or_else(|| Error::Dialogue { id: id.clone(), message: "missing log array".into() })?;
        let mut turns = Vec::new();
        for (turn_idx, entry) in log.iter().enumerate() {
            let text = entry
                .get("text")
                .and_then(|t| t.as_str())
                .ok_or_else(|| Error::Dialogue {
                    id: id.clone(),
                    message: format!("turn {turn_idx} missing text"),
                })?
                .to_string();
            let is_user = turn_idx % 2 == 0;
            let state = if is_user {
                // State after this user turn lives in the next system turn's metadata.
                log.get(turn_idx + 1)
                    .and_then(|next| next.get("metadata"))
                    .map(|meta| flatten_metadata(&id, meta))
                    .transpose()?
                    .filter(|s: &DialogueState| !s.slots.is_empty())
            } else {
                None
            };
            turns.push(Turn {
                speaker: if is_user { Speaker::User } else { Speaker::System },
                text,
                state,
            });
        }
        dialogues.push(Dialogue { id, turns });
    }
    validate_corpus(&dialogues)?;
    Ok(dialogues)
}

fn flatten_metadata(id: &str, metadata: &serde_json::Value) -> Result<DialogueState> {
    let domains = metadata.as_object().ok_or_else(|| Error::Dialogue {
        id: id.to_string(),
        message: "metadata is not an object".into(),
    })?;
    let mut state = DialogueState::new();
    for (domain, sections) in domains {
        let sections = sections.as_object().ok_or_else(|| Error::Dialogue {
            id: id.to_string(),
            message: format!("domain {domain:?} is not an object"),
        })?;
        for (section, slots) in sections {
            let book = match section.as_str() {
                "semi" => false,
                "book" => true,
                other => {
                    return Err(Error::Dialogue {
                        id: id.to_string(),
                        message: format!("unknown metadata section {other:?} in domain {domain:?}"),
                    })
                }
            };
            let slots = slots.as_object().ok_or_else(|| Error::Dialogue {
                id: id.to_string(),
                message: format!("section {domain}.{section} is not an object"),
            })?;
            for (slot, value) in slots {
                if book && slot == "booked" {
                    continue;
                }
                let value = value.as_str().ok_or_else(|| Error::Dialogue {
                    id: id.to_string(),
                    message: format!("slot {domain}.{section}.{slot} has a non-string value"),
                })?;
                if is_absent_value(value) {
                    continue;
                }
                let name = if book {
                    format!("{domain}-book {slot}")
                } else {
                    format!("{domain}-{slot}")
                };
                state.slots.insert(name, value.to_string());
            }
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn read_pairs_preserves_order() {
        let data = "\
{\"id\":\"a\",\"ref\":\"one\",\"hyp\":\"won\"}\n\
{\"id\":\"b\",\"ref\":\"two\",\"hyp\":\"two\"}\n\
{\"id\":\"c\",\"ref\":\"three\",\"hyp\":\"tree\"}\n";
        let pairs = read_pairs_from(Cursor::new(data)).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0].id, "a");
        assert_eq!(pairs[2].hyp_text, "tree");
    }

    #[test]
    fn read_pairs_reports_bad_line() {
        let data = "{\"id\":\"a\",\"ref\":\"one\",\"hyp\":\"won\"}\n{\"id\":\"b\",\"ref\":\"two\"}\n";
        let err = read_pairs_from(Cursor::new(data)).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn read_pairs_rejects_duplicate_id() {
        let data = "{\"id\":\"a\",\"ref\":\"x\",\"hyp\":\"x\"}\n{\"id\":\"a\",\"ref\":\"y\",\"hyp\":\"y\"}\n";
        let err = read_pairs_from(Cursor::new(data)).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "a"));
    }

    #[test]
    fn read_pairs_empty_file() {
        assert!(read_pairs_from(Cursor::new("")).unwrap().is_empty());
    }

    fn sample_corpus() -> Vec<Dialogue> {
        vec![Dialogue {
            id: "d1".into(),
            turns: vec![
                Turn {
                    speaker: Speaker::User,
                    text: "I need a hotel.".into(),
                    state: Some(DialogueState::from([("hotel-name", "acorn guest house")])),
                },
                Turn { speaker: Speaker::System, text: "Sure.".into(), state: None },
            ],
        }]
    }

    #[test]
    fn native_round_trip_and_byte_stability() {
        let dir = tempfile::tempdir().unwrap();
        let path1 = dir.path().join("c1.jsonl");
        let path2 = dir.path().join("c2.jsonl");
        let corpus = sample_corpus();
        write_dialogues(&corpus, &path1).unwrap();
        let back = read_dialogues(&path1, DialogueFormat::Native).unwrap();
        assert_eq!(back, corpus);
        write_dialogues(&back, &path2).unwrap();
        assert_eq!(std::fs::read(&path1).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn write_rejects_duplicate_ids_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.jsonl");
        let mut corpus = sample_corpus();
        corpus.push(corpus[0].clone());
        assert!(write_dialogues(&corpus, &path).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn zero_turn_dialogue_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "{\"id\":\"d\",\"turns\":[]}\n").unwrap();
        assert!(read_dialogues(&path, DialogueFormat::Native).is_err());
    }

    #[test]
    fn multiwoz_adapter_flattens_belief_state() {
        let fixture = serde_json::json!({
            "MUL0001.json": {
                "log": [
                    {"text": "I want the Acorn Guest House.", "metadata": {}},
                    {"text": "Booked!", "metadata": {
                        "hotel": {
                            "semi": {"name": "acorn guest house", "area": "not mentioned"},
                            "book": {"people": "2", "stay": "", "booked": []}
                        }
                    }}
                ]
            }
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("woz.json");
        std::fs::write(&path, serde_json::to_string(&fixture).unwrap()).unwrap();
        let corpus = read_dialogues(&path, DialogueFormat::MultiWoz21).unwrap();
        assert_eq!(corpus.len(), 1);
        let state = corpus[0].turns[0].state.as_ref().unwrap();
        assert_eq!(state.slots.get("hotel-name").map(String::as_str), Some("acorn guest house"));
        assert_eq!(state.slots.get("hotel-book people").map(String::as_str), Some("2"));
        // "not mentioned" and empty values are dropped.
        assert!(!state.slots.contains_key("hotel-area"));
        assert!(!state.slots.contains_key("hotel-book stay"));
        assert!(corpus[0].turns[1].state.is_none());
    }

    #[test]
    fn multiwoz_unknown_section_is_error() {
        let fixture = serde_json::json!({
            "BAD.json": {
                "log": [
                    {"text": "hi", "metadata": {}},
                    {"text": "hello", "metadata": {"hotel": {"extra": {}}}}
                ]
            }
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, serde_json::to_string(&fixture).unwrap()).unwrap();
        let err = read_dialogues(&path, DialogueFormat::MultiWoz21).unwrap_err();
        assert!(err.to_string().contains("extra"), "{err}");
    }
}
