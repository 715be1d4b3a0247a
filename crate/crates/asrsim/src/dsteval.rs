//! Joint Goal Accuracy: the percentage of annotated turns whose predicted
//! dialogue state exactly matches the gold state.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, DialogueState};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnResult {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub matched: bool,
    /// False when no prediction entry existed for this gold turn.
    pub had_prediction: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JgaReport {
    pub n_turns: u64,
    pub n_exact: u64,
    pub per_turn: Vec<TurnResult>,
}

impl JgaReport {
    /// Percentage of exactly matched turns, undefined on an empty gold set.
    pub fn jga(&self) -> Option<f64> {
        if self.n_turns == 0 {
            None
        } else {
            Some(100.0 * self.n_exact as f64 / self.n_turns as f64)
        }
    }
}

/// One prediction record: dialogue id, turn index, and the predicted slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub slots: BTreeMap<String, String>,
}

/// Reads JSONL prediction records into a lookup map. A later record for the
/// same (dialogue, turn) is rejected as a duplicate.
pub fn read_predictions(path: &Path) -> Result<HashMap<(String, usize), DialogueState>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Prediction = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        let key = (record.dialogue_id.clone(), record.turn_index);
        if out
            .insert(key, DialogueState { slots: record.slots })
            .is_some()
        {
            return Err(Error::DuplicateId(format!(
                "{}#{}",
                record.dialogue_id, record.turn_index
            )));
        }
    }
    Ok(out)
}

fn normalize_value(value: &str) -> String {
    value.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Drops slots whose value means "absent", optionally normalizing the rest.
fn canonical(state: &DialogueState, normalize_values: bool) -> BTreeMap<String, String> {
    state
        .slots
        .iter()
        .filter(|(_, v)| !v.is_empty() && v.as_str() != "none")
        .map(|(k, v)| {
            let v = if normalize_values { normalize_value(v) } else { v.clone() };
            (k.clone(), v)
        })
        .collect()
}

/// Scores predictions against every gold-annotated turn. A turn matches iff
/// the slot-name sets are equal and every value is equal (after optional
/// value normalization: lowercase, whitespace collapse). Gold turns without a
/// prediction entry count as non-matches.
pub fn joint_goal_accuracy(
    gold: &[Dialogue],
    predicted: &HashMap<(String, usize), DialogueState>,
    normalize_values: bool,
) -> Result<JgaReport> {
    let known: HashSet<&str> = gold.iter().map(|d| d.id.as_str()).collect();
    for (dialogue_id, _) in predicted.keys() {
        if !known.contains(dialogue_id.as_str()) {
            return Err(Error::UnknownDialogue(dialogue_id.clone()));
        }
    }

    let mut report = JgaReport { n_turns: 0, n_exact: 0, per_turn: Vec::new() };
    for dialogue in gold {
        for (turn_index, turn) in dialogue.turns.iter().enumerate() {
            let Some(gold_state) = &turn.state else { continue };
            report.n_turns += 1;
            let entry = predicted.get(&(dialogue.id.clone(), turn_index));
            let matched = entry.is_some_and(|prediction| {
                canonical(gold_state, normalize_values) == canonical(prediction, normalize_values)
            });
            if matched {
                report.n_exact += 1;
            }
            report.per_turn.push(TurnResult {
                dialogue_id: dialogue.id.clone(),
                turn_index,
                matched,
                had_prediction: entry.is_some(),
            });
        }
    }
    Ok(report)
}
