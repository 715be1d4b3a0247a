//! Per-token confusion model: for each reference token, the empirical
//! distribution over being recognized correctly, substituted by specific
//! token sequences, or deleted, plus per-anchor insertion distributions.
//!
//! Counts are canonical; probabilities are derived views. The model file is a
//! single pretty-printed JSON document with sorted keys and sorted outcome
//! records, so serialization is byte-stable and round-trips losslessly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::align::{Alignment, EditKind};
use crate::textnorm::{self, Token};
use crate::{Error, Result};

/// Anchor key for insertions that precede the first reference token of a
/// sentence. Tokenization can never produce this surface (mixed punctuation
/// and letters always split), so it cannot collide with a real token.
pub const SENTENCE_START: &str = "<s>";

pub const MODEL_VERSION: u32 = 1;

/// What happened to one occurrence of a reference token.
///
/// Variant order is the canonical outcome order used for serialization and
/// for deterministic quota assignment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TokenOutcome {
    Correct,
    SubstitutedBy { target: Vec<String> },
    Deleted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OutcomeRecord {
    #[serde(flatten)]
    outcome: TokenOutcome,
    count: u64,
}

mod outcome_map {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<TokenOutcome, u64>,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let records: Vec<OutcomeRecord> = map
            .iter()
            .map(|(outcome, &count)| OutcomeRecord { outcome: outcome.clone(), count })
            .collect();
        serde::Serialize::serialize(&records, serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<BTreeMap<TokenOutcome, u64>, D::Error> {
        let records: Vec<OutcomeRecord> = serde::Deserialize::deserialize(deserializer)?;
        Ok(records.into_iter().map(|r| (r.outcome, r.count)).collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InsertionRecord {
    tokens: Vec<String>,
    count: u64,
}

mod insertion_map {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<Vec<String>, u64>,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let records: Vec<InsertionRecord> = map
            .iter()
            .map(|(tokens, &count)| InsertionRecord { tokens: tokens.clone(), count })
            .collect();
        serde::Serialize::serialize(&records, serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<BTreeMap<Vec<String>, u64>, D::Error> {
        let records: Vec<InsertionRecord> = serde::Deserialize::deserialize(deserializer)?;
        Ok(records.into_iter().map(|r| (r.tokens, r.count)).collect())
    }
}

/// Outcome distribution for one reference token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenProfile {
    pub token: String,
    pub total: u64,
    #[serde(with = "outcome_map")]
    pub outcomes: BTreeMap<TokenOutcome, u64>,
}

impl TokenProfile {
    /// Probability of a given outcome under this profile.
    pub fn probability(&self, outcome: &TokenOutcome) -> f64 {
        let count = self.outcomes.get(outcome).copied().unwrap_or(0);
        count as f64 / self.total as f64
    }

    /// Count of non-Correct outcomes.
    pub fn error_count(&self) -> u64 {
        self.outcomes
            .iter()
            .filter(|(o, _)| !matches!(o, TokenOutcome::Correct))
            .map(|(_, &c)| c)
            .sum()
    }

    /// True iff at least one error outcome was observed.
    pub fn has_error_outcome(&self) -> bool {
        self.error_count() > 0
    }

    fn validate(&self) -> Result<()> {
        if self.total == 0 {
            return Err(Error::Config(format!("profile {:?} has zero total", self.token)));
        }
        let sum: u64 = self.outcomes.values().sum();
        if sum != self.total {
            return Err(Error::Config(format!(
                "profile {:?}: outcome counts sum to {sum}, total is {}",
                self.token, self.total
            )));
        }
        for outcome in self.outcomes.keys() {
            if let TokenOutcome::SubstitutedBy { target } = outcome {
                if target.is_empty() {
                    return Err(Error::Config(format!("profile {:?}: empty target", self.token)));
                }
                if target.len() == 1 && target[0] == self.token {
                    return Err(Error::Config(format!(
                        "profile {:?}: substitution target equals the source token",
                        self.token
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Insertion distribution attached to one anchor token (or sentence start).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertionProfile {
    pub anchor: String,
    pub anchor_total: u64,
    #[serde(with = "insertion_map")]
    pub insertions: BTreeMap<Vec<String>, u64>,
}

impl InsertionProfile {
    /// Total count of insertion events at this anchor.
    pub fn event_count(&self) -> u64 {
        self.insertions.values().sum()
    }

    fn validate(&self) -> Result<()> {
        if self.insertions.keys().any(|seq| seq.is_empty()) {
            return Err(Error::Config(format!("anchor {:?}: empty inserted sequence", self.anchor)));
        }
        if self.event_count() > self.anchor_total {
            return Err(Error::Config(format!(
                "anchor {:?}: more insertion events than anchor occurrences",
                self.anchor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub source: String,
    pub normalizer: String,
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionModel {
    pub version: u32,
    pub meta: ModelMeta,
    pub profiles: BTreeMap<String, TokenProfile>,
    pub insertion_profiles: BTreeMap<String, InsertionProfile>,
}

/// Expected corpus-level rates implied by a model, as percentages of its own
/// reference-word mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelRates {
    pub ins_rate: f64,
    pub del_rate: f64,
    pub sub_rate: f64,
}

impl ConfusionModel {
    /// Exact-match lookup on a normalized surface.
    pub fn query(&self, token: &str) -> Option<&TokenProfile> {
        self.profiles.get(token)
    }

    pub fn insertion_profile(&self, anchor: &str) -> Option<&InsertionProfile> {
        self.insertion_profiles.get(anchor)
    }

    /// The rates injection would produce in expectation on the model's own
    /// source distribution. A multi-token substitution target counts as one
    /// substitution plus its surplus words as insertions, matching what an
    /// alignment of the injected output would measure.
    pub fn error_rates(&self) -> Result<ModelRates> {
        self.rates_filtered(|_| true)
    }

    /// As `error_rates`, restricted to non-punctuation reference tokens.
    pub fn word_only_error_rates(&self) -> Result<ModelRates> {
        self.rates_filtered(|profile| {
            !profile.token.chars().all(textnorm::is_punct_char)
        })
    }

    fn rates_filtered(&self, keep: impl Fn(&TokenProfile) -> bool) -> Result<ModelRates> {
        let mut denom = 0u64;
        let mut subs = 0u64;
        let mut dels = 0u64;
        let mut ins_words = 0u64;
        for profile in self.profiles.values().filter(|p| keep(p)) {
            denom += profile.total;
            for (outcome, &count) in &profile.outcomes {
                match outcome {
                    TokenOutcome::Correct => {}
                    TokenOutcome::Deleted => dels += count,
                    TokenOutcome::SubstitutedBy { target } => {
                        subs += count;
                        ins_words += (target.len() as u64 - 1) * count;
                    }
                }
            }
        }
        for profile in self.insertion_profiles.values() {
            for (seq, &count) in &profile.insertions {
                ins_words += seq.len() as u64 * count;
            }
        }
        if denom == 0 {
            return Err(Error::EmptyModel);
        }
        let pct = |count: u64| 100.0 * count as f64 / denom as f64;
        Ok(ModelRates { ins_rate: pct(ins_words), del_rate: pct(dels), sub_rate: pct(subs) })
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::ModelVersion(self.version));
        }
        for (key, profile) in &self.profiles {
            if key != &profile.token {
                return Err(Error::Config(format!(
                    "profile key {key:?} does not match token {:?}",
                    profile.token
                )));
            }
            profile.validate()?;
        }
        for (key, profile) in &self.insertion_profiles {
            if key != &profile.anchor {
                return Err(Error::Config(format!(
                    "insertion key {key:?} does not match anchor {:?}",
                    profile.anchor
                )));
            }
            profile.validate()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("model serialization");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ConfusionModel = serde_json::from_str(text)
            .map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Accumulator used while scanning alignments.
#[derive(Debug, Default)]
struct Builder {
    outcomes: BTreeMap<String, BTreeMap<TokenOutcome, u64>>,
    totals: BTreeMap<String, u64>,
    insertions: BTreeMap<String, BTreeMap<Vec<String>, u64>>,
    anchor_totals: BTreeMap<String, u64>,
}

impl Builder {
    fn record(&mut self, token: &str, outcome: TokenOutcome) {
        *self
            .outcomes
            .entry(token.to_string())
            .or_default()
            .entry(outcome)
            .or_insert(0) += 1;
        *self.totals.entry(token.to_string()).or_insert(0) += 1;
    }

    fn record_insertion(&mut self, anchor: &str, tokens: Vec<String>) {
        *self
            .insertions
            .entry(anchor.to_string())
            .or_default()
            .entry(tokens)
            .or_insert(0) += 1;
    }
}

/// Builds a confusion model from aligned (reference, hypothesis) token pairs.
///
/// Per reference position: Match counts as Correct, Delete as Deleted, and a
/// Substitute merged with immediately adjacent Insert ops becomes a
/// SubstitutedBy event over the merged hypothesis sequence. Insert runs not
/// adjacent to a Substitute are credited to the preceding reference token's
/// insertion profile (sentence-start anchor if none). Counts are exact; there
/// is no smoothing.
pub fn build_model(
    items: &[(Vec<Token>, Vec<Token>, Alignment)],
    meta: ModelMeta,
) -> Result<ConfusionModel> {
    let mut builder = Builder::default();
    for (reference, hypothesis, alignment) in items {
        scan_alignment(reference, hypothesis, alignment, &mut builder)?;
    }

    let profiles: BTreeMap<String, TokenProfile> = builder
        .outcomes
        .into_iter()
        .map(|(token, outcomes)| {
            let total = builder.totals[&token];
            (token.clone(), TokenProfile { token, total, outcomes })
        })
        .collect();

    let insertion_profiles: BTreeMap<String, InsertionProfile> = builder
        .insertions
        .into_iter()
        .map(|(anchor, insertions)| {
            let anchor_total = builder.anchor_totals.get(&anchor).copied().unwrap_or(0);
            (anchor.clone(), InsertionProfile { anchor, anchor_total, insertions })
        })
        .collect();

    let model = ConfusionModel {
        version: MODEL_VERSION,
        meta,
        profiles,
        insertion_profiles,
    };
    model.validate()?;
    Ok(model)
}

fn scan_alignment(
    reference: &[Token],
    hypothesis: &[Token],
    alignment: &Alignment,
    builder: &mut Builder,
) -> Result<()> {
    if alignment.ref_len != reference.len() || alignment.hyp_len != hypothesis.len() {
        return Err(Error::InvalidAlignment(format!(
            "alignment is over {}x{} tokens, sequences have {}x{}",
            alignment.ref_len,
            alignment.hyp_len,
            reference.len(),
            hypothesis.len()
        )));
    }
    let ref_surface = |op: &crate::align::EditOp| -> Result<&str> {
        let idx = op
            .ref_index
            .ok_or_else(|| Error::InvalidAlignment("missing ref index".into()))?;
        reference
            .get(idx)
            .map(|t| t.surface.as_str())
            .ok_or_else(|| Error::InvalidAlignment(format!("ref index {idx} out of range")))
    };
    let hyp_surface = |op: &crate::align::EditOp| -> Result<String> {
        let idx = op
            .hyp_index
            .ok_or_else(|| Error::InvalidAlignment("missing hyp index".into()))?;
        hypothesis
            .get(idx)
            .map(|t| t.surface.clone())
            .ok_or_else(|| Error::InvalidAlignment(format!("hyp index {idx} out of range")))
    };

    // Every reference position is a potential insertion anchor, as is the
    // start of each sentence.
    *builder.anchor_totals.entry(SENTENCE_START.to_string()).or_insert(0) += 1;
    for token in reference {
        *builder.anchor_totals.entry(token.surface.clone()).or_insert(0) += 1;
    }

    let ops = &alignment.ops;
    let mut anchor: Option<&str> = None;
    let mut i = 0;
    while i < ops.len() {
        match ops[i].kind {
            EditKind::Match => {
                let surface = ref_surface(&ops[i])?;
                builder.record(surface, TokenOutcome::Correct);
                anchor = Some(surface);
                i += 1;
            }
            EditKind::Delete => {
                let surface = ref_surface(&ops[i])?;
                builder.record(surface, TokenOutcome::Deleted);
                anchor = Some(surface);
                i += 1;
            }
            EditKind::Substitute => {
                let surface = ref_surface(&ops[i])?;
                let mut target = vec![hyp_surface(&ops[i])?];
                i += 1;
                while i < ops.len() && ops[i].kind == EditKind::Insert {
                    target.push(hyp_surface(&ops[i])?);
                    i += 1;
                }
                builder.record(surface, TokenOutcome::SubstitutedBy { target });
                anchor = Some(surface);
            }
            EditKind::Insert => {
                let mut run = Vec::new();
                while i < ops.len() && ops[i].kind == EditKind::Insert {
                    run.push(hyp_surface(&ops[i])?);
                    i += 1;
                }
                if i < ops.len() && ops[i].kind == EditKind::Substitute {
                    // Leading insert run merges into the following substitution.
                    let surface = ref_surface(&ops[i])?;
                    run.push(hyp_surface(&ops[i])?);
                    i += 1;
                    while i < ops.len() && ops[i].kind == EditKind::Insert {
                        run.push(hyp_surface(&ops[i])?);
                        i += 1;
                    }
                    builder.record(surface, TokenOutcome::SubstitutedBy { target: run });
                    anchor = Some(surface);
                } else {
                    builder.record_insertion(anchor.unwrap_or(SENTENCE_START), run);
                }
            }
        }
    }
    Ok(())
}
