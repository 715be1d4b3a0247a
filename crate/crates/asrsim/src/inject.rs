//! Applies a confusion model to a written dialogue corpus, producing a
//! noise-injected copy plus a log of every rewrite.
//!
//! Every rewrite decision draws from a counter-based stream keyed by
//! (seed, dialogue id, turn index, token position), never from a shared
//! sequential stream, so output is byte-identical under any parallel
//! schedule. Injected turns are rendered as the space-joined normalized
//! token sequence; dialogue-state annotations are never modified.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{align, AlignConfig, Alignment};
use crate::confusion::{ConfusionModel, InsertionProfile, TokenOutcome, SENTENCE_START};
use crate::corpus::{Dialogue, Speaker, Turn};
use crate::metrics::{score_corpus, ErrorReport};
use crate::textnorm::{self, Token};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectMode {
    /// Each occurrence independently samples an outcome from its profile.
    Stochastic,
    /// Outcome counts per token match largest-remainder quotas exactly.
    Quota,
}

impl std::fmt::Display for InjectMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InjectMode::Stochastic => "stochastic",
            InjectMode::Quota => "quota",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionConfig {
    pub seed: u64,
    pub mode: InjectMode,
    pub slot_noise_fraction: f64,
    pub target_slots: BTreeSet<String>,
    pub user_turns_only: bool,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        InjectionConfig {
            seed: 0,
            mode: InjectMode::Stochastic,
            slot_noise_fraction: 0.0,
            target_slots: BTreeSet::new(),
            user_turns_only: true,
        }
    }
}

impl InjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.slot_noise_fraction) {
            return Err(Error::Config("slot_noise_fraction must be in [0, 1]".into()));
        }
        if self.slot_noise_fraction > 0.0 && self.target_slots.is_empty() {
            return Err(Error::Config(
                "target_slots must be non-empty when slot_noise_fraction > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriteKind {
    Substituted,
    Deleted,
    Inserted,
    SlotSubstituted,
    SlotDeleted,
}

/// One rewrite event. For insertions `token_position` is the gap index: 0 for
/// a sentence-start insertion, p + 1 for an insertion after reference token p.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub token_position: usize,
    pub original: Vec<String>,
    pub outcome: RewriteKind,
    pub produced: Vec<String>,
    pub mode: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionLog {
    pub records: Vec<LogRecord>,
    pub warnings: Vec<String>,
}

impl InjectionLog {
    fn sort(&mut self) {
        self.records.sort_by(|a, b| {
            (&a.dialogue_id, a.turn_index, a.token_position, a.outcome).cmp(&(
                &b.dialogue_id,
                b.turn_index,
                b.token_position,
                b.outcome,
            ))
        });
    }

    /// Writes the log as sorted JSON lines.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        for record in &self.records {
            serde_json::to_writer(&mut writer, record)
                .map_err(|e| Error::format(path, e.to_string()))?;
            writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }
}

// Keyed counter-based RNG derivation. Distinct roles keep the outcome,
// insertion, and slot streams independent at the same position.
const ROLE_OUTCOME: u64 = 0x01;
const ROLE_INSERTION: u64 = 0x02;
const ROLE_SLOT: u64 = 0x03;
const ROLE_SLOT_SELECT: u64 = 0x04;
const ROLE_QUOTA: u64 = 0x05;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(s: &str) -> u64 {
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    for byte in s.as_bytes() {
        hash ^= *byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

fn keyed_rng(seed: u64, key: &str, turn: usize, pos: usize, role: u64) -> ChaCha8Rng {
    let mut h = splitmix(seed ^ splitmix(role));
    h = splitmix(h ^ fnv1a(key));
    h = splitmix(h ^ turn as u64);
    h = splitmix(h ^ pos as u64);
    ChaCha8Rng::seed_from_u64(h)
}

/// Samples one outcome from a profile by cumulative counts.
fn sample_outcome(profile: &crate::confusion::TokenProfile, rng: &mut ChaCha8Rng) -> TokenOutcome {
    let mut draw = rng.gen_range(0..profile.total);
    for (outcome, &count) in &profile.outcomes {
        if draw < count {
            return outcome.clone();
        }
        draw -= count;
    }
    unreachable!("outcome counts sum to total");
}

/// Samples an insertion sequence (or none) from an anchor's profile.
fn sample_insertion<'m>(
    profile: &'m InsertionProfile,
    rng: &mut ChaCha8Rng,
) -> Option<&'m Vec<String>> {
    let mut draw = rng.gen_range(0..profile.anchor_total);
    for (seq, &count) in &profile.insertions {
        if draw < count {
            return Some(seq);
        }
        draw -= count;
    }
    None
}

fn turn_is_eligible(turn: &Turn, cfg: &InjectionConfig) -> bool {
    !cfg.user_turns_only || turn.speaker == Speaker::User
}

/// Quota assignments computed up front over the whole corpus:
/// (dialogue index, turn index, position) to decided outcome.
struct QuotaPlan {
    outcomes: HashMap<(usize, usize, usize), TokenOutcome>,
    insertions: HashMap<(usize, usize, usize), Vec<String>>,
}

/// Largest-remainder apportionment of `total_slots` slots among weighted
/// options. Ties break toward earlier options, i.e. canonical outcome order.
fn largest_remainder(weights: &[u64], weight_total: u64, total_slots: u64) -> Vec<u64> {
    let mut base: Vec<u64> = Vec::with_capacity(weights.len());
    let mut remainders: Vec<(u64, usize)> = Vec::with_capacity(weights.len());
    let mut assigned = 0u64;
    for (idx, &w) in weights.iter().enumerate() {
        let exact = w as u128 * total_slots as u128;
        let floor = (exact / weight_total as u128) as u64;
        let rem = (exact % weight_total as u128) as u64;
        base.push(floor);
        assigned += floor;
        remainders.push((rem, idx));
    }
    // Sort by remainder descending, index ascending.
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut leftover = total_slots - assigned;
    for (_, idx) in remainders {
        if leftover == 0 {
            break;
        }
        base[idx] += 1;
        leftover -= 1;
    }
    base
}

fn build_quota_plan(
    corpus: &[Dialogue],
    model: &ConfusionModel,
    cfg: &InjectionConfig,
) -> QuotaPlan {
    // Occurrences per token surface and per insertion anchor gap, in corpus
    // order; sorted by (dialogue id, turn index, position) before assignment.
    let mut token_occurrences: HashMap<&str, Vec<(&str, usize, usize, usize)>> = HashMap::new();
    let mut anchor_occurrences: HashMap<&str, Vec<(&str, usize, usize, usize)>> = HashMap::new();
    for (d_idx, dialogue) in corpus.iter().enumerate() {
        for (t_idx, turn) in dialogue.turns.iter().enumerate() {
            if !turn_is_eligible(turn, cfg) {
                continue;
            }
            let tokens = textnorm::tokenize_reference(&turn.text);
            if model.insertion_profile(SENTENCE_START).is_some() {
                anchor_occurrences
                    .entry(SENTENCE_START)
                    .or_default()
                    .push((&dialogue.id, d_idx, t_idx, 0));
            }
            for (pos, token) in tokens.iter().enumerate() {
                if let Some(profile) = model.query(&token.surface) {
                    token_occurrences
                        .entry(profile.token.as_str())
                        .or_default()
                        .push((&dialogue.id, d_idx, t_idx, pos));
                }
                if let Some(profile) = model.insertion_profile(&token.surface) {
                    anchor_occurrences
                        .entry(profile.anchor.as_str())
                        .or_default()
                        .push((&dialogue.id, d_idx, t_idx, pos + 1));
                }
            }
        }
    }

    let mut plan = QuotaPlan { outcomes: HashMap::new(), insertions: HashMap::new() };

    let mut surfaces: Vec<&str> = token_occurrences.keys().copied().collect();
    surfaces.sort_unstable();
    for surface in surfaces {
        let mut occurrences = token_occurrences.remove(surface).unwrap();
        occurrences.sort_by(|a, b| (a.0, a.2, a.3).cmp(&(b.0, b.2, b.3)));
        let profile = model.query(surface).unwrap();
        let options: Vec<(&TokenOutcome, u64)> =
            profile.outcomes.iter().map(|(o, &c)| (o, c)).collect();
        let weights: Vec<u64> = options.iter().map(|(_, c)| *c).collect();
        let quotas = largest_remainder(&weights, profile.total, occurrences.len() as u64);
        let mut assignment: Vec<&TokenOutcome> = Vec::with_capacity(occurrences.len());
        for ((outcome, _), quota) in options.iter().zip(&quotas) {
            for _ in 0..*quota {
                assignment.push(outcome);
            }
        }
        let mut rng = keyed_rng(cfg.seed, surface, 0, 0, ROLE_QUOTA);
        assignment.shuffle(&mut rng);
        for ((_, d_idx, t_idx, pos), outcome) in occurrences.into_iter().zip(assignment) {
            plan.outcomes.insert((d_idx, t_idx, pos), outcome.clone());
        }
    }

    let mut anchors: Vec<&str> = anchor_occurrences.keys().copied().collect();
    anchors.sort_unstable();
    for anchor in anchors {
        let mut occurrences = anchor_occurrences.remove(anchor).unwrap();
        occurrences.sort_by(|a, b| (a.0, a.2, a.3).cmp(&(b.0, b.2, b.3)));
        let profile = model.insertion_profile(anchor).unwrap();
        // "No insertion" participates in the apportionment with the
        // remaining anchor mass.
        let mut options: Vec<(Option<&Vec<String>>, u64)> =
            profile.insertions.iter().map(|(seq, &c)| (Some(seq), c)).collect();
        options.push((None, profile.anchor_total - profile.event_count()));
        let weights: Vec<u64> = options.iter().map(|(_, c)| *c).collect();
        let quotas = largest_remainder(&weights, profile.anchor_total, occurrences.len() as u64);
        let mut assignment: Vec<Option<&Vec<String>>> = Vec::with_capacity(occurrences.len());
        for ((seq, _), quota) in options.iter().zip(&quotas) {
            for _ in 0..*quota {
                assignment.push(*seq);
            }
        }
        let mut rng = keyed_rng(cfg.seed, anchor, 1, 0, ROLE_QUOTA);
        assignment.shuffle(&mut rng);
        for ((_, d_idx, t_idx, pos), seq) in occurrences.into_iter().zip(assignment) {
            if let Some(seq) = seq {
                plan.insertions.insert((d_idx, t_idx, pos), seq.clone());
            }
        }
    }

    plan
}

/// Rewrites a written corpus according to the model's per-token outcome and
/// insertion distributions. Tokens without profiles pass through unchanged;
/// system turns pass through verbatim when `user_turns_only` is set;
/// dialogue-state annotations are never modified.
pub fn inject_corpus(
    corpus: &[Dialogue],
    model: &ConfusionModel,
    cfg: &InjectionConfig,
) -> Result<(Vec<Dialogue>, InjectionLog)> {
    cfg.validate()?;
    let quota_plan = match cfg.mode {
        InjectMode::Quota => Some(build_quota_plan(corpus, model, cfg)),
        InjectMode::Stochastic => None,
    };

    let per_dialogue: Vec<(Dialogue, Vec<LogRecord>)> = corpus
        .par_iter()
        .enumerate()
        .map(|(d_idx, dialogue)| inject_dialogue(d_idx, dialogue, model, cfg, quota_plan.as_ref()))
        .collect();

    let mut noisy = Vec::with_capacity(per_dialogue.len());
    let mut log = InjectionLog::default();
    for (dialogue, records) in per_dialogue {
        noisy.push(dialogue);
        log.records.extend(records);
    }
    log.sort();
    Ok((noisy, log))
}

fn inject_dialogue(
    d_idx: usize,
    dialogue: &Dialogue,
    model: &ConfusionModel,
    cfg: &InjectionConfig,
    quota_plan: Option<&QuotaPlan>,
) -> (Dialogue, Vec<LogRecord>) {
    let mut records = Vec::new();
    let mut turns = Vec::with_capacity(dialogue.turns.len());
    for (t_idx, turn) in dialogue.turns.iter().enumerate() {
        if !turn_is_eligible(turn, cfg) {
            turns.push(turn.clone());
            continue;
        }
        let tokens = textnorm::tokenize_reference(&turn.text);
        let mut out: Vec<String> = Vec::with_capacity(tokens.len());
        let mut log_rewrite = |pos: usize, original: Vec<String>, kind: RewriteKind, produced: Vec<String>| {
            records.push(LogRecord {
                dialogue_id: dialogue.id.clone(),
                turn_index: t_idx,
                token_position: pos,
                original,
                outcome: kind,
                produced,
                mode: cfg.mode.to_string(),
            });
        };

        let apply_insertion = |gap: usize, anchor: &str, out: &mut Vec<String>,
                                   log_rewrite: &mut dyn FnMut(usize, Vec<String>, RewriteKind, Vec<String>)| {
            let inserted: Option<Vec<String>> = match quota_plan {
                Some(plan) => plan.insertions.get(&(d_idx, t_idx, gap)).cloned(),
                None => model.insertion_profile(anchor).and_then(|profile| {
                    let mut rng =
                        keyed_rng(cfg.seed, &dialogue.id, t_idx, gap, ROLE_INSERTION);
                    sample_insertion(profile, &mut rng).cloned()
                }),
            };
            if let Some(seq) = inserted {
                out.extend(seq.iter().cloned());
                log_rewrite(gap, Vec::new(), RewriteKind::Inserted, seq);
            }
        };

        apply_insertion(0, SENTENCE_START, &mut out, &mut log_rewrite);
        for (pos, token) in tokens.iter().enumerate() {
            let outcome: Option<TokenOutcome> = match quota_plan {
                Some(plan) => plan.outcomes.get(&(d_idx, t_idx, pos)).cloned(),
                None => model.query(&token.surface).map(|profile| {
                    let mut rng = keyed_rng(cfg.seed, &dialogue.id, t_idx, pos, ROLE_OUTCOME);
                    sample_outcome(profile, &mut rng)
                }),
            };
            match outcome {
                None | Some(TokenOutcome::Correct) => out.push(token.surface.clone()),
                Some(TokenOutcome::Deleted) => {
                    log_rewrite(pos, vec![token.surface.clone()], RewriteKind::Deleted, Vec::new());
                }
                Some(TokenOutcome::SubstitutedBy { target }) => {
                    out.extend(target.iter().cloned());
                    log_rewrite(pos, vec![token.surface.clone()], RewriteKind::Substituted, target);
                }
            }
            apply_insertion(pos + 1, &token.surface, &mut out, &mut log_rewrite);
        }

        turns.push(Turn {
            speaker: turn.speaker,
            text: out.join(" "),
            state: turn.state.clone(),
        });
    }
    (Dialogue { id: dialogue.id.clone(), turns }, records)
}

/// One verbatim occurrence of a target slot value inside a user turn.
#[derive(Debug, Clone)]
struct SlotOccurrence {
    d_idx: usize,
    t_idx: usize,
    start: usize,
    value_tokens: Vec<Token>,
}

fn find_subsequence(haystack: &[Token], needle: &[Token]) -> Option<usize> {
    if needle.is_empty() || haystack.len() < needle.len() {
        return None;
    }
    (0..=haystack.len() - needle.len()).find(|&start| {
        needle
            .iter()
            .zip(&haystack[start..])
            .all(|(n, h)| n.surface == h.surface)
    })
}

/// Rewrites a seeded, exact-count fraction of target-slot value occurrences
/// with error outcomes from the model (Correct excluded). Gold state
/// annotations stay clean; turns without a selected occurrence keep their
/// original text verbatim.
pub fn inject_slot_values(
    corpus: &[Dialogue],
    model: &ConfusionModel,
    cfg: &InjectionConfig,
) -> Result<(Vec<Dialogue>, InjectionLog)> {
    cfg.validate()?;
    if cfg.slot_noise_fraction <= 0.0 {
        return Ok((corpus.to_vec(), InjectionLog::default()));
    }
    if !corpus
        .iter()
        .flat_map(|d| &d.turns)
        .any(|t| t.state.is_some())
    {
        return Err(Error::Config(
            "slot noise requested but corpus carries no state annotations".into(),
        ));
    }

    // Enumerate eligible occurrences in deterministic order.
    let mut eligible: Vec<SlotOccurrence> = Vec::new();
    let mut order: Vec<&Dialogue> = corpus.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let index_of: HashMap<&str, usize> = corpus
        .iter()
        .enumerate()
        .map(|(i, d)| (d.id.as_str(), i))
        .collect();
    for dialogue in order {
        let d_idx = index_of[dialogue.id.as_str()];
        for (t_idx, turn) in dialogue.turns.iter().enumerate() {
            if turn.speaker != Speaker::User {
                continue;
            }
            let Some(state) = &turn.state else { continue };
            let turn_tokens = textnorm::tokenize_reference(&turn.text);
            for (slot, value) in &state.slots {
                if !cfg.target_slots.contains(slot) {
                    continue;
                }
                let value_tokens = textnorm::tokenize_reference(value);
                let Some(start) = find_subsequence(&turn_tokens, &value_tokens) else {
                    continue;
                };
                let has_errorful_token = value_tokens.iter().any(|t| {
                    model
                        .query(&t.surface)
                        .is_some_and(|p| p.has_error_outcome())
                });
                if has_errorful_token {
                    eligible.push(SlotOccurrence { d_idx, t_idx, start, value_tokens });
                }
            }
        }
    }

    let mut log = InjectionLog::default();
    if eligible.is_empty() {
        log.warnings.push(format!(
            "slot_noise_fraction is {} but no eligible slot-value occurrences were found",
            cfg.slot_noise_fraction
        ));
        return Ok((corpus.to_vec(), log));
    }

    let n_selected = (cfg.slot_noise_fraction * eligible.len() as f64).round() as usize;
    let mut rng = keyed_rng(cfg.seed, "slot-selection", 0, 0, ROLE_SLOT_SELECT);
    let mut selected = rand::seq::index::sample(&mut rng, eligible.len(), n_selected).into_vec();
    selected.sort_unstable();

    // Per-turn replacement plans: position -> produced tokens.
    let mut plans: HashMap<(usize, usize), HashMap<usize, Vec<String>>> = HashMap::new();
    for &occ_idx in &selected {
        let occ = &eligible[occ_idx];
        let dialogue = &corpus[occ.d_idx];
        let plan = plans.entry((occ.d_idx, occ.t_idx)).or_default();
        for (offset, token) in occ.value_tokens.iter().enumerate() {
            let pos = occ.start + offset;
            let Some(profile) = model.query(&token.surface) else { continue };
            if !profile.has_error_outcome() {
                continue;
            }
            // Sample among error outcomes only, renormalized.
            let error_total = profile.error_count();
            let mut rng = keyed_rng(cfg.seed, &dialogue.id, occ.t_idx, pos, ROLE_SLOT);
            let mut draw = rng.gen_range(0..error_total);
            let mut chosen = None;
            for (outcome, &count) in &profile.outcomes {
                if matches!(outcome, TokenOutcome::Correct) {
                    continue;
                }
                if draw < count {
                    chosen = Some(outcome.clone());
                    break;
                }
                draw -= count;
            }
            let (kind, produced) = match chosen.expect("error outcome exists") {
                TokenOutcome::Deleted => (RewriteKind::SlotDeleted, Vec::new()),
                TokenOutcome::SubstitutedBy { target } => (RewriteKind::SlotSubstituted, target),
                TokenOutcome::Correct => unreachable!(),
            };
            plan.insert(pos, produced.clone());
            log.records.push(LogRecord {
                dialogue_id: dialogue.id.clone(),
                turn_index: occ.t_idx,
                token_position: pos,
                original: vec![token.surface.clone()],
                outcome: kind,
                produced,
                mode: cfg.mode.to_string(),
            });
        }
    }

    let noisy: Vec<Dialogue> = corpus
        .iter()
        .enumerate()
        .map(|(d_idx, dialogue)| {
            let turns = dialogue
                .turns
                .iter()
                .enumerate()
                .map(|(t_idx, turn)| {
                    let Some(plan) = plans.get(&(d_idx, t_idx)) else {
                        return turn.clone();
                    };
                    let tokens = textnorm::tokenize_reference(&turn.text);
                    let mut out: Vec<String> = Vec::with_capacity(tokens.len());
                    for (pos, token) in tokens.iter().enumerate() {
                        match plan.get(&pos) {
                            Some(produced) => out.extend(produced.iter().cloned()),
                            None => out.push(token.surface.clone()),
                        }
                    }
                    Turn { speaker: turn.speaker, text: out.join(" "), state: turn.state.clone() }
                })
                .collect();
            Dialogue { id: dialogue.id.clone(), turns }
        })
        .collect();

    log.sort();
    Ok((noisy, log))
}

/// Aligns each noisy user turn against its clean counterpart (clean as
/// reference) and returns the corpus error report: the a-posteriori check
/// that injected rates match the source model.
pub fn validate_injection(clean: &[Dialogue], noisy: &[Dialogue]) -> Result<ErrorReport> {
    if clean.len() != noisy.len() {
        return Err(Error::StructureMismatch(format!(
            "{} clean dialogues vs {} noisy",
            clean.len(),
            noisy.len()
        )));
    }
    let alignments: Vec<Vec<Alignment>> = clean
        .par_iter()
        .zip(noisy.par_iter())
        .map(|(c, n)| {
            if c.id != n.id {
                return Err(Error::StructureMismatch(format!(
                    "dialogue id {:?} vs {:?}",
                    c.id, n.id
                )));
            }
            if c.turns.len() != n.turns.len() {
                return Err(Error::StructureMismatch(format!(
                    "dialogue {:?}: {} turns vs {}",
                    c.id,
                    c.turns.len(),
                    n.turns.len()
                )));
            }
            let mut out = Vec::new();
            for (ct, nt) in c.turns.iter().zip(&n.turns) {
                if ct.speaker != nt.speaker {
                    return Err(Error::StructureMismatch(format!(
                        "dialogue {:?}: speaker mismatch",
                        c.id
                    )));
                }
                if ct.speaker != Speaker::User {
                    continue;
                }
                let reference = textnorm::tokenize_reference(&ct.text);
                let hypothesis = textnorm::tokenize_reference(&nt.text);
                out.push(align(&reference, &hypothesis, AlignConfig::unit()));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(score_corpus(alignments.iter().flatten()))
}
