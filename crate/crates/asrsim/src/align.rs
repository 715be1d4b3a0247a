//! Minimum-edit-distance alignment between reference and hypothesis token
//! sequences, with every discrepancy labeled as a substitution, deletion, or
//! insertion.

use serde::{Deserialize, Serialize};

use crate::textnorm::Token;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    Match,
    Substitute,
    Delete,
    Insert,
}

/// One edit operation. Match/Substitute carry both indices, Delete only the
/// reference index, Insert only the hypothesis index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOp {
    pub kind: EditKind,
    pub ref_index: Option<usize>,
    pub hyp_index: Option<usize>,
}

impl EditOp {
    fn matched(r: usize, h: usize) -> Self {
        EditOp { kind: EditKind::Match, ref_index: Some(r), hyp_index: Some(h) }
    }
    fn substitute(r: usize, h: usize) -> Self {
        EditOp { kind: EditKind::Substitute, ref_index: Some(r), hyp_index: Some(h) }
    }
    fn delete(r: usize) -> Self {
        EditOp { kind: EditKind::Delete, ref_index: Some(r), hyp_index: None }
    }
    fn insert(h: usize) -> Self {
        EditOp { kind: EditKind::Insert, ref_index: None, hyp_index: Some(h) }
    }
}

/// Edit weights. Matches always cost 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub sub_weight: u32,
    pub ins_weight: u32,
    pub del_weight: u32,
}

impl AlignConfig {
    /// Textbook Levenshtein: all edits cost 1.
    pub fn unit() -> Self {
        AlignConfig { sub_weight: 1, ins_weight: 1, del_weight: 1 }
    }

    /// The weighting used by the NIST sclite scorer.
    pub fn sclite() -> Self {
        AlignConfig { sub_weight: 4, ins_weight: 3, del_weight: 3 }
    }
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig::unit()
    }
}

/// A complete alignment: ordered ops that replay the reference into the
/// hypothesis, plus the minimal total edit cost.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub ops: Vec<EditOp>,
    pub cost: u64,
    pub ref_len: usize,
    pub hyp_len: usize,
}

impl Alignment {
    /// True iff the alignment contains any non-Match op.
    pub fn has_error(&self) -> bool {
        self.ops.iter().any(|op| op.kind != EditKind::Match)
    }
}

/// Per-alignment error counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ErrorCounts {
    pub matches: u64,
    pub substitutions: u64,
    pub deletions: u64,
    pub insertions: u64,
}

/// Computes a globally minimal alignment under `cfg` with full DP and a
/// deterministic traceback. On equal cumulative cost the traceback prefers
/// Substitute, then Delete, then Insert.
pub fn align(reference: &[Token], hypothesis: &[Token], cfg: AlignConfig) -> Alignment {
    let m = reference.len();
    let n = hypothesis.len();
    let sub = cfg.sub_weight as u64;
    let ins = cfg.ins_weight as u64;
    let del = cfg.del_weight as u64;

    // dp[i][j] = min cost aligning ref[..i] to hyp[..j], flattened row-major.
    let width = n + 1;
    let mut dp = vec![0u64; (m + 1) * width];
    for (j, cell) in dp.iter_mut().enumerate().take(n + 1).skip(1) {
        *cell = j as u64 * ins;
    }
    for i in 1..=m {
        dp[i * width] = i as u64 * del;
        for j in 1..=n {
            let diag = dp[(i - 1) * width + j - 1]
                + if reference[i - 1].surface == hypothesis[j - 1].surface { 0 } else { sub };
            let up = dp[(i - 1) * width + j] + del;
            let left = dp[i * width + j - 1] + ins;
            dp[i * width + j] = diag.min(up).min(left);
        }
    }

    let mut ops = Vec::with_capacity(m.max(n));
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let here = dp[i * width + j];
        if i > 0 && j > 0 {
            let equal = reference[i - 1].surface == hypothesis[j - 1].surface;
            let diag_cost = dp[(i - 1) * width + j - 1] + if equal { 0 } else { sub };
            if diag_cost == here {
                ops.push(if equal {
                    EditOp::matched(i - 1, j - 1)
                } else {
                    EditOp::substitute(i - 1, j - 1)
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[(i - 1) * width + j] + del == here {
            ops.push(EditOp::delete(i - 1));
            i -= 1;
        } else {
            ops.push(EditOp::insert(j - 1));
            j -= 1;
        }
    }
    ops.reverse();

    Alignment { ops, cost: dp[m * width + n], ref_len: m, hyp_len: n }
}

/// Counts each op kind in an alignment.
pub fn count_errors(alignment: &Alignment) -> ErrorCounts {
    let mut counts = ErrorCounts::default();
    for op in &alignment.ops {
        match op.kind {
            EditKind::Match => counts.matches += 1,
            EditKind::Substitute => counts.substitutions += 1,
            EditKind::Delete => counts.deletions += 1,
            EditKind::Insert => counts.insertions += 1,
        }
    }
    counts
}

/// Replays the alignment's ops over the reference; the result must equal the
/// hypothesis the alignment was computed against.
pub fn replay(reference: &[Token], hypothesis: &[Token], alignment: &Alignment) -> Vec<Token> {
    let mut out = Vec::with_capacity(alignment.hyp_len);
    for op in &alignment.ops {
        match op.kind {
            EditKind::Match => out.push(reference[op.ref_index.unwrap()].clone()),
            EditKind::Substitute | EditKind::Insert => {
                out.push(hypothesis[op.hyp_index.unwrap()].clone())
            }
            EditKind::Delete => {}
        }
    }
    out
}
