//! Property tests for the spec-level invariants of tokenization, alignment,
//! scoring, model building, and corpus serialization.

use std::collections::HashMap;

use proptest::prelude::*;

use asrsim::align::{align, count_errors, replay, AlignConfig};
use asrsim::confusion::{build_model, ModelMeta, TokenOutcome};
use asrsim::corpus::{read_dialogues, write_dialogues, Dialogue, DialogueFormat, DialogueState, Speaker, Turn};
use asrsim::metrics::{merge, score_corpus, ErrorReport};
use asrsim::textnorm::{join, tokenize_hypothesis, tokenize_reference, Token};

/// Independent minimum-edit-cost oracle: memoized recursion over suffixes,
/// sharing nothing with the iterative table-and-traceback implementation.
fn oracle_cost(reference: &[Token], hypothesis: &[Token], cfg: AlignConfig) -> u64 {
    fn go(
        r: &[Token],
        h: &[Token],
        i: usize,
        j: usize,
        cfg: AlignConfig,
        memo: &mut HashMap<(usize, usize), u64>,
    ) -> u64 {
        if i == r.len() {
            return (h.len() - j) as u64 * cfg.ins_weight as u64;
        }
        if j == h.len() {
            return (r.len() - i) as u64 * cfg.del_weight as u64;
        }
        if let Some(&cost) = memo.get(&(i, j)) {
            return cost;
        }
        let sub_cost = if r[i].surface == h[j].surface { 0 } else { cfg.sub_weight as u64 };
        let best = (go(r, h, i + 1, j + 1, cfg, memo) + sub_cost)
            .min(go(r, h, i + 1, j, cfg, memo) + cfg.del_weight as u64)
            .min(go(r, h, i, j + 1, cfg, memo) + cfg.ins_weight as u64);
        memo.insert((i, j), best);
        best
    }
    go(reference, hypothesis, 0, 0, cfg, &mut HashMap::new())
}

fn symbols(len_max: usize) -> impl Strategy<Value = Vec<Token>> {
    proptest::collection::vec(0u8..5, 0..=len_max).prop_map(|syms| {
        let text: Vec<String> = syms
            .iter()
            .map(|&s| ["alpha", "bravo", "carol", "delta", "echo"][s as usize].to_string())
            .collect();
        tokenize_reference(&text.join(" "))
    })
}

fn raw_text() -> impl Strategy<Value = String> {
    // Words, digits, punctuation runs, and messy whitespace.
    proptest::collection::vec(
        prop_oneof![
            "[a-z]{1,8}",
            "[a-z]{1,4}-[a-z]{1,4}",
            "[a-z]{1,4}'[a-z]{1,3}",
            "[0-9]{1,4}",
            "[.,!?;:]{1,3}",
            Just("  ".to_string()),
        ],
        0..12,
    )
    .prop_map(|parts| parts.join(" "))
}

proptest! {
    #[test]
    fn tokenize_reference_is_idempotent(text in raw_text()) {
        let once = tokenize_reference(&text);
        let twice = tokenize_reference(&join(&once));
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn hypothesis_equals_reference_minus_punct(text in raw_text()) {
        let hyp = tokenize_hypothesis(&text);
        let filtered: Vec<_> = tokenize_reference(&text)
            .into_iter()
            .filter(|t| !t.is_punct)
            .collect();
        prop_assert_eq!(&hyp, &filtered);
        prop_assert!(hyp.iter().all(|t| !t.is_punct));
    }

    #[test]
    fn align_cost_matches_oracle(
        r in symbols(10),
        h in symbols(10),
        preset in prop_oneof![Just(AlignConfig::unit()), Just(AlignConfig::sclite())],
    ) {
        let alignment = align(&r, &h, preset);
        prop_assert_eq!(alignment.cost, oracle_cost(&r, &h, preset));
    }

    #[test]
    fn replay_reconstructs_hypothesis(r in symbols(10), h in symbols(10)) {
        let alignment = align(&r, &h, AlignConfig::unit());
        prop_assert_eq!(replay(&r, &h, &alignment), h);
    }

    #[test]
    fn zero_cost_iff_equal(r in symbols(8), h in symbols(8)) {
        let alignment = align(&r, &h, AlignConfig::unit());
        prop_assert_eq!(alignment.cost == 0, r == h);
    }

    #[test]
    fn count_identities_hold(r in symbols(10), h in symbols(10)) {
        let alignment = align(&r, &h, AlignConfig::unit());
        let c = count_errors(&alignment);
        prop_assert_eq!(c.matches + c.substitutions + c.deletions, r.len() as u64);
        prop_assert_eq!(c.matches + c.substitutions + c.insertions, h.len() as u64);
    }

    #[test]
    fn merge_is_associative_and_commutative(
        pairs in proptest::collection::vec((symbols(6), symbols(6)), 0..9),
    ) {
        let alignments: Vec<_> = pairs
            .iter()
            .map(|(r, h)| align(r, h, AlignConfig::unit()))
            .collect();
        let third = alignments.len() / 3;
        let a = score_corpus(&alignments[..third]);
        let b = score_corpus(&alignments[third..2 * third]);
        let c = score_corpus(&alignments[2 * third..]);
        prop_assert_eq!(merge(&merge(&a, &b), &c), merge(&a, &merge(&b, &c)));
        prop_assert_eq!(merge(&a, &b), merge(&b, &a));
        prop_assert_eq!(merge(&a, &ErrorReport::empty()), a);
        prop_assert_eq!(merge(&merge(&a, &b), &c), score_corpus(&alignments));
    }

    #[test]
    fn model_counts_match_corpus_scoring(
        pairs in proptest::collection::vec((symbols(8), symbols(8)), 1..12),
    ) {
        let items: Vec<_> = pairs
            .iter()
            .map(|(r, h)| (r.clone(), h.clone(), align(r, h, AlignConfig::unit())))
            .collect();
        let report = score_corpus(items.iter().map(|(_, _, a)| a));
        let model = build_model(&items, ModelMeta::default()).unwrap();

        // Aggregate model counts under the same convention metrics uses: a
        // multi-token substitution target is one substitution plus surplus
        // insertion words.
        let mut subs = 0u64;
        let mut dels = 0u64;
        let mut ins = 0u64;
        let mut total = 0u64;
        for profile in model.profiles.values() {
            total += profile.total;
            for (outcome, &count) in &profile.outcomes {
                match outcome {
                    TokenOutcome::Correct => {}
                    TokenOutcome::Deleted => dels += count,
                    TokenOutcome::SubstitutedBy { target } => {
                        subs += count;
                        ins += (target.len() as u64 - 1) * count;
                    }
                }
            }
        }
        for profile in model.insertion_profiles.values() {
            ins += profile
                .insertions
                .iter()
                .map(|(seq, &c)| seq.len() as u64 * c)
                .sum::<u64>();
        }
        prop_assert_eq!(total, report.n_ref_words);
        prop_assert_eq!(subs, report.substitutions);
        prop_assert_eq!(dels, report.deletions);
        prop_assert_eq!(ins, report.insertions);
    }
}

fn slot_name() -> impl Strategy<Value = String> {
    "[a-z]{2,6}-[a-z]{2,6}"
}

fn dialogue(idx: usize) -> impl Strategy<Value = Dialogue> {
    proptest::collection::vec(
        (
            any::<bool>(),
            "[a-zA-Z ,.!?']{0,30}",
            proptest::option::of(proptest::collection::btree_map(slot_name(), "[a-z0-9 ]{1,10}", 0..4)),
        ),
        1..5,
    )
    .prop_map(move |turns| Dialogue {
        id: format!("dlg-{idx}"),
        turns: turns
            .into_iter()
            .map(|(is_user, text, slots)| Turn {
                speaker: if is_user { Speaker::User } else { Speaker::System },
                text,
                state: if is_user {
                    slots.map(|slots| DialogueState { slots })
                } else {
                    None
                },
            })
            .collect(),
    })
}

fn corpus() -> impl Strategy<Value = Vec<Dialogue>> {
    (0usize..5).prop_flat_map(|n| {
        let dialogues: Vec<_> = (0..n).map(dialogue).collect();
        dialogues
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn native_corpus_round_trips(corpus in corpus()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        write_dialogues(&corpus, &path).unwrap();
        let back = read_dialogues(&path, DialogueFormat::Native).unwrap();
        prop_assert_eq!(back, corpus);
    }
}
