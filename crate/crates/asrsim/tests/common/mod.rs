//! Shared fixture builders for integration tests.

use asrsim::corpus::TranscriptPair;

/// A corpus realizing exactly I=23, D=19, S=81 over 1000 reference words,
/// with 78 of 142 sentences containing at least one error (54.9% after
/// rounding). Every word is globally unique so the minimal alignment is
/// unambiguous and the intended counts are the measured counts.
pub fn table1_pairs() -> Vec<TranscriptPair> {
    let mut events: Vec<char> = Vec::new();
    events.extend(std::iter::repeat_n('S', 81));
    events.extend(std::iter::repeat_n('D', 19));
    events.extend(std::iter::repeat_n('I', 23));

    // 142 sentences: the first 6 have 8 words, the rest 7 (total 1000).
    // Sentences 0..78 carry errors: two events each for the first 45, one
    // for the rest (45*2 + 33 = 123 events).
    let mut pairs = Vec::new();
    let mut event_idx = 0;
    let mut sub_n = 0;
    let mut ins_n = 0;
    for sentence in 0..142 {
        let n_words = if sentence < 6 { 8 } else { 7 };
        let ref_words: Vec<String> = (0..n_words).map(|j| format!("w{sentence}x{j}")).collect();
        let mut hyp_words = ref_words.clone();
        let n_events = if sentence < 45 {
            2
        } else if sentence < 78 {
            1
        } else {
            0
        };
        for slot in 0..n_events {
            let event = events[event_idx];
            event_idx += 1;
            match event {
                'S' => {
                    hyp_words[slot] = format!("sub{sub_n}");
                    sub_n += 1;
                }
                'D' => {
                    // Delete from the tail so earlier slots stay addressable.
                    hyp_words.remove(hyp_words.len() - 1);
                }
                'I' => {
                    hyp_words.push(format!("ins{ins_n}"));
                    ins_n += 1;
                }
                _ => unreachable!(),
            }
        }
        pairs.push(TranscriptPair {
            id: format!("s{sentence}"),
            ref_text: ref_words.join(" "),
            hyp_text: hyp_words.join(" "),
        });
    }
    assert_eq!(event_idx, events.len());
    pairs
}

/// Pairs realizing the "book" (94.6 correct / 2.2 look / 2.0 put / 1.2
/// deleted) and "post-code" (68.9 correct / 22 code / 3 post-card / 6.1
/// other) per-token statistics over 1000 occurrences each.
pub fn narrative_profile_pairs() -> Vec<TranscriptPair> {
    let mut pairs = Vec::new();
    let push = |ref_text: &str, hyp_text: &str, n: usize, pairs: &mut Vec<TranscriptPair>| {
        let start = pairs.len();
        for i in 0..n {
            pairs.push(TranscriptPair {
                id: format!("p{}", start + i),
                ref_text: ref_text.to_string(),
                hyp_text: hyp_text.to_string(),
            });
        }
    };
    push("book", "book", 946, &mut pairs);
    push("book", "look", 22, &mut pairs);
    push("book", "put", 20, &mut pairs);
    push("book", "", 12, &mut pairs);
    push("post-code", "post-code", 689, &mut pairs);
    push("post-code", "code", 220, &mut pairs);
    push("post-code", "post-card", 30, &mut pairs);
    push("post-code", "zone", 61, &mut pairs);
    pairs
}
