//! Corpus-level error rates: per-category percentages, WER, and SER.
//!
//! Rates are derived views over exact counts; rendering rounds to one decimal
//! place, so the additive identity sub + del + ins = WER holds both exactly
//! and in display.

use serde::{Deserialize, Serialize};

use crate::align::{count_errors, Alignment};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub n_ref_words: u64,
    pub n_sentences: u64,
    pub n_error_sentences: u64,
    pub substitutions: u64,
    pub deletions: u64,
    pub insertions: u64,
}

impl ErrorReport {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Substitution percentage, undefined when there are no reference words.
    pub fn sub_rate(&self) -> Option<f64> {
        self.rate(self.substitutions)
    }

    pub fn del_rate(&self) -> Option<f64> {
        self.rate(self.deletions)
    }

    pub fn ins_rate(&self) -> Option<f64> {
        self.rate(self.insertions)
    }

    /// Word error rate: all errors over reference words. May exceed 100 for
    /// insertion-heavy hypotheses.
    pub fn wer(&self) -> Option<f64> {
        self.rate(self.substitutions + self.deletions + self.insertions)
    }

    /// Sentence error rate: sentences with at least one error.
    pub fn ser(&self) -> Option<f64> {
        if self.n_sentences == 0 {
            None
        } else {
            Some(100.0 * self.n_error_sentences as f64 / self.n_sentences as f64)
        }
    }

    fn rate(&self, count: u64) -> Option<f64> {
        if self.n_ref_words == 0 {
            None
        } else {
            Some(100.0 * count as f64 / self.n_ref_words as f64)
        }
    }
}

/// Sums error counts over a corpus of alignments. A sentence is an error
/// sentence iff its alignment contains any non-Match op. Empty corpus yields
/// the empty report, whose rates are undefined rather than 0/0.
pub fn score_corpus<'a>(alignments: impl IntoIterator<Item = &'a Alignment>) -> ErrorReport {
    let mut report = ErrorReport::empty();
    for alignment in alignments {
        let counts = count_errors(alignment);
        report.n_ref_words += alignment.ref_len as u64;
        report.n_sentences += 1;
        if alignment.has_error() {
            report.n_error_sentences += 1;
        }
        report.substitutions += counts.substitutions;
        report.deletions += counts.deletions;
        report.insertions += counts.insertions;
    }
    report
}

/// Component-wise count addition; rates are recomputed from merged counts.
/// Both reports must come from disjoint sentence sets.
pub fn merge(a: &ErrorReport, b: &ErrorReport) -> ErrorReport {
    ErrorReport {
        n_ref_words: a.n_ref_words + b.n_ref_words,
        n_sentences: a.n_sentences + b.n_sentences,
        n_error_sentences: a.n_error_sentences + b.n_error_sentences,
        substitutions: a.substitutions + b.substitutions,
        deletions: a.deletions + b.deletions,
        insertions: a.insertions + b.insertions,
    }
}

fn fmt_rate(rate: Option<f64>) -> String {
    match rate {
        Some(r) => format!("{r:.1}"),
        None => "n/a".to_string(),
    }
}

impl std::fmt::Display for ErrorReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "Insertions    {}", fmt_rate(self.ins_rate()))?;
        writeln!(f, "Deletions     {}", fmt_rate(self.del_rate()))?;
        writeln!(f, "Substitutions {}", fmt_rate(self.sub_rate()))?;
        writeln!(f, "WER           {}", fmt_rate(self.wer()))?;
        write!(f, "SER           {}", fmt_rate(self.ser()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{align, AlignConfig};
    use crate::textnorm::tokenize_reference;

    fn score(pairs: &[(&str, &str)]) -> ErrorReport {
        let alignments: Vec<Alignment> = pairs
            .iter()
            .map(|(r, h)| {
                align(&tokenize_reference(r), &tokenize_reference(h), AlignConfig::unit())
            })
            .collect();
        score_corpus(&alignments)
    }

    #[test]
    fn rates_from_raw_counts() {
        // I=23, D=19, S=81 over 1000 reference words.
        let report = ErrorReport {
            n_ref_words: 1000,
            n_sentences: 100,
            n_error_sentences: 55,
            substitutions: 81,
            deletions: 19,
            insertions: 23,
        };
        assert_eq!(report.ins_rate(), Some(2.3));
        assert_eq!(report.del_rate(), Some(1.9));
        assert_eq!(report.sub_rate(), Some(8.1));
        assert_eq!(report.wer(), Some(12.3));
        assert_eq!(report.ser(), Some(55.0));
    }

    #[test]
    fn identity_corpus_has_zero_rates() {
        let report = score(&[("a b c", "a b c"), ("d e", "d e")]);
        assert_eq!(report.wer(), Some(0.0));
        assert_eq!(report.ser(), Some(0.0));
    }

    #[test]
    fn one_error_sentence_of_two_is_ser_fifty() {
        let report = score(&[("a b c", "a b c"), ("d e", "d")]);
        assert_eq!(report.ser(), Some(50.0));
        assert_eq!(report.deletions, 1);
    }

    #[test]
    fn empty_corpus_rates_undefined() {
        let report = score_corpus([]);
        assert_eq!(report.wer(), None);
        assert_eq!(report.ser(), None);
    }

    #[test]
    fn empty_reference_sentence_counts_insertions() {
        let report = score(&[("", "x y"), ("a b c d", "a b c d")]);
        assert_eq!(report.insertions, 2);
        assert_eq!(report.n_ref_words, 4);
        assert_eq!(report.wer(), Some(50.0));
        assert_eq!(report.ser(), Some(50.0));
    }

    #[test]
    fn merge_identity_and_commutativity() {
        let r1 = score(&[("a b", "a c")]);
        let r2 = score(&[("x y z", "x z")]);
        assert_eq!(merge(&r1, &ErrorReport::empty()), r1);
        assert_eq!(merge(&r1, &r2), merge(&r2, &r1));
    }

    #[test]
    fn merge_equals_joint_scoring() {
        let part1 = [("a b c", "a x c")];
        let part2 = [("d e", "d e f")];
        let joint = score(&[part1[0], part2[0]]);
        assert_eq!(merge(&score(&part1), &score(&part2)), joint);
    }

    #[test]
    fn display_rounds_to_one_decimal() {
        let report = ErrorReport {
            n_ref_words: 1000,
            n_sentences: 1000,
            n_error_sentences: 549,
            substitutions: 81,
            deletions: 19,
            insertions: 23,
        };
        let text = report.to_string();
        assert!(text.contains("Insertions    2.3"), "{text}");
        assert!(text.contains("WER           12.3"), "{text}");
        assert!(text.contains("SER           54.9"), "{text}");
    }
}
