//! Text normalization and tokenization.
//!
//! Both sides of an alignment must live in one comparable token space. The
//! reference side keeps punctuation as standalone tokens so that a
//! punctuation-stripping recognizer shows up as deletions; the hypothesis
//! side drops punctuation entirely.
//!
//! Rules: NFC normalization, case folding, whitespace splitting, and
//! punctuation split off word boundaries. Apostrophes and hyphens between
//! alphanumeric characters stay inside the word ("don't", "post-code").
//! Digits pass through unchanged; there is no number-to-word expansion.

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// Version tag recorded in model metadata so a model is never applied across
/// incompatible normalizer rules.
pub const NORMALIZER_VERSION: &str = "v1";

/// A normalized token: lowercase, no whitespace, non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub is_punct: bool,
}

impl Token {
    fn new(surface: String) -> Self {
        let is_punct = surface.chars().all(is_punct_char);
        Token { surface, is_punct }
    }
}

impl std::fmt::Display for Token {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.surface)
    }
}

/// ASCII punctuation plus the Unicode general-punctuation block.
pub fn is_punct_char(c: char) -> bool {
    c.is_ascii_punctuation() || ('\u{2000}'..='\u{206F}').contains(&c)
}

/// Apostrophes and hyphens are word-internal when flanked by non-punctuation.
fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '-' | '\u{2019}')
}

/// Tokenizes the reference side: punctuation is retained as separate tokens.
pub fn tokenize_reference(text: &str) -> Vec<Token> {
    let normalized: String = text.nfc().collect::<String>().to_lowercase();
    let mut tokens = Vec::new();
    for chunk in normalized.split_whitespace() {
        split_chunk(chunk, &mut tokens);
    }
    tokens
}

/// Tokenizes the hypothesis side: as the reference, then punctuation dropped.
pub fn tokenize_hypothesis(text: &str) -> Vec<Token> {
    let mut tokens = tokenize_reference(text);
    tokens.retain(|t| !t.is_punct);
    tokens
}

/// Splits one whitespace-free chunk into word and punctuation tokens.
/// Maximal punctuation runs become single tokens; a joiner with
/// non-punctuation on both sides stays in the word.
fn split_chunk(chunk: &str, out: &mut Vec<Token>) {
    let chars: Vec<char> = chunk.chars().collect();
    let mut current = String::new();
    let mut current_is_punct = false;
    for (i, &c) in chars.iter().enumerate() {
        let word_internal = is_joiner(c)
            && i > 0
            && i + 1 < chars.len()
            && !is_punct_char(chars[i - 1])
            && !is_punct_char(chars[i + 1]);
        let punct = is_punct_char(c) && !word_internal;
        if !current.is_empty() && punct != current_is_punct {
            out.push(Token::new(std::mem::take(&mut current)));
        }
        current.push(c);
        current_is_punct = punct;
    }
    if !current.is_empty() {
        out.push(Token::new(current));
    }
}

/// Joins token surfaces with single spaces.
pub fn join(tokens: &[Token]) -> String {
    tokens
        .iter()
        .map(|t| t.surface.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}
