//! Tokenization shared by the reader and the length-based context truncation.

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerMode {
    /// Unicode word boundaries, lowercased, punctuation dropped.
    #[default]
    UnicodeWords,
    /// Every non-whitespace character is a token.
    Characters,
}

pub fn tokenize(text: &str, mode: TokenizerMode) -> Vec<String> {
    match mode {
        TokenizerMode::UnicodeWords => text.unicode_words().map(str::to_lowercase).collect(),
        TokenizerMode::Characters => text.chars().filter(|c| !c.is_whitespace()).map(String::from).collect(),
    }
}

/// Byte offsets at which each token starts, in order.
pub fn token_starts(text: &str, mode: TokenizerMode) -> Vec<usize> {
    match mode {
        TokenizerMode::UnicodeWords => text.unicode_word_indices().map(|(i, _)| i).collect(),
        TokenizerMode::Characters => text
            .char_indices()
            .filter(|(_, c)| !c.is_whitespace())
            .map(|(i, _)| i)
            .collect(),
    }
}

pub fn token_count(text: &str, mode: TokenizerMode) -> usize {
    match mode {
        TokenizerMode::UnicodeWords => text.unicode_words().count(),
        TokenizerMode::Characters => text.chars().filter(|c| !c.is_whitespace()).count(),
    }
}
