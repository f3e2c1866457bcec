//! Screenwriting terminology filter for nonverbal candidates.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

const DEFAULT_TERMS: &str = include_str!("../data/stoplist.txt");

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stoplist {
    entries: BTreeSet<String>,
    stripped: BTreeSet<String>,
    /// Reject candidates that merely contain an entry. Off by default.
    pub substring: bool,
}

fn is_trailing_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '。' | '，' | '！' | '？' | '：' | '；' | '…' | '、' | '—' | '–' | '’' | '”'
        )
}

fn normalize(s: &str) -> String {
    s.trim().to_lowercase()
}

fn strip_trailing(s: &str) -> &str {
    s.trim_end_matches(is_trailing_punct).trim_end()
}

impl Stoplist {
    /// The list shipped with the crate.
    pub fn default_list() -> Self {
        Self::from_text(DEFAULT_TERMS)
    }

    /// Parses one entry per line; `#` starts a comment line.
    pub fn from_text(text: &str) -> Self {
        let mut list = Stoplist::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            list.insert(line);
        }
        list
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_text(&text))
    }

    /// `default` selects the shipped list, `none` an empty one, anything
    /// else is read as a file path.
    pub fn load(spec: &str) -> Result<Self> {
        match spec {
            "default" => Ok(Self::default_list()),
            "none" => Ok(Self::default()),
            path => Self::from_file(Path::new(path)),
        }
    }

    pub fn insert(&mut self, term: &str) {
        let norm = normalize(term);
        if norm.is_empty() {
            return;
        }
        let stripped = strip_trailing(&norm).to_string();
        if !stripped.is_empty() {
            self.stripped.insert(stripped);
        }
        self.entries.insert(norm);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains_entry(&self, term: &str) -> bool {
        self.entries.contains(&normalize(term))
    }

    /// True when the candidate is screenwriting terminology.
    pub fn matches(&self, candidate: &str) -> bool {
        let norm = normalize(candidate);
        if norm.is_empty() {
            return false;
        }
        if self.entries.contains(&norm) {
            return true;
        }
        let stripped = strip_trailing(&norm);
        if self.entries.contains(stripped) || self.stripped.contains(stripped) {
            return true;
        }
        self.substring && self.entries.iter().any(|e| norm.contains(e.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_list_has_named_terms() {
        let stop = Stoplist::default_list();
        for term in ["O.S.", "CONT’D", "beat", "jump cut", "fade in"] {
            assert!(stop.contains_entry(term), "{term}");
            assert!(stop.matches(term), "{term}");
        }
    }

    #[test]
    fn matching_is_case_insensitive_and_trimmed() {
        let stop = Stoplist::default_list();
        assert!(stop.matches("  BEAT "));
        assert!(stop.matches("Fade In"));
        assert!(stop.matches("FADE IN:"));
        assert!(stop.matches("O.S"));
        assert!(stop.matches("beat."));
        assert!(!stop.matches("sighs"));
        assert!(!stop.matches(""));
    }

    #[test]
    fn substring_mode_is_opt_in() {
        let mut stop = Stoplist::from_text("beat\n");
        assert!(!stop.matches("a long beat passes"));
        stop.substring = true;
        assert!(stop.matches("a long beat passes"));
    }

    #[test]
    fn comments_and_blank_lines_skipped() {
        let stop = Stoplist::from_text("# header\n\n  jump cut  \n");
        assert_eq!(stop.len(), 1);
        assert!(stop.matches("JUMP CUT"));
    }
}
