//! Screenplay structure: scene splitting and line classification.
//!
//! A script is a sequence of scenes separated by one or more blank lines.
//! Every non-blank line of a scene is one of:
//!
//! * a **heading** (`INT. OFFICE. DAY.`), only ever the first line of a scene;
//! * a **turn** (`Speaker (aside): utterance (gesture) utterance`);
//! * an **action line**, i.e. anything else.
//!
//! Byte spans are kept for every turn component so later stages can delete
//! an exact occurrence from the scene text.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One decoded script file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawScript {
    pub script_id: String,
    pub text: String,
    pub source_path: String,
}

impl RawScript {
    /// Builds a script from already-decoded text, normalizing line endings.
    pub fn new(script_id: impl Into<String>, text: impl AsRef<str>, source_path: impl Into<String>) -> Self {
        RawScript {
            script_id: script_id.into(),
            text: normalize_newlines(text.as_ref()),
            source_path: source_path.into(),
        }
    }

    pub fn from_bytes(script_id: impl Into<String>, bytes: &[u8], source_path: impl Into<String>) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::Decode {
            offset: e.valid_up_to(),
        })?;
        let text = text.strip_prefix('\u{feff}').unwrap_or(text);
        Ok(Self::new(script_id, text, source_path))
    }
}

/// CRLF and lone CR become LF.
pub fn normalize_newlines(text: &str) -> String {
    if !text.contains('\r') {
        return text.to_string();
    }
    text.replace("\r\n", "\n").replace('\r', "\n")
}

fn is_blank(line: &str) -> bool {
    line.trim().is_empty()
}

/// Text of one scene before classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSceneText {
    /// 0-based scene ordinal within the script.
    pub ordinal: usize,
    /// 0-based physical line number of the scene's first line in the script.
    pub first_line: usize,
    pub text: String,
}

/// Splits a script into maximal runs of non-blank lines.
pub fn split_scenes(script: &RawScript) -> Vec<RawSceneText> {
    let mut scenes = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut start = 0;
    for (idx, line) in script.text.split('\n').enumerate() {
        if is_blank(line) {
            if !current.is_empty() {
                scenes.push(RawSceneText {
                    ordinal: scenes.len(),
                    first_line: start,
                    text: current.join("\n"),
                });
                current.clear();
            }
        } else {
            if current.is_empty() {
                start = idx;
            }
            current.push(line);
        }
    }
    if !current.is_empty() {
        scenes.push(RawSceneText {
            ordinal: scenes.len(),
            first_line: start,
            text: current.join("\n"),
        });
    }
    scenes
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParserConfig {
    pub heading_lexicon: Vec<String>,
    pub max_speaker_span_chars: usize,
    pub colon_chars: Vec<char>,
    /// Accepted (open, close) parenthesis pairs.
    pub paren_chars: Vec<(char, char)>,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig {
            heading_lexicon: ["INT.", "EXT.", "Interior.", "Exterior.", "内景", "外景"]
                .into_iter()
                .map(String::from)
                .collect(),
            max_speaker_span_chars: 30,
            colon_chars: vec![':', '：'],
            paren_chars: vec![('(', ')'), ('（', '）')],
        }
    }
}

impl ParserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_speaker_span_chars == 0 {
            return Err(Error::invalid("max_speaker_span_chars must be positive"));
        }
        if self.heading_lexicon.iter().all(|h| h.trim().is_empty()) {
            return Err(Error::invalid("heading lexicon is empty"));
        }
        if self.colon_chars.is_empty() {
            return Err(Error::invalid("no colon characters configured"));
        }
        Ok(())
    }

    fn close_for(&self, open: char) -> Option<char> {
        self.paren_chars.iter().find(|(o, _)| *o == open).map(|(_, c)| *c)
    }

    fn open_for(&self, close: char) -> Option<char> {
        self.paren_chars.iter().find(|(_, c)| *c == close).map(|(o, _)| *o)
    }
}

/// Half-open byte range within a line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn slice<'a>(&self, s: &'a str) -> &'a str {
        &s[self.start..self.end]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Utterance,
    Parenthetical,
}

/// Piece of a turn's post-colon text.
///
/// For parentheticals `text` is the inner text and `span` covers the
/// enclosing parenthesis characters; for utterances both cover the same text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub text: String,
    pub span: Span,
}

impl Segment {
    pub fn is_parenthetical(&self) -> bool {
        self.kind == SegmentKind::Parenthetical
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnLine {
    /// The physical line, verbatim.
    pub text: String,
    /// Speaker span with any trailing parenthetical removed, trimmed.
    pub first_span: String,
    pub first_span_range: Span,
    /// Everything before the colon, trimmed.
    pub raw_first_span: String,
    pub name_parenthetical: Option<String>,
    /// Covers the parenthesis characters of `name_parenthetical`.
    pub name_parenthetical_range: Option<Span>,
    pub colon: char,
    /// Start of the post-colon text (leading whitespace skipped).
    pub body_start: usize,
    pub segments: Vec<Segment>,
}

impl TurnLine {
    /// Post-colon text with leading whitespace skipped.
    pub fn body(&self) -> &str {
        &self.text[self.body_start..]
    }

    /// Utterance text with every parenthetical removed, whitespace collapsed.
    pub fn utterance(&self) -> String {
        collapse_whitespace(
            &self
                .segments
                .iter()
                .filter(|s| !s.is_parenthetical())
                .map(|s| s.text.as_str())
                .collect::<String>(),
        )
    }

    /// Post-colon text with the segment at `skip` removed; other
    /// parentheticals keep their brackets.
    pub fn body_without_segment(&self, skip: usize) -> String {
        collapse_whitespace(
            &self
                .segments
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, s)| s.span.slice(&self.text))
                .collect::<String>(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Line {
    Heading { text: String },
    Turn(TurnLine),
    Action { text: String },
}

impl Line {
    pub fn text(&self) -> &str {
        match self {
            Line::Heading { text } | Line::Action { text } => text,
            Line::Turn(t) => &t.text,
        }
    }

    pub fn kind(&self) -> LineKind {
        match self {
            Line::Heading { .. } => LineKind::Heading,
            Line::Turn(_) => LineKind::Turn,
            Line::Action { .. } => LineKind::Action,
        }
    }

    pub fn as_turn(&self) -> Option<&TurnLine> {
        match self {
            Line::Turn(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Heading,
    Turn,
    Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub script_id: String,
    pub scene_id: String,
    pub heading: Option<String>,
    pub lines: Vec<Line>,
    #[serde(skip)]
    pub raw_text: String,
}

impl Scene {
    pub fn turns(&self) -> impl Iterator<Item = &TurnLine> {
        self.lines.iter().filter_map(Line::as_turn)
    }

    /// Line raw texts joined with newlines; equals `raw_text` for parsed scenes.
    pub fn reassemble(&self) -> String {
        self.lines.iter().map(Line::text).collect::<Vec<_>>().join("\n")
    }
}

pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Position of the speaker-delimiting colon, if the line is shaped like a turn.
fn turn_colon(line: &str, cfg: &ParserConfig) -> Option<(usize, char)> {
    let lead = line.len() - line.trim_start().len();
    let (nth, (pos, ch)) = line[lead..]
        .char_indices()
        .enumerate()
        .find(|(_, (_, c))| cfg.colon_chars.contains(c))?;
    if nth >= cfg.max_speaker_span_chars {
        return None;
    }
    let pos = lead + pos;
    if line[..pos].trim().is_empty() {
        return None;
    }
    Some((pos, ch))
}

fn is_heading(line: &str, cfg: &ParserConfig) -> bool {
    let lower = line.trim_start().to_lowercase();
    cfg.heading_lexicon
        .iter()
        .filter(|h| !h.trim().is_empty())
        .any(|h| lower.starts_with(&h.trim().to_lowercase()))
}

/// Classifies a non-blank line given its 0-based position within the scene.
pub fn classify_line(line: &str, cfg: &ParserConfig, position: usize) -> LineKind {
    if position == 0 && is_heading(line, cfg) {
        LineKind::Heading
    } else if turn_colon(line, cfg).is_some() {
        LineKind::Turn
    } else {
        LineKind::Action
    }
}

/// Finds the close bracket matching the open bracket at byte `open_at`.
fn matching_close(s: &str, open_at: usize, open: char, close: char) -> Option<usize> {
    let mut depth = 0usize;
    for (i, c) in s[open_at..].char_indices() {
        if c == open {
            depth += 1;
        } else if c == close {
            depth -= 1;
            if depth == 0 {
                return Some(open_at + i);
            }
        }
    }
    None
}

/// Finds the open bracket matching the close bracket that ends `s`.
fn matching_open(s: &str, open: char, close: char) -> Option<usize> {
    let mut depth = 0usize;
    for (i, c) in s.char_indices().rev() {
        if c == close {
            depth += 1;
        } else if c == open {
            depth = depth.checked_sub(1)?;
            if depth == 0 {
                return Some(i);
            }
        }
    }
    None
}

fn segment_body(line: &str, body_start: usize, cfg: &ParserConfig) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut utter_start = body_start;
    let mut cursor = body_start;
    while cursor < line.len() {
        let c = line[cursor..].chars().next().expect("cursor on char boundary");
        if let Some(close) = cfg.close_for(c) {
            if let Some(close_at) = matching_close(line, cursor, c, close) {
                if utter_start < cursor {
                    segments.push(Segment {
                        kind: SegmentKind::Utterance,
                        text: line[utter_start..cursor].to_string(),
                        span: Span::new(utter_start, cursor),
                    });
                }
                let end = close_at + close.len_utf8();
                segments.push(Segment {
                    kind: SegmentKind::Parenthetical,
                    text: line[cursor + c.len_utf8()..close_at].to_string(),
                    span: Span::new(cursor, end),
                });
                cursor = end;
                utter_start = end;
                continue;
            }
        }
        cursor += c.len_utf8();
    }
    if utter_start < line.len() {
        segments.push(Segment {
            kind: SegmentKind::Utterance,
            text: line[utter_start..].to_string(),
            span: Span::new(utter_start, line.len()),
        });
    }
    segments
}

/// Splits a turn line into speaker span, optional name parenthetical and
/// body segments. Returns `None` when the line has no qualifying colon.
pub fn parse_turn(line: &str, cfg: &ParserConfig) -> Option<TurnLine> {
    let (colon_at, colon) = turn_colon(line, cfg)?;
    let before = &line[..colon_at];
    let lead = before.len() - before.trim_start().len();
    let span_end = before.trim_end().len();
    let raw_first_span = &line[lead..span_end];

    let mut first_span_range = Span::new(lead, span_end);
    let mut name_parenthetical = None;
    let mut name_parenthetical_range = None;
    if let Some(last) = raw_first_span.chars().last() {
        if let Some(open) = cfg.open_for(last) {
            if let Some(open_at) = matching_open(raw_first_span, open, last) {
                let name = raw_first_span[..open_at].trim_end();
                if !name.trim().is_empty() {
                    name_parenthetical = Some(
                        raw_first_span[open_at + open.len_utf8()..raw_first_span.len() - last.len_utf8()].to_string(),
                    );
                    name_parenthetical_range = Some(Span::new(lead + open_at, span_end));
                    first_span_range = Span::new(lead, lead + name.len());
                }
            }
        }
    }

    let after_colon = colon_at + colon.len_utf8();
    let body_start = after_colon + (line[after_colon..].len() - line[after_colon..].trim_start().len());
    Some(TurnLine {
        text: line.to_string(),
        first_span: first_span_range.slice(line).to_string(),
        first_span_range,
        raw_first_span: raw_first_span.to_string(),
        name_parenthetical,
        name_parenthetical_range,
        colon,
        body_start,
        segments: segment_body(line, body_start, cfg),
    })
}

/// Classifies every line of one scene.
pub fn parse_scene(script_id: &str, raw: &RawSceneText, cfg: &ParserConfig) -> Scene {
    let mut lines = Vec::new();
    let mut heading = None;
    for (pos, text) in raw.text.split('\n').enumerate() {
        let line = match classify_line(text, cfg, pos) {
            LineKind::Heading => {
                heading = Some(text.trim().to_string());
                Line::Heading { text: text.to_string() }
            }
            LineKind::Turn => Line::Turn(parse_turn(text, cfg).expect("classified as turn")),
            LineKind::Action => Line::Action { text: text.to_string() },
        };
        lines.push(line);
    }
    Scene {
        script_id: script_id.to_string(),
        scene_id: format!("{}:{}", script_id, raw.ordinal),
        heading,
        lines,
        raw_text: raw.text.clone(),
    }
}

/// Splits and parses a whole script.
pub fn parse_script(script: &RawScript, cfg: &ParserConfig) -> Vec<Scene> {
    split_scenes(script)
        .iter()
        .map(|raw| parse_scene(&script.script_id, raw, cfg))
        .collect()
}
