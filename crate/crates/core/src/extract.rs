//! Verbal/nonverbal pair extraction.
//!
//! Four knowledge types are distinguished by where the nonverbal message `n`
//! sits relative to the verbal message `v`:
//!
//! | type | nonverbal source                                             |
//! |------|--------------------------------------------------------------|
//! | `Bc` | parenthetical right after the speaker name                   |
//! | `Bn` | free text after a known speaker name in the first span       |
//! | `I`  | parenthetical inside the utterance                           |
//! | `O`  | action line; `v` is the nearest preceding turn               |
//!
//! Every triple shares its scene (heading excluded) as context and records
//! the byte range of its nonverbal occurrence inside that context.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::parser::{Line, Scene, TurnLine};
use crate::stoplist::Stoplist;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KnowledgeType {
    Bc,
    Bn,
    I,
    O,
}

impl KnowledgeType {
    pub const ALL: [KnowledgeType; 4] = [KnowledgeType::Bc, KnowledgeType::Bn, KnowledgeType::I, KnowledgeType::O];

    pub fn as_str(self) -> &'static str {
        match self {
            KnowledgeType::Bc => "Bc",
            KnowledgeType::Bn => "Bn",
            KnowledgeType::I => "I",
            KnowledgeType::O => "O",
        }
    }
}

impl fmt::Display for KnowledgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KnowledgeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bc" => Ok(KnowledgeType::Bc),
            "bn" => Ok(KnowledgeType::Bn),
            "i" => Ok(KnowledgeType::I),
            "o" => Ok(KnowledgeType::O),
            other => Err(format!("unknown knowledge type `{other}`")),
        }
    }
}

/// Where a nonverbal message was found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor {
    /// Index into the scene's line list (heading included).
    pub line: usize,
    /// Segment index within the turn, for inside parentheticals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<usize>,
    /// Byte range in `context` that removing the nonverbal deletes.
    pub start: usize,
    pub end: usize,
    /// Context line (heading excluded) holding the verbal turn.
    pub verbal_unit: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeTriple {
    pub id: String,
    pub ktype: KnowledgeType,
    pub verbal: String,
    pub nonverbal: String,
    pub context: String,
    pub script_id: String,
    pub scene_id: String,
    pub anchor: Anchor,
}

/// Controls how a known speaker name may be cut from a longer first span.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefixBoundary {
    /// The character after the name must be whitespace.
    #[default]
    Whitespace,
    /// Any strict prefix, for text without word spacing.
    Raw,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    pub bn_boundary: PrefixBoundary,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractStats {
    pub stoplist_rejections: usize,
    pub empty_rejections: usize,
}

impl ExtractStats {
    pub fn merge(&mut self, other: ExtractStats) {
        self.stoplist_rejections += other.stoplist_rejections;
        self.empty_rejections += other.empty_rejections;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub triples: Vec<KnowledgeTriple>,
    pub stats: ExtractStats,
}

impl Extraction {
    fn merge(&mut self, other: Extraction) {
        self.triples.extend(other.triples);
        self.stats.merge(other.stats);
    }
}

/// Scene text without the heading, with each line's offset in it.
struct SceneContext {
    text: String,
    /// Per scene line: (context unit index, byte offset). `None` for the heading.
    units: Vec<Option<(usize, usize)>>,
}

impl SceneContext {
    fn new(scene: &Scene) -> Self {
        let mut text = String::new();
        let mut units = Vec::with_capacity(scene.lines.len());
        let mut unit = 0;
        for line in &scene.lines {
            if matches!(line, Line::Heading { .. }) {
                units.push(None);
                continue;
            }
            if unit > 0 {
                text.push('\n');
            }
            units.push(Some((unit, text.len())));
            text.push_str(line.text());
            unit += 1;
        }
        SceneContext { text, units }
    }

    fn offset(&self, line: usize) -> usize {
        self.units[line].expect("non-heading line").1
    }

    fn unit(&self, line: usize) -> usize {
        self.units[line].expect("non-heading line").0
    }

    /// Range deleting a whole line together with one adjoining newline.
    fn line_removal(&self, line: usize, len: usize) -> (usize, usize) {
        let start = self.offset(line);
        let end = start + len;
        if end < self.text.len() {
            (start, end + 1)
        } else if start > 0 {
            (start - 1, end)
        } else {
            (start, end)
        }
    }
}

struct Builder<'a> {
    scene: &'a Scene,
    ctx: &'a SceneContext,
    stop: &'a Stoplist,
    out: Extraction,
}

impl<'a> Builder<'a> {
    fn new(scene: &'a Scene, ctx: &'a SceneContext, stop: &'a Stoplist) -> Self {
        Builder {
            scene,
            ctx,
            stop,
            out: Extraction::default(),
        }
    }

    /// Applies the empty and stoplist filters, then records the triple.
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        ktype: KnowledgeType,
        line: usize,
        segment: Option<usize>,
        nonverbal: &str,
        verbal: String,
        range: (usize, usize),
        verbal_line: usize,
    ) {
        let nonverbal = nonverbal.trim();
        if nonverbal.is_empty() {
            self.out.stats.empty_rejections += 1;
            return;
        }
        if self.stop.matches(nonverbal) {
            self.out.stats.stoplist_rejections += 1;
            return;
        }
        let id = match segment {
            Some(seg) => format!("{}/{}/{}.{}", self.scene.scene_id, ktype, line, seg),
            None => format!("{}/{}/{}", self.scene.scene_id, ktype, line),
        };
        self.out.triples.push(KnowledgeTriple {
            id,
            ktype,
            verbal,
            nonverbal: nonverbal.to_string(),
            context: self.ctx.text.clone(),
            script_id: self.scene.script_id.clone(),
            scene_id: self.scene.scene_id.clone(),
            anchor: Anchor {
                line,
                segment,
                start: range.0,
                end: range.1,
                verbal_unit: self.ctx.unit(verbal_line),
            },
        });
    }
}

fn turns(scene: &Scene) -> impl Iterator<Item = (usize, &TurnLine)> {
    scene
        .lines
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.as_turn().map(|t| (i, t)))
}

fn render(speaker: &str, utterance: &str) -> String {
    format!("{speaker}: {utterance}")
}

/// First spans (parenthetical removed) of every turn in the scene.
pub fn speaker_names(scene: &Scene) -> BTreeSet<String> {
    scene.turns().map(|t| t.first_span.clone()).collect()
}

fn bc(scene: &Scene, ctx: &SceneContext, stop: &Stoplist) -> Extraction {
    let mut b = Builder::new(scene, ctx, stop);
    for (i, turn) in turns(scene) {
        let (Some(n), Some(range)) = (&turn.name_parenthetical, turn.name_parenthetical_range) else {
            continue;
        };
        let off = ctx.offset(i);
        b.push(
            KnowledgeType::Bc,
            i,
            None,
            n,
            render(&turn.first_span, &turn.utterance()),
            (off + range.start, off + range.end),
            i,
        );
    }
    b.out
}

pub fn extract_bc(scene: &Scene, stop: &Stoplist) -> Extraction {
    bc(scene, &SceneContext::new(scene), stop)
}

/// Speaker-name candidates of one turn: its stripped and raw first spans.
fn name_forms(turn: &TurnLine) -> BTreeSet<&str> {
    [turn.first_span.as_str(), turn.raw_first_span.as_str()]
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect()
}

fn bn(scene: &Scene, ctx: &SceneContext, stop: &Stoplist, cfg: &ExtractConfig) -> Extraction {
    let mut b = Builder::new(scene, ctx, stop);
    let all: Vec<(usize, &TurnLine)> = turns(scene).collect();
    // number of turns in which each name form occurs
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, t) in &all {
        for form in name_forms(t) {
            *counts.entry(form).or_default() += 1;
        }
    }
    for (i, turn) in &all {
        let own = name_forms(turn);
        let in_other_turns = |name: &str| {
            let c = counts.get(name).copied().unwrap_or(0);
            c > usize::from(own.contains(name))
        };
        let span = turn.first_span.as_str();
        if in_other_turns(span) {
            continue;
        }
        let best = counts
            .keys()
            .filter(|name| name.len() < span.len() && span.starts_with(**name))
            .filter(|name| match cfg.bn_boundary {
                PrefixBoundary::Whitespace => span[name.len()..].chars().next().is_some_and(char::is_whitespace),
                PrefixBoundary::Raw => true,
            })
            .filter(|name| in_other_turns(name))
            .max_by_key(|name| name.len());
        let Some(name) = best else { continue };
        let off = ctx.offset(*i);
        let cut = turn.first_span_range.start + name.len();
        b.push(
            KnowledgeType::Bn,
            *i,
            None,
            &span[name.len()..],
            render(name, &turn.utterance()),
            (off + cut, off + turn.first_span_range.end),
            *i,
        );
    }
    b.out
}

pub fn extract_bn(scene: &Scene, stop: &Stoplist, cfg: &ExtractConfig) -> Extraction {
    bn(scene, &SceneContext::new(scene), stop, cfg)
}

fn inside(scene: &Scene, ctx: &SceneContext, stop: &Stoplist) -> Extraction {
    let mut b = Builder::new(scene, ctx, stop);
    for (i, turn) in turns(scene) {
        let off = ctx.offset(i);
        for (k, seg) in turn.segments.iter().enumerate() {
            if !seg.is_parenthetical() {
                continue;
            }
            b.push(
                KnowledgeType::I,
                i,
                Some(k),
                &seg.text,
                render(&turn.first_span, &turn.body_without_segment(k)),
                (off + seg.span.start, off + seg.span.end),
                i,
            );
        }
    }
    b.out
}

pub fn extract_inside(scene: &Scene, stop: &Stoplist) -> Extraction {
    inside(scene, &SceneContext::new(scene), stop)
}

fn outside(scene: &Scene, ctx: &SceneContext, stop: &Stoplist) -> Extraction {
    let mut b = Builder::new(scene, ctx, stop);
    let mut last_turn: Option<(usize, &TurnLine)> = None;
    for (i, line) in scene.lines.iter().enumerate() {
        match line {
            Line::Turn(t) => last_turn = Some((i, t)),
            Line::Action { text } => {
                let Some((ti, turn)) = last_turn else { continue };
                b.push(
                    KnowledgeType::O,
                    i,
                    None,
                    text,
                    render(&turn.first_span, &turn.utterance()),
                    ctx.line_removal(i, text.len()),
                    ti,
                );
            }
            Line::Heading { .. } => {}
        }
    }
    b.out
}

pub fn extract_outside(scene: &Scene, stop: &Stoplist) -> Extraction {
    outside(scene, &SceneContext::new(scene), stop)
}

/// All four extractors over one scene, ordered by line then type.
pub fn extract_all(scene: &Scene, cfg: &ExtractConfig, stop: &Stoplist) -> Extraction {
    let ctx = SceneContext::new(scene);
    let mut out = bc(scene, &ctx, stop);
    out.merge(bn(scene, &ctx, stop, cfg));
    out.merge(inside(scene, &ctx, stop));
    out.merge(outside(scene, &ctx, stop));
    out.triples.sort_by_key(|t| (t.anchor.line, t.ktype, t.anchor.segment));
    out
}

/// Extracts over many scenes in parallel; output follows scene order.
pub fn extract_scenes(scenes: &[Scene], cfg: &ExtractConfig, stop: &Stoplist) -> Extraction {
    scenes
        .par_iter()
        .map(|s| extract_all(s, cfg, stop))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Extraction::default(), |mut acc, e| {
            acc.merge(e);
            acc
        })
}
