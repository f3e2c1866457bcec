//! Conversion of knowledge triples into weakly-labeled multiple-choice
//! instances.
//!
//! For a triple `(v, c, n)` the nonverbal occurrence is deleted from `c` to
//! form the document, `v` becomes the question and `n` the correct option.
//! Distractors are drawn from the unique nonverbal messages of the same
//! script and knowledge type.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{KnowledgeTriple, KnowledgeType};
use crate::tokenize::{token_count, token_starts, TokenizerMode};

/// Where an instance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SourceKind {
    Bc,
    Bn,
    I,
    O,
    #[serde(rename = "generic")]
    Generic,
    #[serde(rename = "labeled")]
    Labeled,
}

impl From<KnowledgeType> for SourceKind {
    fn from(k: KnowledgeType) -> Self {
        match k {
            KnowledgeType::Bc => SourceKind::Bc,
            KnowledgeType::Bn => SourceKind::Bn,
            KnowledgeType::I => SourceKind::I,
            KnowledgeType::O => SourceKind::O,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Source {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_id: Option<String>,
    pub kind: SourceKind,
}

impl Source {
    pub fn labeled() -> Self {
        Source {
            script_id: None,
            kind: SourceKind::Labeled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McInstance {
    pub id: String,
    pub document: String,
    pub question: String,
    pub options: Vec<String>,
    pub gold: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default = "Source::labeled")]
    pub source: Source,
    /// Document line holding the verbal turn, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verbal_unit: Option<usize>,
}

impl McInstance {
    pub fn validate(&self) -> Result<()> {
        if self.options.len() < 2 {
            return Err(Error::invalid(format!(
                "instance {}: needs at least two options",
                self.id
            )));
        }
        if self.gold >= self.options.len() {
            return Err(Error::invalid(format!(
                "instance {}: gold index {} out of range",
                self.id, self.gold
            )));
        }
        let distinct: BTreeSet<&String> = self.options.iter().collect();
        if distinct.len() != self.options.len() {
            return Err(Error::invalid(format!("instance {}: duplicate options", self.id)));
        }
        Ok(())
    }

    pub fn answer(&self) -> &str {
        &self.options[self.gold]
    }

    /// Copy with the document emptied.
    pub fn without_context(&self) -> McInstance {
        McInstance {
            document: String::new(),
            verbal_unit: None,
            ..self.clone()
        }
    }
}

/// Unique nonverbal messages of one (script, type).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DistractorPool {
    pub items: BTreeSet<String>,
}

pub type PoolKey = (String, KnowledgeType);
pub type Pools = BTreeMap<PoolKey, DistractorPool>;

pub fn build_pools(triples: &[KnowledgeTriple]) -> Pools {
    let mut pools = Pools::new();
    for t in triples {
        pools
            .entry((t.script_id.clone(), t.ktype))
            .or_default()
            .items
            .insert(t.nonverbal.clone());
    }
    pools
}

/// Seeded generator with a fixed algorithm (ChaCha8) so sample sequences
/// are identical across platforms.
#[derive(Debug, Clone)]
pub struct GenRng(ChaCha8Rng);

impl GenRng {
    pub fn new(seed: u64) -> Self {
        GenRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Independent stream for one item: `seed ^ fnv1a(key)`.
    pub fn for_item(seed: u64, key: &str) -> Self {
        Self::new(seed ^ stable_hash(key))
    }

    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.0
    }
}

/// 64-bit FNV-1a.
pub fn stable_hash(key: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    InsufficientDistractors,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Generated {
    Instance(McInstance),
    Skipped(SkipReason),
}

/// Draws `n` distinct distractors and shuffles them with the answer.
fn assemble_options(answer: &str, eligible: &[&String], n: usize, rng: &mut GenRng) -> Option<(Vec<String>, usize)> {
    if eligible.len() < n {
        return None;
    }
    let mut options: Vec<String> = Vec::with_capacity(n + 1);
    options.push(answer.to_string());
    options.extend(
        sample(rng.inner(), eligible.len(), n)
            .into_iter()
            .map(|i| eligible[i].clone()),
    );
    options.shuffle(rng.inner());
    let gold = options.iter().position(|o| o == answer).expect("answer present");
    Some((options, gold))
}

pub fn triple_to_instance(t: &KnowledgeTriple, pools: &Pools, n: usize, rng: &mut GenRng) -> Result<Generated> {
    if n == 0 {
        return Err(Error::invalid("number of distractors must be at least 1"));
    }
    let pool = pools
        .get(&(t.script_id.clone(), t.ktype))
        .ok_or_else(|| Error::invalid(format!("triple {} has no pool", t.id)))?;
    let eligible: Vec<&String> = pool.items.iter().filter(|x| **x != t.nonverbal).collect();
    let Some((options, gold)) = assemble_options(&t.nonverbal, &eligible, n, rng) else {
        return Ok(Generated::Skipped(SkipReason::InsufficientDistractors));
    };
    let mut document = String::with_capacity(t.context.len());
    document.push_str(&t.context[..t.anchor.start]);
    document.push_str(&t.context[t.anchor.end..]);
    Ok(Generated::Instance(McInstance {
        id: t.id.clone(),
        document,
        question: t.verbal.clone(),
        options,
        gold,
        category: None,
        source: Source {
            script_id: Some(t.script_id.clone()),
            kind: t.ktype.into(),
        },
        verbal_unit: Some(t.anchor.verbal_unit),
    }))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenerationOutput {
    pub instances: Vec<McInstance>,
    pub skipped: Vec<(String, SkipReason)>,
}

/// One instance per triple, each with its own rng stream, in input order.
pub fn generate_instances(triples: &[KnowledgeTriple], n: usize, seed: u64) -> Result<GenerationOutput> {
    if n == 0 {
        return Err(Error::invalid("number of distractors must be at least 1"));
    }
    let pools = build_pools(triples);
    let generated: Vec<Generated> = triples
        .par_iter()
        .map(|t| triple_to_instance(t, &pools, n, &mut GenRng::for_item(seed, &t.id)))
        .collect::<Result<_>>()?;
    let mut out = GenerationOutput::default();
    for (t, g) in triples.iter().zip(generated) {
        match g {
            Generated::Instance(inst) => out.instances.push(inst),
            Generated::Skipped(reason) => out.skipped.push((t.id.clone(), reason)),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthUnit {
    Tokens,
    Chars,
}

/// How document length is measured for truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthMeasure {
    pub unit: LengthUnit,
    pub tokenizer: TokenizerMode,
}

impl Default for LengthMeasure {
    fn default() -> Self {
        LengthMeasure {
            unit: LengthUnit::Tokens,
            tokenizer: TokenizerMode::UnicodeWords,
        }
    }
}

impl LengthMeasure {
    pub fn len(&self, text: &str) -> usize {
        match self.unit {
            LengthUnit::Tokens => token_count(text, self.tokenizer),
            LengthUnit::Chars => text.chars().count(),
        }
    }

    /// Longest prefix of `text` measuring at most `max`.
    fn prefix<'a>(&self, text: &'a str, max: usize) -> &'a str {
        let cut = match self.unit {
            LengthUnit::Tokens => token_starts(text, self.tokenizer).get(max).copied(),
            LengthUnit::Chars => text.char_indices().nth(max).map(|(i, _)| i),
        };
        match cut {
            Some(i) => text[..i].trim_end(),
            None => text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Truncation {
    pub instance: McInstance,
    pub dropped_units: usize,
    /// The last remaining line was itself cut.
    pub hard_truncated: bool,
}

/// Shortens the document line by line until it fits: drop the last line,
/// or the first one when the last line holds the verbal turn.
pub fn truncate_context(inst: &McInstance, max_units: usize, measure: LengthMeasure) -> Result<Truncation> {
    if max_units == 0 {
        return Err(Error::invalid("max_units must be positive"));
    }
    let mut units: Vec<&str> = inst.document.split('\n').collect();
    let mut verbal = inst.verbal_unit.filter(|v| *v < units.len());
    let mut dropped = 0;
    let mut hard = false;
    let mut document = inst.document.clone();
    while measure.len(&document) > max_units {
        if units.len() == 1 {
            document = measure.prefix(units[0], max_units).to_string();
            hard = true;
            break;
        }
        if verbal == Some(units.len() - 1) {
            units.remove(0);
            verbal = verbal.map(|v| v - 1);
        } else {
            units.pop();
        }
        dropped += 1;
        document = units.join("\n");
    }
    Ok(Truncation {
        instance: McInstance {
            document,
            verbal_unit: verbal,
            ..inst.clone()
        },
        dropped_units: dropped,
        hard_truncated: hard,
    })
}

/// Subject-relation-object triple from a conventional knowledge graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenericTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenericDocMode {
    EmptyDoc,
    RelationDoc,
}

/// Phrase pool for generic triples: every subject and object.
pub fn generic_pool(triples: &[GenericTriple]) -> BTreeSet<String> {
    triples
        .iter()
        .flat_map(|t| [t.subject.clone(), t.object.clone()])
        .collect()
}

pub fn generic_triple_to_instance(
    id: &str,
    triple: &GenericTriple,
    pool: &BTreeSet<String>,
    mode: GenericDocMode,
    n: usize,
    rng: &mut GenRng,
) -> Result<Generated> {
    if n == 0 {
        return Err(Error::invalid("number of distractors must be at least 1"));
    }
    let eligible: Vec<&String> = pool
        .iter()
        .filter(|p| **p != triple.subject && **p != triple.object)
        .collect();
    let Some((options, gold)) = assemble_options(&triple.object, &eligible, n, rng) else {
        return Ok(Generated::Skipped(SkipReason::InsufficientDistractors));
    };
    Ok(Generated::Instance(McInstance {
        id: id.to_string(),
        document: match mode {
            GenericDocMode::EmptyDoc => String::new(),
            GenericDocMode::RelationDoc => triple.relation.clone(),
        },
        question: triple.subject.clone(),
        options,
        gold,
        category: None,
        source: Source {
            script_id: None,
            kind: SourceKind::Generic,
        },
        verbal_unit: None,
    }))
}

pub fn generate_generic(
    triples: &[GenericTriple],
    mode: GenericDocMode,
    n: usize,
    seed: u64,
) -> Result<GenerationOutput> {
    let pool = generic_pool(triples);
    let mut out = GenerationOutput::default();
    for (i, t) in triples.iter().enumerate() {
        let id = format!("generic/{i}");
        match generic_triple_to_instance(&id, t, &pool, mode, n, &mut GenRng::for_item(seed, &id))? {
            Generated::Instance(inst) => out.instances.push(inst),
            Generated::Skipped(r) => out.skipped.push((id, r)),
        }
    }
    Ok(out)
}

/// Per-source counts in the layout of a corpus statistics table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounts {
    #[serde(rename = "Bc")]
    pub bc: usize,
    #[serde(rename = "Bn")]
    pub bn: usize,
    #[serde(rename = "I")]
    pub i: usize,
    #[serde(rename = "O")]
    pub o: usize,
    #[serde(skip_serializing_if = "is_zero", default)]
    pub generic: usize,
    #[serde(skip_serializing_if = "is_zero", default)]
    pub labeled: usize,
    pub total: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

impl TypeCounts {
    fn add(&mut self, kind: SourceKind) {
        match kind {
            SourceKind::Bc => self.bc += 1,
            SourceKind::Bn => self.bn += 1,
            SourceKind::I => self.i += 1,
            SourceKind::O => self.o += 1,
            SourceKind::Generic => self.generic += 1,
            SourceKind::Labeled => self.labeled += 1,
        }
        self.total += 1;
    }

    pub fn get(&self, k: KnowledgeType) -> usize {
        match k {
            KnowledgeType::Bc => self.bc,
            KnowledgeType::Bn => self.bn,
            KnowledgeType::I => self.i,
            KnowledgeType::O => self.o,
        }
    }
}

pub fn triple_stats(triples: &[KnowledgeTriple]) -> TypeCounts {
    let mut c = TypeCounts::default();
    for t in triples {
        c.add(t.ktype.into());
    }
    c
}

pub fn instance_stats(instances: &[McInstance]) -> TypeCounts {
    let mut c = TypeCounts::default();
    for i in instances {
        c.add(i.source.kind);
    }
    c
}
