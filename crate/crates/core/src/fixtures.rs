//! Seeded synthetic screenplays with planted verbal/nonverbal regularities.
//!
//! Every nonverbal message is an artificial "gesture" word tied to a "cue"
//! word. A turn carrying a gesture mentions its cue with probability
//! `signal_strength[type]` and a random cue otherwise. Each knowledge type
//! owns a disjoint group of associations, and one extra group is reserved
//! for the clean labeled set, so every weak set carries its own signal.
//!
//! The generator also records the exact triple set the extractor should
//! recover, and a small clean labeled set built from the same associations.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{extract_scenes, ExtractConfig, KnowledgeTriple, KnowledgeType};
use crate::instances::{generate_instances, GenRng, McInstance, Source};
use crate::parser::{parse_scene, parse_script, ParserConfig, RawSceneText, RawScript, Scene};
use crate::stoplist::Stoplist;
use crate::train::{DatasetBundle, WeakSet};

pub const GOLDEN_SCENE: &str = include_str!("../data/golden_scene.txt");

/// Category of clean instances whose association also occurs in weak data.
pub const CATEGORY_SHARED: &str = "commonsense";
/// Category of clean instances whose association occurs only in clean data.
pub const CATEGORY_CLEAN_ONLY: &str = "other";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSpec {
    pub n_scripts: usize,
    pub scenes_per_script: usize,
    pub turns_per_scene: usize,
    /// Per type, probability that a turn's cue matches its gesture.
    pub signal_strength: BTreeMap<KnowledgeType, f64>,
    /// Associations per group.
    pub vocab_size: usize,
    pub seed: u64,
    /// Probability that a turn carries a nonverbal message.
    pub nonverbal_rate: f64,
    /// Probability of an extra stoplisted parenthetical or action line.
    pub noise_rate: f64,
    pub v_train: usize,
    pub v_dev: usize,
    pub v_test: usize,
    /// Options per clean instance.
    pub v_options: usize,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            n_scripts: 200,
            scenes_per_script: 16,
            turns_per_scene: 3,
            signal_strength: BTreeMap::from([
                (KnowledgeType::Bc, 0.7),
                (KnowledgeType::Bn, 0.3),
                (KnowledgeType::I, 0.5),
                (KnowledgeType::O, 0.4),
            ]),
            vocab_size: 12,
            seed: 0,
            nonverbal_rate: 0.9,
            noise_rate: 0.1,
            v_train: 60,
            v_dev: 300,
            v_test: 300,
            v_options: 4,
        }
    }
}

impl FixtureSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_scripts", self.n_scripts),
            ("scenes_per_script", self.scenes_per_script),
            ("turns_per_scene", self.turns_per_scene),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        for k in KnowledgeType::ALL {
            if !self.signal_strength.contains_key(&k) {
                return Err(Error::invalid(format!("signal_strength missing type {k}")));
            }
        }
        let probs = self
            .signal_strength
            .values()
            .chain([&self.nonverbal_rate, &self.noise_rate]);
        for p in probs {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
            }
        }
        if self.v_options < 2 {
            return Err(Error::invalid("v_options must be at least 2"));
        }
        if self.v_options > 5 * self.vocab_size {
            return Err(Error::invalid("v_options exceeds the number of gestures"));
        }
        Ok(())
    }

    pub fn with_signal(mut self, p: f64) -> Self {
        for v in self.signal_strength.values_mut() {
            *v = p;
        }
        self
    }
}

/// Which association group a gesture belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    Weak(KnowledgeType),
    CleanOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Association {
    pub cue: String,
    pub gesture: String,
    pub group: Group,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub names: Vec<String>,
    pub places: Vec<String>,
    pub fillers: Vec<String>,
    pub associations: Vec<Association>,
}

impl Lexicon {
    pub fn group(&self, g: Group) -> Vec<&Association> {
        self.associations.iter().filter(|a| a.group == g).collect()
    }

    pub fn gesture_for_cue(&self, cue: &str) -> Option<&str> {
        self.associations
            .iter()
            .find(|a| a.cue == cue)
            .map(|a| a.gesture.as_str())
    }

    fn cues(&self) -> Vec<&str> {
        self.associations.iter().map(|a| a.cue.as_str()).collect()
    }
}

const SYLLABLES: [&str; 20] = [
    "ba", "de", "fi", "go", "ku", "la", "me", "ni", "po", "ru", "sa", "te", "vi", "wo", "zu", "ka", "lo", "mu", "ne",
    "ri",
];

/// Three-syllable word for index `i` (unique for `i < 8000`).
fn word(i: usize) -> String {
    let n = SYLLABLES.len();
    [i / (n * n) % n, i / n % n, i % n]
        .iter()
        .map(|&k| SYLLABLES[k])
        .collect()
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

/// Deterministic lexicon: disjoint word ranges drawn from a seeded permutation.
pub fn lexicon(spec: &FixtureSpec) -> Lexicon {
    let mut rng = GenRng::for_item(spec.seed, "lexicon");
    let n_names = 12;
    let n_places = 10;
    let n_fillers = 60;
    let n_assoc = 5 * spec.vocab_size;
    let total = n_names + n_places + n_fillers + 2 * n_assoc;
    let mut ids: Vec<usize> = (0..8000).collect();
    ids.shuffle(rng.inner());
    let mut words = ids.into_iter().take(total).map(word);
    let names = words.by_ref().take(n_names).map(|w| capitalize(&w)).collect();
    let places = words.by_ref().take(n_places).map(|w| w.to_uppercase()).collect();
    let fillers = words.by_ref().take(n_fillers).collect();
    let groups: Vec<Group> = KnowledgeType::ALL
        .iter()
        .map(|&k| Group::Weak(k))
        .chain([Group::CleanOnly])
        .collect();
    let mut associations = Vec::with_capacity(n_assoc);
    for g in groups {
        for _ in 0..spec.vocab_size {
            let cue = words.next().expect("enough words");
            let gesture = words.next().expect("enough words");
            associations.push(Association { cue, gesture, group: g });
        }
    }
    Lexicon {
        names,
        places,
        fillers,
        associations,
    }
}

/// Triple the extractor is expected to recover.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OracleTriple {
    pub scene_id: String,
    pub ktype: KnowledgeType,
    pub verbal: String,
    pub nonverbal: String,
}

impl OracleTriple {
    pub fn of(t: &KnowledgeTriple) -> Self {
        OracleTriple {
            scene_id: t.scene_id.clone(),
            ktype: t.ktype,
            verbal: t.verbal.clone(),
            nonverbal: t.nonverbal.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub spec: FixtureSpec,
    pub lexicon: Lexicon,
    pub scripts: Vec<RawScript>,
    pub oracle: Vec<OracleTriple>,
    pub v_train: Vec<McInstance>,
    pub v_dev: Vec<McInstance>,
    pub v_test: Vec<McInstance>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Plant {
    Plain,
    Typed(KnowledgeType),
}

fn filler_words(lex: &Lexicon, rng: &mut GenRng, n: usize) -> Vec<String> {
    (0..n)
        .map(|_| lex.fillers.choose(rng.inner()).expect("fillers").clone())
        .collect()
}

/// Words of an utterance containing `cue` at a random position.
fn utterance_words(lex: &Lexicon, rng: &mut GenRng, cue: Option<&str>) -> Vec<String> {
    let n = rng.inner().random_range(1..=3);
    let mut words = filler_words(lex, rng, n);
    if let Some(cue) = cue {
        let at = rng.inner().random_range(0..=words.len());
        words.insert(at, cue.to_string());
    }
    words
}

fn sentence(words: &[String]) -> String {
    format!("{}.", words.join(" "))
}

/// Cue mentioned by a turn carrying `gesture`.
fn pick_cue<'a>(lex: &'a Lexicon, assoc: &'a Association, strength: f64, rng: &mut GenRng) -> &'a str {
    if rng.inner().random_bool(strength) {
        &assoc.cue
    } else {
        lex.cues().choose(rng.inner()).copied().expect("cues")
    }
}

struct SceneOut {
    text: String,
    oracle: Vec<OracleTriple>,
}

fn synth_scene(spec: &FixtureSpec, lex: &Lexicon, scene_id: &str, rng: &mut GenRng) -> SceneOut {
    let cast: Vec<&String> = lex.names.choose_multiple(rng.inner(), 2).collect();
    let t = spec.turns_per_scene;
    let speakers: Vec<&String> = (0..t).map(|_| *cast.choose(rng.inner()).expect("cast")).collect();
    let mut plants: Vec<Plant> = (0..t)
        .map(|_| {
            if rng.inner().random_bool(spec.nonverbal_rate) {
                Plant::Typed(*KnowledgeType::ALL.choose(rng.inner()).expect("types"))
            } else {
                Plant::Plain
            }
        })
        .collect();
    // a noisy-beginning turn needs its speaker's bare name in another turn
    for i in 0..t {
        if plants[i] == Plant::Typed(KnowledgeType::Bn) {
            let anchored =
                (0..t).any(|j| j != i && speakers[j] == speakers[i] && plants[j] != Plant::Typed(KnowledgeType::Bn));
            if !anchored {
                plants[i] = Plant::Typed(KnowledgeType::Bc);
            }
        }
    }

    let mut lines = vec![format!(
        "INT. {} - DAY",
        lex.places.choose(rng.inner()).expect("places")
    )];
    if rng.inner().random_bool(spec.noise_rate) {
        lines.push(sentence(&filler_words(lex, rng, 3)));
    }
    let mut oracle = Vec::new();
    let mut used: BTreeSet<&str> = BTreeSet::new();
    for (speaker, plant) in speakers.iter().zip(&plants) {
        let Plant::Typed(k) = *plant else {
            let mut words = utterance_words(lex, rng, None);
            if rng.inner().random_bool(spec.noise_rate) {
                let at = rng.inner().random_range(0..words.len());
                words.insert(at, "(beat)".into());
            }
            lines.push(format!("{speaker}: {}", sentence(&words)));
            if rng.inner().random_bool(spec.noise_rate) {
                lines.push("JUMP CUT".into());
            }
            continue;
        };
        let group = lex.group(Group::Weak(k));
        let fresh: Vec<&&Association> = group.iter().filter(|a| !used.contains(a.gesture.as_str())).collect();
        let assoc: &Association = fresh.choose(rng.inner()).expect("vocab_size >= turns_per_scene");
        used.insert(&assoc.gesture);
        let cue = pick_cue(lex, assoc, spec.signal_strength[&k], rng);
        let words = utterance_words(lex, rng, Some(cue));
        let verbal = format!("{speaker}: {}", sentence(&words));
        let g = &assoc.gesture;
        let line = match k {
            KnowledgeType::Bc => format!("{speaker} ({g}): {}", sentence(&words)),
            KnowledgeType::Bn => format!("{speaker} {g}: {}", sentence(&words)),
            KnowledgeType::I => {
                let at = rng.inner().random_range(1..words.len());
                let mut with = words.clone();
                with.insert(at, format!("({g})"));
                format!("{speaker}: {}", sentence(&with))
            }
            KnowledgeType::O => format!("{speaker}: {}", sentence(&words)),
        };
        lines.push(line);
        if k == KnowledgeType::O {
            lines.push(g.clone());
        }
        oracle.push(OracleTriple {
            scene_id: scene_id.to_string(),
            ktype: k,
            verbal,
            nonverbal: g.clone(),
        });
    }
    SceneOut {
        text: lines.join("\n"),
        oracle,
    }
}

fn synth_script(spec: &FixtureSpec, lex: &Lexicon, index: usize) -> (RawScript, Vec<OracleTriple>) {
    let script_id = format!("synth_{index:04}");
    let mut rng = GenRng::for_item(spec.seed, &format!("script/{script_id}"));
    let mut scenes = Vec::with_capacity(spec.scenes_per_script);
    let mut oracle = Vec::new();
    for s in 0..spec.scenes_per_script {
        let out = synth_scene(spec, lex, &format!("{script_id}:{s}"), &mut rng);
        scenes.push(out.text);
        oracle.extend(out.oracle);
    }
    let mut text = scenes.join("\n\n");
    text.push('\n');
    let path = format!("scripts/{script_id}.txt");
    (RawScript::new(script_id, text, path), oracle)
}

/// One clean instance: a short dialogue in which the target turn mentions
/// a cue; the answer is its gesture.
fn clean_instance(spec: &FixtureSpec, lex: &Lexicon, id: String, rng: &mut GenRng) -> McInstance {
    let assoc = lex.associations.choose(rng.inner()).expect("associations");
    let cast: Vec<&String> = lex.names.choose_multiple(rng.inner(), 2).collect();
    let target = rng.inner().random_range(0..spec.turns_per_scene);
    let mut lines = Vec::with_capacity(spec.turns_per_scene);
    let mut question = String::new();
    for i in 0..spec.turns_per_scene {
        let speaker = cast[i % 2];
        if i == target {
            let words = utterance_words(lex, rng, Some(&assoc.cue));
            question = format!("{speaker}: {}", sentence(&words));
            lines.push(question.clone());
        } else {
            lines.push(format!("{speaker}: {}", sentence(&utterance_words(lex, rng, None))));
        }
    }
    let others: Vec<&String> = lex
        .associations
        .iter()
        .map(|a| &a.gesture)
        .filter(|g| **g != assoc.gesture)
        .collect();
    let mut options: Vec<String> = others
        .choose_multiple(rng.inner(), spec.v_options - 1)
        .map(|g| (*g).clone())
        .collect();
    options.push(assoc.gesture.clone());
    options.shuffle(rng.inner());
    let gold = options.iter().position(|o| *o == assoc.gesture).expect("gold present");
    let category = match assoc.group {
        Group::Weak(_) => CATEGORY_SHARED,
        Group::CleanOnly => CATEGORY_CLEAN_ONLY,
    };
    McInstance {
        id,
        document: lines.join("\n"),
        question,
        options,
        gold,
        category: Some(category.into()),
        source: Source::labeled(),
        verbal_unit: Some(target),
    }
}

fn clean_split(spec: &FixtureSpec, lex: &Lexicon, split: &str, n: usize) -> Vec<McInstance> {
    let mut rng = GenRng::for_item(spec.seed, &format!("clean/{split}"));
    (0..n)
        .map(|i| clean_instance(spec, lex, format!("clean-{split}-{i:05}"), &mut rng))
        .collect()
}

/// Scripts, expected triples and clean splits for `spec`. Pure and seeded.
pub fn synthesize_corpus(spec: &FixtureSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    if spec.vocab_size < spec.turns_per_scene {
        return Err(Error::invalid("vocab_size must be at least turns_per_scene"));
    }
    let lex = lexicon(spec);
    let per_script: Vec<(RawScript, Vec<OracleTriple>)> = (0..spec.n_scripts)
        .into_par_iter()
        .map(|i| synth_script(spec, &lex, i))
        .collect();
    let mut scripts = Vec::with_capacity(per_script.len());
    let mut oracle = Vec::new();
    for (s, o) in per_script {
        scripts.push(s);
        oracle.extend(o);
    }
    Ok(SynthCorpus {
        v_train: clean_split(spec, &lex, "train", spec.v_train),
        v_dev: clean_split(spec, &lex, "dev", spec.v_dev),
        v_test: clean_split(spec, &lex, "test", spec.v_test),
        spec: spec.clone(),
        lexicon: lex,
        scripts,
        oracle,
    })
}

impl SynthCorpus {
    pub fn scenes(&self, cfg: &ParserConfig) -> Vec<Scene> {
        self.scripts.iter().flat_map(|s| parse_script(s, cfg)).collect()
    }

    /// Extracts, generates weak instances, and splits them by type.
    pub fn bundle(&self, n_distractors: usize, seed: u64) -> Result<DatasetBundle> {
        let scenes = self.scenes(&ParserConfig::default());
        let triples = extract_scenes(&scenes, &ExtractConfig::default(), &Stoplist::default_list()).triples;
        let generated = generate_instances(&triples, n_distractors, seed)?;
        let weak = KnowledgeType::ALL
            .iter()
            .map(|&k| WeakSet {
                name: k.to_string(),
                instances: generated
                    .instances
                    .iter()
                    .filter(|i| i.source.kind == k.into())
                    .cloned()
                    .collect(),
            })
            .collect();
        Ok(DatasetBundle {
            v_train: self.v_train.clone(),
            dev: self.v_dev.clone(),
            test: self.v_test.clone(),
            weak,
        })
    }

    /// Writes `scripts/`, `oracle.jsonl`, `lexicon.json` and `v_{train,dev,test}.jsonl`.
    pub fn write(&self, out: &Path, config_hash: &str) -> Result<()> {
        use crate::io::{write_json, write_jsonl, Header};
        let dir = out.join("scripts");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for s in &self.scripts {
            let path = dir.join(format!("{}.txt", s.script_id));
            std::fs::write(&path, &s.text).map_err(|e| Error::io(&path, e))?;
        }
        let seed = Some(self.spec.seed);
        write_jsonl(
            &out.join("oracle.jsonl"),
            Some(&Header::new("ctxknow.oracle", config_hash, seed)),
            &self.oracle,
        )?;
        write_json(&out.join("lexicon.json"), &self.lexicon)?;
        for (name, rows) in [("train", &self.v_train), ("dev", &self.v_dev), ("test", &self.v_test)] {
            write_jsonl(
                &out.join(format!("v_{name}.jsonl")),
                Some(&Header::new("ctxknow.instances", config_hash, seed)),
                rows,
            )?;
        }
        Ok(())
    }
}

/// Predicts the option tied to the first cue found in the question.
pub fn cue_oracle_predict(lex: &Lexicon, inst: &McInstance) -> Option<usize> {
    inst.question
        .split(|c: char| !c.is_alphanumeric())
        .find_map(|w| lex.gesture_for_cue(w))
        .and_then(|g| inst.options.iter().position(|o| o == g))
}

/// The bundled sample scene, parsed as one scene.
pub fn golden_scene() -> Scene {
    let text = crate::parser::normalize_newlines(GOLDEN_SCENE);
    let raw = RawSceneText {
        ordinal: 0,
        first_line: 0,
        text: text.trim_end_matches('\n').to_string(),
    };
    parse_scene("golden", &raw, &ParserConfig::default())
}
