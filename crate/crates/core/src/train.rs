//! Training regimes: hard-label training, two-stage fine-tuning and the
//! multi-teacher soft-label student.
//!
//! With a clean labeled set `V` and weak sets `W_1..W_l`:
//!
//! * teacher `i` minimizes the hard-label loss over `V ∪ W_i`;
//! * each instance gets a soft label
//!   `s = λ·h + (1-λ)·p_T`, where `p_T` is the own teacher's prediction for
//!   weak instances and the mean over all teachers for `V`;
//! * the student minimizes the soft-label loss over `V ∪ W` (stage 1), then
//!   over `V` alone (stage 2), with hard labels optionally restored in
//!   stage 2.
//!
//! Soft labels are computed once from the finished teachers and frozen.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{accuracy, summarize};
use crate::instances::{stable_hash, McInstance};
use crate::reader::{batch_gradient, encoded_probs, Gradients, LabelVector, ReaderParams, Sample, Vocab};
use crate::tokenize::TokenizerMode;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    #[default]
    Soft,
    Hard,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Stage 1 trains on clean and weak data together.
    #[default]
    Joint,
    /// Stage 1 trains on weak data only.
    Separate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    /// Teacher epochs over `V ∪ W_i`; defaults to `epochs_stage1`.
    pub teacher_epochs: Option<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub stage2_labels: LabelMode,
    pub include_v_in_stage1: bool,
    pub joint_or_separate: Schedule,
    /// Fine-tune each teacher on `V` before it produces soft labels.
    pub teacher_finetune_on_v: bool,
    /// Restricts single-weak-set presets to one weak set.
    pub weak_set: Option<usize>,
    pub dim: usize,
    pub init_scale: f64,
    pub tokenizer: TokenizerMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.5,
            epochs_stage1: 1,
            epochs_stage2: 8,
            teacher_epochs: None,
            learning_rate: 0.1,
            batch_size: 32,
            seed: 0,
            stage2_labels: LabelMode::Soft,
            include_v_in_stage1: true,
            joint_or_separate: Schedule::Joint,
            teacher_finetune_on_v: false,
            weak_set: None,
            dim: 64,
            init_scale: 0.05,
            tokenizer: TokenizerMode::UnicodeWords,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dim must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        Ok(())
    }

    fn stage1_includes_v(&self) -> bool {
        self.include_v_in_stage1 && self.joint_or_separate == Schedule::Joint
    }

    fn sub_seed(&self, tag: &str) -> u64 {
        self.seed ^ stable_hash(tag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakSet {
    pub name: String,
    pub instances: Vec<McInstance>,
}

/// Clean labeled data (train/dev/test) plus weak sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetBundle {
    pub v_train: Vec<McInstance>,
    pub dev: Vec<McInstance>,
    pub test: Vec<McInstance>,
    pub weak: Vec<WeakSet>,
}

impl DatasetBundle {
    /// Checks per-instance invariants and global id uniqueness over the
    /// training data.
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for inst in self.v_train.iter().chain(self.weak.iter().flat_map(|w| &w.instances)) {
            inst.validate()?;
            if !ids.insert(inst.id.as_str()) {
                return Err(Error::invalid(format!("duplicate instance id {}", inst.id)));
            }
        }
        for inst in self.dev.iter().chain(&self.test) {
            inst.validate()?;
        }
        Ok(())
    }

    /// Vocabulary over every training text.
    pub fn vocab(&self, mode: TokenizerMode) -> Vocab {
        Vocab::build(
            self.v_train.iter().chain(self.weak.iter().flat_map(|w| &w.instances)),
            mode,
        )
    }

    pub fn all_weak(&self) -> Vec<McInstance> {
        self.weak.iter().flat_map(|w| w.instances.iter().cloned()).collect()
    }

    /// Copy with every weak document emptied.
    pub fn without_weak_context(&self) -> DatasetBundle {
        DatasetBundle {
            weak: self
                .weak
                .iter()
                .map(|w| WeakSet {
                    name: w.name.clone(),
                    instances: w.instances.iter().map(McInstance::without_context).collect(),
                })
                .collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ReaderParams,
    pub epoch_losses: Vec<f64>,
}

pub fn fresh_params(vocab: &Vocab, cfg: &TrainConfig) -> Result<ReaderParams> {
    ReaderParams::init(
        vocab.clone(),
        cfg.dim,
        cfg.tokenizer,
        cfg.init_scale,
        cfg.sub_seed("init"),
    )
}

/// Seeded-shuffle mini-batch gradient descent over fixed targets.
pub fn train_samples(
    samples: &[Sample],
    mut params: ReaderParams,
    epochs: usize,
    cfg: &TrainConfig,
    stream: &str,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut losses = Vec::with_capacity(epochs);
    if epochs == 0 || samples.is_empty() {
        return Ok(TrainOutcome {
            params,
            epoch_losses: losses,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sub_seed(stream));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut grad = Gradients::zeros_like(&params);
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let loss = batch_gradient(&batch, &params, &mut grad);
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    location: format!("{stream}: loss at epoch {epoch}, batch {b}"),
                });
            }
            grad.apply(&mut params, cfg.learning_rate);
            total += loss * batch.len() as f64;
        }
        losses.push(total / samples.len() as f64);
    }
    params.check_finite()?;
    Ok(TrainOutcome {
        params,
        epoch_losses: losses,
    })
}

fn hard_samples(params: &ReaderParams, data: &[McInstance]) -> Vec<Sample> {
    data.iter().map(|i| Sample::hard(params.encode_instance(i))).collect()
}

/// Hard-label training for `epochs` epochs starting from `params`.
pub fn train_hard(data: &[McInstance], params: ReaderParams, epochs: usize, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("hard-label training set".into()));
    }
    let samples = hard_samples(&params, data);
    train_samples(&samples, params, epochs, cfg, "hard")
}

fn teacher_data(bundle: &DatasetBundle, i: usize, cfg: &TrainConfig) -> Vec<McInstance> {
    let mut data = Vec::new();
    if cfg.stage1_includes_v() {
        data.extend(bundle.v_train.iter().cloned());
    }
    data.extend(bundle.weak[i].instances.iter().cloned());
    data
}

/// One teacher per weak set, trained on `V ∪ W_i`.
pub fn train_teachers(bundle: &DatasetBundle, vocab: &Vocab, cfg: &TrainConfig) -> Result<Vec<ReaderParams>> {
    if bundle.weak.is_empty() {
        return Err(Error::invalid("teacher training needs at least one weak set"));
    }
    let epochs = cfg.teacher_epochs.unwrap_or(cfg.epochs_stage1);
    (0..bundle.weak.len())
        .into_par_iter()
        .map(|i| {
            let init = fresh_params(vocab, cfg)?;
            let data = teacher_data(bundle, i, cfg);
            let mut teacher = train_hard(&data, init, epochs, cfg)?.params;
            if cfg.teacher_finetune_on_v {
                teacher = train_hard(&bundle.v_train, teacher, cfg.epochs_stage2, cfg)?.params;
            }
            Ok(teacher)
        })
        .collect()
}

/// `λ·onehot(gold) + (1-λ)·mean(teacher_probs)`.
pub fn mix_soft_label(gold: usize, teacher_probs: &[Vec<f64>], lambda: f64) -> Result<LabelVector> {
    let Some(first) = teacher_probs.first() else {
        return Err(Error::invalid("no teacher probabilities"));
    };
    let m = first.len();
    if gold >= m || teacher_probs.iter().any(|p| p.len() != m) {
        return Err(Error::invalid("teacher probabilities do not match the option count"));
    }
    let inv = 1.0 / teacher_probs.len() as f64;
    let values = (0..m)
        .map(|k| {
            let hk = if k == gold { 1.0 } else { 0.0 };
            let avg: f64 = teacher_probs.iter().map(|p| inv * p[k]).sum();
            lambda * hk + (1.0 - lambda) * avg
        })
        .collect();
    LabelVector::new(values)
}

pub type SoftLabels = BTreeMap<String, LabelVector>;

/// One line of a soft-label file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabelRow {
    pub instance_id: String,
    pub s: Vec<f64>,
}

pub fn soft_label_rows(soft: &SoftLabels) -> Vec<SoftLabelRow> {
    soft.iter()
        .map(|(id, s)| SoftLabelRow {
            instance_id: id.clone(),
            s: s.values().to_vec(),
        })
        .collect()
}

/// Soft label for every instance of `V` (all teachers) and of each `W_i`
/// (teacher `i`).
pub fn soft_labels(bundle: &DatasetBundle, teachers: &[ReaderParams], lambda: f64) -> Result<SoftLabels> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda {lambda} outside [0, 1]")));
    }
    if teachers.len() != bundle.weak.len() {
        return Err(Error::invalid(format!(
            "{} teachers for {} weak sets",
            teachers.len(),
            bundle.weak.len()
        )));
    }
    let probs = |t: &ReaderParams, inst: &McInstance| encoded_probs(&t.encode_instance(inst), t);
    let mut jobs: Vec<(&McInstance, Option<usize>)> = bundle.v_train.iter().map(|i| (i, None)).collect();
    for (w, set) in bundle.weak.iter().enumerate() {
        jobs.extend(set.instances.iter().map(|i| (i, Some(w))));
    }
    let labels: Vec<(String, LabelVector)> = jobs
        .par_iter()
        .map(|(inst, owner)| {
            let p: Vec<Vec<f64>> = match owner {
                Some(w) => vec![probs(&teachers[*w], inst)],
                None => teachers.iter().map(|t| probs(t, inst)).collect(),
            };
            Ok((inst.id.clone(), mix_soft_label(inst.gold, &p, lambda)?))
        })
        .collect::<Result<_>>()?;
    Ok(labels.into_iter().collect())
}

fn soft_samples(params: &ReaderParams, data: &[&McInstance], soft: &SoftLabels) -> Result<Vec<Sample>> {
    data.iter()
        .map(|inst| {
            let s = soft.get(&inst.id).ok_or_else(|| Error::MissingLabel(inst.id.clone()))?;
            if s.len() != inst.options.len() {
                return Err(Error::invalid(format!("soft label length mismatch for {}", inst.id)));
            }
            Ok(Sample::soft(params.encode_instance(inst), s))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentOutcome {
    pub stage1: ReaderParams,
    pub final_params: ReaderParams,
    pub stage1_losses: Vec<f64>,
    pub stage2_losses: Vec<f64>,
}

/// Two-stage student on soft labels (stage 2 optionally hard).
pub fn train_student(
    bundle: &DatasetBundle,
    soft: &SoftLabels,
    vocab: &Vocab,
    cfg: &TrainConfig,
) -> Result<StudentOutcome> {
    let init = fresh_params(vocab, cfg)?;
    let mut stage1_data: Vec<&McInstance> = Vec::new();
    if cfg.stage1_includes_v() {
        stage1_data.extend(&bundle.v_train);
    }
    stage1_data.extend(bundle.weak.iter().flat_map(|w| &w.instances));
    if stage1_data.is_empty() {
        return Err(Error::EmptyDataset("student stage 1".into()));
    }
    let samples = soft_samples(&init, &stage1_data, soft)?;
    let s1 = train_samples(&samples, init, cfg.epochs_stage1, cfg, "stage1")?;

    let v: Vec<&McInstance> = bundle.v_train.iter().collect();
    let stage2_samples = match cfg.stage2_labels {
        LabelMode::Soft => soft_samples(&s1.params, &v, soft)?,
        LabelMode::Hard => hard_samples(&s1.params, &bundle.v_train),
    };
    let s2 = train_samples(&stage2_samples, s1.params.clone(), cfg.epochs_stage2, cfg, "stage2")?;
    Ok(StudentOutcome {
        stage1: s1.params,
        final_params: s2.params,
        stage1_losses: s1.epoch_losses,
        stage2_losses: s2.epoch_losses,
    })
}

/// Stage 1 on `stage1_data` then stage 2 on `V`, hard labels throughout.
pub fn two_stage_hard(
    stage1_data: &[McInstance],
    v_train: &[McInstance],
    vocab: &Vocab,
    cfg: &TrainConfig,
) -> Result<(ReaderParams, ReaderParams)> {
    let init = fresh_params(vocab, cfg)?;
    let samples = hard_samples(&init, stage1_data);
    let s1 = train_samples(&samples, init, cfg.epochs_stage1, cfg, "stage1")?.params;
    let samples = hard_samples(&s1, v_train);
    let s2 = train_samples(&samples, s1.clone(), cfg.epochs_stage2, cfg, "stage2")?.params;
    Ok((s1, s2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Clean data only.
    BaselineVOnly,
    /// One weak set in stage 1, then clean data.
    SingleWeakTwoStage,
    /// All weak sets combined in stage 1, then clean data.
    CombinedTwoStage,
    /// Teacher-student with hard labels in stage 2.
    TeacherStudentHard,
    /// Teacher-student with soft labels in both stages.
    TeacherStudentSoft,
    /// Weak data alone in stage 1, then clean data.
    SeparateTraining,
    /// Teacher-student soft with weak documents emptied.
    NoContextAblation,
    /// Teacher-student soft without clean data in stage 1 of teachers and student.
    NoVStage1Ablation,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::BaselineVOnly,
        Preset::SingleWeakTwoStage,
        Preset::CombinedTwoStage,
        Preset::TeacherStudentHard,
        Preset::TeacherStudentSoft,
        Preset::SeparateTraining,
        Preset::NoContextAblation,
        Preset::NoVStage1Ablation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::BaselineVOnly => "baseline_v_only",
            Preset::SingleWeakTwoStage => "single_weak_two_stage",
            Preset::CombinedTwoStage => "combined_two_stage",
            Preset::TeacherStudentHard => "teacher_student_hard",
            Preset::TeacherStudentSoft => "teacher_student_soft",
            Preset::SeparateTraining => "separate_training",
            Preset::NoContextAblation => "no_context_ablation",
            Preset::NoVStage1Ablation => "no_v_stage1_ablation",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub dev: f64,
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1: Option<Scores>,
    #[serde(rename = "final")]
    pub final_scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    pub per_seed: Vec<SeedResult>,
    pub mean: Scores,
    pub std: Scores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1_mean: Option<Scores>,
}

pub const REPORT_SCHEMA: &str = "ctxknow.report";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema: String,
    pub version: u32,
    pub preset: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub variants: Vec<VariantReport>,
}

/// Report plus the first seed's trained model per variant and, for
/// teacher-student presets, its soft labels.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub report: PipelineReport,
    pub models: Vec<(String, ReaderParams)>,
    pub soft_labels: Option<SoftLabels>,
}

fn score(params: &ReaderParams, bundle: &DatasetBundle) -> Result<Scores> {
    Ok(Scores {
        dev: accuracy(params, &bundle.dev)?.accuracy,
        test: accuracy(params, &bundle.test)?.accuracy,
    })
}

struct SeedRun {
    stage1: Option<ReaderParams>,
    final_params: ReaderParams,
    soft: Option<SoftLabels>,
}

fn teacher_student(bundle: &DatasetBundle, vocab: &Vocab, cfg: &TrainConfig) -> Result<SeedRun> {
    let teachers = train_teachers(bundle, vocab, cfg)?;
    let soft = soft_labels(bundle, &teachers, cfg.lambda)?;
    let out = train_student(bundle, &soft, vocab, cfg)?;
    Ok(SeedRun {
        stage1: Some(out.stage1),
        final_params: out.final_params,
        soft: Some(soft),
    })
}

fn two_stage(bundle: &DatasetBundle, weak: &[McInstance], vocab: &Vocab, cfg: &TrainConfig) -> Result<SeedRun> {
    let mut data = Vec::new();
    if cfg.stage1_includes_v() {
        data.extend(bundle.v_train.iter().cloned());
    }
    data.extend(weak.iter().cloned());
    if data.is_empty() {
        return Err(Error::EmptyDataset("stage 1".into()));
    }
    let (s1, s2) = two_stage_hard(&data, &bundle.v_train, vocab, cfg)?;
    Ok(SeedRun {
        stage1: Some(s1),
        final_params: s2,
        soft: None,
    })
}

/// Runs one preset for every seed; the variant list depends on the preset.
pub fn run_pipeline(
    preset: Preset,
    bundle: &DatasetBundle,
    cfg: &TrainConfig,
    seeds: &[u64],
    config_hash: &str,
) -> Result<PipelineResult> {
    cfg.validate()?;
    bundle.validate()?;
    if seeds.is_empty() {
        return Err(Error::invalid("at least one seed is required"));
    }
    if bundle.v_train.is_empty() {
        return Err(Error::EmptyDataset("labeled training set".into()));
    }
    let needs_weak = preset != Preset::BaselineVOnly;
    if needs_weak && bundle.weak.is_empty() {
        return Err(Error::invalid(format!("preset {preset} needs weak sets")));
    }

    let stripped;
    let bundle = if preset == Preset::NoContextAblation {
        stripped = bundle.without_weak_context();
        &stripped
    } else {
        bundle
    };
    let base = match preset {
        Preset::TeacherStudentHard => TrainConfig {
            stage2_labels: LabelMode::Hard,
            ..cfg.clone()
        },
        Preset::TeacherStudentSoft | Preset::NoContextAblation => TrainConfig {
            stage2_labels: LabelMode::Soft,
            ..cfg.clone()
        },
        Preset::SeparateTraining => TrainConfig {
            joint_or_separate: Schedule::Separate,
            ..cfg.clone()
        },
        Preset::NoVStage1Ablation => TrainConfig {
            include_v_in_stage1: false,
            stage2_labels: LabelMode::Soft,
            ..cfg.clone()
        },
        _ => cfg.clone(),
    };
    let vocab = bundle.vocab(base.tokenizer);

    let weak_variants: Vec<(String, Vec<McInstance>)> = match preset {
        Preset::SingleWeakTwoStage => bundle
            .weak
            .iter()
            .enumerate()
            .filter(|(i, _)| cfg.weak_set.is_none_or(|w| w == *i))
            .map(|(_, w)| (w.name.clone(), w.instances.clone()))
            .collect(),
        Preset::CombinedTwoStage => vec![("combined".into(), bundle.all_weak())],
        Preset::SeparateTraining => match cfg.weak_set {
            Some(i) => {
                let w = bundle
                    .weak
                    .get(i)
                    .ok_or_else(|| Error::invalid(format!("weak set {i} does not exist")))?;
                vec![(w.name.clone(), w.instances.clone())]
            }
            None => vec![("combined".into(), bundle.all_weak())],
        },
        _ => vec![(preset.name().to_string(), Vec::new())],
    };
    if weak_variants.is_empty() {
        return Err(Error::invalid("weak_set selects no weak set"));
    }

    let mut variants = Vec::new();
    let mut models = Vec::new();
    let mut soft_labels = None;
    for (name, weak) in &weak_variants {
        let runs: Vec<(SeedResult, ReaderParams, Option<SoftLabels>)> = seeds
            .par_iter()
            .map(|&seed| {
                let cfg = TrainConfig { seed, ..base.clone() };
                let run = match preset {
                    Preset::BaselineVOnly => SeedRun {
                        stage1: None,
                        final_params: train_hard(
                            &bundle.v_train,
                            fresh_params(&vocab, &cfg)?,
                            cfg.epochs_stage2,
                            &cfg,
                        )?
                        .params,
                        soft: None,
                    },
                    Preset::SingleWeakTwoStage | Preset::CombinedTwoStage | Preset::SeparateTraining => {
                        two_stage(bundle, weak, &vocab, &cfg)?
                    }
                    Preset::TeacherStudentHard
                    | Preset::TeacherStudentSoft
                    | Preset::NoContextAblation
                    | Preset::NoVStage1Ablation => teacher_student(bundle, &vocab, &cfg)?,
                };
                let result = SeedResult {
                    seed,
                    stage1: run.stage1.as_ref().map(|p| score(p, bundle)).transpose()?,
                    final_scores: score(&run.final_params, bundle)?,
                };
                Ok((result, run.final_params, run.soft))
            })
            .collect::<Result<_>>()?;
        let mut per_seed = Vec::with_capacity(runs.len());
        for (i, (result, params, soft)) in runs.into_iter().enumerate() {
            if i == 0 {
                models.push((name.clone(), params));
                if soft_labels.is_none() {
                    soft_labels = soft;
                }
            }
            per_seed.push(result);
        }
        variants.push(variant_report(name, per_seed)?);
    }
    Ok(PipelineResult {
        report: PipelineReport {
            schema: REPORT_SCHEMA.into(),
            version: 1,
            preset: preset.name().into(),
            config_hash: config_hash.into(),
            seeds: seeds.to_vec(),
            variants,
        },
        models,
        soft_labels,
    })
}

fn variant_report(name: &str, per_seed: Vec<SeedResult>) -> Result<VariantReport> {
    let dev = summarize(&per_seed.iter().map(|r| r.final_scores.dev).collect::<Vec<_>>())?;
    let test = summarize(&per_seed.iter().map(|r| r.final_scores.test).collect::<Vec<_>>())?;
    let stage1_mean = if per_seed.iter().all(|r| r.stage1.is_some()) {
        let s1: Vec<Scores> = per_seed.iter().filter_map(|r| r.stage1).collect();
        Some(Scores {
            dev: summarize(&s1.iter().map(|s| s.dev).collect::<Vec<_>>())?.mean,
            test: summarize(&s1.iter().map(|s| s.test).collect::<Vec<_>>())?.mean,
        })
    } else {
        None
    };
    Ok(VariantReport {
        name: name.into(),
        per_seed,
        mean: Scores {
            dev: dev.mean,
            test: test.mean,
        },
        std: Scores {
            dev: dev.std,
            test: test.std,
        },
        stage1_mean,
    })
}
