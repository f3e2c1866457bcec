use std::collections::BTreeSet;

use ctxknow::eval::accuracy;
use ctxknow::fixtures::{synthesize_corpus, FixtureSpec};
use ctxknow::instances::{McInstance, Source};
use ctxknow::reader::{ReaderParams, Vocab};
use ctxknow::tokenize::TokenizerMode;
use ctxknow::train::{
    fresh_params, run_pipeline, soft_labels, train_hard, train_student, train_teachers, two_stage_hard, DatasetBundle,
    LabelMode, Preset, TrainConfig, WeakSet,
};

fn fast_config() -> TrainConfig {
    TrainConfig {
        init_scale: 1.0,
        learning_rate: 3.0,
        batch_size: 8,
        dim: 16,
        ..TrainConfig::default()
    }
}

fn small_bundle(seed: u64) -> DatasetBundle {
    let spec = FixtureSpec {
        n_scripts: 30,
        v_train: 40,
        v_dev: 80,
        v_test: 80,
        seed,
        ..FixtureSpec::default()
    };
    synthesize_corpus(&spec).unwrap().bundle(5, seed).unwrap()
}

fn toy(n: usize) -> Vec<McInstance> {
    (0..n)
        .map(|i| McInstance {
            id: format!("t{i}"),
            document: format!("key{}", i % 4),
            question: "which".into(),
            options: (0..4).map(|k| format!("opt{k}")).collect(),
            gold: i % 4,
            category: None,
            source: Source::labeled(),
            verbal_unit: None,
        })
        .collect()
}

#[test]
fn separable_toy_is_learned_perfectly() {
    let data = toy(40);
    let cfg = TrainConfig {
        dim: 8,
        ..fast_config()
    };
    let vocab = Vocab::build(&data, cfg.tokenizer);
    let out = train_hard(&data, fresh_params(&vocab, &cfg).unwrap(), 30, &cfg).unwrap();
    assert_eq!(accuracy(&out.params, &data).unwrap().accuracy, 1.0);
    assert!(out.epoch_losses.last().unwrap() < out.epoch_losses.first().unwrap());
}

#[test]
fn zero_epochs_leave_params_unchanged() {
    let data = toy(8);
    let cfg = fast_config();
    let init = fresh_params(&Vocab::build(&data, cfg.tokenizer), &cfg).unwrap();
    let out = train_hard(&data, init.clone(), 0, &cfg).unwrap();
    assert_eq!(out.params, init);
    assert!(out.epoch_losses.is_empty());
}

#[test]
fn invalid_configs_are_rejected() {
    let data = toy(4);
    for cfg in [
        TrainConfig {
            lambda: 1.5,
            ..fast_config()
        },
        TrainConfig {
            batch_size: 0,
            ..fast_config()
        },
        TrainConfig {
            learning_rate: 0.0,
            ..fast_config()
        },
    ] {
        let init = ReaderParams::zeros(
            Vocab::build(&data, TokenizerMode::UnicodeWords),
            4,
            TokenizerMode::UnicodeWords,
        );
        assert!(train_hard(&data, init, 1, &cfg).is_err());
    }
}

#[test]
fn diverging_training_reports_non_finite() {
    let data = toy(16);
    let cfg = TrainConfig {
        learning_rate: 1e200,
        ..fast_config()
    };
    let vocab = Vocab::build(&data, cfg.tokenizer);
    let err = train_hard(&data, fresh_params(&vocab, &cfg).unwrap(), 5, &cfg).unwrap_err();
    assert!(matches!(err, ctxknow::Error::NonFinite { .. }), "{err}");
}

#[test]
fn pipeline_is_deterministic() {
    let bundle = small_bundle(5);
    let cfg = fast_config();
    let a = run_pipeline(Preset::TeacherStudentSoft, &bundle, &cfg, &[0, 1], "h").unwrap();
    let b = run_pipeline(Preset::TeacherStudentSoft, &bundle, &cfg, &[0, 1], "h").unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.models, b.models);
    assert_eq!(a.soft_labels, b.soft_labels);
}

#[test]
fn single_teacher_is_hard_training_on_v_and_weak() {
    let mut bundle = small_bundle(6);
    bundle.weak.truncate(1);
    let cfg = fast_config();
    let vocab = bundle.vocab(cfg.tokenizer);
    let teachers = train_teachers(&bundle, &vocab, &cfg).unwrap();
    let data: Vec<McInstance> = bundle
        .v_train
        .iter()
        .chain(&bundle.weak[0].instances)
        .cloned()
        .collect();
    let direct = train_hard(&data, fresh_params(&vocab, &cfg).unwrap(), cfg.epochs_stage1, &cfg).unwrap();
    assert_eq!(teachers.len(), 1);
    assert_eq!(teachers[0], direct.params);
}

#[test]
fn swapping_weak_sets_swaps_teachers() {
    let bundle = small_bundle(7);
    let mut swapped = bundle.clone();
    swapped.weak.swap(0, 1);
    let cfg = fast_config();
    let vocab = bundle.vocab(cfg.tokenizer);
    assert_eq!(vocab, swapped.vocab(cfg.tokenizer));
    let t = train_teachers(&bundle, &vocab, &cfg).unwrap();
    let u = train_teachers(&swapped, &vocab, &cfg).unwrap();
    assert_eq!(t[0], u[1]);
    assert_eq!(t[1], u[0]);
    assert_eq!(t[2..], u[2..]);
}

#[test]
fn lambda_one_student_is_two_stage_hard() {
    let bundle = small_bundle(8);
    let cfg = TrainConfig {
        lambda: 1.0,
        ..fast_config()
    };
    let vocab = bundle.vocab(cfg.tokenizer);
    let teachers = train_teachers(&bundle, &vocab, &cfg).unwrap();
    let soft = soft_labels(&bundle, &teachers, 1.0).unwrap();
    let student = train_student(&bundle, &soft, &vocab, &cfg).unwrap();
    let stage1: Vec<McInstance> = bundle.v_train.iter().cloned().chain(bundle.all_weak()).collect();
    let (s1, s2) = two_stage_hard(&stage1, &bundle.v_train, &vocab, &cfg).unwrap();
    assert_eq!(student.stage1, s1);
    assert_eq!(student.final_params, s2);
}

#[test]
fn no_stage_two_returns_the_stage_one_model() {
    let bundle = small_bundle(9);
    let cfg = TrainConfig {
        epochs_stage2: 0,
        ..fast_config()
    };
    let vocab = bundle.vocab(cfg.tokenizer);
    let teachers = train_teachers(&bundle, &vocab, &cfg).unwrap();
    let soft = soft_labels(&bundle, &teachers, cfg.lambda).unwrap();
    let out = train_student(&bundle, &soft, &vocab, &cfg).unwrap();
    assert_eq!(out.stage1, out.final_params);
    assert!(out.stage2_losses.is_empty());
}

#[test]
fn baseline_preset_matches_direct_training() {
    let bundle = small_bundle(10);
    let cfg = fast_config();
    let report = run_pipeline(Preset::BaselineVOnly, &bundle, &cfg, &[3], "h")
        .unwrap()
        .report;
    let seeded = TrainConfig { seed: 3, ..cfg };
    let vocab = bundle.vocab(seeded.tokenizer);
    let p = train_hard(
        &bundle.v_train,
        fresh_params(&vocab, &seeded).unwrap(),
        seeded.epochs_stage2,
        &seeded,
    )
    .unwrap()
    .params;
    let v = &report.variants[0];
    assert_eq!(v.mean.dev, accuracy(&p, &bundle.dev).unwrap().accuracy);
    assert_eq!(v.mean.test, accuracy(&p, &bundle.test).unwrap().accuracy);
    assert_eq!(v.std.dev, 0.0);
    assert!(v.stage1_mean.is_none());
}

#[test]
fn stage_two_updates_only_rows_seen_in_v() {
    let bundle = small_bundle(11);
    for labels in [LabelMode::Soft, LabelMode::Hard] {
        let cfg = TrainConfig {
            stage2_labels: labels,
            ..fast_config()
        };
        let vocab = bundle.vocab(cfg.tokenizer);
        let teachers = train_teachers(&bundle, &vocab, &cfg).unwrap();
        let soft = soft_labels(&bundle, &teachers, cfg.lambda).unwrap();
        let out = train_student(&bundle, &soft, &vocab, &cfg).unwrap();
        let p = &out.final_params;
        let v_rows: BTreeSet<u32> = bundle
            .v_train
            .iter()
            .flat_map(|i| {
                let e = p.encode_instance(i);
                e.doc.into_iter().chain(e.options.into_iter().flatten())
            })
            .collect();
        let mut untouched = 0;
        for r in 0..p.rows() {
            if !v_rows.contains(&(r as u32)) {
                assert_eq!(out.stage1.row(r), p.row(r), "row {r} moved in stage 2");
                untouched += 1;
            }
        }
        assert!(untouched > 0);
        assert_ne!(out.stage1.bilinear, p.bilinear);
    }
}

#[test]
fn teachers_beat_chance_on_held_out_weak_data() {
    let spec = FixtureSpec {
        seed: 12,
        ..FixtureSpec::default()
    };
    let full = synthesize_corpus(&spec).unwrap().bundle(5, 12).unwrap();
    let mut train = full.clone();
    let mut held_out = Vec::new();
    for w in &mut train.weak {
        let cut = w.instances.len() * 3 / 4;
        held_out.push(w.instances.split_off(cut));
    }
    let cfg = TrainConfig {
        dim: 64,
        ..fast_config()
    };
    let vocab = train.vocab(cfg.tokenizer);
    let teachers = train_teachers(&train, &vocab, &cfg).unwrap();
    for ((t, dev), w) in teachers.iter().zip(&held_out).zip(&train.weak) {
        let acc = accuracy(t, dev).unwrap().accuracy;
        assert!(acc > 1.0 / 6.0 + 0.03, "teacher {} at {acc}", w.name);
    }
}

#[test]
fn context_ablation_strips_only_weak_documents() {
    let bundle = small_bundle(13);
    let stripped = bundle.without_weak_context();
    assert!(stripped.all_weak().iter().all(|i| i.document.is_empty()));
    assert_eq!(stripped.v_train, bundle.v_train);
    assert_eq!(stripped.dev, bundle.dev);
    for (a, b) in stripped.all_weak().iter().zip(bundle.all_weak()) {
        assert_eq!(
            (&a.id, &a.question, &a.options, a.gold),
            (&b.id, &b.question, &b.options, b.gold)
        );
    }
}

#[test]
fn presets_report_expected_variants() {
    let bundle = small_bundle(14);
    let cfg = TrainConfig {
        epochs_stage2: 2,
        ..fast_config()
    };
    let names = |p: Preset| -> Vec<String> {
        run_pipeline(p, &bundle, &cfg, &[0], "h")
            .unwrap()
            .report
            .variants
            .into_iter()
            .map(|v| v.name)
            .collect()
    };
    let weak_names: Vec<String> = bundle.weak.iter().map(|w| w.name.clone()).collect();
    assert_eq!(names(Preset::SingleWeakTwoStage), weak_names);
    assert_eq!(names(Preset::CombinedTwoStage), vec!["combined".to_string()]);
    assert_eq!(names(Preset::SeparateTraining), vec!["combined".to_string()]);
    let one = TrainConfig {
        weak_set: Some(1),
        ..cfg.clone()
    };
    let r = run_pipeline(Preset::SingleWeakTwoStage, &bundle, &one, &[0], "h").unwrap();
    assert_eq!(r.report.variants.len(), 1);
    assert_eq!(r.report.variants[0].name, weak_names[1]);
    let soft = run_pipeline(Preset::TeacherStudentSoft, &bundle, &cfg, &[0], "h").unwrap();
    let n_train = bundle.v_train.len() + bundle.all_weak().len();
    assert_eq!(soft.soft_labels.unwrap().len(), n_train);
}

#[test]
fn weak_presets_need_weak_sets() {
    let bundle = DatasetBundle {
        weak: Vec::new(),
        ..small_bundle(15)
    };
    assert!(run_pipeline(Preset::CombinedTwoStage, &bundle, &fast_config(), &[0], "h").is_err());
    assert!(run_pipeline(Preset::BaselineVOnly, &bundle, &fast_config(), &[0], "h").is_ok());
    let dup = DatasetBundle {
        weak: vec![WeakSet {
            name: "dup".into(),
            instances: vec![bundle.v_train[0].clone()],
        }],
        ..bundle
    };
    assert!(run_pipeline(Preset::CombinedTwoStage, &dup, &fast_config(), &[0], "h").is_err());
}
