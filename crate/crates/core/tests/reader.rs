use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ctxknow::eval::{accuracy, per_category, summarize};
use ctxknow::instances::{McInstance, Source};
use ctxknow::reader::{
    batch_gradient, check_gradients, cross_entropy, option_probs, scores, Gradients, LabelVector, ReaderParams, Sample,
    Vocab,
};
use ctxknow::tokenize::TokenizerMode;
use ctxknow::train::mix_soft_label;

const WORDS: [&str; 12] = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l"];

fn instance(id: usize, doc: &[usize], q: &[usize], opts: &[Vec<usize>], gold: usize) -> McInstance {
    let join = |ix: &[usize]| ix.iter().map(|&i| WORDS[i]).collect::<Vec<_>>().join(" ");
    McInstance {
        id: format!("x{id}"),
        document: join(doc),
        question: join(q),
        options: opts
            .iter()
            .enumerate()
            .map(|(k, o)| format!("{} o{k}", join(o)))
            .collect(),
        gold,
        category: Some(if id.is_multiple_of(2) { "even" } else { "odd" }.into()),
        source: Source::labeled(),
        verbal_unit: None,
    }
}

fn instance_strategy() -> impl Strategy<Value = McInstance> {
    (
        any::<usize>(),
        prop::collection::vec(0..WORDS.len(), 0..10),
        prop::collection::vec(0..WORDS.len(), 0..4),
        prop::collection::vec(prop::collection::vec(0..WORDS.len(), 0..3), 2..7),
        any::<prop::sample::Index>(),
    )
        .prop_map(|(id, d, q, o, g)| {
            let gold = g.index(o.len());
            instance(id % 1000, &d, &q, &o, gold)
        })
}

fn params_for(data: &[McInstance], dim: usize, seed: u64) -> ReaderParams {
    let vocab = Vocab::build(data, TokenizerMode::UnicodeWords);
    let mut p = ReaderParams::init(vocab, dim, TokenizerMode::UnicodeWords, 1.0, seed).unwrap();
    p.bias = 0.25;
    p
}

/// Straight-loop score computation.
#[allow(clippy::needless_range_loop)]
fn oracle_scores(p: &ReaderParams, inst: &McInstance) -> Vec<f64> {
    let d = p.dim;
    let mean = |text: &str| -> Vec<f64> {
        let ids = p.token_ids(text);
        let mut v = vec![0.0; d];
        for &t in &ids {
            for j in 0..d {
                v[j] += p.embeddings[t as usize * d + j];
            }
        }
        if !ids.is_empty() {
            for x in &mut v {
                *x /= ids.len() as f64;
            }
        }
        v
    };
    let doc = mean(&inst.document);
    inst.options
        .iter()
        .map(|o| {
            let qo = mean(&format!("{} {}", inst.question, o));
            let mut s = p.bias;
            for i in 0..d {
                for j in 0..d {
                    s += doc[i] * p.bilinear[i * d + j] * qo[j];
                }
            }
            s
        })
        .collect()
}

fn oracle_probs(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

proptest! {
    #[test]
    fn scores_match_loop_oracle(inst in instance_strategy(), dim in 1usize..6, seed in any::<u64>()) {
        let p = params_for(std::slice::from_ref(&inst), dim, seed);
        let got = scores(&p.encode_instance(&inst), &p);
        let want = oracle_scores(&p, &inst);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let probs = option_probs(&inst, &p).unwrap();
        for (a, b) in probs.iter().zip(oracle_probs(&want)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn soft_loss_matches_explicit_sum(inst in instance_strategy(), seed in any::<u64>(), raw in prop::collection::vec(0.0f64..1.0, 6)) {
        let p = params_for(std::slice::from_ref(&inst), 3, seed);
        let m = inst.options.len();
        let z: f64 = raw[..m].iter().sum::<f64>() + 1e-9;
        let s: Vec<f64> = raw[..m].iter().map(|x| (x + 1e-9 / m as f64) / z).collect();
        let probs = oracle_probs(&oracle_scores(&p, &inst));
        let want: f64 = -s.iter().zip(&probs).map(|(sk, pk)| sk * pk.ln()).sum::<f64>();
        let got = cross_entropy(&scores(&p.encode_instance(&inst), &p), &s);
        prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()));
    }

    #[test]
    fn soft_labels_sum_to_one_and_favor_gold(
        m in 2usize..8,
        l in 1usize..5,
        gold_ix in any::<prop::sample::Index>(),
        lambda in 0.5f64..=1.0,
        raw in prop::collection::vec(0.0f64..1.0, 40),
    ) {
        let gold = gold_ix.index(m);
        let teachers: Vec<Vec<f64>> = (0..l)
            .map(|j| {
                let row = &raw[j * m..(j + 1) * m];
                let z: f64 = row.iter().sum::<f64>() + 1e-12;
                row.iter().map(|x| (x + 1e-12 / m as f64) / z).collect()
            })
            .collect();
        let s = mix_soft_label(gold, &teachers, lambda).unwrap();
        prop_assert!((s.values().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        for k in 0..m {
            prop_assert!(s.values()[gold] >= s.values()[k]);
            let mean: f64 = teachers.iter().map(|t| t[k]).sum::<f64>() / l as f64;
            let h = if k == gold { 1.0 } else { 0.0 };
            prop_assert!((s.values()[k] - (lambda * h + (1.0 - lambda) * mean)).abs() <= 1e-12);
        }
    }

    #[test]
    fn accuracy_matches_argmax_count(insts in prop::collection::vec(instance_strategy(), 1..20), seed in any::<u64>()) {
        let insts: Vec<McInstance> = insts
            .into_iter()
            .enumerate()
            .map(|(i, mut x)| { x.id = format!("{}-{i}", x.id); x })
            .collect();
        let p = params_for(&insts, 3, seed);
        let correct = insts
            .iter()
            .filter(|x| {
                let s = oracle_scores(&p, x);
                let best = (0..s.len()).fold(0, |b, k| if s[k] > s[b] { k } else { b });
                best == x.gold
            })
            .count();
        let r = accuracy(&p, &insts).unwrap();
        prop_assert_eq!(r.correct, correct);
        prop_assert!((0.0..=1.0).contains(&r.accuracy));
        let c = per_category(&p, &insts).unwrap();
        prop_assert_eq!(c.per_category.values().map(|r| r.n).sum::<usize>(), insts.len());
        prop_assert_eq!(c.per_category.values().map(|r| r.correct).sum::<usize>(), correct);
    }
}

#[test]
fn zero_params_give_uniform_probabilities() {
    let inst = instance(0, &[0, 1], &[2], &[vec![3], vec![4], vec![5], vec![6]], 1);
    let p = ReaderParams::zeros(
        Vocab::build([&inst], TokenizerMode::UnicodeWords),
        4,
        TokenizerMode::UnicodeWords,
    );
    for x in option_probs(&inst, &p).unwrap() {
        assert_eq!(x, 0.25);
    }
}

#[test]
fn ties_go_to_lowest_index() {
    let inst = instance(0, &[0], &[], &[vec![1], vec![2], vec![3]], 2);
    let p = ReaderParams::zeros(
        Vocab::build([&inst], TokenizerMode::UnicodeWords),
        2,
        TokenizerMode::UnicodeWords,
    );
    let r = accuracy(
        &p,
        &[
            inst.clone(),
            McInstance {
                gold: 0,
                id: "y".into(),
                ..inst
            },
        ],
    )
    .unwrap();
    assert_eq!(r.correct, 1);
}

#[test]
fn out_of_vocabulary_tokens_share_the_unknown_row() {
    let inst = instance(0, &[0, 1], &[2], &[vec![3], vec![4]], 0);
    let p = params_for(std::slice::from_ref(&inst), 3, 9);
    assert_eq!(p.token_ids("zzz qqq"), vec![0, 0]);
}

#[test]
fn sample_std_uses_n_minus_one() {
    let s = summarize(&[0.5, 0.7]).unwrap();
    assert!((s.mean - 0.6).abs() < 1e-15);
    assert!((s.std - (0.02f64).sqrt()).abs() < 1e-15);
    assert_eq!(summarize(&[0.4]).unwrap().std, 0.0);
    assert!(summarize(&[]).is_err());
}

#[test]
fn gradients_pass_finite_difference_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for draw in 0..25 {
        let data: Vec<McInstance> = (0..3)
            .map(|i| {
                let doc: Vec<usize> = (0..rng.random_range(0..6)).map(|_| rng.random_range(0..12)).collect();
                let m = rng.random_range(2..5);
                let opts: Vec<Vec<usize>> = (0..m).map(|_| vec![rng.random_range(0..12)]).collect();
                instance(i, &doc, &[rng.random_range(0..12)], &opts, i % m)
            })
            .collect();
        let p = params_for(&data, 1 + draw % 4, draw as u64);
        let samples: Vec<Sample> = data.iter().map(|x| Sample::hard(p.encode_instance(x))).collect();
        let batch: Vec<&Sample> = samples.iter().collect();
        let report = check_gradients(&p, &batch, 1e-5, 1e-4).unwrap();
        assert!(report.passed, "draw {draw}: {report:?}");
    }
}

#[test]
fn gradient_touches_only_rows_in_the_batch() {
    let a = instance(0, &[0, 1], &[2], &[vec![3], vec![4]], 0);
    let b = instance(1, &[5, 6], &[7], &[vec![8], vec![9]], 1);
    let p = params_for(&[a.clone(), b], 3, 1);
    let sample = Sample::soft(p.encode_instance(&a), &LabelVector::new(vec![0.6, 0.4]).unwrap());
    let mut g = Gradients::zeros_like(&p);
    batch_gradient(&[&sample], &p, &mut g);
    let allowed: std::collections::BTreeSet<u32> = p
        .token_ids(&format!("{} {} {}", a.document, a.question, a.options.join(" ")))
        .into_iter()
        .collect();
    for &r in g.touched_rows() {
        assert!(allowed.contains(&r), "row {r} touched");
    }
    for r in 0..p.rows() {
        if !allowed.contains(&(r as u32)) {
            assert!(g.embeddings[r * p.dim..(r + 1) * p.dim].iter().all(|x| *x == 0.0));
        }
    }
}
