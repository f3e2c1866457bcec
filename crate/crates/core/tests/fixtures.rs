use std::collections::{BTreeMap, BTreeSet};

use ctxknow::extract::{extract_scenes, ExtractConfig, KnowledgeType};
use ctxknow::fixtures::{cue_oracle_predict, synthesize_corpus, FixtureSpec, OracleTriple};
use ctxknow::parser::ParserConfig;
use ctxknow::stoplist::Stoplist;

fn spec(n_scripts: usize, seed: u64) -> FixtureSpec {
    FixtureSpec {
        n_scripts,
        seed,
        ..FixtureSpec::default()
    }
}

#[test]
fn written_corpus_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synthesize_corpus(&spec(10, 4)).unwrap().write(a.path(), "h").unwrap();
    synthesize_corpus(&spec(10, 4)).unwrap().write(b.path(), "h").unwrap();
    for rel in [
        "oracle.jsonl",
        "lexicon.json",
        "v_train.jsonl",
        "v_dev.jsonl",
        "v_test.jsonl",
        "scripts/synth_0007.txt",
    ] {
        assert_eq!(
            std::fs::read(a.path().join(rel)).unwrap(),
            std::fs::read(b.path().join(rel)).unwrap(),
            "{rel}"
        );
    }
    let c = synthesize_corpus(&spec(10, 5)).unwrap();
    assert_ne!(c.scripts, synthesize_corpus(&spec(10, 4)).unwrap().scripts);
}

#[test]
fn extraction_recovers_the_oracle_exactly() {
    let corpus = synthesize_corpus(&spec(100, 21)).unwrap();
    let triples = extract_scenes(
        &corpus.scenes(&ParserConfig::default()),
        &ExtractConfig::default(),
        &Stoplist::default_list(),
    )
    .triples;
    let mut got: Vec<OracleTriple> = triples.iter().map(OracleTriple::of).collect();
    let mut want = corpus.oracle.clone();
    got.sort();
    want.sort();
    assert_eq!(got, want);
    let kinds: BTreeSet<KnowledgeType> = want.iter().map(|t| t.ktype).collect();
    assert_eq!(kinds.len(), 4);
}

#[test]
fn full_signal_makes_the_cue_oracle_perfect() {
    let s = spec(40, 2).with_signal(1.0);
    let corpus = synthesize_corpus(&s).unwrap();
    let bundle = corpus.bundle(5, 2).unwrap();
    for w in &bundle.weak {
        for inst in &w.instances {
            assert_eq!(
                cue_oracle_predict(&corpus.lexicon, inst),
                Some(inst.gold),
                "{}",
                inst.id
            );
        }
    }
}

#[test]
fn cue_oracle_tracks_signal_strength() {
    let corpus = synthesize_corpus(&spec(200, 3)).unwrap();
    let bundle = corpus.bundle(5, 3).unwrap();
    let mut acc = BTreeMap::new();
    for w in &bundle.weak {
        let hits = w
            .instances
            .iter()
            .filter(|i| cue_oracle_predict(&corpus.lexicon, i) == Some(i.gold))
            .count();
        acc.insert(w.name.clone(), hits as f64 / w.instances.len() as f64);
    }
    assert!(acc["Bc"] > acc["I"] && acc["I"] > acc["Bn"], "{acc:?}");
    for (name, &p) in &corpus.spec.signal_strength {
        let a = acc[&name.to_string()];
        assert!(a >= p - 0.08, "{name}: oracle {a} vs signal {p}");
    }
}

#[test]
fn clean_splits_are_disjoint_and_valid() {
    let corpus = synthesize_corpus(&spec(5, 6)).unwrap();
    let ids: Vec<&String> = corpus
        .v_train
        .iter()
        .chain(&corpus.v_dev)
        .chain(&corpus.v_test)
        .map(|i| &i.id)
        .collect();
    let unique: BTreeSet<&&String> = ids.iter().collect();
    assert_eq!(ids.len(), unique.len());
    for inst in corpus.v_train.iter().chain(&corpus.v_dev) {
        inst.validate().unwrap();
        assert_eq!(inst.options.len(), corpus.spec.v_options);
        assert_eq!(cue_oracle_predict(&corpus.lexicon, inst), Some(inst.gold));
    }
}
