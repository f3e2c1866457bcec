use proptest::prelude::*;

use ctxknow::extract::{extract_all, ExtractConfig, KnowledgeType, PrefixBoundary};
use ctxknow::parser::{parse_script, split_scenes, Line, LineKind, ParserConfig, RawScript};
use ctxknow::stoplist::Stoplist;

fn parse(text: &str) -> Vec<ctxknow::Scene> {
    parse_script(&RawScript::new("s", text, "s.txt"), &ParserConfig::default())
}

fn line_strategy() -> impl Strategy<Value = String> {
    prop_oneof![
        Just(String::new()),
        Just("   ".to_string()),
        Just("INT. KITCHEN - NIGHT".to_string()),
        Just("Interior. Office. Day.".to_string()),
        "[A-Za-z]{1,8}: [a-z ,.!?]{0,20}",
        "[A-Za-z]{1,8} \\([a-z ]{1,8}\\): [a-z ]{0,20}",
        "[A-Za-z]{1,8}: [a-z ]{0,10}\\([a-z ]{1,8}\\)[a-z ]{0,10}",
        "[A-Za-z ]{1,40}",
        "[a-z]{35,40}: too long to be a speaker",
        "张[一-龥]{0,3}：[一-龥]{1,10}",
        "[a-z(): ]{1,30}",
    ]
}

fn script_strategy() -> impl Strategy<Value = String> {
    (
        prop::collection::vec(line_strategy(), 0..30),
        prop_oneof![Just("\n"), Just("\r\n"), Just("\r")],
    )
        .prop_map(|(lines, eol)| lines.join(eol))
}

proptest! {
    #[test]
    fn scenes_reassemble_to_their_raw_text(text in script_strategy()) {
        let script = RawScript::new("s", &text, "s.txt");
        let raw = split_scenes(&script);
        let scenes = parse_script(&script, &ParserConfig::default());
        prop_assert_eq!(raw.len(), scenes.len());
        for (r, s) in raw.iter().zip(&scenes) {
            prop_assert_eq!(&s.reassemble(), &r.text);
            prop_assert_eq!(&s.raw_text, &r.text);
        }
    }

    #[test]
    fn every_nonblank_line_lands_in_exactly_one_scene(text in script_strategy()) {
        let script = RawScript::new("s", &text, "s.txt");
        let scenes = parse_script(&script, &ParserConfig::default());
        let nonblank: Vec<&str> = script.text.split('\n').filter(|l| !l.trim().is_empty()).collect();
        let parsed: Vec<&str> = scenes.iter().flat_map(|s| s.lines.iter().map(Line::text)).collect();
        prop_assert_eq!(nonblank, parsed);
    }

    #[test]
    fn headings_only_open_scenes(text in script_strategy()) {
        for scene in parse(&text) {
            for (i, line) in scene.lines.iter().enumerate() {
                if line.kind() == LineKind::Heading {
                    prop_assert_eq!(i, 0);
                }
            }
            prop_assert_eq!(scene.heading.is_some(), scene.lines[0].kind() == LineKind::Heading);
        }
    }

    #[test]
    fn turn_segments_tile_the_body(text in script_strategy()) {
        for scene in parse(&text) {
            for t in scene.turns() {
                let joined: String = t.segments.iter().map(|s| s.span.slice(&t.text)).collect();
                prop_assert_eq!(joined.as_str(), t.body());
            }
        }
    }

    #[test]
    fn triples_point_into_their_context(text in script_strategy()) {
        let stop = Stoplist::default_list();
        for scene in parse(&text) {
            for t in extract_all(&scene, &ExtractConfig::default(), &stop).triples {
                prop_assert!(t.anchor.start <= t.anchor.end && t.anchor.end <= t.context.len());
                prop_assert!(t.context[t.anchor.start..t.anchor.end].contains(t.nonverbal.as_str()));
                prop_assert!(!t.nonverbal.trim().is_empty());
                prop_assert!(t.verbal.contains(": "));
                let skip = usize::from(scene.heading.is_some());
                let body: Vec<&str> = scene.lines[skip..].iter().map(Line::text).collect();
                prop_assert_eq!(&t.context, &body.join("\n"));
            }
        }
    }
}

#[test]
fn blank_lines_separate_scenes() {
    let scenes = parse("INT. A\nBob: hi\n\n\nEXT. B\nAnn: yo (waves)\n");
    assert_eq!(scenes.len(), 2);
    assert_eq!(scenes[0].heading.as_deref(), Some("INT. A"));
    assert_eq!(scenes[1].scene_id, "s:1");
}

#[test]
fn crlf_and_bom_are_normalized() {
    let bytes = "\u{feff}INT. A\r\nBob: hi (nods)\r\n".as_bytes();
    let script = RawScript::from_bytes("s", bytes, "s.txt").unwrap();
    let scenes = parse_script(&script, &ParserConfig::default());
    assert_eq!(scenes[0].lines.len(), 2);
    assert_eq!(scenes[0].heading.as_deref(), Some("INT. A"));
}

#[test]
fn invalid_utf8_is_a_decode_error() {
    assert!(RawScript::from_bytes("s", &[0x66, 0xff, 0x66], "s.txt").is_err());
}

#[test]
fn long_speaker_spans_are_actions() {
    let scenes = parse("INT. A\nThis line is clearly prose and not a speaker at all: really");
    assert_eq!(scenes[0].lines[1].kind(), LineKind::Action);
}

#[test]
fn fullwidth_punctuation_is_recognized() {
    let scenes = parse("内景 客厅\n张三（笑）：你好\n李四：好（点头）\n张三冷笑一声");
    let stop = Stoplist::default_list();
    let cfg = ExtractConfig {
        bn_boundary: PrefixBoundary::Raw,
    };
    let triples = extract_all(&scenes[0], &cfg, &stop).triples;
    let kinds: Vec<(KnowledgeType, &str)> = triples.iter().map(|t| (t.ktype, t.nonverbal.as_str())).collect();
    assert!(kinds.contains(&(KnowledgeType::Bc, "笑")));
    assert!(kinds.contains(&(KnowledgeType::I, "点头")));
    assert!(kinds.contains(&(KnowledgeType::O, "张三冷笑一声")));
}

#[test]
fn bn_cuts_known_speaker_prefix() {
    let text = "INT. ROOM\nAnn: hello\nBob: hey\nAnn nervously: I guess\nBob: sure";
    let triples = extract_all(&parse(text)[0], &ExtractConfig::default(), &Stoplist::default_list()).triples;
    let bn: Vec<_> = triples.iter().filter(|t| t.ktype == KnowledgeType::Bn).collect();
    assert_eq!(bn.len(), 1);
    assert_eq!(bn[0].nonverbal, "nervously");
    assert_eq!(bn[0].verbal, "Ann: I guess");
}

#[test]
fn stoplisted_parentheticals_are_rejected() {
    let text = "INT. ROOM\nAnn (V.O.): hello\nBob: hey (beat) there (cont'd)";
    let extraction = extract_all(&parse(text)[0], &ExtractConfig::default(), &Stoplist::default_list());
    assert!(extraction.triples.is_empty());
    assert_eq!(extraction.stats.stoplist_rejections, 3);
}

#[test]
fn action_without_prior_turn_yields_nothing() {
    let text = "INT. ROOM\nThe door creaks open.\nAnn: hello\nShe smiles.";
    let triples = extract_all(&parse(text)[0], &ExtractConfig::default(), &Stoplist::default_list()).triples;
    assert_eq!(triples.len(), 1);
    assert_eq!(triples[0].ktype, KnowledgeType::O);
    assert_eq!(triples[0].nonverbal, "She smiles.");
    assert_eq!(triples[0].verbal, "Ann: hello");
}
