use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ctxknow::error::{Error, Result};
use ctxknow::eval::per_category;
use ctxknow::extract::{ExtractConfig, KnowledgeTriple, PrefixBoundary};
use ctxknow::fixtures::{synthesize_corpus, FixtureSpec};
use ctxknow::instances::{
    generate_generic, generate_instances, instance_stats, triple_stats, GenericDocMode, GenericTriple, LengthMeasure,
    LengthUnit, McInstance,
};
use ctxknow::io::{config_hash, read_json, read_jsonl, write_json, write_jsonl, Header};
use ctxknow::parser::ParserConfig;
use ctxknow::pipeline::{
    build_bundle, extract_dir, load_scripts, parse_all, truncate_all, weak_sets_by_type, PipelineConfig,
};
use ctxknow::reader::ReaderParams;
use ctxknow::stoplist::Stoplist;
use ctxknow::tokenize::TokenizerMode;
use ctxknow::train::{fresh_params, run_pipeline, soft_label_rows, train_hard, Preset};

#[derive(Parser)]
#[command(
    name = "ctxknow",
    version,
    about = "Screenplay knowledge extraction and distillation pipeline"
)]
struct Cli {
    /// Worker threads; 1 runs everything serially.
    #[arg(long, global = true, env = "CTXKNOW_THREADS")]
    threads: Option<usize>,
    /// Seed for every random choice (overrides config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split scripts into scenes and classify lines.
    Parse {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract knowledge triples.
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `default`, `none`, or a file with one term per line.
        #[arg(long, default_value = "default")]
        stoplist: String,
        #[arg(long, value_enum, default_value_t = Boundary::Whitespace)]
        bn_boundary: Boundary,
    },
    /// Turn triples into multiple-choice instances.
    Generate {
        #[arg(long, required_unless_present = "generic")]
        triples: Option<PathBuf>,
        /// Subject-relation-object triples instead of screenplay triples.
        #[arg(long, conflicts_with = "triples")]
        generic: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = DocMode::EmptyDoc)]
        generic_mode: DocMode,
        #[arg(long)]
        out: PathBuf,
        /// Also write one file per knowledge type into this directory.
        #[arg(long)]
        by_type: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        n_distractors: usize,
        #[arg(long)]
        max_units: Option<usize>,
        #[arg(long, value_enum, default_value_t = Unit::Tokens)]
        unit: Unit,
        #[arg(long, value_enum, default_value_t = Tok::UnicodeWords)]
        tokenizer: Tok,
    },
    /// Per-type counts of a triple or instance file.
    Stats {
        #[arg(long, required_unless_present = "instances")]
        triples: Option<PathBuf>,
        #[arg(long)]
        instances: Option<PathBuf>,
    },
    /// Hard-label training on instance files.
    Train {
        #[arg(long = "data", required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to the config's `epochs_stage2`.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Run a training preset end to end.
    Distill(DistillArgs),
    /// Accuracy of a checkpoint on an instance file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print a plain-text table instead of JSON.
        #[arg(long)]
        table: bool,
    },
    /// Write a synthetic corpus with oracle annotations and data splits.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, env = "CTXKNOW_OUT_DIR")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DistillArgs {
    #[arg(long, value_parser = parse_preset)]
    preset: Preset,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides config).
    #[arg(long, env = "CTXKNOW_OUT_DIR")]
    out: Option<PathBuf>,
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Clone, Copy, ValueEnum)]
enum Boundary {
    Whitespace,
    Raw,
}

#[derive(Clone, Copy, ValueEnum)]
enum DocMode {
    EmptyDoc,
    RelationDoc,
}

#[derive(Clone, Copy, ValueEnum)]
enum Unit {
    Tokens,
    Chars,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tok {
    UnicodeWords,
    Characters,
}

impl From<Tok> for TokenizerMode {
    fn from(t: Tok) -> Self {
        match t {
            Tok::UnicodeWords => TokenizerMode::UnicodeWords,
            Tok::Characters => TokenizerMode::Characters,
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let line = serde_json::to_string(value)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

fn header(schema: &str, hash: &str, seed: Option<u64>) -> Header {
    Header::new(schema, hash, seed)
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Parse { input, out } => {
            let parser = ParserConfig::default();
            let hash = config_hash(&parser)?;
            let scenes = parse_all(&load_scripts(&input)?, &parser)?;
            write_jsonl(&out, Some(&header("ctxknow.scenes", &hash, seed)), &scenes)?;
            print_json(&BTreeMap::from([("scenes", scenes.len())]))
        }
        Command::Extract {
            input,
            out,
            stoplist,
            bn_boundary,
        } => {
            let parser = ParserConfig::default();
            let cfg = ExtractConfig {
                bn_boundary: match bn_boundary {
                    Boundary::Whitespace => PrefixBoundary::Whitespace,
                    Boundary::Raw => PrefixBoundary::Raw,
                },
            };
            let stop = Stoplist::load(&stoplist)?;
            let hash = config_hash(&(&parser, &cfg, &stoplist))?;
            let extraction = extract_dir(&input, &parser, &cfg, &stop)?;
            write_jsonl(&out, Some(&header("ctxknow.triples", &hash, seed)), &extraction.triples)?;
            print_json(&serde_json::json!({
                "counts": triple_stats(&extraction.triples),
                "rejected": extraction.stats,
            }))
        }
        Command::Generate {
            triples,
            generic,
            generic_mode,
            out,
            by_type,
            n_distractors,
            max_units,
            unit,
            tokenizer,
        } => {
            let seed = seed.unwrap_or(0);
            let measure = LengthMeasure {
                unit: match unit {
                    Unit::Tokens => LengthUnit::Tokens,
                    Unit::Chars => LengthUnit::Chars,
                },
                tokenizer: tokenizer.into(),
            };
            let hash = config_hash(&(n_distractors, max_units, measure, seed))?;
            let (generated, n_triples) = match (&triples, &generic) {
                (Some(path), _) => {
                    let triples: Vec<KnowledgeTriple> = read_jsonl(path)?;
                    (generate_instances(&triples, n_distractors, seed)?, triples.len())
                }
                (None, Some(path)) => {
                    let triples: Vec<GenericTriple> = read_jsonl(path)?;
                    let mode = match generic_mode {
                        DocMode::EmptyDoc => GenericDocMode::EmptyDoc,
                        DocMode::RelationDoc => GenericDocMode::RelationDoc,
                    };
                    (generate_generic(&triples, mode, n_distractors, seed)?, triples.len())
                }
                (None, None) => return Err(Error::invalid("either --triples or --generic is required")),
            };
            let instances = truncate_all(generated.instances, max_units, measure)?;
            let h = header("ctxknow.instances", &hash, Some(seed));
            write_jsonl(&out, Some(&h), &instances)?;
            if let Some(dir) = by_type {
                for set in weak_sets_by_type(&instances) {
                    write_jsonl(&dir.join(format!("{}.jsonl", set.name)), Some(&h), &set.instances)?;
                }
            }
            print_json(&serde_json::json!({
                "triples": n_triples,
                "instances": instances.len(),
                "skipped": generated.skipped.len(),
            }))
        }
        Command::Stats { triples, instances } => {
            let mut out = serde_json::Map::new();
            if let Some(p) = triples {
                let t: Vec<KnowledgeTriple> = read_jsonl(&p)?;
                out.insert("triples".into(), serde_json::to_value(triple_stats(&t))?);
            }
            if let Some(p) = instances {
                let i: Vec<McInstance> = read_jsonl(&p)?;
                out.insert("instances".into(), serde_json::to_value(instance_stats(&i))?);
            }
            print_json(&out)
        }
        Command::Train {
            data,
            out,
            config,
            epochs,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            let mut instances = Vec::new();
            for p in &data {
                instances.extend(read_jsonl::<McInstance>(p)?);
            }
            let hash = cfg.hash()?;
            let vocab = ctxknow::reader::Vocab::build(&instances, cfg.train.tokenizer);
            let init = fresh_params(&vocab, &cfg.train)?;
            let outcome = train_hard(&instances, init, epochs.unwrap_or(cfg.train.epochs_stage2), &cfg.train)?;
            outcome.params.save(&out, &hash)?;
            print_json(&serde_json::json!({
                "config_hash": hash,
                "seed": cfg.train.seed,
                "epoch_losses": outcome.epoch_losses,
            }))
        }
        Command::Distill(args) => {
            let mut cfg = load_config(args.config.as_deref())?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
                cfg.train.seed = s;
            }
            if let Some(o) = args.out {
                cfg.out_dir = o;
            }
            cfg.validate()?;
            let hash = cfg.hash()?;
            let bundle = build_bundle(&cfg)?;
            let result = run_pipeline(args.preset, &bundle, &cfg.train, &cfg.seeds, &hash)?;
            let dir = &cfg.out_dir;
            write_json(&dir.join("report.json"), &result.report)?;
            for (name, params) in &result.models {
                params.save(&dir.join("models").join(format!("{name}.json")), &hash)?;
            }
            if let Some(soft) = &result.soft_labels {
                write_jsonl(
                    &dir.join("soft_labels.jsonl"),
                    Some(&header("ctxknow.soft_labels", &hash, cfg.seeds.first().copied())),
                    &soft_label_rows(soft),
                )?;
            }
            print_json(&result.report)
        }
        Command::Eval {
            model,
            data,
            out,
            table,
        } => {
            let (params, _hash) = ReaderParams::load(&model)?;
            let instances: Vec<McInstance> = read_jsonl(&data)?;
            let report = per_category(&params, &instances)?;
            if let Some(p) = out {
                write_json(&p, &report)?;
            }
            if table {
                let width = report.per_category.keys().map(String::len).max().unwrap_or(0).max(8);
                println!("{:<width$}  {:>6}  {:>8}", "category", "n", "accuracy");
                for (k, r) in &report.per_category {
                    println!("{:<width$}  {:>6}  {:>8.1}", k, r.n, r.accuracy * 100.0);
                }
                println!(
                    "{:<width$}  {:>6}  {:>8.1}",
                    "overall",
                    report.n,
                    report.accuracy * 100.0
                );
                Ok(())
            } else {
                print_json(&report)
            }
        }
        Command::Synth { spec, out } => {
            let mut spec: FixtureSpec = match spec {
                Some(p) => read_json(&p)?,
                None => FixtureSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let hash = config_hash(&spec)?;
            let corpus = synthesize_corpus(&spec)?;
            corpus.write(&out, &hash)?;
            let bundle = corpus.bundle(5, spec.seed)?;
            for set in &bundle.weak {
                write_jsonl(
                    &out.join("weak").join(format!("{}.jsonl", set.name)),
                    Some(&header("ctxknow.instances", &hash, Some(spec.seed))),
                    &set.instances,
                )?;
            }
            print_json(&serde_json::json!({
                "scripts": corpus.scripts.len(),
                "oracle_triples": corpus.oracle.len(),
                "weak": bundle.weak.iter().map(|w| (w.name.clone(), w.instances.len())).collect::<BTreeMap<_, _>>(),
            }))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", serde_json::json!({"error": "threads", "message": e.to_string()}));
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if matches!(e, Error::UnknownPreset(_)) { 2 } else { 1 };
            eprintln!("{}", serde_json::json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::from(code)
        }
    }
}
