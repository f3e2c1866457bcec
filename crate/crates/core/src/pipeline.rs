//! Declarative pipeline configuration and the glue between stages.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{extract_scenes, ExtractConfig, Extraction, KnowledgeType};
use crate::instances::{generate_instances, truncate_context, GenerationOutput, LengthMeasure, McInstance};
use crate::io::{config_hash, read_json, read_jsonl};
use crate::parser::{parse_script, ParserConfig, RawScript, Scene};
use crate::stoplist::Stoplist;
use crate::train::{DatasetBundle, TrainConfig, WeakSet};

pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    /// Scripts used to build weak sets when `weak` is empty.
    pub scripts_dir: Option<PathBuf>,
    /// `default`, `none`, or a path.
    pub stoplist: String,
    pub v_train: Option<PathBuf>,
    pub v_dev: Option<PathBuf>,
    pub v_test: Option<PathBuf>,
    /// Weak-set instance files, one set per file, named by file stem.
    pub weak: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub parser: ParserConfig,
    pub extract: ExtractConfig,
    pub n_distractors: usize,
    pub max_units: Option<usize>,
    pub length: LengthMeasure,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            train: TrainConfig::default(),
            seeds: DEFAULT_SEEDS.to_vec(),
            scripts_dir: None,
            stoplist: "default".into(),
            v_train: None,
            v_dev: None,
            v_test: None,
            weak: Vec::new(),
            out_dir: PathBuf::from("out"),
            parser: ParserConfig::default(),
            extract: ExtractConfig::default(),
            n_distractors: 5,
            max_units: None,
            length: LengthMeasure::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Loads a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        for p in [&mut cfg.scripts_dir, &mut cfg.v_train, &mut cfg.v_dev, &mut cfg.v_test]
            .into_iter()
            .flatten()
        {
            resolve(&base, p);
        }
        for p in &mut cfg.weak {
            resolve(&base, p);
        }
        resolve(&base, &mut cfg.out_dir);
        if !matches!(cfg.stoplist.as_str(), "default" | "none") {
            let mut p = PathBuf::from(&cfg.stoplist);
            resolve(&base, &mut p);
            cfg.stoplist = p.to_string_lossy().into_owned();
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.parser.validate()?;
        if self.n_distractors == 0 {
            return Err(Error::invalid("n_distractors must be at least 1"));
        }
        if self.max_units == Some(0) {
            return Err(Error::invalid("max_units must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds must not be empty"));
        }
        let paths = [&self.scripts_dir, &self.v_train, &self.v_dev, &self.v_test]
            .into_iter()
            .flatten()
            .chain(&self.weak);
        for p in paths {
            if !p.exists() {
                return Err(Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
        }
        Ok(())
    }

    /// Hash of the configuration with the output location excluded.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        config_hash(&c)
    }
}

/// A file, or every regular file of a directory in name order.
pub fn list_inputs(path: &Path) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        let p = entry.path();
        if p.is_file() && !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
}

/// Reads scripts; the script id is the file stem.
pub fn load_scripts(path: &Path) -> Result<Vec<RawScript>> {
    list_inputs(path)?
        .into_iter()
        .map(|p| {
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            RawScript::from_bytes(stem(&p), &bytes, p.to_string_lossy())
        })
        .collect()
}

pub fn parse_all(scripts: &[RawScript], cfg: &ParserConfig) -> Result<Vec<Scene>> {
    cfg.validate()?;
    Ok(scripts.iter().flat_map(|s| parse_script(s, cfg)).collect())
}

pub fn extract_dir(path: &Path, parser: &ParserConfig, extract: &ExtractConfig, stop: &Stoplist) -> Result<Extraction> {
    let scenes = parse_all(&load_scripts(path)?, parser)?;
    Ok(extract_scenes(&scenes, extract, stop))
}

/// Optional truncation applied to every generated instance.
pub fn truncate_all(
    instances: Vec<McInstance>,
    max_units: Option<usize>,
    measure: LengthMeasure,
) -> Result<Vec<McInstance>> {
    match max_units {
        None => Ok(instances),
        Some(max) => instances
            .iter()
            .map(|i| Ok(truncate_context(i, max, measure)?.instance))
            .collect(),
    }
}

/// Splits generated instances into one weak set per knowledge type.
pub fn weak_sets_by_type(instances: &[McInstance]) -> Vec<WeakSet> {
    KnowledgeType::ALL
        .iter()
        .map(|&k| WeakSet {
            name: k.to_string(),
            instances: instances
                .iter()
                .filter(|i| i.source.kind == k.into())
                .cloned()
                .collect(),
        })
        .filter(|w| !w.instances.is_empty())
        .collect()
}

fn load_split(path: &Option<PathBuf>, name: &str) -> Result<Vec<McInstance>> {
    match path {
        Some(p) => read_jsonl(p),
        None => Err(Error::invalid(format!("config does not name a {name} file"))),
    }
}

/// Assembles the dataset bundle described by `cfg`.
pub fn build_bundle(cfg: &PipelineConfig) -> Result<DatasetBundle> {
    let weak = if !cfg.weak.is_empty() {
        cfg.weak
            .iter()
            .map(|p| {
                Ok(WeakSet {
                    name: stem(p),
                    instances: read_jsonl(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else if let Some(dir) = &cfg.scripts_dir {
        let stop = Stoplist::load(&cfg.stoplist)?;
        let triples = extract_dir(dir, &cfg.parser, &cfg.extract, &stop)?.triples;
        let GenerationOutput { instances, .. } = generate_instances(&triples, cfg.n_distractors, cfg.train.seed)?;
        weak_sets_by_type(&truncate_all(instances, cfg.max_units, cfg.length)?)
    } else {
        Vec::new()
    };
    Ok(DatasetBundle {
        v_train: load_split(&cfg.v_train, "v_train")?,
        dev: load_split(&cfg.v_dev, "v_dev")?,
        test: load_split(&cfg.v_test, "v_test")?,
        weak,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_resolve_against_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(
            &path,
            r#"{"v_train":"v.jsonl","weak":["w/Bc.jsonl"],"train":{"lambda":0.7}}"#,
        )
        .unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.v_train.unwrap(), dir.path().join("v.jsonl"));
        assert_eq!(cfg.weak[0], dir.path().join("w/Bc.jsonl"));
        assert_eq!(cfg.train.lambda, 0.7);
        assert_eq!(cfg.train.epochs_stage2, 8);
        assert_eq!(cfg.n_distractors, 5);
    }

    #[test]
    fn unknown_fields_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"train":{"lamda":0.7}}"#).unwrap();
        assert!(PipelineConfig::load(&path).is_err());
    }

    #[test]
    fn missing_path_fails_validation() {
        let cfg = PipelineConfig {
            v_train: Some(PathBuf::from("/nonexistent/v.jsonl")),
            ..PipelineConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Io { .. })));
    }

    #[test]
    fn hash_ignores_out_dir() {
        let a = PipelineConfig::default();
        let b = PipelineConfig {
            out_dir: PathBuf::from("elsewhere"),
            ..PipelineConfig::default()
        };
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        let c = PipelineConfig {
            n_distractors: 3,
            ..PipelineConfig::default()
        };
        assert_ne!(a.hash().unwrap(), c.hash().unwrap());
    }
}
