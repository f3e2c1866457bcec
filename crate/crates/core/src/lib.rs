//! Contextualized knowledge extraction from screenplays, weakly-labeled
//! multiple-choice instance generation, and a small bilinear reader trained
//! with two-stage fine-tuning or multi-teacher distillation.
//!
//! Pipeline: [`parser`] → [`extract`] → [`instances`] → [`train`] → [`eval`].

pub mod error;
pub mod eval;
pub mod extract;
pub mod fixtures;
pub mod instances;
pub mod io;
pub mod parser;
pub mod pipeline;
pub mod reader;
pub mod stoplist;
pub mod tokenize;
pub mod train;

pub use error::{Error, Result};
pub use extract::{extract_all, ExtractConfig, KnowledgeTriple, KnowledgeType};
pub use instances::McInstance;
pub use parser::{parse_script, ParserConfig, RawScript, Scene};
pub use reader::ReaderParams;
pub use stoplist::Stoplist;
pub use train::{DatasetBundle, Preset, TrainConfig};
