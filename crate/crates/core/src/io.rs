//! JSONL reading and writing plus config hashing.
//!
//! Files may begin with a header object carrying a `_schema` key; readers
//! skip any line that has one.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    #[serde(rename = "_schema")]
    pub schema: String,
    pub version: u32,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Header {
    pub fn new(schema: &str, config_hash: &str, seed: Option<u64>) -> Self {
        Header {
            schema: schema.into(),
            version: FORMAT_VERSION,
            config_hash: config_hash.into(),
            seed,
        }
    }
}

/// Hex SHA-256 prefix of the value's canonical JSON (keys sorted).
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let canonical = serde_json::to_value(value)?;
    let bytes = serde_json::to_vec(&canonical)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, header: Option<&Header>, rows: &[T]) -> Result<()> {
    ensure_parent(path)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |line: Vec<u8>| -> Result<()> {
        w.write_all(&line).map_err(|e| Error::io(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))
    };
    if let Some(h) = header {
        put(serde_json::to_vec(h)?)?;
    }
    for row in rows {
        put(serde_json::to_vec(row)?)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    Ok(read_jsonl_with_header(path)?.1)
}

pub fn read_jsonl_with_header<T: DeserializeOwned>(path: &Path) -> Result<(Option<Header>, Vec<T>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = None;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let json_err = |source| Error::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        };
        let value: serde_json::Value = serde_json::from_str(&line).map_err(json_err)?;
        if value.get("_schema").is_some() {
            if header.is_none() {
                header = Some(serde_json::from_value(value).map_err(json_err)?);
            }
            continue;
        }
        rows.push(serde_json::from_value(value).map_err(json_err)?);
    }
    Ok((header, rows))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        line: 0,
        source,
    })
}
