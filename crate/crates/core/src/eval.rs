//! Accuracy, per-category breakdown and multi-seed aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::McInstance;
use crate::reader::{argmax, encoded_probs, EncodedInstance, ReaderParams};

pub const UNCATEGORIZED: &str = "uncategorized";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub per_seed: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_category: BTreeMap<String, CategoryRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<SeedSummary>,
}

/// Predicted option index (lowest index wins ties).
pub fn predict(params: &ReaderParams, enc: &EncodedInstance) -> usize {
    argmax(&encoded_probs(enc, params))
}

fn correctness(params: &ReaderParams, dataset: &[McInstance]) -> Result<Vec<bool>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    params.check_finite()?;
    Ok(dataset
        .par_iter()
        .map(|inst| predict(params, &params.encode_instance(inst)) == inst.gold)
        .collect())
}

fn report(hits: &[bool]) -> EvalReport {
    let correct = hits.iter().filter(|h| **h).count();
    EvalReport {
        n: hits.len(),
        correct,
        accuracy: correct as f64 / hits.len() as f64,
        per_category: BTreeMap::new(),
        seeds: None,
    }
}

pub fn accuracy(params: &ReaderParams, dataset: &[McInstance]) -> Result<EvalReport> {
    Ok(report(&correctness(params, dataset)?))
}

/// Accuracy per category tag; untagged instances fall under `uncategorized`.
pub fn per_category(params: &ReaderParams, dataset: &[McInstance]) -> Result<EvalReport> {
    let hits = correctness(params, dataset)?;
    let mut out = report(&hits);
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (inst, hit) in dataset.iter().zip(&hits) {
        let key = inst.category.clone().unwrap_or_else(|| UNCATEGORIZED.into());
        let e = counts.entry(key).or_default();
        e.0 += 1;
        e.1 += usize::from(*hit);
    }
    out.per_category = counts
        .into_iter()
        .map(|(k, (n, correct))| {
            (
                k,
                CategoryRow {
                    n,
                    correct,
                    accuracy: correct as f64 / n as f64,
                },
            )
        })
        .collect();
    Ok(out)
}

pub fn summarize(values: &[f64]) -> Result<SeedSummary> {
    if values.is_empty() {
        return Err(Error::invalid("at least one seed is required"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(SeedSummary {
        per_seed: values.to_vec(),
        mean,
        std,
    })
}

/// Runs `run` once per seed and aggregates the accuracies.
pub fn multi_seed<F>(seeds: &[u64], mut run: F) -> Result<SeedSummary>
where
    F: FnMut(u64) -> Result<f64>,
{
    let values = seeds.iter().map(|&s| run(s)).collect::<Result<Vec<_>>>()?;
    summarize(&values)
}

/// Aligned plain-text table with one row per labeled (dev, test) pair.
pub fn format_table(rows: &[(String, f64, f64)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}", "model", "dev", "test");
    for (name, dev, test) in rows {
        let _ = writeln!(out, "{:<width$}  {:>6.1}  {:>6.1}", name, dev * 100.0, test * 100.0);
    }
    out
}
