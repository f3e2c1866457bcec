//! A small differentiable multiple-choice reader.
//!
//! Texts are encoded as the mean of their token embeddings. Option `k` of an
//! instance is scored bilinearly against the document:
//!
//! ```text
//! score_k = enc(document)ᵀ · B · enc(question ⊕ option_k) + bias
//! p(k | t) = softmax(score)_k
//! ```
//!
//! Training targets are label vectors over options; a one-hot target gives
//! the hard-label loss and any other distribution the soft-label loss, both
//! computed as `-Σ s_k log p_k`.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::McInstance;
use crate::tokenize::{tokenize, TokenizerMode};

pub const CHECKPOINT_FORMAT: &str = "ctxknow-reader";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Token vocabulary; index 0 is reserved for unknown tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let tokens: Vec<String> = tokens.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + 1))
            .collect();
        Vocab { tokens, index }
    }

    /// Every token of every text field, sorted.
    pub fn build<'a>(instances: impl IntoIterator<Item = &'a McInstance>, mode: TokenizerMode) -> Self {
        let mut set = BTreeSet::new();
        for inst in instances {
            set.extend(tokenize(&inst.document, mode));
            set.extend(tokenize(&inst.question, mode));
            for o in &inst.options {
                set.extend(tokenize(o, mode));
            }
        }
        Self::from_tokens(set)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReaderParams {
    pub vocab: Vocab,
    pub dim: usize,
    pub tokenizer: TokenizerMode,
    /// `(vocab.len() + 1) × dim`, row-major; row 0 is the unknown token.
    pub embeddings: Vec<f64>,
    /// `dim × dim`, row-major.
    pub bilinear: Vec<f64>,
    pub bias: f64,
}

impl ReaderParams {
    pub fn zeros(vocab: Vocab, dim: usize, tokenizer: TokenizerMode) -> Self {
        let rows = vocab.len() + 1;
        ReaderParams {
            vocab,
            dim,
            tokenizer,
            embeddings: vec![0.0; rows * dim],
            bilinear: vec![0.0; dim * dim],
            bias: 0.0,
        }
    }

    /// Embeddings and bilinear weights from uniform(-scale, scale); bias 0.
    pub fn init(vocab: Vocab, dim: usize, tokenizer: TokenizerMode, scale: f64, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        let mut p = Self::zeros(vocab, dim, tokenizer);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if scale > 0.0 {
            for x in p.embeddings.iter_mut().chain(p.bilinear.iter_mut()) {
                *x = rng.random_range(-scale..scale);
            }
        }
        Ok(p)
    }

    pub fn rows(&self) -> usize {
        self.vocab.len() + 1
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.embeddings[r * self.dim..(r + 1) * self.dim]
    }

    pub fn check_finite(&self) -> Result<()> {
        if let Some(i) = self.embeddings.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("embeddings[{}][{}]", i / self.dim, i % self.dim),
            });
        }
        if let Some(i) = self.bilinear.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("bilinear[{}][{}]", i / self.dim, i % self.dim),
            });
        }
        if !self.bias.is_finite() {
            return Err(Error::NonFinite {
                location: "bias".into(),
            });
        }
        Ok(())
    }

    pub fn token_ids(&self, text: &str) -> Vec<u32> {
        tokenize(text, self.tokenizer)
            .iter()
            .map(|t| self.vocab.id(t))
            .collect()
    }

    pub fn encode_instance(&self, inst: &McInstance) -> EncodedInstance {
        let question = self.token_ids(&inst.question);
        EncodedInstance {
            doc: self.token_ids(&inst.document),
            options: inst
                .options
                .iter()
                .map(|o| {
                    let mut ids = question.clone();
                    ids.extend(self.token_ids(o));
                    ids
                })
                .collect(),
            gold: inst.gold,
        }
    }

    pub fn save(&self, path: &Path, config_hash: &str) -> Result<()> {
        let ckpt = Checkpoint::from_params(self, config_hash);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut text = serde_json::to_string(&ckpt)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.into(),
            line: 1,
            source,
        })?;
        let hash = ckpt.config_hash.clone();
        Ok((ckpt.into_params()?, hash))
    }
}

/// Self-describing checkpoint file layout (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub dim: usize,
    pub tokenizer: TokenizerMode,
    /// Token of embedding row `i + 1`.
    pub vocab: Vec<String>,
    pub embeddings: Vec<Vec<f64>>,
    pub bilinear: Vec<Vec<f64>>,
    pub bias: f64,
}

impl Checkpoint {
    pub fn from_params(p: &ReaderParams, config_hash: &str) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config_hash: config_hash.into(),
            dim: p.dim,
            tokenizer: p.tokenizer,
            vocab: p.vocab.tokens().to_vec(),
            embeddings: p.embeddings.chunks(p.dim).map(<[f64]>::to_vec).collect(),
            bilinear: p.bilinear.chunks(p.dim).map(<[f64]>::to_vec).collect(),
            bias: p.bias,
        }
    }

    pub fn into_params(self) -> Result<ReaderParams> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let dim = self.dim;
        let rows = self.vocab.len() + 1;
        if dim == 0
            || self.embeddings.len() != rows
            || self.bilinear.len() != dim
            || self.embeddings.iter().chain(&self.bilinear).any(|r| r.len() != dim)
        {
            return Err(Error::invalid("checkpoint shape mismatch"));
        }
        let vocab = Vocab::from_tokens(self.vocab.iter().cloned());
        if vocab.tokens() != self.vocab.as_slice() {
            return Err(Error::invalid("checkpoint vocabulary is not sorted and unique"));
        }
        let p = ReaderParams {
            vocab,
            dim,
            tokenizer: self.tokenizer,
            embeddings: self.embeddings.concat(),
            bilinear: self.bilinear.concat(),
            bias: self.bias,
        };
        p.check_finite()?;
        Ok(p)
    }
}

/// Token ids of an instance under a fixed vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInstance {
    pub doc: Vec<u32>,
    /// Question tokens followed by option tokens, per option.
    pub options: Vec<Vec<u32>>,
    pub gold: usize,
}

/// Probability distribution over an instance's options used as a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelVector(Vec<f64>);

impl LabelVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("label vector is empty"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("label vector has negative or non-finite entries"));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("label vector sums to {sum}")));
        }
        Ok(LabelVector(values))
    }

    pub fn one_hot(len: usize, gold: usize) -> Self {
        let mut v = vec![0.0; len];
        v[gold] = 1.0;
        LabelVector(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean embedding of the tokens; zero for an empty list.
pub fn encode(tokens: &[u32], params: &ReaderParams) -> Vec<f64> {
    let d = params.dim;
    let mut out = vec![0.0; d];
    if tokens.is_empty() {
        return out;
    }
    for &t in tokens {
        for (o, e) in out.iter_mut().zip(params.row(t as usize)) {
            *o += e;
        }
    }
    let n = tokens.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// `B · x`
fn bilinear_apply(b: &[f64], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    (0..d)
        .map(|i| b[i * d..(i + 1) * d].iter().zip(x).map(|(a, c)| a * c).sum())
        .collect()
}

/// `Bᵀ · x`
fn bilinear_apply_t(b: &[f64], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let mut out = vec![0.0; d];
    for (i, xi) in x.iter().enumerate() {
        for (o, bij) in out.iter_mut().zip(&b[i * d..(i + 1) * d]) {
            *o += xi * bij;
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forward pass intermediates for one instance.
struct Forward {
    doc: Vec<f64>,
    opts: Vec<Vec<f64>>,
    scores: Vec<f64>,
}

fn forward(enc: &EncodedInstance, params: &ReaderParams) -> Forward {
    let doc = encode(&enc.doc, params);
    let u = bilinear_apply_t(&params.bilinear, &doc);
    let opts: Vec<Vec<f64>> = enc.options.iter().map(|o| encode(o, params)).collect();
    let scores = opts.iter().map(|q| dot(&u, q) + params.bias).collect();
    Forward { doc, opts, scores }
}

pub fn scores(enc: &EncodedInstance, params: &ReaderParams) -> Vec<f64> {
    forward(enc, params).scores
}

/// Max-subtracted softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn log_softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln() + max;
    scores.iter().map(|s| s - lse).collect()
}

/// `-Σ_k target_k log p_k`, skipping zero-weight options.
pub fn cross_entropy(scores: &[f64], target: &[f64]) -> f64 {
    let logp = log_softmax(scores);
    -target
        .iter()
        .zip(&logp)
        .filter(|(t, _)| **t != 0.0)
        .map(|(t, l)| t * l)
        .sum::<f64>()
}

pub fn encoded_probs(enc: &EncodedInstance, params: &ReaderParams) -> Vec<f64> {
    softmax(&scores(enc, params))
}

pub fn option_probs(inst: &McInstance, params: &ReaderParams) -> Result<Vec<f64>> {
    if inst.options.len() < 2 {
        return Err(Error::invalid(format!(
            "instance {} has fewer than two options",
            inst.id
        )));
    }
    params.check_finite()?;
    Ok(encoded_probs(&params.encode_instance(inst), params))
}

/// Hard-label loss `-log p(gold)`.
pub fn loss_hard(inst: &McInstance, params: &ReaderParams) -> Result<f64> {
    inst.validate()?;
    let s = LabelVector::one_hot(inst.options.len(), inst.gold);
    loss_soft(inst, &s, params)
}

/// Soft-label loss `-Σ_k s_k log p(k)`.
pub fn loss_soft(inst: &McInstance, s: &LabelVector, params: &ReaderParams) -> Result<f64> {
    if s.len() != inst.options.len() {
        return Err(Error::invalid(format!(
            "label vector has {} entries for {} options",
            s.len(),
            inst.options.len()
        )));
    }
    params.check_finite()?;
    Ok(cross_entropy(
        &scores(&params.encode_instance(inst), params),
        s.values(),
    ))
}

/// One training example: encoded instance and its target distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub enc: EncodedInstance,
    pub target: Vec<f64>,
}

impl Sample {
    pub fn hard(enc: EncodedInstance) -> Self {
        let target = LabelVector::one_hot(enc.options.len(), enc.gold).0;
        Sample { enc, target }
    }

    pub fn soft(enc: EncodedInstance, s: &LabelVector) -> Self {
        Sample {
            enc,
            target: s.values().to_vec(),
        }
    }
}

/// Dense gradient with a record of touched embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub dim: usize,
    pub embeddings: Vec<f64>,
    pub bilinear: Vec<f64>,
    pub bias: f64,
    touched: Vec<u32>,
    mask: Vec<bool>,
}

impl Gradients {
    pub fn zeros_like(params: &ReaderParams) -> Self {
        Gradients {
            dim: params.dim,
            embeddings: vec![0.0; params.embeddings.len()],
            bilinear: vec![0.0; params.bilinear.len()],
            bias: 0.0,
            touched: Vec::new(),
            mask: vec![false; params.rows()],
        }
    }

    fn row_mut(&mut self, r: u32) -> &mut [f64] {
        let r = r as usize;
        if !self.mask[r] {
            self.mask[r] = true;
            self.touched.push(r as u32);
        }
        &mut self.embeddings[r * self.dim..(r + 1) * self.dim]
    }

    /// Embedding rows with (possibly) nonzero gradient, in first-touch order.
    pub fn touched_rows(&self) -> &[u32] {
        &self.touched
    }

    pub fn clear(&mut self) {
        for &r in &self.touched {
            let r = r as usize;
            self.embeddings[r * self.dim..(r + 1) * self.dim].fill(0.0);
            self.mask[r] = false;
        }
        self.touched.clear();
        self.bilinear.fill(0.0);
        self.bias = 0.0;
    }

    /// `params -= lr * grad`
    pub fn apply(&self, params: &mut ReaderParams, lr: f64) {
        let d = self.dim;
        for &r in &self.touched {
            let r = r as usize;
            for (p, g) in params.embeddings[r * d..(r + 1) * d]
                .iter_mut()
                .zip(&self.embeddings[r * d..(r + 1) * d])
            {
                *p -= lr * g;
            }
        }
        for (p, g) in params.bilinear.iter_mut().zip(&self.bilinear) {
            *p -= lr * g;
        }
        params.bias -= lr * self.bias;
    }

    pub fn get(&self, c: Coordinate) -> f64 {
        match c {
            Coordinate::Embedding { row, col } => self.embeddings[row * self.dim + col],
            Coordinate::Bilinear { row, col } => self.bilinear[row * self.dim + col],
            Coordinate::Bias => self.bias,
        }
    }

    pub fn set(&mut self, c: Coordinate, v: f64) {
        match c {
            Coordinate::Embedding { row, col } => self.row_mut(row as u32)[col] = v,
            Coordinate::Bilinear { row, col } => self.bilinear[row * self.dim + col] = v,
            Coordinate::Bias => self.bias = v,
        }
    }
}

/// Gradient of the score-level loss: `∂L/∂score_k = p_k - s_k`.
pub fn score_gradient(scores: &[f64], target: &[f64]) -> Vec<f64> {
    softmax(scores).iter().zip(target).map(|(p, s)| p - s).collect()
}

/// Accumulates `weight · ∇ loss(sample)` into `grad` and returns the loss.
pub fn accumulate_gradient(sample: &Sample, params: &ReaderParams, weight: f64, grad: &mut Gradients) -> f64 {
    let d = params.dim;
    let fwd = forward(&sample.enc, params);
    let loss = cross_entropy(&fwd.scores, &sample.target);
    let g: Vec<f64> = score_gradient(&fwd.scores, &sample.target)
        .into_iter()
        .map(|x| x * weight)
        .collect();

    // w = Σ_k g_k q̄_k
    let mut w = vec![0.0; d];
    for (gk, q) in g.iter().zip(&fwd.opts) {
        for (wi, qi) in w.iter_mut().zip(q) {
            *wi += gk * qi;
        }
    }
    for (i, di) in fwd.doc.iter().enumerate() {
        if *di == 0.0 {
            continue;
        }
        for (b, wj) in grad.bilinear[i * d..(i + 1) * d].iter_mut().zip(&w) {
            *b += di * wj;
        }
    }
    grad.bias += g.iter().sum::<f64>();

    if !sample.enc.doc.is_empty() {
        let dd = bilinear_apply(&params.bilinear, &w);
        let inv = 1.0 / sample.enc.doc.len() as f64;
        for &t in &sample.enc.doc {
            for (e, x) in grad.row_mut(t).iter_mut().zip(&dd) {
                *e += x * inv;
            }
        }
        let u = bilinear_apply_t(&params.bilinear, &fwd.doc);
        for (gk, toks) in g.iter().zip(&sample.enc.options) {
            if toks.is_empty() || *gk == 0.0 {
                continue;
            }
            let scale = gk / toks.len() as f64;
            for &t in toks {
                for (e, x) in grad.row_mut(t).iter_mut().zip(&u) {
                    *e += x * scale;
                }
            }
        }
    }
    loss
}

/// Mean loss over the batch and its gradient.
pub fn batch_gradient(batch: &[&Sample], params: &ReaderParams, grad: &mut Gradients) -> f64 {
    grad.clear();
    if batch.is_empty() {
        return 0.0;
    }
    let weight = 1.0 / batch.len() as f64;
    batch
        .iter()
        .map(|s| accumulate_gradient(s, params, weight, grad))
        .sum::<f64>()
        * weight
}

pub fn batch_loss(batch: &[&Sample], params: &ReaderParams) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    batch
        .iter()
        .map(|s| cross_entropy(&scores(&s.enc, params), &s.target))
        .sum::<f64>()
        / batch.len() as f64
}

/// A single scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tensor", rename_all = "snake_case")]
pub enum Coordinate {
    Embedding { row: usize, col: usize },
    Bilinear { row: usize, col: usize },
    Bias,
}

impl Coordinate {
    fn get(self, p: &ReaderParams) -> f64 {
        match self {
            Coordinate::Embedding { row, col } => p.embeddings[row * p.dim + col],
            Coordinate::Bilinear { row, col } => p.bilinear[row * p.dim + col],
            Coordinate::Bias => p.bias,
        }
    }

    fn set(self, p: &mut ReaderParams, v: f64) {
        match self {
            Coordinate::Embedding { row, col } => p.embeddings[row * p.dim + col] = v,
            Coordinate::Bilinear { row, col } => p.bilinear[row * p.dim + col] = v,
            Coordinate::Bias => p.bias = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<Coordinate>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub passed: bool,
}

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is near zero are judged on absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_ERROR_FLOOR)
}

/// Coordinates that can receive gradient from the batch: embedding rows of
/// every token in the batch, all of `B`, and the bias.
pub fn gradient_coordinates(batch: &[&Sample], params: &ReaderParams) -> Vec<Coordinate> {
    let rows: BTreeSet<u32> = batch
        .iter()
        .flat_map(|s| s.enc.doc.iter().chain(s.enc.options.iter().flatten()).copied())
        .collect();
    let d = params.dim;
    let mut coords: Vec<Coordinate> = rows
        .into_iter()
        .flat_map(|row| (0..d).map(move |col| Coordinate::Embedding { row: row as usize, col }))
        .collect();
    coords.extend((0..d * d).map(|i| Coordinate::Bilinear { row: i / d, col: i % d }));
    coords.push(Coordinate::Bias);
    coords
}

/// Compares a supplied gradient against central differences of the mean
/// batch loss.
pub fn compare_gradients(
    params: &ReaderParams,
    batch: &[&Sample],
    analytic: &Gradients,
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    if eps <= 0.0 {
        return Err(Error::invalid("eps must be positive"));
    }
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        passed: true,
    };
    for c in gradient_coordinates(batch, params) {
        let orig = c.get(params);
        c.set(&mut probe, orig + eps);
        let plus = batch_loss(batch, &probe);
        c.set(&mut probe, orig - eps);
        let minus = batch_loss(batch, &probe);
        c.set(&mut probe, orig);
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic.get(c);
        let rel = relative_error(a, numeric);
        report.checked += 1;
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = rel;
            report.worst = Some(c);
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    report.passed = report.max_rel_error < tol;
    Ok(report)
}

pub fn check_gradients(params: &ReaderParams, batch: &[&Sample], eps: f64, tol: f64) -> Result<GradCheckReport> {
    let mut grad = Gradients::zeros_like(params);
    batch_gradient(batch, params, &mut grad);
    compare_gradients(params, batch, &grad, eps, tol)
}
