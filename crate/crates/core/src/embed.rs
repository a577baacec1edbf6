//! Span and product-context embeddings.
//!
//! An [`EmbeddingStore`] holds token vectors for every sequence. It is either
//! dense (one row per token per sequence, loaded from an exported store) or a
//! shared token table (one row per lowercased word type) that training may
//! update. Span vectors are token means pushed through a [`ProjectionHead`]
//! and L2-normalized.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{Product, SeqKey, SpanLoc};
use crate::error::{Error, Result};
use crate::math;

pub const DEFAULT_DIM_OUT: usize = 64;

/// Rows of one sequence inside the store's row arena.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeqRows {
    pub tokens: Vec<u32>,
    pub cls: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    rows: Vec<f64>,
    sequences: BTreeMap<SeqKey, SeqRows>,
    /// Word types of a shared token table; `None` for dense stores.
    vocab: Option<Vec<String>>,
}

impl EmbeddingStore {
    /// Empty dense store.
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dim must be positive".into()));
        }
        Ok(EmbeddingStore { dim, rows: Vec::new(), sequences: BTreeMap::new(), vocab: None })
    }

    /// Adds one sequence to a dense store. `tokens` is token-major,
    /// `token_count × dim` values.
    pub fn insert(&mut self, key: SeqKey, tokens: &[f64], cls: Option<&[f64]>) -> Result<()> {
        if self.vocab.is_some() {
            return Err(Error::InvalidConfig("cannot insert dense rows into a token table".into()));
        }
        if tokens.is_empty() || !tokens.len().is_multiple_of(self.dim) {
            return Err(Error::DimensionMismatch { expected: self.dim, got: tokens.len() });
        }
        if let Some(c) = cls {
            if c.len() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, got: c.len() });
            }
        }
        if !math::all_finite(tokens) || cls.is_some_and(|c| !math::all_finite(c)) {
            return Err(Error::NonFinite(key.to_string()));
        }
        if self.sequences.contains_key(&key) {
            return Err(Error::InvalidSequence { seq: key.to_string(), reason: "duplicate store record".into() });
        }
        let first = self.row_count();
        let count = tokens.len() / self.dim;
        self.rows.extend_from_slice(tokens);
        let cls = cls.map(|c| {
            self.rows.extend_from_slice(c);
            (first + count) as u32
        });
        let tokens = (first..first + count).map(|r| r as u32).collect();
        self.sequences.insert(key, SeqRows { tokens, cls });
        Ok(())
    }

    /// Shared token table over `corpus`, with one row per lowercased word
    /// type (first-seen order) drawn i.i.d. from `U(-0.5/dim, 0.5/dim)`.
    pub fn init_trainable(corpus: &[Product], dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dim must be positive".into()));
        }
        let vocab = corpus_vocab(corpus);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 0.5 / dim as f64;
        let rows = (0..vocab.len() * dim).map(|_| rng.random_range(-bound..bound)).collect();
        Self::from_token_table(corpus, dim, vocab, rows)
    }

    /// Rebuilds a token-table store, e.g. from a checkpoint.
    pub fn from_token_table(corpus: &[Product], dim: usize, vocab: Vec<String>, rows: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dim must be positive".into()));
        }
        if rows.len() != vocab.len() * dim {
            return Err(Error::DimensionMismatch { expected: vocab.len() * dim, got: rows.len() });
        }
        let ids: BTreeMap<&str, u32> = vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i as u32)).collect();
        let mut sequences = BTreeMap::new();
        for seq in corpus.iter().flat_map(|p| p.sequences()) {
            let tokens = seq
                .tokens
                .iter()
                .map(|t| {
                    ids.get(t.to_lowercase().as_str()).copied().ok_or_else(|| Error::InvalidSequence {
                        seq: seq.key.to_string(),
                        reason: alloc::format!("token {t:?} missing from token table"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            sequences.insert(seq.key.clone(), SeqRows { tokens, cls: None });
        }
        let vocab_owned = vocab;
        Ok(EmbeddingStore { dim, rows, sequences, vocab: Some(vocab_owned) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of sequences.
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn is_trainable(&self) -> bool {
        self.vocab.is_some()
    }

    pub fn vocab(&self) -> Option<&[String]> {
        self.vocab.as_deref()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn row(&self, r: u32) -> &[f64] {
        let r = r as usize;
        &self.rows[r * self.dim..(r + 1) * self.dim]
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [f64] {
        &mut self.rows
    }

    pub fn sequence(&self, key: &SeqKey) -> Option<&SeqRows> {
        self.sequences.get(key)
    }

    pub fn sequences(&self) -> impl Iterator<Item = (&SeqKey, &SeqRows)> {
        self.sequences.iter()
    }

    /// Arena rows of the tokens under `loc`.
    pub fn span_rows(&self, loc: &SpanLoc) -> Result<&[u32]> {
        let seq = self.sequence(&loc.seq).ok_or_else(|| Error::MissingSequence(loc.seq.to_string()))?;
        if loc.is_empty() || loc.end > seq.tokens.len() {
            return Err(Error::SpanOutOfRange(loc.to_string()));
        }
        Ok(&seq.tokens[loc.start..loc.end])
    }
}

/// Lowercased word types of `corpus` in first-seen order.
pub fn corpus_vocab(corpus: &[Product]) -> Vec<String> {
    let mut seen = BTreeMap::new();
    let mut vocab = Vec::new();
    for seq in corpus.iter().flat_map(|p| p.sequences()) {
        for t in &seq.tokens {
            let w = t.to_lowercase();
            if !seen.contains_key(&w) {
                seen.insert(w.clone(), ());
                vocab.push(w);
            }
        }
    }
    vocab
}

/// A fixed linear combination of store rows.
///
/// Span means, product contexts and per-batch unique-candidate averages are
/// all linear in the token rows, so one type covers the forward pass and the
/// gradient scatter for all of them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pooled {
    pub rows: Vec<(u32, f64)>,
}

impl Pooled {
    pub fn mean_of(rows: &[u32]) -> Self {
        let w = 1.0 / rows.len() as f64;
        Pooled { rows: rows.iter().map(|&r| (r, w)).collect() }
    }

    /// Uniform average of several pooled inputs.
    pub fn average(parts: &[Pooled]) -> Self {
        let w = 1.0 / parts.len() as f64;
        Pooled { rows: parts.iter().flat_map(|p| p.rows.iter().map(move |&(r, v)| (r, v * w))).collect() }
    }

    pub fn evaluate(&self, store: &EmbeddingStore) -> Vec<f64> {
        let mut out = vec![0.0; store.dim()];
        for &(r, w) in &self.rows {
            math::axpy(&mut out, w, store.row(r));
        }
        out
    }

    /// Scatters `grad` (w.r.t. the pooled vector) into a gradient buffer
    /// shaped like the store's row arena.
    pub fn backward(&self, grad: &[f64], arena_grad: &mut [f64]) {
        let dim = grad.len();
        for &(r, w) in &self.rows {
            let r = r as usize;
            math::axpy(&mut arena_grad[r * dim..(r + 1) * dim], w, grad);
        }
    }
}

/// Trainable linear map applied to pooled token vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub dim_in: usize,
    pub dim_out: usize,
    /// Row-major `dim_in × dim_out`.
    pub weights: Vec<f64>,
}

impl ProjectionHead {
    pub fn identity(dim: usize) -> Self {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        ProjectionHead { dim_in: dim, dim_out: dim, weights }
    }

    /// Identity when the widths agree, otherwise a Gaussian matrix with
    /// variance `1/dim_in`.
    pub fn init(dim_in: usize, dim_out: usize, seed: u64) -> Result<Self> {
        if dim_in == 0 || dim_out == 0 {
            return Err(Error::InvalidConfig("projection widths must be positive".into()));
        }
        if dim_in == dim_out {
            return Ok(Self::identity(dim_in));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / math::sqrt(dim_in as f64);
        let weights = (0..dim_in * dim_out)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect();
        Ok(ProjectionHead { dim_in, dim_out, weights })
    }

    pub fn from_weights(dim_in: usize, dim_out: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != dim_in * dim_out {
            return Err(Error::DimensionMismatch { expected: dim_in * dim_out, got: weights.len() });
        }
        if !math::all_finite(&weights) {
            return Err(Error::NonFinite("projection head".into()));
        }
        Ok(ProjectionHead { dim_in, dim_out, weights })
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim_in);
        let mut z = vec![0.0; self.dim_out];
        for (i, xi) in x.iter().enumerate() {
            math::axpy(&mut z, *xi, &self.weights[i * self.dim_out..(i + 1) * self.dim_out]);
        }
        z
    }

    /// Accumulates `∂L/∂W` into `grad_w` and returns `∂L/∂x` for `z = x·W`.
    pub fn backward(&self, x: &[f64], grad_z: &[f64], grad_w: &mut [f64]) -> Vec<f64> {
        let mut grad_x = vec![0.0; self.dim_in];
        for (i, xi) in x.iter().enumerate() {
            let row = i * self.dim_out..(i + 1) * self.dim_out;
            math::axpy(&mut grad_w[row.clone()], *xi, grad_z);
            grad_x[i] = math::dot(&self.weights[row], grad_z);
        }
        grad_x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanEmbedding {
    pub loc: SpanLoc,
    /// Unit L2 norm.
    pub vector: Vec<f64>,
}

/// Intermediate values of `g = normalize(pool(rows)·W)`, kept for the
/// backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Projected {
    pub pooled: Vec<f64>,
    pub z_norm: f64,
    pub unit: Vec<f64>,
}

impl Projected {
    pub fn forward(input: &Pooled, store: &EmbeddingStore, head: &ProjectionHead) -> Result<Self> {
        if store.dim() != head.dim_in {
            return Err(Error::DimensionMismatch { expected: head.dim_in, got: store.dim() });
        }
        let pooled = input.evaluate(store);
        let z = head.project(&pooled);
        let z_norm = math::norm(&z);
        if !(z_norm > 0.0) || !z_norm.is_finite() {
            return Err(Error::Degenerate("span vector is zero after projection".into()));
        }
        let unit = z.iter().map(|v| v / z_norm).collect();
        Ok(Projected { pooled, z_norm, unit })
    }

    /// Backpropagates `∂L/∂g` into the head and, when given, the row arena.
    pub fn backward(
        &self,
        input: &Pooled,
        head: &ProjectionHead,
        grad_unit: &[f64],
        grad_head: &mut [f64],
        arena_grad: Option<&mut [f64]>,
    ) {
        let grad_z = math::normalize_backward(&self.unit, self.z_norm, grad_unit);
        let grad_x = head.backward(&self.pooled, &grad_z, grad_head);
        if let Some(arena) = arena_grad {
            input.backward(&grad_x, arena);
        }
    }
}

/// Token mean → projection → L2 normalization.
pub fn span_embedding(loc: &SpanLoc, store: &EmbeddingStore, head: &ProjectionHead) -> Result<SpanEmbedding> {
    let rows = store.span_rows(loc)?;
    let p = Projected::forward(&Pooled::mean_of(rows), store, head)?;
    Ok(SpanEmbedding { loc: loc.clone(), vector: p.unit })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductContext {
    pub vector: Vec<f64>,
}

/// Pooling weights for a product summary: mean over its sequences of each
/// sequence's summary row (the CLS row when present, the token mean
/// otherwise).
pub fn context_pooled(product: &Product, store: &EmbeddingStore) -> Result<Pooled> {
    let parts = product
        .sequences()
        .map(|seq| {
            let rows = store.sequence(&seq.key).ok_or_else(|| Error::MissingSequence(seq.key.to_string()))?;
            Ok(match rows.cls {
                Some(c) => Pooled { rows: vec![(c, 1.0)] },
                None => Pooled::mean_of(&rows.tokens),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Pooled::average(&parts))
}

pub fn product_context(product: &Product, store: &EmbeddingStore) -> Result<ProductContext> {
    Ok(ProductContext { vector: context_pooled(product, store)?.evaluate(store) })
}
