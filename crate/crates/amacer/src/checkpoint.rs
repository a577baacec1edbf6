//! Trained-model files.
//!
//! Little-endian layout: `"AMCK"` · version u32 (= 1) · header length u64 ·
//! JSON header · f64 arrays in header order (head weights, attribute
//! embeddings, `W_mu`, `W_logvar`, then token-table rows when present).
//! Parameters are stored as f64 so a reload reproduces grouping exactly.

use std::path::Path;

use amacer_core::corpus::Product;
use amacer_core::embed::{EmbeddingStore, ProjectionHead};
use amacer_core::train::{EpochStats, LatentAttributeModel, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AMCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TokenTable {
    pub dim: usize,
    pub vocab: Vec<String>,
    pub rows: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub history: Vec<EpochStats>,
    pub head: ProjectionHead,
    pub model: LatentAttributeModel,
    pub token_table: Option<TokenTable>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: TrainConfig,
    history: Vec<EpochStats>,
    head_dim_in: usize,
    head_dim_out: usize,
    k: usize,
    span_dim: usize,
    context_dim: usize,
    token_table: Option<TableHeader>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableHeader {
    dim: usize,
    vocab: Vec<String>,
}

impl Checkpoint {
    /// Captures a trained model; the token table is kept when `store` is
    /// trainable.
    pub fn new(config: TrainConfig, history: Vec<EpochStats>, head: ProjectionHead, model: LatentAttributeModel, store: &EmbeddingStore) -> Self {
        let token_table = store
            .vocab()
            .map(|v| TokenTable { dim: store.dim(), vocab: v.to_vec(), rows: store.rows().to_vec() });
        Checkpoint { config, history, head, model, token_table }
    }

    /// Rebuilds the trained token-table store over `products`.
    pub fn token_store(&self, products: &[Product]) -> Option<Result<EmbeddingStore>> {
        self.token_table.as_ref().map(|t| {
            EmbeddingStore::from_token_table(products, t.dim, t.vocab.clone(), t.rows.clone()).map_err(Error::from)
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.config.clone(),
            history: self.history.clone(),
            head_dim_in: self.head.dim_in,
            head_dim_out: self.head.dim_out,
            k: self.model.k,
            span_dim: self.model.span_dim,
            context_dim: self.model.context_dim,
            token_table: self.token_table.as_ref().map(|t| TableHeader { dim: t.dim, vocab: t.vocab.clone() }),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let arrays = [&self.head.weights, &self.model.attr_embeddings, &self.model.w_mu, &self.model.w_logvar];
        for v in arrays.into_iter().chain(self.token_table.as_ref().map(|t| &t.rows)).flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |offset: usize, message: String| Error::Format { path: path.to_path_buf(), offset: offset as u64, message };
        if bytes.len() < 16 {
            return Err(fail(bytes.len(), "truncated header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(fail(0, "bad magic, expected AMCK".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(fail(4, format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = 16usize.checked_add(len).filter(|&e| e <= bytes.len()).ok_or_else(|| fail(16, "truncated header".into()))?;
        let header: Header = serde_json::from_slice(&bytes[16..body]).map_err(|e| fail(16, format!("bad header: {e}")))?;

        let mut at = body;
        let mut take = |n: usize, what: &str| -> Result<Vec<f64>> {
            let end = n.checked_mul(8).and_then(|b| at.checked_add(b)).filter(|&e| e <= bytes.len());
            let end = end.ok_or_else(|| fail(at, format!("truncated {what}")))?;
            let v = bytes[at..end].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            at = end;
            Ok(v)
        };
        let head = take(header.head_dim_in * header.head_dim_out, "head weights")?;
        let attr = take(header.k * header.span_dim, "attribute embeddings")?;
        let w_mu = take(header.k * header.context_dim, "W_mu")?;
        let w_logvar = take(header.k * header.context_dim, "W_logvar")?;
        let token_table = match header.token_table {
            Some(t) => Some(TokenTable { rows: take(t.vocab.len() * t.dim, "token table")?, dim: t.dim, vocab: t.vocab }),
            None => None,
        };
        if at != bytes.len() {
            return Err(fail(at, "trailing bytes".into()));
        }
        let head = ProjectionHead::from_weights(header.head_dim_in, header.head_dim_out, head)?;
        let model = LatentAttributeModel {
            k: header.k,
            span_dim: header.span_dim,
            context_dim: header.context_dim,
            attr_embeddings: attr,
            w_mu,
            w_logvar,
        };
        model.validate()?;
        Ok(Checkpoint { config: header.config, history: header.history, head, model, token_table })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
