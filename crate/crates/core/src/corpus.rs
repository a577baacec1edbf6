//! Products, seed attributes and gold annotations.
//!
//! Everything here is validated in memory; reading the files is done by the
//! `amacer` crate.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Smallest number of distinct values a sanitized seed attribute keeps.
pub const MIN_SEED_VALUES: usize = 10;
/// Largest number of values a sanitized seed attribute keeps.
pub const MAX_SEED_VALUES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SeqKind {
    Title,
    Bullet,
}

impl SeqKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SeqKind::Title => "title",
            SeqKind::Bullet => "bullet",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "title" => Some(SeqKind::Title),
            "bullet" => Some(SeqKind::Bullet),
            _ => None,
        }
    }
}

impl fmt::Display for SeqKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifies one title or bullet of one product.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SeqKey {
    pub product_id: String,
    pub kind: SeqKind,
    /// Bullet ordinal; always 0 for the title.
    pub index: u32,
}

impl SeqKey {
    pub fn title(product_id: impl Into<String>) -> Self {
        SeqKey { product_id: product_id.into(), kind: SeqKind::Title, index: 0 }
    }

    pub fn bullet(product_id: impl Into<String>, index: u32) -> Self {
        SeqKey { product_id: product_id.into(), kind: SeqKind::Bullet, index }
    }
}

impl fmt::Display for SeqKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.product_id, self.kind, self.index)
    }
}

/// A half-open token range `[start, end)` inside one sequence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpanLoc {
    pub seq: SeqKey,
    pub start: usize,
    pub end: usize,
}

impl SpanLoc {
    pub fn new(seq: SeqKey, start: usize, end: usize) -> Self {
        SpanLoc { seq, start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Number of tokens shared with `other`; zero when they sit in
    /// different sequences.
    pub fn overlap(&self, other: &SpanLoc) -> usize {
        if self.seq != other.seq {
            return 0;
        }
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }
}

impl fmt::Display for SpanLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}..{})", self.seq, self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub key: SeqKey,
    pub tokens: Vec<String>,
    /// Coarse (Universal) POS tags, one per token.
    pub pos: Vec<String>,
}

impl TokenSequence {
    pub fn new(key: SeqKey, tokens: Vec<String>, pos: Vec<String>) -> Result<Self> {
        let seq = TokenSequence { key, tokens, pos };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::InvalidSequence {
                seq: self.key.to_string(),
                reason: "no tokens".into(),
            });
        }
        if self.tokens.len() != self.pos.len() {
            return Err(Error::InvalidSequence {
                seq: self.key.to_string(),
                reason: format!("{} tokens but {} POS tags", self.tokens.len(), self.pos.len()),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Lowercased surface text of `[start, end)`, tokens joined by one space.
    pub fn surface(&self, start: usize, end: usize) -> String {
        let mut out = String::new();
        for (i, tok) in self.tokens[start..end].iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&tok.to_lowercase());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Product {
    pub id: String,
    pub category: String,
    pub title: TokenSequence,
    pub bullets: Vec<TokenSequence>,
}

impl Product {
    /// Builds a product from raw `(tokens, pos)` pairs, assigning sequence
    /// keys and validating every sequence.
    pub fn from_parts(
        id: impl Into<String>,
        category: impl Into<String>,
        title: (Vec<String>, Vec<String>),
        bullets: Vec<(Vec<String>, Vec<String>)>,
    ) -> Result<Self> {
        let id = id.into();
        let title = TokenSequence::new(SeqKey::title(id.clone()), title.0, title.1)?;
        let bullets = bullets
            .into_iter()
            .enumerate()
            .map(|(i, (tokens, pos))| TokenSequence::new(SeqKey::bullet(id.clone(), i as u32), tokens, pos))
            .collect::<Result<Vec<_>>>()?;
        Ok(Product { id, category: category.into(), title, bullets })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |seq: &SeqKey, reason: &str| Error::InvalidSequence { seq: seq.to_string(), reason: reason.into() };
        if self.title.key.kind != SeqKind::Title || self.title.key.product_id != self.id {
            return Err(bad(&self.title.key, "title key does not belong to this product"));
        }
        self.title.validate()?;
        let mut seen = BTreeSet::new();
        for b in &self.bullets {
            if b.key.kind != SeqKind::Bullet || b.key.product_id != self.id {
                return Err(bad(&b.key, "bullet key does not belong to this product"));
            }
            if !seen.insert(b.key.index) {
                return Err(bad(&b.key, "duplicate bullet index"));
            }
            b.validate()?;
        }
        Ok(())
    }

    /// Title first, then bullets in order.
    pub fn sequences(&self) -> impl Iterator<Item = &TokenSequence> {
        core::iter::once(&self.title).chain(self.bullets.iter())
    }
}

/// Maps every sequence key of `products` to its sequence.
pub fn index_sequences(products: &[Product]) -> BTreeMap<&SeqKey, &TokenSequence> {
    products.iter().flat_map(|p| p.sequences()).map(|s| (&s.key, s)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedAttribute {
    pub type_name: String,
    /// Lowercased surface forms.
    pub values: Vec<String>,
}

impl SeedAttribute {
    /// Lowercases values and drops repeats (first occurrence wins).
    /// Returns the values that were dropped.
    pub fn dedup_values(&mut self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut dropped = Vec::new();
        let values = core::mem::take(&mut self.values);
        for v in values {
            let v = normalize_value(&v);
            if seen.insert(v.clone()) {
                self.values.push(v);
            } else {
                dropped.push(v);
            }
        }
        dropped
    }
}

/// Lowercases and collapses internal whitespace.
pub fn normalize_value(v: &str) -> String {
    let mut out = String::new();
    for (i, w) in v.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&w.to_lowercase());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SeedOccurrence {
    pub attribute: String,
    pub value: String,
    pub loc: SpanLoc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldAnnotation {
    pub loc: SpanLoc,
    pub attribute_type: String,
    pub is_new_type: bool,
}

/// Checks span bounds and that no two gold spans in one sequence overlap.
pub fn validate_gold(gold: &[GoldAnnotation]) -> Result<()> {
    let mut by_seq: BTreeMap<&SeqKey, Vec<&SpanLoc>> = BTreeMap::new();
    for g in gold {
        if g.loc.is_empty() {
            return Err(Error::InvalidGold(format!("empty span {}", g.loc)));
        }
        by_seq.entry(&g.loc.seq).or_default().push(&g.loc);
    }
    for spans in by_seq.values_mut() {
        spans.sort_by_key(|s| (s.start, s.end));
        for pair in spans.windows(2) {
            if pair[0].end > pair[1].start {
                return Err(Error::InvalidGold(format!("overlapping spans {} and {}", pair[0], pair[1])));
            }
        }
    }
    Ok(())
}

/// Sets `is_new_type` on every annotation whose type is not a seed type.
pub fn mark_new_types(gold: &mut [GoldAnnotation], seeds: &[SeedAttribute]) {
    let seed_types: BTreeSet<&str> = seeds.iter().map(|s| s.type_name.as_str()).collect();
    for g in gold {
        g.is_new_type = !seed_types.contains(g.attribute_type.as_str());
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawProfileEntry {
    pub category: String,
    pub attribute_type: String,
    pub value: String,
    pub frequency: u64,
}

/// Frequency-based cleanup of raw profile attributes for one category.
///
/// Steps, in order: drop types with fewer than [`MIN_SEED_VALUES`] distinct
/// values; keep a value shared by several types only under the type where it
/// is most frequent (ties: larger type total, then smaller type name); keep
/// the [`MAX_SEED_VALUES`] most frequent values per type (ties: smaller
/// value). The first step is applied again at the end.
///
/// Output is sorted by type name; values by descending frequency, then
/// lexicographically.
pub fn sanitize_seed_set(entries: &[RawProfileEntry]) -> Vec<SeedAttribute> {
    // type -> value -> summed frequency
    let mut table: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for e in entries {
        let value = normalize_value(&e.value);
        if value.is_empty() || e.frequency == 0 {
            continue;
        }
        *table.entry(e.attribute_type.clone()).or_default().entry(value).or_insert(0) += e.frequency;
    }

    table.retain(|_, values| values.len() >= MIN_SEED_VALUES);

    let totals: BTreeMap<String, u64> =
        table.iter().map(|(t, vals)| (t.clone(), vals.values().sum())).collect();
    let mut owners: BTreeMap<String, (String, u64)> = BTreeMap::new();
    for (type_name, values) in &table {
        for (value, &freq) in values {
            let better = match owners.get(value) {
                None => true,
                Some((owner, owner_freq)) => {
                    (freq, totals[type_name], core::cmp::Reverse(type_name))
                        > (*owner_freq, totals[owner], core::cmp::Reverse(owner))
                }
            };
            if better {
                owners.insert(value.clone(), (type_name.clone(), freq));
            }
        }
    }
    for (type_name, values) in table.iter_mut() {
        values.retain(|value, _| owners[value].0 == *type_name);
    }

    let mut out = Vec::new();
    for (type_name, values) in table {
        let mut ranked: Vec<(String, u64)> = values.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(MAX_SEED_VALUES);
        if ranked.len() >= MIN_SEED_VALUES {
            out.push(SeedAttribute { type_name, values: ranked.into_iter().map(|(v, _)| v).collect() });
        }
    }
    out
}

/// Finds every case-insensitive, token-aligned occurrence of a seed value.
///
/// Overlapping matches inside one sequence are resolved greedily: longer
/// match first, then earlier start. Output is ordered by sequence key, then
/// start.
pub fn match_seed_occurrences(products: &[Product], seeds: &[SeedAttribute]) -> Vec<SeedOccurrence> {
    // first token -> [(value tokens, attribute, value)]
    let mut by_first: BTreeMap<String, Vec<(Vec<String>, &str, String)>> = BTreeMap::new();
    for attr in seeds {
        for value in &attr.values {
            let norm = normalize_value(value);
            let toks: Vec<String> = norm.split(' ').map(String::from).collect();
            if toks.is_empty() || toks[0].is_empty() {
                continue;
            }
            by_first.entry(toks[0].clone()).or_default().push((toks, &attr.type_name, norm));
        }
    }

    let mut out = Vec::new();
    for product in products {
        for seq in product.sequences() {
            let lower: Vec<String> = seq.tokens.iter().map(|t| t.to_lowercase()).collect();
            let mut hits: Vec<(usize, usize, &str, &String)> = Vec::new();
            for start in 0..lower.len() {
                let Some(cands) = by_first.get(&lower[start]) else { continue };
                for (toks, attr, value) in cands {
                    let end = start + toks.len();
                    if end <= lower.len() && lower[start..end] == toks[..] {
                        hits.push((start, end, attr, value));
                    }
                }
            }
            hits.sort_by(|a, b| {
                (b.1 - b.0)
                    .cmp(&(a.1 - a.0))
                    .then(a.0.cmp(&b.0))
                    .then_with(|| a.2.cmp(b.2))
            });
            let mut taken: Vec<(usize, usize, &str, &String)> = Vec::new();
            for h in hits {
                if taken.iter().all(|t| h.1 <= t.0 || t.1 <= h.0) {
                    taken.push(h);
                }
            }
            taken.sort_by_key(|t| t.0);
            for (start, end, attr, value) in taken {
                out.push(SeedOccurrence {
                    attribute: attr.to_string(),
                    value: value.clone(),
                    loc: SpanLoc::new(seq.key.clone(), start, end),
                });
            }
        }
    }
    out
}
