//! JSON and JSON-lines files exchanged between pipeline stages.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use amacer_core::corpus::{
    mark_new_types, validate_gold, GoldAnnotation, Product, RawProfileEntry, SeedAttribute, SeqKey, SeqKind, SpanLoc,
};
use amacer_core::grouping::{AttributeCluster, ClusterOrigin, ValuePoint};
use amacer_core::posgen::{CandidateSpan, PosPattern, Stopwords};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parses every non-blank line of a JSON-lines file.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { path: path.to_path_buf(), line: i + 1, message: e.to_string() })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, &r).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Parse { path: path.to_path_buf(), line: e.line(), message: e.to_string() })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e.into()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub tokens: Vec<String>,
    pub pos: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductRecord {
    pub id: String,
    pub category: String,
    pub title: SequenceRecord,
    #[serde(default)]
    pub bullets: Vec<SequenceRecord>,
}

impl ProductRecord {
    pub fn from_product(p: &Product) -> Self {
        let seq = |s: &amacer_core::corpus::TokenSequence| SequenceRecord { tokens: s.tokens.clone(), pos: s.pos.clone() };
        ProductRecord { id: p.id.clone(), category: p.category.clone(), title: seq(&p.title), bullets: p.bullets.iter().map(seq).collect() }
    }

    pub fn into_product(self) -> amacer_core::Result<Product> {
        Product::from_parts(
            self.id,
            self.category,
            (self.title.tokens, self.title.pos),
            self.bullets.into_iter().map(|b| (b.tokens, b.pos)).collect(),
        )
    }
}

/// Products in file order; validation failures name the line.
pub fn load_corpus(path: &Path) -> Result<Vec<Product>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut ids = std::collections::BTreeSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |message: String| Error::Parse { path: path.to_path_buf(), line: i + 1, message };
        let record: ProductRecord = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
        let product = record.into_product().map_err(|e| at(e.to_string()))?;
        if !ids.insert(product.id.clone()) {
            return Err(at(format!("duplicate product id {:?}", product.id)));
        }
        out.push(product);
    }
    Ok(out)
}

pub fn save_corpus(path: &Path, products: &[Product]) -> Result<()> {
    write_jsonl(path, products.iter().map(ProductRecord::from_product))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTypeRecord {
    #[serde(rename = "type")]
    pub type_name: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedsFile {
    pub category: String,
    pub attributes: Vec<SeedTypeRecord>,
}

/// Seed attributes with values lowercased and deduplicated.
pub fn load_seeds(path: &Path) -> Result<(String, Vec<SeedAttribute>)> {
    let file: SeedsFile = read_json(path)?;
    let mut seen = std::collections::BTreeSet::new();
    let mut attrs = Vec::new();
    for a in file.attributes {
        if a.type_name.is_empty() || !seen.insert(a.type_name.clone()) {
            return Err(Error::Validation(format!("{}: empty or duplicate seed type {:?}", path.display(), a.type_name)));
        }
        let mut attr = SeedAttribute { type_name: a.type_name, values: a.values };
        let dropped = attr.dedup_values();
        if !dropped.is_empty() {
            log::warn!("seed type {}: dropped repeated values {dropped:?}", attr.type_name);
        }
        attrs.push(attr);
    }
    Ok((file.category, attrs))
}

pub fn save_seeds(path: &Path, category: &str, seeds: &[SeedAttribute]) -> Result<()> {
    let file = SeedsFile {
        category: category.to_string(),
        attributes: seeds.iter().map(|s| SeedTypeRecord { type_name: s.type_name.clone(), values: s.values.clone() }).collect(),
    };
    write_json(path, &file)
}

/// Sequence position as written in gold, candidate and cluster files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocRecord {
    pub id: String,
    pub kind: SeqKind,
    pub index: u32,
    pub start: usize,
    pub end: usize,
}

impl LocRecord {
    pub fn from_loc(l: &SpanLoc) -> Self {
        LocRecord { id: l.seq.product_id.clone(), kind: l.seq.kind, index: l.seq.index, start: l.start, end: l.end }
    }

    pub fn to_loc(&self) -> std::result::Result<SpanLoc, String> {
        if self.kind == SeqKind::Title && self.index != 0 {
            return Err(format!("title index must be 0, got {}", self.index));
        }
        if self.start >= self.end {
            return Err(format!("empty span [{}, {})", self.start, self.end));
        }
        Ok(SpanLoc::new(SeqKey { product_id: self.id.clone(), kind: self.kind, index: self.index }, self.start, self.end))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    #[serde(flatten)]
    pub loc: LocRecord,
    #[serde(rename = "type")]
    pub attribute_type: String,
}

/// Gold spans, checked for overlap, against `products` bounds when given,
/// and marked new/seed against `seeds`.
pub fn load_gold(path: &Path, seeds: &[SeedAttribute], products: Option<&[Product]>) -> Result<Vec<GoldAnnotation>> {
    let records: Vec<GoldRecord> = read_jsonl(path)?;
    let mut gold = Vec::with_capacity(records.len());
    for (i, r) in records.into_iter().enumerate() {
        let loc = r.loc.to_loc().map_err(|m| Error::Parse { path: path.to_path_buf(), line: i + 1, message: m })?;
        gold.push(GoldAnnotation { loc, attribute_type: r.attribute_type, is_new_type: false });
    }
    validate_gold(&gold)?;
    if let Some(products) = products {
        let index = amacer_core::corpus::index_sequences(products);
        for g in &gold {
            let seq = index.get(&g.loc.seq).ok_or_else(|| amacer_core::Error::MissingSequence(g.loc.seq.to_string()))?;
            if g.loc.end > seq.len() {
                return Err(amacer_core::Error::SpanOutOfRange(g.loc.to_string()).into());
            }
        }
    }
    mark_new_types(&mut gold, seeds);
    Ok(gold)
}

pub fn save_gold(path: &Path, gold: &[GoldAnnotation]) -> Result<()> {
    write_jsonl(path, gold.iter().map(|g| GoldRecord { loc: LocRecord::from_loc(&g.loc), attribute_type: g.attribute_type.clone() }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawProfileRecord {
    pub category: String,
    #[serde(rename = "type")]
    pub attribute_type: String,
    pub value: String,
    pub freq: u64,
}

pub fn load_raw_profiles(path: &Path) -> Result<Vec<RawProfileEntry>> {
    let records: Vec<RawProfileRecord> = read_jsonl(path)?;
    Ok(records
        .into_iter()
        .map(|r| RawProfileEntry { category: r.category, attribute_type: r.attribute_type, value: r.value, frequency: r.freq })
        .collect())
}

pub fn save_raw_profiles(path: &Path, entries: &[RawProfileEntry]) -> Result<()> {
    write_jsonl(
        path,
        entries.iter().map(|e| RawProfileRecord {
            category: e.category.clone(),
            attribute_type: e.attribute_type.clone(),
            value: e.value.clone(),
            freq: e.frequency,
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternRecord {
    pub tags: Vec<String>,
    pub support: usize,
}

pub fn load_patterns(path: &Path) -> Result<Vec<PosPattern>> {
    let records: Vec<PatternRecord> = read_jsonl(path)?;
    Ok(records.into_iter().map(|r| PosPattern { tags: r.tags, support: r.support }).collect())
}

pub fn save_patterns(path: &Path, patterns: &[PosPattern]) -> Result<()> {
    write_jsonl(path, patterns.iter().map(|p| PatternRecord { tags: p.tags.clone(), support: p.support }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    #[serde(flatten)]
    pub loc: LocRecord,
    pub surface: String,
    pub pattern: Vec<String>,
    pub support: usize,
}

pub fn load_candidates(path: &Path) -> Result<Vec<CandidateSpan>> {
    let records: Vec<CandidateRecord> = read_jsonl(path)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let loc = r.loc.to_loc().map_err(|m| Error::Parse { path: path.to_path_buf(), line: i + 1, message: m })?;
            Ok(CandidateSpan { loc, surface: r.surface, pattern: PosPattern { tags: r.pattern, support: r.support } })
        })
        .collect()
}

pub fn save_candidates(path: &Path, candidates: &[CandidateSpan]) -> Result<()> {
    write_jsonl(
        path,
        candidates.iter().map(|c| CandidateRecord {
            loc: LocRecord::from_loc(&c.loc),
            surface: c.surface.clone(),
            pattern: c.pattern.tags.clone(),
            support: c.pattern.support,
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub surface: String,
    pub occurrences: Vec<LocRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub label: String,
    pub origin: String,
    pub members: Vec<MemberRecord>,
}

pub fn save_clusters(path: &Path, clusters: &[AttributeCluster]) -> Result<()> {
    write_jsonl(
        path,
        clusters.iter().map(|c| ClusterRecord {
            label: c.label.clone(),
            origin: c.origin.as_str().to_string(),
            members: c
                .members
                .iter()
                .map(|m| MemberRecord { surface: m.surface.clone(), occurrences: m.occurrences.iter().map(LocRecord::from_loc).collect() })
                .collect(),
        }),
    )
}

/// Clusters as written by [`save_clusters`]; member vectors are not stored
/// and come back empty.
pub fn load_clusters(path: &Path) -> Result<Vec<AttributeCluster>> {
    let records: Vec<ClusterRecord> = read_jsonl(path)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let fail = |message: String| Error::Parse { path: path.to_path_buf(), line: i + 1, message };
            let origin = match r.origin.as_str() {
                "seed_expansion" => ClusterOrigin::SeedExpansion,
                "discovered" => ClusterOrigin::Discovered,
                other => return Err(fail(format!("unknown cluster origin {other:?}"))),
            };
            let members = r
                .members
                .into_iter()
                .map(|m| {
                    let occurrences = m.occurrences.iter().map(LocRecord::to_loc).collect::<std::result::Result<Vec<_>, _>>().map_err(fail)?;
                    Ok(ValuePoint { surface: m.surface, vector: Vec::new(), occurrences })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AttributeCluster { label: r.label, origin, members })
        })
        .collect()
}

/// One word per line; blank lines and `#` comments are ignored.
pub fn load_stopwords(path: &Path) -> Result<Stopwords> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(Stopwords::new(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))))
}
