//! Candidate grouping.
//!
//! Unique candidate values are first offered to the seed attributes: a
//! value joins attribute `j` when its mean cosine similarity to the
//! attribute's embedded seed values reaches `δ` times the mean pairwise
//! similarity inside that support set. Whatever is left is clustered with
//! DBSCAN under cosine distance; DBSCAN noise is dropped.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::{SeedAttribute, SeedOccurrence, SpanLoc};
use crate::embed::{span_embedding, EmbeddingStore, ProjectionHead};
use crate::error::{Error, Result};
use crate::math;
use crate::posgen::CandidateSpan;

pub const DEFAULT_DELTA: f64 = 0.8;
pub const DEFAULT_EPS: f64 = 0.05;
pub const DEFAULT_MIN_SAMPLES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct GroupingConfig {
    /// Threshold relaxation, in `(0, 1]`.
    pub delta: f64,
    /// DBSCAN radius in cosine distance.
    pub eps: f64,
    /// DBSCAN density threshold, counting the point itself.
    pub min_samples: usize,
    /// When false every value goes straight to DBSCAN.
    pub adaptive_expansion: bool,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        GroupingConfig { delta: DEFAULT_DELTA, eps: DEFAULT_EPS, min_samples: DEFAULT_MIN_SAMPLES, adaptive_expansion: true }
    }
}

impl GroupingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InvalidConfig(format!("delta must lie in (0, 1], got {}", self.delta)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidConfig(format!("eps must be positive, got {}", self.eps)));
        }
        if self.min_samples == 0 {
            return Err(Error::InvalidConfig("min_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// One unique candidate value.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuePoint {
    pub surface: String,
    pub vector: Vec<f64>,
    pub occurrences: Vec<SpanLoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterOrigin {
    SeedExpansion,
    Discovered,
}

impl ClusterOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            ClusterOrigin::SeedExpansion => "seed_expansion",
            ClusterOrigin::Discovered => "discovered",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeCluster {
    /// Seed type name, or `new-<n>` for discovered clusters.
    pub label: String,
    pub origin: ClusterOrigin,
    pub members: Vec<ValuePoint>,
}

/// Mean of the occurrence embeddings, renormalized.
pub fn canonical_value_embedding(embeddings: &[Vec<f64>]) -> Result<Vec<f64>> {
    let dim = embeddings.first().map(Vec::len).ok_or_else(|| Error::Degenerate("value has no occurrences".into()))?;
    let mean = math::mean_of(embeddings.iter().map(Vec::as_slice), dim).expect("non-empty");
    math::normalized(&mean).ok_or_else(|| Error::Degenerate("occurrence embeddings cancel out".into()))
}

/// Mean cosine similarity between `candidate` and each support vector.
pub fn support_similarity(candidate: &[f64], support: &[Vec<f64>]) -> f64 {
    support.iter().map(|s| math::cosine(candidate, s)).sum::<f64>() / support.len() as f64
}

/// `δ · (1/|S|²) Σ_{u,v} cos(s_u, s_v)`, diagonal included.
pub fn adaptive_threshold(support: &[Vec<f64>], delta: f64) -> f64 {
    let n = support.len() as f64;
    let mut total = 0.0;
    for u in support {
        for v in support {
            total += math::cosine(u, v);
        }
    }
    delta * total / (n * n)
}

/// Embedded seed values of one attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet {
    pub type_name: String,
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Expansion {
    /// `(candidate index, support index)`, in candidate order.
    pub assignments: Vec<(usize, usize)>,
    pub leftovers: Vec<usize>,
}

/// Admits each candidate to the support set with the largest margin
/// `similarity - threshold ≥ 0`; ties go to the higher similarity, then the
/// smaller type name.
pub fn adaptive_expand(candidates: &[Vec<f64>], supports: &[SupportSet], delta: f64) -> Expansion {
    let thresholds: Vec<Option<f64>> = supports
        .iter()
        .map(|s| (!s.vectors.is_empty()).then(|| adaptive_threshold(&s.vectors, delta)))
        .collect();
    let mut out = Expansion::default();
    for (ci, c) in candidates.iter().enumerate() {
        let mut best: Option<(usize, f64, f64)> = None;
        for (si, (s, t)) in supports.iter().zip(&thresholds).enumerate() {
            let Some(t) = *t else { continue };
            let sim = support_similarity(c, &s.vectors);
            if sim < t {
                continue;
            }
            let margin = sim - t;
            let better = match best {
                None => true,
                Some((bi, bm, bs)) => {
                    margin > bm
                        || (margin == bm && (sim > bs || (sim == bs && s.type_name < supports[bi].type_name)))
                }
            };
            if better {
                best = Some((si, margin, sim));
            }
        }
        match best {
            Some((si, _, _)) => out.assignments.push((ci, si)),
            None => out.leftovers.push(ci),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DbscanResult {
    /// Point indices per cluster, ascending; clusters ordered by their first
    /// core point.
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

/// DBSCAN over `d(x, y) = 1 - cos(x, y)`. A point is core when at least
/// `min_samples` points (itself included) lie within `eps`. Border points
/// join the first cluster that reaches them.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_samples: usize) -> DbscanResult {
    let n = points.len();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| 1.0 - math::cosine(&points[i], &points[j]) <= eps || i == j).collect())
        .collect();
    let is_core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_samples).collect();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();

    for start in 0..n {
        if !is_core[start] || label[start].is_some() {
            continue;
        }
        let id = clusters.len();
        let mut members = vec![start];
        label[start] = Some(id);
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if label[q].is_some() {
                    continue;
                }
                label[q] = Some(id);
                members.push(q);
                if is_core[q] {
                    queue.push_back(q);
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    let noise = (0..n).filter(|&i| label[i].is_none()).collect();
    DbscanResult { clusters, noise }
}

/// Collects candidates into unique values (sorted by surface) with their
/// canonical embeddings.
pub fn value_points(candidates: &[CandidateSpan], store: &EmbeddingStore, head: &ProjectionHead) -> Result<Vec<ValuePoint>> {
    let mut by_surface: BTreeMap<&str, Vec<&SpanLoc>> = BTreeMap::new();
    for c in candidates {
        by_surface.entry(c.surface.as_str()).or_default().push(&c.loc);
    }
    by_surface
        .into_iter()
        .map(|(surface, locs)| {
            let embs = locs
                .iter()
                .map(|loc| span_embedding(loc, store, head).map(|e| e.vector))
                .collect::<Result<Vec<_>>>()?;
            Ok(ValuePoint {
                surface: surface.into(),
                vector: canonical_value_embedding(&embs)?,
                occurrences: locs.into_iter().cloned().collect(),
            })
        })
        .collect()
}

/// Embeds each seed attribute's values that occur in the corpus, one
/// canonical vector per value. Attributes without any occurrence get an
/// empty support set.
pub fn support_sets(
    seeds: &[SeedAttribute],
    occurrences: &[SeedOccurrence],
    store: &EmbeddingStore,
    head: &ProjectionHead,
) -> Result<Vec<SupportSet>> {
    let mut by_value: BTreeMap<(&str, &str), Vec<Vec<f64>>> = BTreeMap::new();
    for occ in occurrences {
        let e = span_embedding(&occ.loc, store, head)?;
        by_value.entry((occ.attribute.as_str(), occ.value.as_str())).or_default().push(e.vector);
    }
    seeds
        .iter()
        .map(|attr| {
            let vectors = by_value
                .range((attr.type_name.as_str(), "")..)
                .take_while(|((t, _), _)| *t == attr.type_name)
                .map(|(_, embs)| canonical_value_embedding(embs))
                .collect::<Result<Vec<_>>>()?;
            Ok(SupportSet { type_name: attr.type_name.clone(), vectors })
        })
        .collect()
}

/// Adaptive expansion onto the seed attributes, then DBSCAN over the
/// leftovers. Seed clusters come first in seed order, then discovered
/// clusters `new-1`, `new-2`, ...
pub fn group_candidates(
    candidates: &[CandidateSpan],
    seeds: &[SeedAttribute],
    occurrences: &[SeedOccurrence],
    store: &EmbeddingStore,
    head: &ProjectionHead,
    config: &GroupingConfig,
) -> Result<Vec<AttributeCluster>> {
    config.validate()?;
    let points = value_points(candidates, store, head)?;
    let supports = support_sets(seeds, occurrences, store, head)?;
    Ok(group_points(points, &supports, config))
}

/// [`group_candidates`] on already embedded values and supports.
pub fn group_points(points: Vec<ValuePoint>, supports: &[SupportSet], config: &GroupingConfig) -> Vec<AttributeCluster> {
    let vectors: Vec<Vec<f64>> = points.iter().map(|p| p.vector.clone()).collect();
    let expansion = if config.adaptive_expansion {
        adaptive_expand(&vectors, supports, config.delta)
    } else {
        Expansion { assignments: Vec::new(), leftovers: (0..points.len()).collect() }
    };

    let mut slots: Vec<Option<ValuePoint>> = points.into_iter().map(Some).collect();
    let mut clusters = Vec::new();
    let mut per_support: Vec<Vec<usize>> = vec![Vec::new(); supports.len()];
    for (ci, si) in &expansion.assignments {
        per_support[*si].push(*ci);
    }
    for (support, members) in supports.iter().zip(per_support) {
        if members.is_empty() {
            continue;
        }
        clusters.push(AttributeCluster {
            label: support.type_name.clone(),
            origin: ClusterOrigin::SeedExpansion,
            members: members.into_iter().map(|i| slots[i].take().expect("assigned once")).collect(),
        });
    }

    let leftover_vectors: Vec<Vec<f64>> = expansion.leftovers.iter().map(|&i| vectors[i].clone()).collect();
    let found = dbscan(&leftover_vectors, config.eps, config.min_samples);
    for (n, members) in found.clusters.into_iter().enumerate() {
        clusters.push(AttributeCluster {
            label: format!("new-{}", n + 1),
            origin: ClusterOrigin::Discovered,
            members: members.into_iter().map(|i| slots[expansion.leftovers[i]].take().expect("clustered once")).collect(),
        });
    }
    clusters
}
