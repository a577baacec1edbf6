//! Pipeline stages. Each stage is a pure function over loaded inputs; [`run`]
//! chains them and writes every intermediate artifact to disk.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use amacer_core::corpus::{match_seed_occurrences, sanitize_seed_set, GoldAnnotation, Product, RawProfileEntry, SeedAttribute};
use amacer_core::embed::{EmbeddingStore, Pooled, Projected, ProjectionHead};
use amacer_core::eval::{evaluate, EvalReport};
use amacer_core::grouping::{group_candidates, AttributeCluster, GroupingConfig};
use amacer_core::posgen::{generate_corpus_candidates, induce_patterns, CandidateSpan, PatternSet, PosPattern, Stopwords};
use amacer_core::train::{max_attribute_cosine, top_spans, train, LatentAttributeModel, TrainingData};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{PipelineConfig, PosgenConfig};
use crate::error::{Error, Result};
use crate::io;
use crate::manifest::RunManifest;
use crate::store_format::{check_alignment, load_store};

/// Picks the entries of one category and sanitizes them. `category` may be
/// omitted when the file holds a single category.
pub fn sanitize(entries: &[RawProfileEntry], category: Option<&str>) -> Result<(String, Vec<SeedAttribute>)> {
    let mut categories: Vec<&str> = entries.iter().map(|e| e.category.as_str()).collect();
    categories.sort_unstable();
    categories.dedup();
    let category = match (category, categories.as_slice()) {
        (Some(c), _) => c.to_string(),
        (None, [only]) => only.to_string(),
        (None, []) => String::new(),
        (None, many) => {
            return Err(Error::Usage(format!("profiles span several categories ({}); pass --category", many.join(", "))))
        }
    };
    let picked: Vec<RawProfileEntry> = entries.iter().filter(|e| e.category == category).cloned().collect();
    let seeds = sanitize_seed_set(&picked);
    info!("sanitized {} profile entries into {} seed attributes", picked.len(), seeds.len());
    Ok((category, seeds))
}

pub fn patterns(products: &[Product], seeds: &[SeedAttribute], config: &PosgenConfig) -> Result<Vec<PosPattern>> {
    let occurrences = match_seed_occurrences(products, seeds);
    let patterns = induce_patterns(&occurrences, products, config.induce_options())?;
    info!("{} seed occurrences induced {} patterns", occurrences.len(), patterns.len());
    if patterns.is_empty() {
        warn!("no pattern reached min_support {}; no candidates will be generated", config.min_support);
    }
    Ok(patterns)
}

pub fn candidates(products: &[Product], patterns: &[PosPattern], stopwords: &Stopwords, config: &PosgenConfig) -> Vec<CandidateSpan> {
    let found = generate_corpus_candidates(products, &PatternSet::new(patterns), stopwords, config.max_span_len);
    info!("generated {} candidate spans", found.len());
    found
}

/// Loads an embedding store aligned with `products`, or, without a path,
/// creates a fresh trainable token table.
pub fn input_store(products: &[Product], store: Option<&Path>, config: &PipelineConfig) -> Result<EmbeddingStore> {
    match store {
        Some(path) => {
            let store = load_store(path)?;
            check_alignment(&store, products)?;
            Ok(store)
        }
        None => Ok(EmbeddingStore::init_trainable(products, config.train.store_dim, config.train.rng_seed)?),
    }
}

/// The store a trained checkpoint should be applied to: the given file, or
/// the checkpoint's own token table.
pub fn trained_store(checkpoint: &Checkpoint, products: &[Product], store: Option<&Path>) -> Result<EmbeddingStore> {
    let store = match (store, checkpoint.token_store(products)) {
        (Some(path), _) => {
            let store = load_store(path)?;
            check_alignment(&store, products)?;
            store
        }
        (None, Some(store)) => store?,
        (None, None) => {
            return Err(Error::Usage("checkpoint was trained on an external store; pass --store".into()));
        }
    };
    if store.dim() != checkpoint.head.dim_in {
        return Err(Error::Validation(format!(
            "store width {} does not match the checkpoint's {}",
            store.dim(),
            checkpoint.head.dim_in
        )));
    }
    Ok(store)
}

pub fn fit(
    products: &[Product],
    seeds: &[SeedAttribute],
    candidates: &[CandidateSpan],
    store: &mut EmbeddingStore,
    config: &PipelineConfig,
) -> Result<Checkpoint> {
    let occurrences = match_seed_occurrences(products, seeds);
    let data = TrainingData { products, occurrences: &occurrences, candidates };
    let out = train(data, store, &config.train)?;
    for e in &out.history {
        info!(
            "epoch {}: loss {:.5} (su {:.5}, ss {:.5}, un {:.5})",
            e.epoch, e.mean_loss, e.mean_supervised, e.mean_window, e.mean_unsupervised
        );
    }
    Ok(Checkpoint::new(config.train.clone(), out.history, out.head, out.model, store))
}

pub fn group(
    products: &[Product],
    seeds: &[SeedAttribute],
    candidates: &[CandidateSpan],
    store: &EmbeddingStore,
    head: &ProjectionHead,
    config: &GroupingConfig,
) -> Result<Vec<AttributeCluster>> {
    let occurrences = match_seed_occurrences(products, seeds);
    let clusters = group_candidates(candidates, seeds, &occurrences, store, head, config)?;
    let discovered = clusters.iter().filter(|c| c.label.starts_with("new-")).count();
    info!("{} clusters ({} discovered)", clusters.len(), discovered);
    Ok(clusters)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSpan {
    pub surface: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRow {
    pub k: usize,
    pub spans: Vec<ScoredSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentsReport {
    pub k: usize,
    pub top_m: usize,
    /// Near 1 when latent attributes have collapsed onto each other.
    pub max_attribute_cosine: f64,
    pub attributes: Vec<LatentRow>,
}

/// Unique candidate surfaces, sorted, each embedded the way training builds
/// its candidate set: average of the occurrence token means, then project.
pub fn candidate_embeddings(
    candidates: &[CandidateSpan],
    store: &EmbeddingStore,
    head: &ProjectionHead,
) -> Result<Vec<(String, Vec<f64>)>> {
    let mut parts: BTreeMap<&str, Vec<Pooled>> = BTreeMap::new();
    for c in candidates {
        parts.entry(&c.surface).or_default().push(Pooled::mean_of(store.span_rows(&c.loc)?));
    }
    parts
        .into_iter()
        .map(|(s, p)| Ok((s.to_string(), Projected::forward(&Pooled::average(&p), store, head)?.unit)))
        .collect()
}

pub fn latents(
    model: &LatentAttributeModel,
    head: &ProjectionHead,
    store: &EmbeddingStore,
    candidates: &[CandidateSpan],
    top_m: usize,
) -> Result<LatentsReport> {
    let embedded = candidate_embeddings(candidates, store, head)?;
    let vectors: Vec<Vec<f64>> = embedded.iter().map(|(_, v)| v.clone()).collect();
    let attributes = top_spans(model, &vectors, top_m)
        .into_iter()
        .enumerate()
        .map(|(k, row)| LatentRow {
            k,
            spans: row.into_iter().map(|(c, score)| ScoredSpan { surface: embedded[c].0.clone(), score }).collect(),
        })
        .collect();
    Ok(LatentsReport { k: model.k, top_m, max_attribute_cosine: max_attribute_cosine(model), attributes })
}

/// Inputs of a full run. Seeds come from `seeds`, or from sanitizing
/// `profiles` when no seed file is given.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunInputs {
    pub products: PathBuf,
    pub seeds: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub category: Option<String>,
    pub gold: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutputs {
    pub clusters: Vec<AttributeCluster>,
    pub report: Option<EvalReport>,
    pub latents: LatentsReport,
    pub checkpoint: Checkpoint,
    pub artifacts: BTreeMap<String, PathBuf>,
}

pub fn load_stopwords(path: Option<&Path>) -> Result<Stopwords> {
    path.map_or_else(|| Ok(Stopwords::english()), io::load_stopwords)
}

/// Loads gold with `is_new_type` set against `seeds`, bounds-checked
/// against `products`.
pub fn load_gold(path: &Path, seeds: &[SeedAttribute], products: Option<&[Product]>) -> Result<Vec<GoldAnnotation>> {
    io::load_gold(path, seeds, products)
}

/// Every stage in order, each artifact written to `out_dir`, then
/// `run.manifest.json`.
pub fn run(inputs: &RunInputs, config: &PipelineConfig, out_dir: &Path) -> Result<RunOutputs> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut manifest = RunManifest::start("run", config);
    manifest.input("products", &inputs.products)?;
    for (name, path) in [("seeds", &inputs.seeds), ("profiles", &inputs.profiles), ("gold", &inputs.gold), ("store", &inputs.store), ("stopwords", &inputs.stopwords)] {
        if let Some(p) = path {
            manifest.input(name, p)?;
        }
    }
    let products = io::load_corpus(&inputs.products)?;
    let seeds = match (&inputs.seeds, &inputs.profiles) {
        (Some(path), _) => io::load_seeds(path)?.1,
        (None, Some(path)) => {
            let (category, seeds) = sanitize(&io::load_raw_profiles(path)?, inputs.category.as_deref())?;
            let out = out_dir.join("seeds.json");
            io::save_seeds(&out, &category, &seeds)?;
            manifest.artifact("seeds", &out);
            seeds
        }
        (None, None) => return Err(Error::Usage("run needs --seeds or --profiles".into())),
    };
    let stopwords = load_stopwords(inputs.stopwords.as_deref())?;

    let patterns = patterns(&products, &seeds, &config.posgen)?;
    let path = out_dir.join("patterns.jsonl");
    io::save_patterns(&path, &patterns)?;
    manifest.artifact("patterns", &path);

    let candidates = candidates(&products, &patterns, &stopwords, &config.posgen);
    let path = out_dir.join("candidates.jsonl");
    io::save_candidates(&path, &candidates)?;
    manifest.artifact("candidates", &path);

    let mut store = input_store(&products, inputs.store.as_deref(), config)?;
    let checkpoint = fit(&products, &seeds, &candidates, &mut store, config)?;
    let path = out_dir.join("checkpoint.amck");
    checkpoint.save(&path)?;
    manifest.artifact("checkpoint", &path);

    let clusters = group(&products, &seeds, &candidates, &store, &checkpoint.head, &config.grouping)?;
    let path = out_dir.join("clusters.jsonl");
    io::save_clusters(&path, &clusters)?;
    manifest.artifact("clusters", &path);

    let latents = latents(&checkpoint.model, &checkpoint.head, &store, &candidates, config.latents.top_m)?;
    let path = out_dir.join("latents.json");
    io::write_json(&path, &latents)?;
    manifest.artifact("latents", &path);

    let report = match &inputs.gold {
        Some(gold) => {
            let gold = load_gold(gold, &seeds, Some(&products))?;
            let report = evaluate(&clusters, &gold, &config.eval.options())?;
            let path = out_dir.join("report.json");
            io::write_json(&path, &report)?;
            manifest.artifact("report", &path);
            Some(report)
        }
        None => None,
    };
    let artifacts = manifest.artifacts.clone();
    manifest.finish(out_dir)?;
    Ok(RunOutputs { clusters, report, latents, checkpoint, artifacts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use amacer_core::corpus::{SeqKey, SpanLoc};
    use amacer_core::posgen::PosPattern;

    fn entry(c: &str, t: &str, v: &str) -> RawProfileEntry {
        RawProfileEntry { category: c.into(), attribute_type: t.into(), value: v.into(), frequency: 1 }
    }

    #[test]
    fn sanitize_needs_a_category_when_ambiguous() {
        let entries = vec![entry("a", "t", "x"), entry("b", "t", "y")];
        assert!(matches!(sanitize(&entries, None), Err(Error::Usage(_))));
        assert_eq!(sanitize(&entries, Some("a")).unwrap().0, "a");
        assert_eq!(sanitize(&entries[..1], None).unwrap().0, "a");
    }

    fn hand_latents(top_m: usize) -> LatentsReport {
        let mut store = EmbeddingStore::new(2).unwrap();
        store.insert(SeqKey::title("p"), &[1.0, 0.0, 0.0, 1.0, 0.6, 0.8], None).unwrap();
        let cand = |s: usize, surface: &str| CandidateSpan {
            loc: SpanLoc::new(SeqKey::title("p"), s, s + 1),
            surface: surface.into(),
            pattern: PosPattern { tags: vec!["ADJ".into()], support: 1 },
        };
        let candidates = vec![cand(0, "red"), cand(1, "wool"), cand(2, "big")];
        let model = LatentAttributeModel {
            k: 2,
            span_dim: 2,
            context_dim: 2,
            attr_embeddings: vec![1.0, 0.0, 0.0, 1.0],
            w_mu: vec![0.0; 4],
            w_logvar: vec![0.0; 4],
        };
        latents(&model, &ProjectionHead::identity(2), &store, &candidates, top_m).unwrap()
    }

    #[test]
    fn aligned_attributes_rank_their_candidate_first() {
        let r = hand_latents(1);
        let top: Vec<&str> = r.attributes.iter().map(|row| row.spans[0].surface.as_str()).collect();
        assert_eq!(top, ["red", "wool"]);
        assert_eq!(r.max_attribute_cosine, 0.0);
    }

    #[test]
    fn rows_are_truncated_to_the_candidate_count() {
        let r = hand_latents(10);
        assert!(r.attributes.iter().all(|row| row.spans.len() == 3));
        assert_eq!(r.attributes[0].spans.iter().map(|s| s.surface.as_str()).collect::<Vec<_>>(), ["red", "big", "wool"]);
    }
}
