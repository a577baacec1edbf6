//! Representation learning.
//!
//! The objective is `L = L_su + λ_ss·L_ss + λ_un·L_un`:
//! [`supervised_contrastive_loss`] over seed occurrences,
//! [`window_contrastive_loss`] over candidates grouped by bullet, and the
//! latent attribute negative ELBO ([`unsupervised_loss`]). Gradients flow
//! into the projection head, the latent model and, for token-table stores,
//! the token vectors.

pub mod contrastive;
pub mod latent;
pub mod optim;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use contrastive::{supervised_contrastive_loss, window_contrastive_loss, LossGrad, WindowLabel};
pub use latent::{
    kl_standard_normal, latent_forward, max_attribute_cosine, top_spans, unsupervised_loss, LatentAttributeModel,
    LatentGrads, LatentState, ProductTerm, UnsupervisedLoss,
};
pub use optim::{clip_grad_norm, Adam, LinearSchedule};

use crate::corpus::{Product, SeedOccurrence, SeqKind};
use crate::embed::{context_pooled, EmbeddingStore, Pooled, Projected, ProjectionHead};
use crate::error::{Error, Result};
use crate::posgen::CandidateSpan;
use crate::math;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub tau: f64,
    pub lambda_ss: f64,
    pub lambda_un: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng_seed: u64,
    /// Number of latent attributes.
    #[cfg_attr(feature = "serde", serde(rename = "K"))]
    pub k: usize,
    pub dim_out: usize,
    pub clip_norm: f64,
    pub warmup_ratio: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Width of the token table created when no embedding store is given.
    pub store_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau: 0.1,
            lambda_ss: 0.01,
            lambda_un: 0.02,
            lr: 2e-5,
            batch_size: 128,
            epochs: 10,
            rng_seed: 0,
            k: latent::DEFAULT_K,
            dim_out: crate::embed::DEFAULT_DIM_OUT,
            clip_norm: 1.0,
            warmup_ratio: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            store_dim: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return fail("tau must be positive");
        }
        if !(self.lambda_ss >= 0.0 && self.lambda_un >= 0.0) {
            return fail("lambda_ss and lambda_un must be non-negative");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail("lr must be non-negative");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if self.k < 2 {
            return fail("K must be at least 2");
        }
        if self.dim_out == 0 || self.store_dim == 0 {
            return fail("embedding widths must be positive");
        }
        if !(self.clip_norm > 0.0) {
            return fail("clip_norm must be positive");
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return fail("warmup_ratio must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return fail("invalid Adam settings");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchProduct {
    pub context: Pooled,
    /// Indices into [`TrainingBatch::candidates`], one per candidate
    /// occurrence in the product.
    pub members: Vec<usize>,
}

/// Everything one optimization step needs, expressed as pooled store rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingBatch {
    /// Every embedded item; the lists below index into it.
    pub spans: Vec<Pooled>,
    /// Seed occurrences with their attribute label.
    pub seed_items: Vec<(usize, u32)>,
    /// Bullet candidates with their window.
    pub window_items: Vec<(usize, WindowLabel)>,
    /// Unique candidate surfaces of the batch; each span averages the
    /// surface's occurrences.
    pub candidates: Vec<usize>,
    pub products: Vec<BatchProduct>,
}

/// Inputs of the training loop.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub products: &'a [Product],
    pub occurrences: &'a [SeedOccurrence],
    pub candidates: &'a [CandidateSpan],
}

struct ProductIndex<'a> {
    occurrences: BTreeMap<&'a str, Vec<&'a SeedOccurrence>>,
    candidates: BTreeMap<&'a str, Vec<&'a CandidateSpan>>,
    labels: BTreeMap<&'a str, u32>,
}

impl<'a> ProductIndex<'a> {
    fn new(data: &TrainingData<'a>) -> Self {
        let mut occurrences: BTreeMap<&str, Vec<_>> = BTreeMap::new();
        for o in data.occurrences {
            occurrences.entry(o.loc.seq.product_id.as_str()).or_default().push(o);
        }
        let mut candidates: BTreeMap<&str, Vec<_>> = BTreeMap::new();
        for c in data.candidates {
            candidates.entry(c.loc.seq.product_id.as_str()).or_default().push(c);
        }
        let mut names: Vec<&str> = data.occurrences.iter().map(|o| o.attribute.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        let labels = names.into_iter().enumerate().map(|(i, n)| (n, i as u32)).collect();
        ProductIndex { occurrences, candidates, labels }
    }
}

fn build_batch_indexed(products: &[&Product], index: &ProductIndex<'_>, store: &EmbeddingStore) -> Result<TrainingBatch> {
    let mut batch = TrainingBatch::default();
    let mut surface_ids: BTreeMap<&str, usize> = BTreeMap::new();
    let mut surface_parts: Vec<Vec<Pooled>> = Vec::new();
    let mut members_by_product: Vec<Vec<usize>> = Vec::with_capacity(products.len());

    for (pi, product) in products.iter().enumerate() {
        for occ in index.occurrences.get(product.id.as_str()).into_iter().flatten() {
            let pooled = Pooled::mean_of(store.span_rows(&occ.loc)?);
            batch.spans.push(pooled);
            batch.seed_items.push((batch.spans.len() - 1, index.labels[occ.attribute.as_str()]));
        }
        let mut members = Vec::new();
        for cand in index.candidates.get(product.id.as_str()).into_iter().flatten() {
            let pooled = Pooled::mean_of(store.span_rows(&cand.loc)?);
            if cand.loc.seq.kind == SeqKind::Bullet {
                batch.spans.push(pooled.clone());
                let label = WindowLabel { product: pi, bullet: cand.loc.seq.index };
                batch.window_items.push((batch.spans.len() - 1, label));
            }
            let id = *surface_ids.entry(cand.surface.as_str()).or_insert_with(|| {
                surface_parts.push(Vec::new());
                surface_parts.len() - 1
            });
            surface_parts[id].push(pooled);
            members.push(id);
        }
        members_by_product.push(members);
    }

    for parts in &surface_parts {
        batch.spans.push(Pooled::average(parts));
        batch.candidates.push(batch.spans.len() - 1);
    }
    for (product, members) in products.iter().zip(members_by_product) {
        batch.products.push(BatchProduct { context: context_pooled(product, store)?, members });
    }
    Ok(batch)
}

/// Builds the batch for `products` from the full training data.
pub fn build_batch(products: &[&Product], data: &TrainingData<'_>, store: &EmbeddingStore) -> Result<TrainingBatch> {
    build_batch_indexed(products, &ProductIndex::new(data), store)
}

/// Gradients of the total loss, one buffer per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub head: Vec<f64>,
    pub attr_embeddings: Vec<f64>,
    pub w_mu: Vec<f64>,
    pub w_logvar: Vec<f64>,
    /// Present when the store is a trainable token table.
    pub store_rows: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub supervised: f64,
    pub window: f64,
    pub unsupervised: f64,
    pub grads: Gradients,
}

/// Borrowed trainable state.
#[derive(Debug, Clone, Copy)]
pub struct Params<'a> {
    pub store: &'a EmbeddingStore,
    pub head: &'a ProjectionHead,
    pub model: &'a LatentAttributeModel,
}

/// `L_su + λ_ss·L_ss + λ_un·L_un` and its gradients. `noise` holds one
/// standard-normal `K`-vector per batch product. The supervised term is
/// active only when the batch holds at least two attribute labels.
pub fn total_loss(batch: &TrainingBatch, params: Params<'_>, config: &TrainConfig, noise: &[Vec<f64>]) -> Result<LossBreakdown> {
    let Params { store, head, model } = params;
    if noise.len() != batch.products.len() {
        return Err(Error::DimensionMismatch { expected: batch.products.len(), got: noise.len() });
    }
    let projected = batch
        .spans
        .iter()
        .map(|s| Projected::forward(s, store, head))
        .collect::<Result<Vec<_>>>()?;
    let mut grad_units = vec![vec![0.0; head.dim_out]; batch.spans.len()];

    let seed_embs: Vec<Vec<f64>> = batch.seed_items.iter().map(|(s, _)| projected[*s].unit.clone()).collect();
    let seed_labels: Vec<u32> = batch.seed_items.iter().map(|(_, l)| *l).collect();
    let supervised = match supervised_contrastive_loss(&seed_embs, &seed_labels, config.tau) {
        Ok(out) => {
            for ((s, _), g) in batch.seed_items.iter().zip(&out.grads) {
                math::axpy(&mut grad_units[*s], 1.0, g);
            }
            out.loss
        }
        Err(Error::TooFewLabels) => 0.0,
        Err(e) => return Err(e),
    };

    let window_embs: Vec<Vec<f64>> = batch.window_items.iter().map(|(s, _)| projected[*s].unit.clone()).collect();
    let window_labels: Vec<WindowLabel> = batch.window_items.iter().map(|(_, w)| *w).collect();
    let window = window_contrastive_loss(&window_embs, &window_labels, config.tau)?;
    for ((s, _), g) in batch.window_items.iter().zip(&window.grads) {
        math::axpy(&mut grad_units[*s], config.lambda_ss, g);
    }

    let mut grads = Gradients {
        head: vec![0.0; head.weights.len()],
        attr_embeddings: vec![0.0; model.attr_embeddings.len()],
        w_mu: vec![0.0; model.w_mu.len()],
        w_logvar: vec![0.0; model.w_logvar.len()],
        store_rows: store.is_trainable().then(|| vec![0.0; store.rows().len()]),
    };

    let mut unsupervised = 0.0;
    if !batch.candidates.is_empty() && !batch.products.is_empty() {
        let cand_embs: Vec<Vec<f64>> = batch.candidates.iter().map(|s| projected[*s].unit.clone()).collect();
        let contexts: Vec<Vec<f64>> = batch.products.iter().map(|p| p.context.evaluate(store)).collect();
        let terms: Vec<ProductTerm<'_>> = batch
            .products
            .iter()
            .zip(&contexts)
            .zip(noise)
            .map(|((p, ctx), eps)| ProductTerm { context: ctx, members: &p.members, noise: eps })
            .collect();
        let un = unsupervised_loss(&terms, &cand_embs, model)?;
        unsupervised = un.loss;
        let lam = config.lambda_un;
        for (s, g) in batch.candidates.iter().zip(&un.grads.candidates) {
            math::axpy(&mut grad_units[*s], lam, g);
        }
        math::axpy(&mut grads.attr_embeddings, lam, &un.grads.attr_embeddings);
        math::axpy(&mut grads.w_mu, lam, &un.grads.w_mu);
        math::axpy(&mut grads.w_logvar, lam, &un.grads.w_logvar);
        if let Some(rows) = grads.store_rows.as_mut() {
            for (p, g) in batch.products.iter().zip(&un.grads.contexts) {
                let scaled: Vec<f64> = g.iter().map(|v| v * lam).collect();
                p.context.backward(&scaled, rows);
            }
        }
    }

    for ((span, proj), gu) in batch.spans.iter().zip(&projected).zip(&grad_units) {
        if gu.iter().all(|v| *v == 0.0) {
            continue;
        }
        proj.backward(span, head, gu, &mut grads.head, grads.store_rows.as_deref_mut());
    }

    let total = supervised + config.lambda_ss * window.loss + config.lambda_un * unsupervised;
    Ok(LossBreakdown { total, supervised, window: window.loss, unsupervised, grads })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_supervised: f64,
    pub mean_window: f64,
    pub mean_unsupervised: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub head: ProjectionHead,
    pub model: LatentAttributeModel,
    pub history: Vec<EpochStats>,
}

/// Mini-batch training over products.
///
/// Products are reshuffled every epoch with a seeded RNG; every batch draws
/// fresh reparameterization noise, evaluates [`total_loss`], clips the
/// global gradient norm and takes an Adam step under a linear warm-up/decay
/// schedule. When `store` is a token table its rows are trained too.
pub fn train(data: TrainingData<'_>, store: &mut EmbeddingStore, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut head = ProjectionHead::init(store.dim(), config.dim_out, rng.next_u64())?;
    let mut model = LatentAttributeModel::new(config.k, config.dim_out, store.dim(), rng.next_u64())?;
    let index = ProductIndex::new(&data);

    let mut order: Vec<usize> = (0..data.products.len()).collect();
    let steps_per_epoch = order.len().div_ceil(config.batch_size);
    let schedule = LinearSchedule::new(config.lr, config.warmup_ratio, steps_per_epoch * config.epochs);
    let mut sizes = vec![head.weights.len(), model.attr_embeddings.len(), model.w_mu.len(), model.w_logvar.len()];
    if store.is_trainable() {
        sizes.push(store.rows().len());
    }
    let mut adam = Adam::new(&sizes, config.adam_beta1, config.adam_beta2, config.adam_eps);
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 4];
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let products: Vec<&Product> = chunk.iter().map(|&i| &data.products[i]).collect();
            let batch = build_batch_indexed(&products, &index, store)?;
            let noise: Vec<Vec<f64>> = (0..products.len())
                .map(|_| (0..config.k).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            let out = total_loss(&batch, Params { store, head: &head, model: &model }, config, &noise)?;
            if !out.total.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at epoch {epoch}, step {step} (supervised {}, window {}, unsupervised {})",
                    out.supervised, out.window, out.unsupervised
                )));
            }
            let LossBreakdown { total, supervised, window, unsupervised, mut grads } = out;
            sums[0] += total;
            sums[1] += supervised;
            sums[2] += window;
            sums[3] += unsupervised;
            batches += 1;

            let lr = schedule.lr(step);
            let mut grad_groups: Vec<&mut [f64]> = vec![&mut grads.head, &mut grads.attr_embeddings, &mut grads.w_mu, &mut grads.w_logvar];
            if let Some(rows) = grads.store_rows.as_deref_mut() {
                grad_groups.push(rows);
            }
            clip_grad_norm(&mut grad_groups, config.clip_norm);
            let grad_refs: Vec<&[f64]> = grad_groups.iter().map(|g| &**g).collect();
            let mut params: Vec<&mut [f64]> =
                vec![&mut head.weights, &mut model.attr_embeddings, &mut model.w_mu, &mut model.w_logvar];
            if store.is_trainable() {
                params.push(store.rows_mut());
            }
            adam.step(&mut params, &grad_refs, lr);
            step += 1;
        }
        let n = batches.max(1) as f64;
        history.push(EpochStats {
            epoch,
            mean_loss: sums[0] / n,
            mean_supervised: sums[1] / n,
            mean_window: sums[2] / n,
            mean_unsupervised: sums[3] / n,
        });
    }
    Ok(TrainOutput { head, model, history })
}

/// Distinct attribute names carried by `occurrences`, sorted.
pub fn occurrence_labels(occurrences: &[SeedOccurrence]) -> Vec<String> {
    let mut names: Vec<String> = occurrences.iter().map(|o| o.attribute.clone()).collect();
    names.sort();
    names.dedup();
    names
}
