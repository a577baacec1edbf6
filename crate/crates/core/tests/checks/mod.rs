//! Measured agreement between the crate and the oracles. Each check
//! returns the worst error it saw so callers can assert or report.
#![allow(dead_code)]

use amacer_core::corpus::{SeqKey, SpanLoc, TokenSequence};
use amacer_core::eval::{align_spans, ari, nmi, pair_jaccard, MatchMode};
use amacer_core::grouping::{adaptive_threshold, dbscan};
use amacer_core::posgen::{compact_pos, generate_candidates, PatternSet, PosPattern, Stopwords};
use amacer_core::train::{
    kl_standard_normal, latent_forward, supervised_contrastive_loss, unsupervised_loss, window_contrastive_loss,
    LatentAttributeModel, ProductTerm, WindowLabel,
};
use rand::Rng;

use crate::oracles::{self, *};

pub const FD_STEP: f64 = 1e-4;
pub const TAU: f64 = 0.1;

#[derive(Debug, Clone, Copy, Default)]
pub struct GradErrors {
    pub supervised: f64,
    pub window: f64,
    pub unsupervised: f64,
    /// Largest gap between crate loss values and the naive recomputation.
    pub value: f64,
}

impl GradErrors {
    pub fn worst_grad(&self) -> f64 {
        self.supervised.max(self.window).max(self.unsupervised)
    }

    pub fn merge(self, o: GradErrors) -> GradErrors {
        GradErrors {
            supervised: self.supervised.max(o.supervised),
            window: self.window.max(o.window),
            unsupervised: self.unsupervised.max(o.unsupervised),
            value: self.value.max(o.value),
        }
    }
}

/// One random instance of each loss (dim ≤ 16, K ≤ 5, |C| ≤ 10).
pub fn gradient_instance(seed: u64) -> GradErrors {
    let mut r = rng(seed);
    let dim = r.random_range(2..=16);
    let mut out = GradErrors::default();

    // Supervised: 4..=10 items over 2..=3 labels, both labels present.
    let n = r.random_range(4..=10);
    let n_labels = r.random_range(2..=3u32);
    let labels: Vec<u32> = (0..n).map(|i| if i < 2 { i as u32 } else { r.random_range(0..n_labels) }).collect();
    let embs: Vec<Vec<f64>> = (0..n).map(|_| unit_vec(&mut r, dim)).collect();
    let got = supervised_contrastive_loss(&embs, &labels, TAU).expect("two labels present");
    let oracle = |x: &[f64]| contrastive_naive(&unflatten(x, dim), TAU, |i, j| labels[i] == labels[j], |i, j| labels[i] != labels[j]);
    out.value = out.value.max((got.loss - oracle(&flatten(&embs))).abs());
    out.supervised = rel_err(&flatten(&got.grads), &central_diff(oracle, &flatten(&embs), FD_STEP));

    // Window: 1..=2 products with 2..=3 bullets of 1..=2 spans each.
    let mut windows = Vec::new();
    for p in 0..r.random_range(1..=2) {
        for b in 0..r.random_range(2..=3u32) {
            for _ in 0..r.random_range(1..=2) {
                windows.push(WindowLabel { product: p, bullet: b });
            }
        }
    }
    let embs: Vec<Vec<f64>> = (0..windows.len()).map(|_| unit_vec(&mut r, dim)).collect();
    let got = window_contrastive_loss(&embs, &windows, TAU).unwrap();
    let oracle = |x: &[f64]| {
        contrastive_naive(
            &unflatten(x, dim),
            TAU,
            |i, j| windows[i] == windows[j],
            |i, j| windows[i].product == windows[j].product && windows[i].bullet != windows[j].bullet,
        )
    };
    out.value = out.value.max((got.loss - oracle(&flatten(&embs))).abs());
    out.window = rel_err(&flatten(&got.grads), &central_diff(oracle, &flatten(&embs), FD_STEP));

    // Unsupervised: K ≤ 5, |C| ≤ 10.
    let k = r.random_range(2..=5);
    let ctx_dim = r.random_range(2..=8);
    let n_cand = r.random_range(2..=10);
    let n_prod = r.random_range(1..=3);
    let inst = LatentInstance::random(&mut r, k, dim, ctx_dim, n_cand, n_prod);
    let (analytic, value) = unsupervised_analytic(&inst);
    out.value = out.value.max((value - inst.loss()).abs());
    let numeric = central_diff(|x| with_params(&inst, x).loss(), &latent_params(&inst), FD_STEP);
    out.unsupervised = rel_err(&analytic, &numeric);
    out
}

fn latent_params(inst: &LatentInstance) -> Vec<f64> {
    let mut x = inst.attr.clone();
    x.extend(&inst.w_mu);
    x.extend(&inst.w_lv);
    x.extend(flatten(&inst.candidates));
    x.extend(flatten(&inst.contexts));
    x
}

fn with_params(inst: &LatentInstance, x: &[f64]) -> LatentInstance {
    let (k, ds, dc) = (inst.k, inst.span_dim, inst.ctx_dim);
    let mut at = 0;
    let mut take = |n: usize| {
        let s = x[at..at + n].to_vec();
        at += n;
        s
    };
    LatentInstance {
        k,
        span_dim: ds,
        ctx_dim: dc,
        attr: take(k * ds),
        w_mu: take(k * dc),
        w_lv: take(k * dc),
        candidates: unflatten(&take(inst.candidates.len() * ds), ds),
        contexts: unflatten(&take(inst.contexts.len() * dc), dc),
        members: inst.members.clone(),
        noise: inst.noise.clone(),
    }
}

fn model_of(inst: &LatentInstance) -> LatentAttributeModel {
    LatentAttributeModel {
        k: inst.k,
        span_dim: inst.span_dim,
        context_dim: inst.ctx_dim,
        attr_embeddings: inst.attr.clone(),
        w_mu: inst.w_mu.clone(),
        w_logvar: inst.w_lv.clone(),
    }
}

/// Crate gradients in [`latent_params`] order, and the crate loss.
fn unsupervised_analytic(inst: &LatentInstance) -> (Vec<f64>, f64) {
    let model = model_of(inst);
    let terms: Vec<ProductTerm<'_>> = inst
        .contexts
        .iter()
        .zip(&inst.members)
        .zip(&inst.noise)
        .map(|((c, m), e)| ProductTerm { context: c, members: m, noise: e })
        .collect();
    let out = unsupervised_loss(&terms, &inst.candidates, &model).unwrap();
    let mut g = out.grads.attr_embeddings.clone();
    g.extend(&out.grads.w_mu);
    g.extend(&out.grads.w_logvar);
    g.extend(flatten(&out.grads.candidates));
    g.extend(flatten(&out.grads.contexts));
    (g, out.loss)
}

/// Worst deviation from one of `Σα`, every `Σ_c β_kc`, and `Σ_c P(c|p)`
/// for one random forward pass.
pub fn normalization_instance(seed: u64) -> f64 {
    let mut r = rng(seed);
    let k = r.random_range(2..=8);
    let dim = r.random_range(2..=16);
    let ctx_dim = r.random_range(2..=16);
    let n_cand = r.random_range(1..=30);
    let inst = LatentInstance::random(&mut r, k, dim, ctx_dim, n_cand, 1);
    let model = model_of(&inst);
    let noise = r.random_bool(0.5).then(|| inst.noise[0].clone());
    let state = latent_forward(&inst.contexts[0], &model, &inst.candidates, noise.as_deref()).unwrap();
    let mut worst = (state.alpha.iter().sum::<f64>() - 1.0).abs();
    for row in &state.beta {
        worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
    }
    worst.max((state.product_to_span().iter().sum::<f64>() - 1.0).abs())
}

/// `|closed form − numeric integral|` for one random `(mu, logvar)` pair.
pub fn kl_instance(seed: u64) -> f64 {
    let mut r = rng(seed);
    let k = r.random_range(1..=5);
    let mu: Vec<f64> = (0..k).map(|_| r.random_range(-2.0..2.0)).collect();
    let lv: Vec<f64> = (0..k).map(|_| r.random_range(-2.0..1.5)).collect();
    (kl_standard_normal(&mu, &lv).unwrap() - kl_numeric(&mu, &lv)).abs()
}

/// Worst disagreement of Jaccard/ARI/NMI with the pair-counting and
/// entropy oracles over every pair of label vectors up to `max_len`, and
/// whether identical partitions always scored 1.
pub fn metric_oracle_sweep(max_len: usize, labels: usize) -> (f64, bool) {
    let mut worst: f64 = 0.0;
    let mut identical_ok = true;
    for n in 0..=max_len {
        let vectors = all_label_vectors(n, labels);
        for p in &vectors {
            for g in &vectors {
                let j = pair_jaccard(p, g).unwrap();
                let a = ari(p, g).unwrap();
                let m = nmi(p, g).unwrap();
                worst = worst
                    .max((j - jaccard_oracle(p, g)).abs())
                    .max((a - ari_oracle(p, g)).abs())
                    .max((m - nmi_oracle(p, g)).abs());
                if p == g && (j != 1.0 || a != 1.0 || (m - 1.0).abs() > 1e-12) {
                    identical_ok = false;
                }
            }
        }
    }
    (worst, identical_ok)
}

/// Whether the crate's DBSCAN partition and noise set equal the reference
/// on one seeded point set.
pub fn dbscan_instance(seed: u64) -> bool {
    let mut r = rng(seed);
    let dim = r.random_range(2..=8);
    let points = blob_points(&mut r, 50, dim);
    let eps = r.random_range(0.005..0.15);
    let min_samples = r.random_range(1..=6);
    let got = dbscan(&points, eps, min_samples);
    let (want_groups, want_noise) = partition_from_labels(&dbscan_reference(&points, eps, min_samples));
    let mut noise = got.noise.clone();
    noise.sort_unstable();
    oracles::canonical_partition(&got.clusters) == want_groups && noise == want_noise
}

/// Threshold for two support vectors with cosine 0.9 at `δ = 0.8`.
pub fn hand_threshold() -> f64 {
    let theta = 0.9f64.acos();
    let support = vec![vec![1.0, 0.0], vec![theta.cos(), theta.sin()]];
    adaptive_threshold(&support, 0.8)
}

fn sequence(tokens: &[&str], tags: &[&str]) -> TokenSequence {
    TokenSequence::new(
        SeqKey::bullet("p", 0),
        tokens.iter().map(|t| t.to_string()).collect(),
        tags.iter().map(|t| t.to_string()).collect(),
    )
    .unwrap()
}

/// Documented pattern examples: `(pattern, token tags, tokens, admitted)`.
pub const PATTERN_EXAMPLES: &[(&[&str], &[&str], &[&str], bool)] = &[
    (&["ADJ", "NOUN"], &["ADJ", "ADJ", "NOUN"], &["healthy", "clean", "water"], true),
    (&["ADJ", "CCONJ", "ADJ", "NOUN"], &["ADJ", "CCONJ", "ADJ", "NOUN"], &["sweet", "and", "spicy", "taste"], true),
    (&["VERB", "ADJ", "NOUN"], &["VERB", "ADJ", "NOUN", "NOUN"], &["promotes", "healthy", "liver", "function"], true),
    (&["VERB", "ADJ", "ADP"], &["VERB", "ADJ", "ADP"], &["are", "available", "during"], false),
    (&["NOUN", "ADV", "DET", "NOUN"], &["NOUN", "ADV", "DET", "NOUN"], &["freshness", "so", "every", "cup"], false),
];

/// Compaction example plus every pattern example against a pattern set
/// holding the valid patterns; true when all behave.
pub fn pos_pipeline_ok() -> bool {
    if compact_pos(&["ADJ", "ADJ", "NOUN"]) != vec!["ADJ", "NOUN"] {
        return false;
    }
    let valid: Vec<PosPattern> = PATTERN_EXAMPLES
        .iter()
        .filter(|e| e.3)
        .map(|(pattern, _, _, _)| PosPattern { tags: pattern.iter().map(|t| t.to_string()).collect(), support: 2 })
        .collect();
    let set = PatternSet::new(&valid);
    let stop = Stopwords::english();
    PATTERN_EXAMPLES.iter().all(|(pattern, tags, tokens, admit)| {
        let seq = sequence(tokens, tags);
        let compacts = compact_pos(&seq.pos) == pattern.iter().map(|t| t.to_string()).collect::<Vec<_>>();
        let full = generate_candidates(&seq, &set, &stop, 8).iter().any(|c| c.loc.start == 0 && c.loc.end == tokens.len());
        compacts && full == *admit
    })
}

/// `(exactly half overlaps, more than half overlaps)` match results.
pub fn partial_boundary() -> (bool, bool) {
    let loc = |s, e| SpanLoc::new(SeqKey::title("p"), s, e);
    let half = align_spans(&[loc(3, 7)], &[loc(5, 9)], MatchMode::Partial).pairs.len() == 1;
    let more = align_spans(&[loc(4, 8)], &[loc(5, 9)], MatchMode::Partial).pairs.len() == 1;
    (half, more)
}
