//! In-batch contrastive losses over unit embeddings.
//!
//! Both losses share one form. For anchor `i` with positives `P(i)` and
//! negatives `N(i)`:
//!
//! ```text
//! ℓ(i) = -1/|P(i)| Σ_{p∈P(i)} log( e^{g_i·g_p/τ} / (e^{g_i·g_p/τ} + Σ_{j∈N(i)} e^{g_i·g_j/τ}) )
//! ```
//!
//! and the loss is `Σ_i ℓ(i)`. Anchors without positives contribute nothing.
//! The positive term in the denominator keeps every term non-negative.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Loss value and `∂loss/∂g` for every input embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grads: Vec<Vec<f64>>,
}

impl LossGrad {
    fn zeros(n: usize, dim: usize) -> Self {
        LossGrad { loss: 0.0, grads: vec![vec![0.0; dim]; n] }
    }
}

fn check_embeddings(embeddings: &[Vec<f64>], tau: f64) -> Result<usize> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidConfig("temperature must be positive".into()));
    }
    let dim = embeddings.first().map_or(0, Vec::len);
    for e in embeddings {
        if e.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: e.len() });
        }
        if !math::all_finite(e) {
            return Err(Error::NonFinite("contrastive embedding".into()));
        }
    }
    Ok(dim)
}

fn info_nce<P, N>(embeddings: &[Vec<f64>], tau: f64, dim: usize, positive: P, negative: N) -> LossGrad
where
    P: Fn(usize, usize) -> bool,
    N: Fn(usize, usize) -> bool,
{
    let n = embeddings.len();
    let mut out = LossGrad::zeros(n, dim);
    for i in 0..n {
        let positives: Vec<usize> = (0..n).filter(|&j| j != i && positive(i, j)).collect();
        if positives.is_empty() {
            continue;
        }
        let negatives: Vec<usize> = (0..n).filter(|&j| j != i && negative(i, j)).collect();
        let neg_logits: Vec<f64> = negatives.iter().map(|&j| math::dot(&embeddings[i], &embeddings[j]) / tau).collect();
        let neg_lse = math::log_sum_exp(&neg_logits);
        let neg_max = neg_logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weight = 1.0 / positives.len() as f64;
        // Σ_p weight·e^{neg_max - lse_p}; each negative's gradient factor is
        // this times e^{logit_j - neg_max}.
        let mut neg_factor = 0.0;
        for &p in &positives {
            let pos_logit = math::dot(&embeddings[i], &embeddings[p]) / tau;
            let lse = log_add_exp(pos_logit, neg_lse);
            out.loss += weight * (lse - pos_logit);
            // d/d(logit_p) = q_p - 1 with logit = g_i·g_p / τ.
            let coeff = weight * (math::exp(pos_logit - lse) - 1.0) / tau;
            math::axpy(&mut out.grads[i], coeff, &embeddings[p]);
            math::axpy(&mut out.grads[p], coeff, &embeddings[i]);
            if !negatives.is_empty() {
                neg_factor += weight * math::exp(neg_max - lse);
            }
        }
        for (&j, &logit) in negatives.iter().zip(&neg_logits) {
            let coeff = neg_factor * math::exp(logit - neg_max) / tau;
            math::axpy(&mut out.grads[i], coeff, &embeddings[j]);
            math::axpy(&mut out.grads[j], coeff, &embeddings[i]);
        }
    }
    out
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + math::ln(math::exp(a - m) + math::exp(b - m))
}

/// Seed-supervised loss: positives share the anchor's attribute label,
/// negatives carry a different label.
pub fn supervised_contrastive_loss<L: Ord>(embeddings: &[Vec<f64>], labels: &[L], tau: f64) -> Result<LossGrad> {
    if embeddings.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: embeddings.len(), got: labels.len() });
    }
    let dim = check_embeddings(embeddings, tau)?;
    if labels.iter().collect::<BTreeSet<_>>().len() < 2 {
        return Err(Error::TooFewLabels);
    }
    Ok(info_nce(embeddings, tau, dim, |i, j| labels[i] == labels[j], |i, j| labels[i] != labels[j]))
}

/// Where a span sits for the window loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct WindowLabel {
    pub product: usize,
    pub bullet: u32,
}

/// Self-supervised window loss: positives share the anchor's bullet,
/// negatives come from other bullets of the same product. Products with
/// fewer than two non-empty bullets contribute zero.
pub fn window_contrastive_loss(embeddings: &[Vec<f64>], windows: &[WindowLabel], tau: f64) -> Result<LossGrad> {
    if embeddings.len() != windows.len() {
        return Err(Error::DimensionMismatch { expected: embeddings.len(), got: windows.len() });
    }
    let dim = check_embeddings(embeddings, tau)?;
    Ok(info_nce(
        embeddings,
        tau,
        dim,
        |i, j| windows[i] == windows[j],
        |i, j| windows[i].product == windows[j].product && windows[i].bullet != windows[j].bullet,
    ))
}
