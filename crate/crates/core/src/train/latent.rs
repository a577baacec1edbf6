//! Latent attribute model.
//!
//! Each product gets a Gaussian posterior over `K` latent attributes,
//! predicted linearly from its context vector. A reparameterized sample is
//! softmaxed into the product-to-attribute mix `α`. Each latent attribute
//! has an embedding `h_k`; softmax of `h_k·g_c` over the batch candidates
//! gives the attribute-to-span distribution `β`. The loss is the negative
//! ELBO: `Σ_p ( -Σ_{c∈V(p)} log Σ_k α_k β_kc + KL(q_p ‖ N(0, I)) )`.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::math;

pub const DEFAULT_K: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentAttributeModel {
    pub k: usize,
    pub span_dim: usize,
    pub context_dim: usize,
    /// `k × span_dim`, row `k` is `h_k`.
    pub attr_embeddings: Vec<f64>,
    /// `k × context_dim`.
    pub w_mu: Vec<f64>,
    /// `k × context_dim`, predicts log-variance.
    pub w_logvar: Vec<f64>,
}

impl LatentAttributeModel {
    /// Small Gaussian initialisation (std 0.1 for `h_k`, 0.01 for the
    /// posterior weights).
    pub fn new(k: usize, span_dim: usize, context_dim: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidConfig("latent attribute count must be at least 2".into()));
        }
        if span_dim == 0 || context_dim == 0 {
            return Err(Error::InvalidConfig("latent model widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let attr = Normal::new(0.0, 0.1).expect("valid std");
        let post = Normal::new(0.0, 0.01).expect("valid std");
        let attr_embeddings = (0..k * span_dim).map(|_| attr.sample(&mut rng)).collect();
        let w_mu = (0..k * context_dim).map(|_| post.sample(&mut rng)).collect();
        let w_logvar = (0..k * context_dim).map(|_| post.sample(&mut rng)).collect();
        Ok(LatentAttributeModel { k, span_dim, context_dim, attr_embeddings, w_mu, w_logvar })
    }

    pub fn attr(&self, k: usize) -> &[f64] {
        &self.attr_embeddings[k * self.span_dim..(k + 1) * self.span_dim]
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("latent model has no attributes".into()));
        }
        let expect = |len: usize, want: usize| {
            if len == want {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { expected: want, got: len })
            }
        };
        expect(self.attr_embeddings.len(), self.k * self.span_dim)?;
        expect(self.w_mu.len(), self.k * self.context_dim)?;
        expect(self.w_logvar.len(), self.k * self.context_dim)?;
        if !(math::all_finite(&self.attr_embeddings) && math::all_finite(&self.w_mu) && math::all_finite(&self.w_logvar)) {
            return Err(Error::NonFinite("latent model parameters".into()));
        }
        Ok(())
    }

    fn posterior(&self, context: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.context_dim;
        let mu = (0..self.k).map(|k| math::dot(&self.w_mu[k * d..(k + 1) * d], context)).collect();
        let logvar = (0..self.k).map(|k| math::dot(&self.w_logvar[k * d..(k + 1) * d], context)).collect();
        (mu, logvar)
    }

    /// Row-wise log-softmax of `h_k·g_c`, `k × |C|`.
    fn log_beta(&self, candidates: &[Vec<f64>]) -> Vec<Vec<f64>> {
        (0..self.k)
            .map(|k| {
                let scores: Vec<f64> = candidates.iter().map(|g| math::dot(self.attr(k), g)).collect();
                math::log_softmax(&scores)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    pub alpha_tilde: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `k × |C|`, rows sum to one.
    pub beta: Vec<Vec<f64>>,
}

impl LatentState {
    /// `P(c|p) = Σ_k α_k β_kc` for every candidate.
    pub fn product_to_span(&self) -> Vec<f64> {
        let n = self.beta.first().map_or(0, Vec::len);
        let mut out = vec![0.0; n];
        for (a, row) in self.alpha.iter().zip(&self.beta) {
            math::axpy(&mut out, *a, row);
        }
        out
    }
}

fn check_inputs(context: &[f64], model: &LatentAttributeModel, candidates: &[Vec<f64>], noise: Option<&[f64]>) -> Result<()> {
    model.validate()?;
    if context.len() != model.context_dim {
        return Err(Error::DimensionMismatch { expected: model.context_dim, got: context.len() });
    }
    if !math::all_finite(context) {
        return Err(Error::NonFinite("product context".into()));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("candidate set is empty".into()));
    }
    for g in candidates {
        if g.len() != model.span_dim {
            return Err(Error::DimensionMismatch { expected: model.span_dim, got: g.len() });
        }
        if !math::all_finite(g) {
            return Err(Error::NonFinite("candidate embedding".into()));
        }
    }
    if let Some(eps) = noise {
        if eps.len() != model.k {
            return Err(Error::DimensionMismatch { expected: model.k, got: eps.len() });
        }
        if !math::all_finite(eps) {
            return Err(Error::NonFinite("noise".into()));
        }
    }
    Ok(())
}

fn sample_alpha_tilde(mu: &[f64], logvar: &[f64], noise: Option<&[f64]>) -> Vec<f64> {
    match noise {
        Some(eps) => mu
            .iter()
            .zip(logvar)
            .zip(eps)
            .map(|((m, lv), e)| m + math::exp(0.5 * lv) * e)
            .collect(),
        None => mu.to_vec(),
    }
}

/// Posterior, reparameterized sample (`noise = None` means zero noise),
/// attribute mix and attribute-to-span distributions for one product.
pub fn latent_forward(
    context: &[f64],
    model: &LatentAttributeModel,
    candidates: &[Vec<f64>],
    noise: Option<&[f64]>,
) -> Result<LatentState> {
    check_inputs(context, model, candidates, noise)?;
    let (mu, logvar) = model.posterior(context);
    let alpha_tilde = sample_alpha_tilde(&mu, &logvar, noise);
    if !math::all_finite(&alpha_tilde) {
        return Err(Error::NonFinite("sampled attribute logits".into()));
    }
    let alpha = math::softmax(&alpha_tilde);
    let beta = model
        .log_beta(candidates)
        .into_iter()
        .map(|row| row.into_iter().map(math::exp).collect())
        .collect();
    Ok(LatentState { mu, logvar, alpha_tilde, alpha, beta })
}

/// `KL(N(mu, diag(exp(logvar))) ‖ N(0, I))`.
pub fn kl_standard_normal(mu: &[f64], logvar: &[f64]) -> Result<f64> {
    if mu.len() != logvar.len() {
        return Err(Error::DimensionMismatch { expected: mu.len(), got: logvar.len() });
    }
    Ok(0.5 * mu.iter().zip(logvar).map(|(m, lv)| math::exp(*lv) + m * m - 1.0 - lv).sum::<f64>())
}

/// One product's share of the unsupervised loss.
#[derive(Debug, Clone, Copy)]
pub struct ProductTerm<'a> {
    pub context: &'a [f64],
    /// Indices into the batch candidate set, repeated per occurrence.
    pub members: &'a [usize],
    /// Standard-normal draw for the reparameterization, length `k`.
    pub noise: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrads {
    pub attr_embeddings: Vec<f64>,
    pub w_mu: Vec<f64>,
    pub w_logvar: Vec<f64>,
    pub candidates: Vec<Vec<f64>>,
    pub contexts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnsupervisedLoss {
    pub loss: f64,
    pub reconstruction: f64,
    pub kl: f64,
    pub grads: LatentGrads,
}

/// Negative ELBO over a batch with analytic gradients for every parameter,
/// every candidate embedding and every product context.
pub fn unsupervised_loss(
    products: &[ProductTerm<'_>],
    candidates: &[Vec<f64>],
    model: &LatentAttributeModel,
) -> Result<UnsupervisedLoss> {
    let k_count = model.k;
    let dctx = model.context_dim;
    for p in products {
        check_inputs(p.context, model, candidates, Some(p.noise))?;
        if let Some(&bad) = p.members.iter().find(|&&c| c >= candidates.len()) {
            return Err(Error::InvalidConfig(alloc::format!("product member {bad} is not in the candidate set")));
        }
    }
    let log_beta = if products.is_empty() { Vec::new() } else { model.log_beta(candidates) };

    let mut grads = LatentGrads {
        attr_embeddings: vec![0.0; model.attr_embeddings.len()],
        w_mu: vec![0.0; model.w_mu.len()],
        w_logvar: vec![0.0; model.w_logvar.len()],
        candidates: vec![vec![0.0; model.span_dim]; candidates.len()],
        contexts: Vec::with_capacity(products.len()),
    };
    // ∂L/∂s_kc for s_kc = h_k·g_c: direct part per (k, member), plus a
    // softmax-normalizer part proportional to β_kc accumulated in `resp_total`.
    let mut grad_scores = vec![vec![0.0; candidates.len()]; k_count];
    let mut resp_total = vec![0.0; k_count];
    let (mut reconstruction, mut kl_total) = (0.0, 0.0);

    for (pi, p) in products.iter().enumerate() {
        let (mu, logvar) = model.posterior(p.context);
        let alpha_tilde = sample_alpha_tilde(&mu, &logvar, Some(p.noise));
        if !math::all_finite(&alpha_tilde) {
            return Err(Error::NonFinite("sampled attribute logits".into()));
        }
        let log_alpha = math::log_softmax(&alpha_tilde);
        let alpha: Vec<f64> = log_alpha.iter().map(|v| math::exp(*v)).collect();

        let mut grad_alpha_tilde = vec![0.0; k_count];
        let mut joint = vec![0.0; k_count];
        for &c in p.members {
            for k in 0..k_count {
                joint[k] = log_alpha[k] + log_beta[k][c];
            }
            let log_p = math::log_sum_exp(&joint);
            if !log_p.is_finite() {
                return Err(Error::ZeroProbability { product: pi, span: c });
            }
            reconstruction -= log_p;
            for k in 0..k_count {
                let r = math::exp(joint[k] - log_p);
                grad_alpha_tilde[k] += alpha[k] - r;
                grad_scores[k][c] -= r;
                resp_total[k] += r;
            }
        }

        kl_total += kl_standard_normal(&mu, &logvar)?;
        let mut grad_mu = grad_alpha_tilde.clone();
        let mut grad_logvar = vec![0.0; k_count];
        for k in 0..k_count {
            let sd = math::exp(0.5 * logvar[k]);
            grad_logvar[k] = grad_alpha_tilde[k] * p.noise[k] * 0.5 * sd + 0.5 * (sd * sd - 1.0);
            grad_mu[k] += mu[k];
        }

        let mut grad_ctx = vec![0.0; dctx];
        for k in 0..k_count {
            let row = k * dctx..(k + 1) * dctx;
            math::axpy(&mut grads.w_mu[row.clone()], grad_mu[k], p.context);
            math::axpy(&mut grads.w_logvar[row.clone()], grad_logvar[k], p.context);
            math::axpy(&mut grad_ctx, grad_mu[k], &model.w_mu[row.clone()]);
            math::axpy(&mut grad_ctx, grad_logvar[k], &model.w_logvar[row]);
        }
        grads.contexts.push(grad_ctx);
    }

    for k in 0..k_count {
        if resp_total[k] != 0.0 {
            for (c, lb) in log_beta[k].iter().enumerate() {
                grad_scores[k][c] += resp_total[k] * math::exp(*lb);
            }
        }
        let dspan = model.span_dim;
        for (c, g) in candidates.iter().enumerate() {
            let ds = grad_scores[k][c];
            if ds != 0.0 {
                math::axpy(&mut grads.attr_embeddings[k * dspan..(k + 1) * dspan], ds, g);
                math::axpy(&mut grads.candidates[c], ds, model.attr(k));
            }
        }
    }

    Ok(UnsupervisedLoss { loss: reconstruction + kl_total, reconstruction, kl: kl_total, grads })
}

/// Top `top_m` candidates per latent attribute by `h_k·g_c`, best first.
pub fn top_spans(model: &LatentAttributeModel, candidates: &[Vec<f64>], top_m: usize) -> Vec<Vec<(usize, f64)>> {
    (0..model.k)
        .map(|k| {
            let mut scored: Vec<(usize, f64)> =
                candidates.iter().enumerate().map(|(c, g)| (c, math::dot(model.attr(k), g))).collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            scored.truncate(top_m);
            scored
        })
        .collect()
}

/// Largest cosine similarity between two distinct attribute embeddings; a
/// value near 1 means latent attributes have collapsed onto each other.
pub fn max_attribute_cosine(model: &LatentAttributeModel) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for a in 0..model.k {
        for b in a + 1..model.k {
            best = best.max(math::cosine(model.attr(a), model.attr(b)));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(k: usize) -> LatentAttributeModel {
        LatentAttributeModel {
            k,
            span_dim: 2,
            context_dim: 2,
            attr_embeddings: (0..k * 2).map(|i| 0.3 * i as f64 - 0.2).collect(),
            w_mu: (0..k * 2).map(|i| 0.1 * i as f64).collect(),
            w_logvar: (0..k * 2).map(|i| -0.05 * i as f64).collect(),
        }
    }

    #[test]
    fn zero_noise_sample_is_the_mean() {
        let s = latent_forward(&[0.5, -1.0], &model(3), &[vec![1.0, 0.0], vec![0.0, 1.0]], None).unwrap();
        assert_eq!(s.alpha_tilde, s.mu);
        let s0 = latent_forward(&[0.5, -1.0], &model(3), &[vec![1.0, 0.0]], Some(&[0.0; 3])).unwrap();
        assert_eq!(s0.alpha_tilde, s0.mu);
    }

    #[test]
    fn constant_scores_give_uniform_beta() {
        let mut m = model(2);
        m.attr_embeddings[0] = 0.0;
        m.attr_embeddings[1] = 0.0;
        let c = [vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8]];
        let s = latent_forward(&[1.0, 1.0], &m, &c, None).unwrap();
        for b in &s.beta[0] {
            assert!((b - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_candidates_and_non_finite_inputs_fail() {
        assert!(latent_forward(&[1.0, 1.0], &model(2), &[], None).is_err());
        assert!(matches!(
            latent_forward(&[f64::NAN, 1.0], &model(2), &[vec![1.0, 0.0]], None),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn kl_is_zero_at_prior_and_half_at_unit_mean() {
        assert_eq!(kl_standard_normal(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!((kl_standard_normal(&[1.0], &[0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(kl_standard_normal(&[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn single_attribute_marginal_is_beta() {
        let m = model(1);
        let c = [vec![1.0, 0.0], vec![0.0, 1.0]];
        let s = latent_forward(&[0.3, 0.4], &m, &c, Some(&[0.7])).unwrap();
        assert_eq!(s.alpha, vec![1.0]);
        let p = s.product_to_span();
        for (a, b) in p.iter().zip(&s.beta[0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let members = [0usize, 1];
        let term = ProductTerm { context: &[0.3, 0.4], members: &members, noise: &[0.7] };
        let out = unsupervised_loss(&[term], &c, &m).unwrap();
        let expected_rec = -(math::ln(s.beta[0][0]) + math::ln(s.beta[0][1]));
        assert!((out.reconstruction - expected_rec).abs() < 1e-12);
        assert!((out.kl - kl_standard_normal(&s.mu, &s.logvar).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn top_spans_truncates_to_candidate_count() {
        let m = model(2);
        let tops = top_spans(&m, &[vec![1.0, 0.0], vec![0.0, 1.0]], 5);
        assert!(tops.iter().all(|row| row.len() == 2));
    }
}
