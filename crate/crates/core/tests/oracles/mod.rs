//! Independent reference computations. Nothing here calls into the crate's
//! numeric code: formulas are evaluated directly, without log-sum-exp
//! tricks or shared helpers, so agreement is meaningful.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    // Box-Muller keeps this independent of the crate's sampler choice.
    (0..n)
        .map(|_| {
            let u1: f64 = rng.random_range(1e-12..1.0);
            let u2: f64 = rng.random_range(0.0..1.0);
            scale * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect()
}

pub fn unit_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v = gaussian_vec(rng, n, 1.0);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute error when both are tiny.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

pub fn flatten(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().flatten().copied().collect()
}

pub fn unflatten(flat: &[f64], dim: usize) -> Vec<Vec<f64>> {
    flat.chunks(dim).map(<[f64]>::to_vec).collect()
}

/// Contrastive loss straight from the formula: for every anchor with
/// positives, mean over positives of `-ln(e^{s_ip} / (e^{s_ip} + Σ_neg e^{s_ij}))`.
pub fn contrastive_naive(embs: &[Vec<f64>], tau: f64, pos: impl Fn(usize, usize) -> bool, neg: impl Fn(usize, usize) -> bool) -> f64 {
    let n = embs.len();
    let mut total = 0.0;
    for i in 0..n {
        let ps: Vec<usize> = (0..n).filter(|&j| j != i && pos(i, j)).collect();
        if ps.is_empty() {
            continue;
        }
        let neg_sum: f64 = (0..n).filter(|&j| j != i && neg(i, j)).map(|j| (dot(&embs[i], &embs[j]) / tau).exp()).sum();
        let mut term = 0.0;
        for &p in &ps {
            let e = (dot(&embs[i], &embs[p]) / tau).exp();
            term -= (e / (e + neg_sum)).ln();
        }
        total += term / ps.len() as f64;
    }
    total
}

/// Plain softmax without max-shifting; inputs in tests stay small.
pub fn softmax_naive(xs: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Negative ELBO recomputed from scratch. `attr` is `k × span_dim`,
/// `w_mu`/`w_lv` are `k × ctx_dim`, row-major.
pub struct LatentInstance {
    pub k: usize,
    pub span_dim: usize,
    pub ctx_dim: usize,
    pub attr: Vec<f64>,
    pub w_mu: Vec<f64>,
    pub w_lv: Vec<f64>,
    pub candidates: Vec<Vec<f64>>,
    pub contexts: Vec<Vec<f64>>,
    pub members: Vec<Vec<usize>>,
    pub noise: Vec<Vec<f64>>,
}

impl LatentInstance {
    pub fn random(rng: &mut ChaCha8Rng, k: usize, span_dim: usize, ctx_dim: usize, n_cand: usize, n_prod: usize) -> Self {
        let candidates = (0..n_cand).map(|_| unit_vec(rng, span_dim)).collect();
        let contexts = (0..n_prod).map(|_| gaussian_vec(rng, ctx_dim, 0.5)).collect();
        let members = (0..n_prod)
            .map(|_| {
                let m = rng.random_range(1..=n_cand.min(4));
                (0..m).map(|_| rng.random_range(0..n_cand)).collect()
            })
            .collect();
        let noise = (0..n_prod).map(|_| gaussian_vec(rng, k, 1.0)).collect();
        LatentInstance {
            k,
            span_dim,
            ctx_dim,
            attr: gaussian_vec(rng, k * span_dim, 0.8),
            w_mu: gaussian_vec(rng, k * ctx_dim, 0.5),
            w_lv: gaussian_vec(rng, k * ctx_dim, 0.3),
            candidates,
            contexts,
            members,
            noise,
        }
    }

    pub fn loss(&self) -> f64 {
        let (k, ds, dc) = (self.k, self.span_dim, self.ctx_dim);
        let beta: Vec<Vec<f64>> = (0..k)
            .map(|kk| {
                let scores: Vec<f64> = self.candidates.iter().map(|g| dot(&self.attr[kk * ds..(kk + 1) * ds], g)).collect();
                softmax_naive(&scores)
            })
            .collect();
        let mut total = 0.0;
        for ((ctx, members), eps) in self.contexts.iter().zip(&self.members).zip(&self.noise) {
            let mu: Vec<f64> = (0..k).map(|kk| dot(&self.w_mu[kk * dc..(kk + 1) * dc], ctx)).collect();
            let lv: Vec<f64> = (0..k).map(|kk| dot(&self.w_lv[kk * dc..(kk + 1) * dc], ctx)).collect();
            let at: Vec<f64> = (0..k).map(|kk| mu[kk] + (lv[kk] / 2.0).exp() * eps[kk]).collect();
            let alpha = softmax_naive(&at);
            for &c in members {
                let p: f64 = (0..k).map(|kk| alpha[kk] * beta[kk][c]).sum();
                total -= p.ln();
            }
            total += kl_closed_form(&mu, &lv);
        }
        total
    }
}

pub fn kl_closed_form(mu: &[f64], lv: &[f64]) -> f64 {
    mu.iter().zip(lv).map(|(m, l)| 0.5 * (l.exp() + m * m - 1.0 - l)).sum()
}

/// `∫ q(x) ln(q(x)/p(x)) dx` for one coordinate by composite Simpson's rule
/// over `μ ± 12σ`, `q = N(μ, σ²)`, `p = N(0, 1)`.
pub fn kl_numeric_1d(mu: f64, logvar: f64) -> f64 {
    let sd = (logvar / 2.0).exp();
    let (a, b) = (mu - 12.0 * sd, mu + 12.0 * sd);
    let n = 20_000;
    let h = (b - a) / n as f64;
    let norm = |x: f64, m: f64, s: f64| (-(x - m) * (x - m) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let f = |x: f64| {
        let q = norm(x, mu, sd);
        if q == 0.0 {
            0.0
        } else {
            q * (q / norm(x, 0.0, 1.0)).ln()
        }
    };
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    s * h / 3.0
}

/// KL of a diagonal Gaussian is the sum of per-coordinate KLs.
pub fn kl_numeric(mu: &[f64], lv: &[f64]) -> f64 {
    mu.iter().zip(lv).map(|(m, l)| kl_numeric_1d(*m, *l)).sum()
}

/// Brute-force pair counts over all `i < j`: (together in both, together in
/// pred only, together in gold only, apart in both).
pub fn pair_counts(pred: &[usize], gold: &[usize]) -> (u64, u64, u64, u64) {
    let (mut a, mut b, mut c, mut d) = (0, 0, 0, 0);
    for i in 0..pred.len() {
        for j in i + 1..pred.len() {
            match (pred[i] == pred[j], gold[i] == gold[j]) {
                (true, true) => a += 1,
                (true, false) => b += 1,
                (false, true) => c += 1,
                (false, false) => d += 1,
            }
        }
    }
    (a, b, c, d)
}

pub fn jaccard_oracle(pred: &[usize], gold: &[usize]) -> f64 {
    let (a, b, c, _) = pair_counts(pred, gold);
    if a + b + c == 0 {
        1.0
    } else {
        a as f64 / (a + b + c) as f64
    }
}

/// Hubert–Arabie ARI in its pair-count form
/// `2(ad − bc) / ((a+b)(b+d) + (a+c)(c+d))`; identical trivial partitions
/// make the denominator vanish and score 1.
pub fn ari_oracle(pred: &[usize], gold: &[usize]) -> f64 {
    let (a, b, c, d) = pair_counts(pred, gold);
    let (a, b, c, d) = (a as f64, b as f64, c as f64, d as f64);
    let den = (a + b) * (b + d) + (a + c) * (c + d);
    if den == 0.0 {
        1.0
    } else {
        2.0 * (a * d - b * c) / den
    }
}

fn probs(labels: &[usize]) -> BTreeMap<usize, f64> {
    let mut m = BTreeMap::new();
    for &l in labels {
        *m.entry(l).or_insert(0.0) += 1.0 / labels.len() as f64;
    }
    m
}

/// Entropies and mutual information from the joint distribution.
pub fn nmi_oracle(pred: &[usize], gold: &[usize]) -> f64 {
    let pp = probs(pred);
    let pg = probs(gold);
    let joint = probs(&pred.iter().zip(gold).map(|(a, b)| a * 100 + b).collect::<Vec<_>>());
    let h = |m: &BTreeMap<usize, f64>| -m.values().map(|p| p * p.ln()).sum::<f64>();
    let (hp, hg) = (h(&pp), h(&pg));
    if hp.abs() < 1e-15 && hg.abs() < 1e-15 {
        return 1.0;
    }
    if hp.abs() < 1e-15 || hg.abs() < 1e-15 {
        return 0.0;
    }
    let mi: f64 = joint.iter().map(|(&ab, &p)| p * (p / (pp[&(ab / 100)] * pg[&(ab % 100)])).ln()).sum();
    mi / (hp * hg).sqrt()
}

/// Every label vector of length `n` over `labels` symbols.
pub fn all_label_vectors(n: usize, labels: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..labels).map(move |l| {
                    let mut w = v.clone();
                    w.push(l);
                    w
                })
            })
            .collect();
    }
    out
}

/// Textbook DBSCAN on cosine distance: find cores, then grow clusters
/// from cores in index order by repeated full scans until closure.
/// Returns per-point cluster ids (`None` = noise).
pub fn dbscan_reference(points: &[Vec<f64>], eps: f64, min_samples: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let cos = |a: &[f64], b: &[f64]| {
        let na = dot(a, a).sqrt();
        let nb = dot(b, b).sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot(a, b) / (na * nb)
        }
    };
    let near = |i: usize, j: usize| 1.0 - cos(&points[i], &points[j]) <= eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_samples).collect();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    for seed in 0..n {
        if !core[seed] || label[seed].is_some() {
            continue;
        }
        label[seed] = Some(next);
        loop {
            let mut changed = false;
            for i in 0..n {
                if label[i] == Some(next) && core[i] {
                    for j in 0..n {
                        if label[j].is_none() && near(i, j) {
                            label[j] = Some(next);
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        next += 1;
    }
    label
}

/// Canonical form of a partition: each group sorted, groups sorted.
pub fn canonical_partition(groups: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut g: Vec<Vec<usize>> = groups
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.sort_unstable();
            c
        })
        .collect();
    g.sort();
    g
}

pub fn partition_from_labels(labels: &[Option<usize>]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut noise = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match l {
            Some(c) => groups.entry(*c).or_default().push(i),
            None => noise.push(i),
        }
    }
    (canonical_partition(&groups.into_values().collect::<Vec<_>>()), noise)
}

/// Random clustered points on the unit sphere: a few tight blobs plus
/// scattered noise, so every DBSCAN outcome shows up.
pub fn blob_points(rng: &mut ChaCha8Rng, max_points: usize, dim: usize) -> Vec<Vec<f64>> {
    let n = rng.random_range(0..=max_points);
    let centers: Vec<Vec<f64>> = (0..rng.random_range(1..=4)).map(|_| unit_vec(rng, dim)).collect();
    (0..n)
        .map(|_| {
            if rng.random_bool(0.2) {
                unit_vec(rng, dim)
            } else {
                let c = &centers[rng.random_range(0..centers.len())];
                let spread = rng.random_range(0.02..0.25);
                let jitter = gaussian_vec(rng, dim, spread);
                c.iter().zip(jitter).map(|(a, b)| a + b).collect()
            }
        })
        .collect()
}

/// Random orthonormal matrix by Gram–Schmidt on Gaussian columns.
pub fn random_rotation(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while basis.len() < dim {
        let mut v = gaussian_vec(rng, dim, 1.0);
        for b in &basis {
            let p = dot(&v, b);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= p * y;
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-6 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

pub fn rotate(r: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    r.iter().map(|row| dot(row, v)).collect()
}
