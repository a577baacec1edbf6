//! Scoring predicted attribute clusters against gold spans.
//!
//! Predicted occurrences are aligned to gold spans (exact boundaries, or
//! partial: more than half of the predicted tokens inside the gold span).
//! Jaccard, ARI and NMI compare predicted cluster labels with gold types on
//! the aligned items; recall is the fraction of gold spans covered. Their
//! combination is the pseudo-F1.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{GoldAnnotation, SeqKind, SpanLoc};
use crate::error::{Error, Result};
use crate::grouping::AttributeCluster;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum MatchMode {
    Exact,
    Partial,
}

/// One-to-one pairing of predicted and gold spans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub mode: MatchMode,
    /// `(predicted index, gold index)`, sorted by predicted index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_pred: Vec<usize>,
    pub unmatched_gold: Vec<usize>,
}

/// Aligns predicted spans to gold spans.
///
/// Exact mode pairs identical boundaries. Partial mode admits a pair when
/// the overlap is strictly more than half the predicted span's length, then
/// matches greedily by descending overlap fraction (ties: earlier gold
/// start).
pub fn align_spans(pred: &[SpanLoc], gold: &[SpanLoc], mode: MatchMode) -> Alignment {
    let mut gold_by_seq: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    for (gi, g) in gold.iter().enumerate() {
        gold_by_seq.entry(&g.seq).or_default().push(gi);
    }
    // (overlap, pred len, pred, gold)
    let mut options: Vec<(usize, usize, usize, usize)> = Vec::new();
    for (pi, p) in pred.iter().enumerate() {
        for &gi in gold_by_seq.get(&p.seq).into_iter().flatten() {
            let g = &gold[gi];
            let admitted = match mode {
                MatchMode::Exact => p.start == g.start && p.end == g.end,
                MatchMode::Partial => 2 * p.overlap(g) > p.len(),
            };
            if admitted {
                options.push((p.overlap(g), p.len(), pi, gi));
            }
        }
    }
    options.sort_by(|a, b| {
        // a.0/a.1 > b.0/b.1  ⇔  a.0·b.1 > b.0·a.1
        (b.0 * a.1)
            .cmp(&(a.0 * b.1))
            .then_with(|| gold[a.3].start.cmp(&gold[b.3].start))
            .then(a.3.cmp(&b.3))
            .then(a.2.cmp(&b.2))
    });
    let mut pred_used = alloc::vec![false; pred.len()];
    let mut gold_used = alloc::vec![false; gold.len()];
    let mut pairs = Vec::new();
    for (_, _, pi, gi) in options {
        if !pred_used[pi] && !gold_used[gi] {
            pred_used[pi] = true;
            gold_used[gi] = true;
            pairs.push((pi, gi));
        }
    }
    pairs.sort_unstable();
    Alignment {
        mode,
        pairs,
        unmatched_pred: (0..pred.len()).filter(|&i| !pred_used[i]).collect(),
        unmatched_gold: (0..gold.len()).filter(|&i| !gold_used[i]).collect(),
    }
}

struct Contingency {
    n: usize,
    cells: BTreeMap<(usize, usize), usize>,
    pred_sizes: Vec<usize>,
    gold_sizes: Vec<usize>,
}

fn dense_ids<L: Ord>(labels: &[L]) -> (Vec<usize>, usize) {
    let mut ids: BTreeMap<&L, usize> = BTreeMap::new();
    for l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

fn contingency<A: Ord, B: Ord>(pred: &[A], gold: &[B]) -> Result<Contingency> {
    if pred.len() != gold.len() {
        return Err(Error::DimensionMismatch { expected: gold.len(), got: pred.len() });
    }
    let (p, np) = dense_ids(pred);
    let (g, ng) = dense_ids(gold);
    let mut c = Contingency { n: pred.len(), cells: BTreeMap::new(), pred_sizes: alloc::vec![0; np], gold_sizes: alloc::vec![0; ng] };
    for (&a, &b) in p.iter().zip(&g) {
        *c.cells.entry((a, b)).or_insert(0) += 1;
        c.pred_sizes[a] += 1;
        c.gold_sizes[b] += 1;
    }
    Ok(c)
}

fn pairs_of(n: usize) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

impl Contingency {
    /// (same cluster in both, same in pred, same in gold)
    fn pair_counts(&self) -> (f64, f64, f64) {
        let both = self.cells.values().map(|&v| pairs_of(v)).sum();
        let pred = self.pred_sizes.iter().map(|&v| pairs_of(v)).sum();
        let gold = self.gold_sizes.iter().map(|&v| pairs_of(v)).sum();
        (both, pred, gold)
    }
}

/// Pair-counting Jaccard `TP / (TP + FP + FN)`, 1 when no pair is grouped
/// by either side.
pub fn pair_jaccard<A: Ord, B: Ord>(pred: &[A], gold: &[B]) -> Result<f64> {
    let (tp, same_pred, same_gold) = contingency(pred, gold)?.pair_counts();
    let denom = same_pred + same_gold - tp;
    Ok(if denom == 0.0 { 1.0 } else { tp / denom })
}

/// Adjusted Rand index. Pairs of trivial identical partitions (all
/// singletons, or one cluster) score 1.
pub fn ari<A: Ord, B: Ord>(pred: &[A], gold: &[B]) -> Result<f64> {
    let c = contingency(pred, gold)?;
    let total = pairs_of(c.n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let (index, same_pred, same_gold) = c.pair_counts();
    let expected = same_pred * same_gold / total;
    let max_index = 0.5 * (same_pred + same_gold);
    let denom = max_index - expected;
    Ok(if denom == 0.0 { 1.0 } else { (index - expected) / denom })
}

fn entropy(sizes: &[usize], n: f64) -> f64 {
    sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            -p * math::ln(p)
        })
        .sum()
}

/// `I(P;G) / sqrt(H(P)·H(G))` with natural logs; 1 when both entropies are
/// zero, 0 when exactly one is.
pub fn nmi<A: Ord, B: Ord>(pred: &[A], gold: &[B]) -> Result<f64> {
    let c = contingency(pred, gold)?;
    if c.n == 0 {
        return Ok(1.0);
    }
    let n = c.n as f64;
    let hp = entropy(&c.pred_sizes, n);
    let hg = entropy(&c.gold_sizes, n);
    if hp == 0.0 && hg == 0.0 {
        return Ok(1.0);
    }
    if hp == 0.0 || hg == 0.0 {
        return Ok(0.0);
    }
    let mi: f64 = c
        .cells
        .iter()
        .map(|(&(a, b), &v)| {
            let v = v as f64;
            v / n * math::ln(n * v / (c.pred_sizes[a] as f64 * c.gold_sizes[b] as f64))
        })
        .sum();
    Ok((mi / math::sqrt(hp * hg)).clamp(0.0, 1.0))
}

/// Harmonic mean of pseudo precision `(J + A + N)/3` and recall.
pub fn pseudo_f1(jaccard: f64, ari: f64, nmi: f64, recall: f64) -> f64 {
    harmonic((jaccard + ari + nmi) / 3.0, recall)
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Span-level precision, recall and F1, ignoring attribute types.
pub fn span_prf(pred: &[SpanLoc], gold: &[SpanLoc], mode: MatchMode) -> (f64, f64, f64) {
    let a = align_spans(pred, gold, mode);
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let p = ratio(a.pairs.len(), pred.len());
    let r = ratio(a.pairs.len(), gold.len());
    (p, r, harmonic(p, r))
}

/// Every member occurrence of every cluster, labeled with its cluster.
pub fn predicted_occurrences(clusters: &[AttributeCluster]) -> Vec<(SpanLoc, &str)> {
    clusters
        .iter()
        .flat_map(|c| c.members.iter().flat_map(move |m| m.occurrences.iter().map(move |o| (o.clone(), c.label.as_str()))))
        .collect()
}

/// Fraction of gold annotations matched by some cluster occurrence; 1 when
/// there is no gold.
pub fn coverage_recall(clusters: &[AttributeCluster], gold: &[GoldAnnotation], mode: MatchMode) -> f64 {
    if gold.is_empty() {
        return 1.0;
    }
    let pred: Vec<SpanLoc> = predicted_occurrences(clusters).into_iter().map(|(l, _)| l).collect();
    let gold_locs: Vec<SpanLoc> = gold.iter().map(|g| g.loc.clone()).collect();
    align_spans(&pred, &gold_locs, mode).pairs.len() as f64 / gold.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Seed,
    New,
    Title,
    Bullet,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Seed => "seed",
            Split::New => "new",
            Split::Title => "title",
            Split::Bullet => "bullet",
        }
    }

    fn keeps_gold(self, g: &GoldAnnotation) -> bool {
        match self {
            Split::Seed => !g.is_new_type,
            Split::New => g.is_new_type,
            Split::Title => g.loc.seq.kind == SeqKind::Title,
            Split::Bullet => g.loc.seq.kind == SeqKind::Bullet,
        }
    }

    /// Seed/new splits cannot be decided for predictions, so only the
    /// sequence-kind splits filter them.
    fn keeps_pred(self, loc: &SpanLoc) -> bool {
        match self {
            Split::Seed | Split::New => true,
            Split::Title => loc.seq.kind == SeqKind::Title,
            Split::Bullet => loc.seq.kind == SeqKind::Bullet,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModeReport {
    pub jaccard: f64,
    pub ari: f64,
    pub nmi: f64,
    pub recall: f64,
    pub pseudo_precision: f64,
    pub pseudo_f1: f64,
    pub span_precision: f64,
    pub span_recall: f64,
    pub span_f1: f64,
    /// Aligned (predicted, gold) pairs the clustering metrics ran on.
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
    /// Fraction of gold types with at least one matched span. Diagnostic
    /// only.
    pub type_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModePair {
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none", default))]
    pub exact: Option<ModeReport>,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none", default))]
    pub partial: Option<ModeReport>,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub overall: ModePair,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "BTreeMap::is_empty", default))]
    pub splits: BTreeMap<String, ModePair>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalOptions {
    pub modes: Vec<MatchMode>,
    pub splits: Vec<Split>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { modes: alloc::vec![MatchMode::Exact, MatchMode::Partial], splits: Vec::new() }
    }
}

/// Scores one mode over already-filtered predictions and gold.
pub fn score_mode(pred: &[(SpanLoc, &str)], gold: &[GoldAnnotation], mode: MatchMode) -> Result<ModeReport> {
    let pred_locs: Vec<SpanLoc> = pred.iter().map(|(l, _)| l.clone()).collect();
    let gold_locs: Vec<SpanLoc> = gold.iter().map(|g| g.loc.clone()).collect();
    let alignment = align_spans(&pred_locs, &gold_locs, mode);
    let pred_labels: Vec<&str> = alignment.pairs.iter().map(|&(p, _)| pred[p].1).collect();
    let gold_labels: Vec<&str> = alignment.pairs.iter().map(|&(_, g)| gold[g].attribute_type.as_str()).collect();

    // No aligned item leaves nothing to compare; one item is a trivially
    // identical partition.
    let (jaccard, ari_v, nmi_v) = match alignment.pairs.len() {
        0 => (0.0, 0.0, 0.0),
        1 => (1.0, 1.0, 1.0),
        _ => (pair_jaccard(&pred_labels, &gold_labels)?, ari(&pred_labels, &gold_labels)?, nmi(&pred_labels, &gold_labels)?),
    };
    let recall = if gold.is_empty() { 1.0 } else { alignment.pairs.len() as f64 / gold.len() as f64 };
    let (span_precision, span_recall, span_f1) = {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let p = ratio(alignment.pairs.len(), pred.len());
        let r = ratio(alignment.pairs.len(), gold.len());
        (p, r, harmonic(p, r))
    };
    let all_types: BTreeSet<&str> = gold.iter().map(|g| g.attribute_type.as_str()).collect();
    let hit_types: BTreeSet<&str> = gold_labels.iter().copied().collect();
    let type_coverage = if all_types.is_empty() { 1.0 } else { hit_types.len() as f64 / all_types.len() as f64 };
    let pseudo_precision = (jaccard + ari_v + nmi_v) / 3.0;
    Ok(ModeReport {
        jaccard,
        ari: ari_v,
        nmi: nmi_v,
        recall,
        pseudo_precision,
        pseudo_f1: harmonic(pseudo_precision, recall),
        span_precision,
        span_recall,
        span_f1,
        matched: alignment.pairs.len(),
        predicted: pred.len(),
        gold: gold.len(),
        type_coverage,
    })
}

fn score_modes(pred: &[(SpanLoc, &str)], gold: &[GoldAnnotation], modes: &[MatchMode]) -> Result<ModePair> {
    let mut out = ModePair::default();
    for &mode in modes {
        let report = Some(score_mode(pred, gold, mode)?);
        match mode {
            MatchMode::Exact => out.exact = report,
            MatchMode::Partial => out.partial = report,
        }
    }
    Ok(out)
}

/// Full scorecard: every requested mode overall, plus each requested split
/// (gold filtered before alignment).
pub fn evaluate(clusters: &[AttributeCluster], gold: &[GoldAnnotation], options: &EvalOptions) -> Result<EvalReport> {
    let pred = predicted_occurrences(clusters);
    let mut report = EvalReport { overall: score_modes(&pred, gold, &options.modes)?, splits: BTreeMap::new() };
    for &split in &options.splits {
        let g: Vec<GoldAnnotation> = gold.iter().filter(|g| split.keeps_gold(g)).cloned().collect();
        let p: Vec<(SpanLoc, &str)> = pred.iter().filter(|(l, _)| split.keeps_pred(l)).cloned().collect();
        report.splits.insert(split.as_str().into(), score_modes(&p, &g, &options.modes)?);
    }
    Ok(report)
}
