//! Candidate span generation from POS patterns.
//!
//! Patterns are induced from the compacted POS tags of seed occurrences.
//! Every span whose compacted tags form a known pattern becomes a candidate,
//! after stopword filtering and greedy longest-first overlap removal.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::{index_sequences, Product, SeedOccurrence, SpanLoc, TokenSequence};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_SPAN_LEN: usize = 8;
pub const DEFAULT_MIN_SUPPORT: usize = 2;
pub const PUNCT_TAG: &str = "PUNCT";

/// Bumped whenever [`DEFAULT_STOPWORDS`] changes.
pub const STOPWORDS_VERSION: &str = "en-function-words/1";

/// English function words used for candidate filtering.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any", "are", "as",
    "at", "be", "because", "been", "before", "being", "below", "between", "both", "but", "by", "can",
    "could", "did", "do", "does", "doing", "down", "during", "each", "either", "even", "ever", "every",
    "few", "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself",
    "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just", "may",
    "me", "might", "more", "most", "must", "my", "myself", "no", "nor", "not", "now", "of", "off", "on",
    "once", "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "same", "shall", "she",
    "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them", "themselves", "then",
    "there", "these", "they", "this", "those", "through", "to", "too", "under", "until", "up", "upon", "us",
    "very", "was", "we", "were", "what", "when", "where", "which", "while", "who", "whom", "whose", "why",
    "will", "with", "within", "without", "would", "you", "your", "yours", "yourself", "yourselves",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PosPattern {
    pub tags: Vec<String>,
    pub support: usize,
}

/// Collapses runs of identical tags: `[ADJ, ADJ, NOUN]` becomes `[ADJ, NOUN]`.
pub fn compact_pos<S: AsRef<str>>(tags: &[S]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(tags.len());
    for t in tags {
        let t = t.as_ref();
        if out.last().map(String::as_str) != Some(t) {
            out.push(t.to_string());
        }
    }
    out
}

/// Lowercased stopword lookup.
#[derive(Debug, Clone, Default)]
pub struct Stopwords(BTreeSet<String>);

impl Stopwords {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Stopwords(words.into_iter().map(|w| w.as_ref().trim().to_lowercase()).filter(|w| !w.is_empty()).collect())
    }

    pub fn english() -> Self {
        Self::new(DEFAULT_STOPWORDS.iter())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(&token.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Options for [`induce_patterns`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InduceOptions {
    pub min_support: usize,
    /// Drop patterns containing a `PUNCT` tag.
    pub exclude_punct: bool,
}

impl Default for InduceOptions {
    fn default() -> Self {
        InduceOptions { min_support: DEFAULT_MIN_SUPPORT, exclude_punct: true }
    }
}

/// Compacts the POS tags under every seed occurrence and keeps the distinct
/// patterns seen at least `min_support` times, most supported first (ties
/// broken lexicographically on the tags).
pub fn induce_patterns(
    occurrences: &[SeedOccurrence],
    corpus: &[Product],
    options: InduceOptions,
) -> Result<Vec<PosPattern>> {
    let index = index_sequences(corpus);
    let mut counts: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    for occ in occurrences {
        let seq = index
            .get(&occ.loc.seq)
            .ok_or_else(|| Error::SpanOutOfRange(occ.loc.to_string()))?;
        if occ.loc.is_empty() || occ.loc.end > seq.len() {
            return Err(Error::SpanOutOfRange(occ.loc.to_string()));
        }
        let tags = compact_pos(&seq.pos[occ.loc.start..occ.loc.end]);
        if options.exclude_punct && tags.iter().any(|t| t == PUNCT_TAG) {
            continue;
        }
        *counts.entry(tags).or_insert(0) += 1;
    }
    let mut patterns: Vec<PosPattern> = counts
        .into_iter()
        .filter(|(_, n)| *n >= options.min_support)
        .map(|(tags, support)| PosPattern { tags, support })
        .collect();
    patterns.sort_by(|a, b| b.support.cmp(&a.support).then_with(|| a.tags.cmp(&b.tags)));
    Ok(patterns)
}

/// Pattern lookup keyed by compacted tags.
#[derive(Debug, Clone, Default)]
pub struct PatternSet {
    by_tags: BTreeMap<Vec<String>, usize>,
    longest: usize,
}

impl PatternSet {
    pub fn new(patterns: &[PosPattern]) -> Self {
        let mut set = PatternSet::default();
        for p in patterns {
            if p.tags.is_empty() {
                continue;
            }
            let entry = set.by_tags.entry(p.tags.clone()).or_insert(0);
            *entry = (*entry).max(p.support);
            set.longest = set.longest.max(p.tags.len());
        }
        set
    }

    pub fn support(&self, tags: &[String]) -> Option<usize> {
        self.by_tags.get(tags).copied()
    }

    pub fn len(&self) -> usize {
        self.by_tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_tags.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSpan {
    pub loc: SpanLoc,
    /// Lowercased tokens joined by single spaces.
    pub surface: String,
    pub pattern: PosPattern,
}

fn is_punctuation(token: &str, tag: &str) -> bool {
    tag == PUNCT_TAG || token.chars().all(|c| c.is_ascii_punctuation())
}

/// Enumerates all spans of `seq` licensed by `patterns` and returns a
/// non-overlapping subset, sorted by start.
pub fn generate_candidates(
    seq: &TokenSequence,
    patterns: &PatternSet,
    stopwords: &Stopwords,
    max_span_len: usize,
) -> Vec<CandidateSpan> {
    let n = seq.len();
    let mut found = Vec::new();
    for start in 0..n {
        let mut compacted: Vec<String> = Vec::new();
        for end in start + 1..=(start + max_span_len).min(n) {
            let tag = &seq.pos[end - 1];
            if compacted.last() != Some(tag) {
                compacted.push(tag.clone());
            }
            if compacted.len() > patterns.longest {
                break;
            }
            let Some(support) = patterns.support(&compacted) else { continue };
            let (first, last) = (start, end - 1);
            if stopwords.contains(&seq.tokens[first])
                || stopwords.contains(&seq.tokens[last])
                || is_punctuation(&seq.tokens[first], &seq.pos[first])
                || is_punctuation(&seq.tokens[last], &seq.pos[last])
                || seq.tokens[start..end].iter().all(|t| stopwords.contains(t))
            {
                continue;
            }
            found.push(CandidateSpan {
                loc: SpanLoc::new(seq.key.clone(), start, end),
                surface: seq.surface(start, end),
                pattern: PosPattern { tags: compacted.clone(), support },
            });
        }
    }
    let mut kept = resolve_overlaps(found);
    kept.sort_by_key(|c| c.loc.start);
    kept
}

/// Greedy longest-first overlap removal within one sequence: spans are
/// ranked by length (desc), start (asc), pattern support (desc), and a span
/// is kept iff it overlaps nothing kept before it. Output keeps the ranking
/// order.
pub fn resolve_overlaps(mut spans: Vec<CandidateSpan>) -> Vec<CandidateSpan> {
    spans.sort_by(|a, b| {
        b.loc
            .len()
            .cmp(&a.loc.len())
            .then(a.loc.start.cmp(&b.loc.start))
            .then(b.pattern.support.cmp(&a.pattern.support))
    });
    let mut kept: Vec<CandidateSpan> = Vec::new();
    for span in spans {
        if kept.iter().all(|k| k.loc.overlap(&span.loc) == 0) {
            kept.push(span);
        }
    }
    kept
}

/// Runs [`generate_candidates`] over every sequence of every product, in
/// product order (title first).
pub fn generate_corpus_candidates(
    products: &[Product],
    patterns: &PatternSet,
    stopwords: &Stopwords,
    max_span_len: usize,
) -> Vec<CandidateSpan> {
    products
        .iter()
        .flat_map(|p| p.sequences())
        .flat_map(|seq| generate_candidates(seq, patterns, stopwords, max_span_len))
        .collect()
}
