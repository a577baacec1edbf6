mod checks;
mod oracles;

use std::collections::BTreeMap;

use amacer_core::corpus::{match_seed_occurrences, sanitize_seed_set, Product, RawProfileEntry, SeedAttribute, TokenSequence, SeqKey};
use amacer_core::embed::{product_context, span_embedding, EmbeddingStore, ProjectionHead};
use amacer_core::posgen::{compact_pos, generate_candidates, resolve_overlaps, PatternSet, PosPattern, Stopwords};
use oracles::*;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn documented_pattern_examples_behave() {
    assert!(checks::pos_pipeline_ok());
}

const TAGS: &[&str] = &["ADJ", "NOUN", "VERB", "ADP", "DET", "CCONJ"];

proptest! {
    #[test]
    fn compaction_has_no_adjacent_repeats_and_is_idempotent(tags in prop::collection::vec(0usize..TAGS.len(), 0..20)) {
        let tags: Vec<&str> = tags.into_iter().map(|i| TAGS[i]).collect();
        let c = compact_pos(&tags);
        prop_assert!(c.windows(2).all(|w| w[0] != w[1]));
        prop_assert_eq!(compact_pos(&c), c.clone());
        prop_assert!(c.len() <= tags.len());
        // same run sequence: first tag and every tag change survive
        let changes: Vec<&str> = tags.iter().enumerate().filter(|(i, t)| *i == 0 || tags[i - 1] != **t).map(|(_, t)| *t).collect();
        prop_assert_eq!(c, changes);
    }

    #[test]
    fn candidates_obey_patterns_and_resolution_leaves_no_overlap(
        seq_tags in prop::collection::vec(0usize..4, 1..16),
        seed in any::<u64>(),
        max_len in 1usize..6,
    ) {
        let mut r = rng(seed);
        let words = ["soft", "red", "wool", "the", "and", "cup", "with"];
        let tokens: Vec<String> = seq_tags.iter().map(|_| words[r.random_range(0..words.len())].to_string()).collect();
        let pos: Vec<String> = seq_tags.iter().map(|&i| TAGS[i].to_string()).collect();
        let seq = TokenSequence::new(SeqKey::title("p"), tokens, pos).unwrap();
        let patterns = vec![
            PosPattern { tags: vec!["ADJ".into(), "NOUN".into()], support: 5 },
            PosPattern { tags: vec!["NOUN".into()], support: 3 },
            PosPattern { tags: vec!["ADJ".into(), "NOUN".into(), "VERB".into()], support: 2 },
        ];
        let set = PatternSet::new(&patterns);
        let stop = Stopwords::english();
        let found = generate_candidates(&seq, &set, &stop, max_len);
        for c in &found {
            prop_assert!(c.loc.len() <= max_len);
            prop_assert_eq!(compact_pos(&seq.pos[c.loc.start..c.loc.end]), c.pattern.tags.clone());
            prop_assert!(!stop.contains(&seq.tokens[c.loc.start]));
            prop_assert!(!stop.contains(&seq.tokens[c.loc.end - 1]));
        }
        let kept = resolve_overlaps(found.clone());
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert_eq!(a.loc.overlap(&b.loc), 0);
            }
        }
        // every dropped candidate overlaps a kept one
        for c in &found {
            prop_assert!(kept.iter().any(|k| k.loc.overlap(&c.loc) > 0));
        }
    }

    #[test]
    fn sanitized_seed_sets_are_stable(seed in any::<u64>()) {
        let mut r = rng(seed);
        let types = ["color", "size", "flavor", "scent"];
        let entries: Vec<RawProfileEntry> = (0..r.random_range(0..400))
            .map(|_| RawProfileEntry {
                category: "c".into(),
                attribute_type: types[r.random_range(0..types.len())].into(),
                value: format!("v{}", r.random_range(0..150)),
                frequency: r.random_range(1..20),
            })
            .collect();
        let out = sanitize_seed_set(&entries);
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for a in &out {
            prop_assert!((10..=100).contains(&a.values.len()));
            for v in &a.values {
                prop_assert!(owner.insert(v, &a.type_name).is_none(), "value {} under two types", v);
            }
        }
        let names: Vec<&String> = out.iter().map(|a| &a.type_name).collect();
        let mut sorted = names.clone();
        sorted.sort();
        prop_assert_eq!(names, sorted);

        // re-sanitizing the surviving entries changes nothing
        let survivors: Vec<RawProfileEntry> = entries
            .iter()
            .filter(|e| owner.get(e.value.as_str()) == Some(&e.attribute_type.as_str()))
            .cloned()
            .collect();
        prop_assert_eq!(sanitize_seed_set(&survivors), out);
    }
}

fn tok(words: &str) -> (Vec<String>, Vec<String>) {
    let t: Vec<String> = words.split(' ').map(String::from).collect();
    let p = vec!["NOUN".to_string(); t.len()];
    (t, p)
}

#[test]
fn seed_matching_prefers_the_longest_value() {
    let products = vec![Product::from_parts("a", "c", tok("Dark Roast Coffee"), vec![tok("a dark roast blend")]).unwrap()];
    let seeds = vec![
        SeedAttribute { type_name: "roast".into(), values: vec!["dark roast".into()] },
        SeedAttribute { type_name: "shade".into(), values: vec!["dark".into()] },
    ];
    let occ = match_seed_occurrences(&products, &seeds);
    assert_eq!(occ.len(), 2);
    assert!(occ.iter().all(|o| o.attribute == "roast" && o.loc.len() == 2));
}

fn dense_store(rng: &mut rand_chacha::ChaCha8Rng, products: &[Product], dim: usize, cls: bool) -> EmbeddingStore {
    let mut store = EmbeddingStore::new(dim).unwrap();
    for s in products.iter().flat_map(|p| p.sequences()) {
        let rows = gaussian_vec(rng, s.len() * dim, 1.0);
        let c = cls.then(|| gaussian_vec(rng, dim, 1.0));
        store.insert(s.key.clone(), &rows, c.as_deref()).unwrap();
    }
    store
}

fn token_vec(store: &EmbeddingStore, key: &SeqKey, i: usize) -> Vec<f64> {
    store.row(store.sequence(key).unwrap().tokens[i]).to_vec()
}

#[test]
fn span_embedding_matches_scalar_recomputation() {
    let mut r = rng(21);
    let products = vec![Product::from_parts("a", "c", tok("one two three four five"), vec![]).unwrap()];
    for _ in 0..20 {
        let (din, dout) = (r.random_range(1..8), r.random_range(1..8));
        let store = dense_store(&mut r, &products, din, false);
        let head = ProjectionHead::from_weights(din, dout, gaussian_vec(&mut r, din * dout, 1.0)).unwrap();
        let key = SeqKey::title("a");
        let loc = amacer_core::corpus::SpanLoc::new(key.clone(), 1, 4);
        let got = span_embedding(&loc, &store, &head).unwrap().vector;

        let mut mean = vec![0.0; din];
        for t in 1..4 {
            for (m, v) in mean.iter_mut().zip(token_vec(&store, &key, t)) {
                *m += v / 3.0;
            }
        }
        let z: Vec<f64> = (0..dout).map(|o| (0..din).map(|i| mean[i] * head.weights[i * dout + o]).sum()).collect();
        let n = dot(&z, &z).sqrt();
        let want: Vec<f64> = z.iter().map(|x| x / n).collect();
        assert!(rel_err(&got, &want) < 1e-12);
        assert!((dot(&got, &got).sqrt() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn opposite_tokens_make_a_degenerate_span() {
    let mut store = EmbeddingStore::new(2).unwrap();
    store.insert(SeqKey::title("a"), &[1.0, 2.0, -1.0, -2.0], None).unwrap();
    let loc = amacer_core::corpus::SpanLoc::new(SeqKey::title("a"), 0, 2);
    assert!(span_embedding(&loc, &store, &ProjectionHead::identity(2)).is_err());
}

#[test]
fn product_context_is_a_two_level_mean() {
    let mut r = rng(8);
    let products =
        vec![Product::from_parts("a", "c", tok("x y"), vec![tok("p q r"), tok("s t u v")]).unwrap()];
    let store = dense_store(&mut r, &products, 5, false);
    let got = product_context(&products[0], &store).unwrap().vector;
    let mut want = vec![0.0; 5];
    for s in products[0].sequences() {
        let mut m = vec![0.0; 5];
        for i in 0..s.len() {
            for (a, v) in m.iter_mut().zip(token_vec(&store, &s.key, i)) {
                *a += v / s.len() as f64;
            }
        }
        for (w, v) in want.iter_mut().zip(m) {
            *w += v / 3.0;
        }
    }
    assert!(rel_err(&got, &want) < 1e-12);

    // with summary rows the context averages those instead
    let store = dense_store(&mut r, &products, 5, true);
    let got = product_context(&products[0], &store).unwrap().vector;
    let mut want = vec![0.0; 5];
    for s in products[0].sequences() {
        let c = store.row(store.sequence(&s.key).unwrap().cls.unwrap());
        for (w, v) in want.iter_mut().zip(c) {
            *w += v / 3.0;
        }
    }
    assert!(rel_err(&got, &want) < 1e-12);
}

#[test]
fn token_table_is_shared_and_seeded() {
    let products = vec![
        Product::from_parts("a", "c", tok("Red wool"), vec![]).unwrap(),
        Product::from_parts("b", "c", tok("red cotton"), vec![]).unwrap(),
    ];
    let a = EmbeddingStore::init_trainable(&products, 6, 9).unwrap();
    assert_eq!(a, EmbeddingStore::init_trainable(&products, 6, 9).unwrap());
    assert_ne!(a, EmbeddingStore::init_trainable(&products, 6, 10).unwrap());
    assert_eq!(token_vec(&a, &SeqKey::title("a"), 0), token_vec(&a, &SeqKey::title("b"), 0));
    assert!(a.rows().iter().all(|v| v.abs() <= 0.5 / 6.0));
    assert!(EmbeddingStore::init_trainable(&products, 0, 9).is_err());
}
