//! Seeded synthetic corpus with planted attribute types.
//!
//! Six attribute types of fifteen single-token values each. Every bullet
//! lists two or three values of one type behind a type-specific lead phrase,
//! and about a quarter of bullets trail off into a second clause naming a
//! value of another type; titles name the product and two values. Value
//! frequencies are skewed (weight `1/(rank+1)`), so the last values of each
//! type are rare. Values are always flanked by verbs, function words or
//! punctuation, so each value is exactly one candidate span. The first four
//! types are seeded with their first ten values; the last two are held out
//! for discovery.

use std::path::{Path, PathBuf};

use amacer_core::corpus::{
    sanitize_seed_set, GoldAnnotation, Product, RawProfileEntry, SeedAttribute, SeqKey, SpanLoc,
};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::io::{save_corpus, save_gold, save_raw_profiles, save_seeds};

pub const CATEGORY: &str = "home_textiles";
pub const SEEDED_VALUES: usize = 10;
const MIXED_BULLET_RATE: f64 = 0.25;

pub struct PlantedType {
    pub name: &'static str,
    pub tag: &'static str,
    pub seeded: bool,
    pub lead: &'static [(&'static str, &'static str)],
    pub values: [&'static str; 15],
}

pub const PLANTED: [PlantedType; 6] = [
    PlantedType {
        name: "color",
        tag: "ADJ",
        seeded: true,
        lead: &[("available", "VERB"), ("in", "ADP")],
        values: [
            "red", "blue", "green", "black", "white", "ivory", "teal", "navy", "maroon", "beige", "olive", "coral",
            "crimson", "lilac", "mauve",
        ],
    },
    PlantedType {
        name: "material",
        tag: "NOUN",
        seeded: true,
        lead: &[("made", "VERB"), ("from", "ADP")],
        values: [
            "cotton", "wool", "linen", "silk", "bamboo", "leather", "denim", "velvet", "polyester", "nylon", "jute",
            "hemp", "cashmere", "fleece", "satin",
        ],
    },
    PlantedType {
        name: "pattern",
        tag: "ADJ",
        seeded: true,
        lead: &[("printed", "VERB"), ("in", "ADP")],
        values: [
            "striped", "floral", "plaid", "checkered", "paisley", "dotted", "geometric", "abstract", "tribal",
            "chevron", "damask", "ikat", "tartan", "quilted", "embroidered",
        ],
    },
    PlantedType {
        name: "scent",
        tag: "NOUN",
        seeded: true,
        lead: &[("infused", "VERB"), ("with", "ADP")],
        values: [
            "lavender", "vanilla", "jasmine", "sandalwood", "citrus", "eucalyptus", "rose", "cedar", "peppermint",
            "musk", "patchouli", "lemongrass", "bergamot", "gardenia", "honeysuckle",
        ],
    },
    PlantedType {
        name: "room",
        tag: "NOUN",
        seeded: false,
        lead: &[("fits", "VERB"), ("the", "DET")],
        values: [
            "bedroom", "kitchen", "bathroom", "nursery", "patio", "garage", "office", "hallway", "porch", "attic",
            "basement", "den", "pantry", "studio", "balcony",
        ],
    },
    PlantedType {
        name: "occasion",
        tag: "NOUN",
        seeded: false,
        lead: &[("wrapped", "VERB"), ("for", "ADP")],
        values: [
            "wedding", "birthday", "christmas", "halloween", "easter", "anniversary", "graduation", "thanksgiving",
            "picnic", "housewarming", "valentines", "diwali", "hanukkah", "retirement", "babyshower",
        ],
    },
];

const BRANDS: &[&str] = &["Acme", "Nordhaus", "Velora", "Kinfolk", "Mabel"];
const PRODUCTS: &[&str] = &["pillow", "blanket", "throw", "towel", "rug", "curtain", "cushion", "quilt"];

/// A products file with matching gold, raw profiles and sanitized seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub products: Vec<Product>,
    pub gold: Vec<GoldAnnotation>,
    pub raw_profiles: Vec<RawProfileEntry>,
    pub seeds: Vec<SeedAttribute>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticPaths {
    pub products: PathBuf,
    pub gold: PathBuf,
    pub raw_profiles: PathBuf,
    pub seeds: PathBuf,
}

impl SyntheticPaths {
    pub fn in_dir(dir: &Path) -> Self {
        SyntheticPaths {
            products: dir.join("products.jsonl"),
            gold: dir.join("gold.jsonl"),
            raw_profiles: dir.join("raw_profiles.jsonl"),
            seeds: dir.join("seeds.json"),
        }
    }
}

pub fn held_out_types() -> Vec<&'static str> {
    PLANTED.iter().filter(|t| !t.seeded).map(|t| t.name).collect()
}

struct SequenceBuilder {
    tokens: Vec<String>,
    pos: Vec<String>,
    planted: Vec<(usize, usize)>,
}

impl SequenceBuilder {
    fn new() -> Self {
        SequenceBuilder { tokens: Vec::new(), pos: Vec::new(), planted: Vec::new() }
    }

    fn push(&mut self, token: &str, tag: &str) {
        self.tokens.push(token.into());
        self.pos.push(tag.into());
    }

    fn value(&mut self, type_index: usize, value: &str) {
        self.planted.push((type_index, self.tokens.len()));
        self.push(value, PLANTED[type_index].tag);
    }

    fn lead(&mut self, type_index: usize) {
        for (tok, tag) in PLANTED[type_index].lead {
            self.push(tok, tag);
        }
    }

    /// `a`, `a and b`, `a , b or c`, ...
    fn list(&mut self, type_index: usize, values: &[&str], conj: &str) {
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                if i + 1 == values.len() {
                    self.push(conj, "CCONJ");
                } else {
                    self.push(",", "PUNCT");
                }
            }
            self.value(type_index, v);
        }
    }
}

/// `n` distinct values of one type, drawn with weight `1/(rank+1)`.
fn pick(rng: &mut ChaCha8Rng, type_index: usize, n: usize) -> Vec<&'static str> {
    let values = &PLANTED[type_index].values;
    let ranks: Vec<usize> = (0..values.len()).collect();
    ranks
        .choose_multiple_weighted(rng, n, |&r| 1.0 / (r + 1) as f64)
        .expect("weights are positive")
        .map(|&r| values[r])
        .collect()
}

/// Deterministic in `(n_products, seed)`.
pub fn generate(n_products: usize, seed: u64) -> Result<SyntheticCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut products = Vec::with_capacity(n_products);
    let mut gold = Vec::new();
    let mut counts = vec![vec![0u64; 15]; PLANTED.len()];

    for p in 0..n_products {
        let id = format!("p{p:04}");
        let mut types: Vec<usize> = (0..PLANTED.len()).collect();
        types.shuffle(&mut rng);
        types.truncate(rng.random_range(3..=4));

        let mut title = SequenceBuilder::new();
        title.push(BRANDS.choose(&mut rng).unwrap(), "PROPN");
        title.push(PRODUCTS.choose(&mut rng).unwrap(), "NOUN");
        title.push(",", "PUNCT");
        title.value(types[0], pick(&mut rng, types[0], 1)[0]);
        title.push("and", "CCONJ");
        title.value(types[1], pick(&mut rng, types[1], 1)[0]);

        let mut bullets = Vec::new();
        for &t in &types {
            let mut b = SequenceBuilder::new();
            b.lead(t);
            let n = rng.random_range(2..=3);
            let values = pick(&mut rng, t, n);
            b.list(t, &values, if rng.random_bool(0.5) { "and" } else { "or" });
            if rng.random_bool(MIXED_BULLET_RATE) {
                let other = (t + rng.random_range(1..PLANTED.len())) % PLANTED.len();
                b.push(",", "PUNCT");
                b.lead(other);
                b.value(other, pick(&mut rng, other, 1)[0]);
            }
            b.push(".", "PUNCT");
            bullets.push(b);
        }
        if rng.random_bool(0.3) {
            let mut b = SequenceBuilder::new();
            for (tok, tag) in [("backed", "VERB"), ("by", "ADP"), ("warranty", "NOUN"), (".", "PUNCT")] {
                b.push(tok, tag);
            }
            bullets.push(b);
        }

        let keys = std::iter::once(SeqKey::title(id.clone())).chain((0..bullets.len() as u32).map(|i| SeqKey::bullet(id.clone(), i)));
        for (key, seq) in keys.zip(std::iter::once(&title).chain(&bullets)) {
            for &(t, at) in &seq.planted {
                let vi = PLANTED[t].values.iter().position(|v| *v == seq.tokens[at]).unwrap();
                counts[t][vi] += 1;
                gold.push(GoldAnnotation {
                    loc: SpanLoc::new(key.clone(), at, at + 1),
                    attribute_type: PLANTED[t].name.into(),
                    is_new_type: !PLANTED[t].seeded,
                });
            }
        }
        let bullets = bullets.into_iter().map(|b| (b.tokens, b.pos)).collect();
        products.push(Product::from_parts(id, CATEGORY, (title.tokens, title.pos), bullets)?);
    }

    let raw_profiles = raw_profiles(&counts, &mut rng);
    let seeds = sanitize_seed_set(&raw_profiles);
    Ok(SyntheticCorpus { products, gold, raw_profiles, seeds })
}

/// Profile entries for the seeded values, plus noise that sanitization must
/// remove: a long-tail type with too few values and seeded values that also
/// appear, less often, under a wrong type.
fn raw_profiles(counts: &[Vec<u64>], rng: &mut ChaCha8Rng) -> Vec<RawProfileEntry> {
    let entry = |t: &str, v: &str, f: u64| RawProfileEntry {
        category: CATEGORY.into(),
        attribute_type: t.into(),
        value: v.into(),
        frequency: f,
    };
    let mut out = Vec::new();
    for (t, planted) in PLANTED.iter().enumerate().filter(|(_, t)| t.seeded) {
        for (v, value) in planted.values[..SEEDED_VALUES].iter().enumerate() {
            out.push(entry(planted.name, value, counts[t][v].max(1) + 10));
        }
    }
    for weave in ["sateen", "percale", "flannel", "jersey", "twill", "terry"] {
        out.push(entry("weave", weave, rng.random_range(1..20)));
    }
    out.push(entry("scent", "red", 1));
    out.push(entry("color", "vanilla", 2));
    out
}

impl SyntheticCorpus {
    pub fn write(&self, dir: &Path) -> Result<SyntheticPaths> {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        let paths = SyntheticPaths::in_dir(dir);
        save_corpus(&paths.products, &self.products)?;
        save_gold(&paths.gold, &self.gold)?;
        save_raw_profiles(&paths.raw_profiles, &self.raw_profiles)?;
        save_seeds(&paths.seeds, CATEGORY, &self.seeds)?;
        Ok(paths)
    }
}
