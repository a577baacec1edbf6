//! `amacer <subcommand> [flags]`.
//!
//! Exit codes: 0 success, 1 bad input or usage, 2 failure while running.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use amacer_core::eval::{evaluate, EvalReport, ModeReport, Split};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use log::info;

use crate::checkpoint::Checkpoint;
use crate::config::{ModeSelection, PipelineConfig};
use crate::error::{Error, Result};
use crate::io;
use crate::manifest::RunManifest;
use crate::pipeline::{self, RunInputs};
use crate::synth;

#[derive(Debug, Parser)]
#[command(name = "amacer", version, about = "Open-world attribute mining from POS-tagged product text")]
pub struct Cli {
    /// Pipeline config (JSON); flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// RNG seed for training (and corpus synthesis).
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "amacer-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a raw profile file into a seed set.
    SanitizeSeeds {
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        category: Option<String>,
    },
    /// Induce POS patterns from seed occurrences.
    InducePatterns {
        #[arg(long)]
        products: PathBuf,
        #[arg(long)]
        seeds: PathBuf,
        #[arg(long)]
        min_support: Option<usize>,
    },
    /// Generate non-overlapping candidate spans.
    Candidates {
        #[arg(long)]
        products: PathBuf,
        #[arg(long)]
        patterns: PathBuf,
        /// One stopword per line; `#` starts a comment.
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long)]
        max_span_len: Option<usize>,
    },
    /// Train the projection head and latent attribute model.
    Train {
        #[arg(long)]
        products: PathBuf,
        #[arg(long)]
        seeds: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        /// Embedding store; without it a token table is trained.
        #[arg(long)]
        store: Option<PathBuf>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Group candidates into attribute clusters.
    Group {
        #[arg(long)]
        products: PathBuf,
        #[arg(long)]
        seeds: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        store: Option<PathBuf>,
        #[command(flatten)]
        grouping: GroupFlags,
    },
    /// Score clusters against gold annotations.
    Eval {
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Needed for the seed/new splits.
        #[arg(long)]
        seeds: Option<PathBuf>,
        /// Bounds-check gold spans against this corpus.
        #[arg(long)]
        products: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalFlags,
    },
    /// Top candidate spans per latent attribute.
    Latents {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        products: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        top_m: Option<usize>,
        /// Expected number of latent attributes.
        #[arg(long = "k")]
        k: Option<usize>,
    },
    /// Every stage end to end.
    Run {
        #[arg(long)]
        products: PathBuf,
        #[arg(long, required_unless_present = "profiles")]
        seeds: Option<PathBuf>,
        /// Sanitized into seeds when `--seeds` is absent.
        #[arg(long, conflicts_with = "seeds")]
        profiles: Option<PathBuf>,
        #[arg(long)]
        category: Option<String>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        grouping: GroupFlags,
        #[command(flatten)]
        eval: EvalFlags,
    },
    /// Write the synthetic planted corpus.
    Synth {
        #[arg(long, default_value_t = 200)]
        products: usize,
    },
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Number of latent attributes.
    #[arg(long = "k")]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GroupFlags {
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub min_samples: Option<usize>,
    /// Send every value straight to DBSCAN.
    #[arg(long)]
    pub no_expansion: bool,
}

#[derive(Debug, Args)]
pub struct EvalFlags {
    #[arg(long, value_enum)]
    pub mode: Option<ModeSelection>,
    /// Repeatable: seed, new, title, bullet.
    #[arg(long = "split", value_parser = parse_split)]
    pub splits: Vec<Split>,
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    [Split::Seed, Split::New, Split::Title, Split::Bullet]
        .into_iter()
        .find(|sp| sp.as_str() == s)
        .ok_or_else(|| format!("expected seed, new, title or bullet, got {s:?}"))
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

impl TrainFlags {
    fn apply(&self, c: &mut PipelineConfig) {
        set(&mut c.train.epochs, self.epochs);
        set(&mut c.train.lr, self.lr);
        set(&mut c.train.batch_size, self.batch_size);
        set(&mut c.train.k, self.k);
    }
}

impl GroupFlags {
    fn apply(&self, c: &mut PipelineConfig) {
        set(&mut c.grouping.delta, self.delta);
        set(&mut c.grouping.eps, self.eps);
        set(&mut c.grouping.min_samples, self.min_samples);
        if self.no_expansion {
            c.grouping.adaptive_expansion = false;
        }
    }
}

impl EvalFlags {
    fn apply(&self, c: &mut PipelineConfig) {
        set(&mut c.eval.mode, self.mode);
        if !self.splits.is_empty() {
            c.eval.splits = self.splits.clone();
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("AMACER_LOG", "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn base_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    set(&mut config.train.rng_seed, cli.seed);
    Ok(config)
}

fn out_path(out: &Path, name: &str) -> PathBuf {
    out.join(name)
}

pub fn execute(cli: Cli) -> Result<()> {
    let mut config = base_config(&cli)?;
    let out = cli.out.as_path();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut manifest;
    match &cli.command {
        Command::SanitizeSeeds { profiles, category } => {
            manifest = RunManifest::start("sanitize-seeds", &config);
            manifest.input("profiles", profiles)?;
            let (category, seeds) = pipeline::sanitize(&io::load_raw_profiles(profiles)?, category.as_deref())?;
            let path = out_path(out, "seeds.json");
            io::save_seeds(&path, &category, &seeds)?;
            manifest.artifact("seeds", &path);
        }
        Command::InducePatterns { products, seeds, min_support } => {
            set(&mut config.posgen.min_support, *min_support);
            config.validate()?;
            manifest = RunManifest::start("induce-patterns", &config);
            manifest.input("products", products)?;
            manifest.input("seeds", seeds)?;
            let products = io::load_corpus(products)?;
            let (_, seeds) = io::load_seeds(seeds)?;
            let patterns = pipeline::patterns(&products, &seeds, &config.posgen)?;
            let path = out_path(out, "patterns.jsonl");
            io::save_patterns(&path, &patterns)?;
            manifest.artifact("patterns", &path);
        }
        Command::Candidates { products, patterns, stopwords, max_span_len } => {
            set(&mut config.posgen.max_span_len, *max_span_len);
            config.validate()?;
            manifest = RunManifest::start("candidates", &config);
            manifest.input("products", products)?;
            manifest.input("patterns", patterns)?;
            if let Some(s) = stopwords {
                manifest.input("stopwords", s)?;
            }
            let products = io::load_corpus(products)?;
            let patterns = io::load_patterns(patterns)?;
            let stopwords = pipeline::load_stopwords(stopwords.as_deref())?;
            let found = pipeline::candidates(&products, &patterns, &stopwords, &config.posgen);
            let path = out_path(out, "candidates.jsonl");
            io::save_candidates(&path, &found)?;
            manifest.artifact("candidates", &path);
        }
        Command::Train { products, seeds, candidates, store, train } => {
            train.apply(&mut config);
            config.validate()?;
            manifest = RunManifest::start("train", &config);
            manifest.input("products", products)?;
            manifest.input("seeds", seeds)?;
            manifest.input("candidates", candidates)?;
            if let Some(s) = store {
                manifest.input("store", s)?;
            }
            let products = io::load_corpus(products)?;
            let (_, seeds) = io::load_seeds(seeds)?;
            let candidates = io::load_candidates(candidates)?;
            let mut store = pipeline::input_store(&products, store.as_deref(), &config)?;
            let checkpoint = pipeline::fit(&products, &seeds, &candidates, &mut store, &config)?;
            let path = out_path(out, "checkpoint.amck");
            checkpoint.save(&path)?;
            manifest.artifact("checkpoint", &path);
        }
        Command::Group { products, seeds, candidates, checkpoint, store, grouping } => {
            grouping.apply(&mut config);
            config.validate()?;
            manifest = RunManifest::start("group", &config);
            manifest.input("products", products)?;
            manifest.input("seeds", seeds)?;
            manifest.input("candidates", candidates)?;
            manifest.input("checkpoint", checkpoint)?;
            if let Some(s) = store {
                manifest.input("store", s)?;
            }
            let products = io::load_corpus(products)?;
            let (_, seeds) = io::load_seeds(seeds)?;
            let candidates = io::load_candidates(candidates)?;
            let checkpoint = Checkpoint::load(checkpoint)?;
            let store = pipeline::trained_store(&checkpoint, &products, store.as_deref())?;
            let clusters = pipeline::group(&products, &seeds, &candidates, &store, &checkpoint.head, &config.grouping)?;
            let path = out_path(out, "clusters.jsonl");
            io::save_clusters(&path, &clusters)?;
            manifest.artifact("clusters", &path);
        }
        Command::Eval { clusters, gold, seeds, products, eval } => {
            eval.apply(&mut config);
            config.validate()?;
            let needs_seeds = config.eval.splits.iter().any(|s| matches!(s, Split::Seed | Split::New));
            if needs_seeds && seeds.is_none() {
                return Err(Error::Usage("the seed and new splits need --seeds".into()));
            }
            manifest = RunManifest::start("eval", &config);
            manifest.input("clusters", clusters)?;
            manifest.input("gold", gold)?;
            let seeds = match seeds {
                Some(p) => {
                    manifest.input("seeds", p)?;
                    io::load_seeds(p)?.1
                }
                None => Vec::new(),
            };
            let products = match products {
                Some(p) => {
                    manifest.input("products", p)?;
                    Some(io::load_corpus(p)?)
                }
                None => None,
            };
            let clusters = io::load_clusters(clusters)?;
            let gold = pipeline::load_gold(gold, &seeds, products.as_deref())?;
            let report = evaluate(&clusters, &gold, &config.eval.options())?;
            let path = out_path(out, "report.json");
            io::write_json(&path, &report)?;
            manifest.artifact("report", &path);
            print_report(&report);
        }
        Command::Latents { checkpoint, products, candidates, store, top_m, k } => {
            let expected_k = k.or(cli.config.as_ref().map(|_| config.train.k));
            set(&mut config.latents.top_m, *top_m);
            config.validate()?;
            manifest = RunManifest::start("latents", &config);
            manifest.input("checkpoint", checkpoint)?;
            manifest.input("products", products)?;
            manifest.input("candidates", candidates)?;
            if let Some(s) = store {
                manifest.input("store", s)?;
            }
            let checkpoint = Checkpoint::load(checkpoint)?;
            if let Some(k) = expected_k {
                if k != checkpoint.model.k {
                    return Err(Error::Validation(format!(
                        "checkpoint has K = {} latent attributes, config expects {k}",
                        checkpoint.model.k
                    )));
                }
            }
            let products = io::load_corpus(products)?;
            let candidates = io::load_candidates(candidates)?;
            let store = pipeline::trained_store(&checkpoint, &products, store.as_deref())?;
            let report =
                pipeline::latents(&checkpoint.model, &checkpoint.head, &store, &candidates, config.latents.top_m)?;
            let path = out_path(out, "latents.json");
            io::write_json(&path, &report)?;
            manifest.artifact("latents", &path);
            for row in &report.attributes {
                let spans: Vec<&str> = row.spans.iter().map(|s| s.surface.as_str()).collect();
                println!("k{:<3} {}", row.k, spans.join(", "));
            }
            println!("max attribute cosine {:.4}", report.max_attribute_cosine);
        }
        Command::Run { products, seeds, profiles, category, gold, store, stopwords, train, grouping, eval } => {
            train.apply(&mut config);
            grouping.apply(&mut config);
            eval.apply(&mut config);
            let inputs = RunInputs {
                products: products.clone(),
                seeds: seeds.clone(),
                profiles: profiles.clone(),
                category: category.clone(),
                gold: gold.clone(),
                store: store.clone(),
                stopwords: stopwords.clone(),
            };
            let outputs = pipeline::run(&inputs, &config, out)?;
            if let Some(report) = &outputs.report {
                print_report(report);
            }
            return Ok(());
        }
        Command::Synth { products } => {
            let seed = cli.seed.unwrap_or(0);
            manifest = RunManifest::start("synth", &config);
            manifest.rng_seed = seed;
            let corpus = synth::generate(*products, seed)?;
            let paths = corpus.write(out)?;
            manifest.artifact("products", &paths.products);
            manifest.artifact("gold", &paths.gold);
            manifest.artifact("raw_profiles", &paths.raw_profiles);
            manifest.artifact("seeds", &paths.seeds);
        }
    }
    let path = manifest.finish(out)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn print_mode(name: &str, r: &ModeReport) {
    println!(
        "{name:<16} pseudo-F1 {:.4}  J {:.4}  ARI {:.4}  NMI {:.4}  recall {:.4}  span-F1 {:.4}",
        r.pseudo_f1, r.jaccard, r.ari, r.nmi, r.recall, r.span_f1
    );
}

fn print_report(report: &EvalReport) {
    let sections = std::iter::once(("overall", &report.overall)).chain(report.splits.iter().map(|(k, v)| (k.as_str(), v)));
    for (name, pair) in sections {
        if let Some(r) = &pair.exact {
            print_mode(&format!("{name}/exact"), r);
        }
        if let Some(r) = &pair.partial {
            print_mode(&format!("{name}/partial"), r);
        }
    }
}
