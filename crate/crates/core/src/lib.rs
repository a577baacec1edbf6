//! Core of the `amacer` attribute miner.
//!
//! The pipeline turns POS-tagged product text into attribute clusters:
//!
//! 1. [`corpus`]: products, seed attributes and gold annotations, seed
//!    sanitization and seed occurrence matching.
//! 2. [`posgen`]: POS pattern induction from seed occurrences and candidate
//!    span generation.
//! 3. [`embed`]: span and product-context embeddings over a token embedding
//!    store and a trainable projection head.
//! 4. [`train`]: supervised and window contrastive losses, the latent
//!    attribute model, and the optimization loop.
//! 5. [`grouping`]: adaptive expansion of seed attributes followed by DBSCAN
//!    over the leftovers.
//! 6. [`eval`]: span alignment and clustering metrics.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the CLI and the
//! synthetic corpus generator live in the `amacer` crate.
#![no_std]
#![deny(missing_debug_implementations)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod grouping;
pub mod math;
pub mod posgen;
pub mod train;

pub use error::{Error, Result};
